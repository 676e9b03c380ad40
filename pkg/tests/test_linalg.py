import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from stiffq.linalg import SingularMatrix, condition_number, invert, mat6, rotation_z, rotation_z6, solve, vec6
from stiffq.stiffness import K1

from oracles import eig_sym3, exact_inverse, exact_solve

# K1^-1 e_z from exact rational elimination
K1_Z_COLUMN = (Fraction(194, 200353), Fraction(-109561, 160082047), Fraction(309914, 160082047))

finite = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False, allow_infinity=False)


def well_conditioned(seed):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(6, 6)) + 6.0 * np.eye(6)


def test_identity_solve():
    v = np.arange(1.0, 7.0)
    assert np.array_equal(solve(np.eye(6), v), v)


def test_diagonal_solve():
    k = np.diag([300.0, 300.0, 800.0, 50.0, 50.0, 50.0])
    x = solve(k, [0, 0, 1, 0, 0, 0])
    assert x == pytest.approx([0, 0, 1 / 800, 0, 0, 0], abs=1e-15)


def test_k1_column_matches_exact_oracle():
    x = solve(K1, [0, 0, 1, 0, 0, 0])
    assert x[:3] == pytest.approx([float(v) for v in K1_Z_COLUMN], rel=1e-12)
    assert np.all(x[3:] == 0.0)


def test_frozen_column_is_what_the_oracle_says():
    col = exact_solve(K1.astype(int).tolist(), [0, 0, 1, 0, 0, 0])
    assert tuple(col[:3]) == K1_Z_COLUMN


def test_invert_identity_and_diagonal():
    assert np.allclose(invert(np.eye(6)), np.eye(6), atol=0)
    d = np.array([2.0, 4.0, 5.0, 8.0, 10.0, 16.0])
    assert np.allclose(invert(np.diag(d)), np.diag(1 / d), rtol=1e-15)


@pytest.mark.parametrize("seed", range(10))
def test_invert_multiply_back(seed):
    a = well_conditioned(seed)
    assert np.allclose(a @ invert(a), np.eye(6), atol=1e-9)


def test_invert_matches_rational_oracle():
    a = np.array(well_conditioned(3).round(3))
    ref = np.array([[float(x) for x in row] for row in exact_inverse([[Fraction(str(v)) for v in r] for r in a])])
    assert np.allclose(invert(a), ref, rtol=1e-10, atol=1e-13)


def test_double_inverse():
    a = well_conditioned(11)
    assert np.allclose(invert(invert(a)), a, rtol=1e-9)


def test_singular_raises():
    a = np.eye(6)
    a[5, 5] = 0.0
    with pytest.raises(SingularMatrix):
        solve(a, np.ones(6))
    a[5, 5] = 1e-14
    with pytest.raises(SingularMatrix):
        invert(a)


def test_rank_deficient_raises():
    a = well_conditioned(0)
    a[4] = 2.0 * a[1]
    with pytest.raises(SingularMatrix):
        solve(a, np.ones(6))


def test_condition_bound():
    a = np.diag([1.0, 1.0, 1.0, 1.0, 1.0, 1e-11])
    with pytest.raises(SingularMatrix):
        invert(a, cond_bound=1e10)
    assert condition_number(np.eye(6)) == pytest.approx(1.0)


def test_shape_and_finiteness_checks():
    with pytest.raises(ValueError):
        mat6(np.eye(5))
    with pytest.raises(ValueError):
        vec6([0, 0, math.nan, 0, 0, 0])
    with pytest.raises(ValueError):
        solve(np.eye(6), np.ones(5))


@given(arrays(float, (6, 6), elements=finite), arrays(float, 6, elements=finite))
def test_residual_bound(noise, b):
    a = noise + 6e3 * np.eye(6)
    x = solve(a, b)
    assert np.all(np.isfinite(x))
    assert np.linalg.norm(a @ x - b) <= 1e-9 * max(np.linalg.norm(b), 1e-300)


def test_rotation_special_angles():
    assert np.array_equal(rotation_z(0.0), np.eye(3))
    assert np.allclose(rotation_z(math.pi), np.diag([-1.0, -1.0, 1.0]), atol=1e-15)


@given(st.floats(-10, 10))
def test_rotation_properties(theta):
    r = rotation_z(theta)
    assert np.allclose(r @ r.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(r) == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(rotation_z(theta) @ rotation_z(-theta), np.eye(3), atol=1e-12)
    r6 = rotation_z6(theta)
    assert np.allclose(r6[:3, :3], r) and np.allclose(r6[3:, 3:], r) and not r6[:3, 3:].any()


@settings(max_examples=50)
@given(st.floats(-math.pi, math.pi), st.floats(10, 1000), st.floats(10, 1000), st.floats(10, 1000))
def test_rotation_preserves_eigenvalues(theta, a, b, c):
    k = np.diag([a, b, c])
    r = rotation_z(theta)
    rotated = r @ k @ r.T
    # the trigonometric root formula loses digits near repeated roots
    assert eig_sym3(rotated.tolist()) == pytest.approx(sorted([a, b, c]), rel=1e-9, abs=1e-6 * max(a, b, c))


def test_quarter_turn_eigen_oracle():
    r = rotation_z(math.pi / 4)
    k = np.diag([300.0, 500.0, 800.0])
    assert eig_sym3((r @ k @ r.T).tolist()) == pytest.approx([300.0, 500.0, 800.0], rel=1e-12)
