import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stiffq.linalg import SingularMatrix
from stiffq.stiffness import (
    K1, K2, K3, K4, ActionCatalog, DeformationSpec, Dither, SingularDesign, StiffnessMatrix,
    builtin_catalogs, catalog_from_config, catalog_is_invertible, design_stiffness, rotate_design,
    steady_state_deviation,
)

from oracles import exact_inverse, transpose

PEG, GEAR = builtin_catalogs()


def test_catalog_sizes_and_order():
    assert len(PEG) == 4 and len(GEAR) == 5
    assert [m.name for m in GEAR] == ["K1", "K2", "K3", "K4", "K5"]
    assert all(a == b for a, b in zip(PEG, GEAR))


def test_catalog_entries():
    assert PEG[0].k[:3, :3].tolist() == [[525, 194, -194], [194, 662, 137], [-194, 137, 662]]
    assert PEG[1].k[:3, :3].tolist() == [[525, 0, -275], [0, 800, 0], [-275, 0, 525]]
    assert PEG[2].k[:3, :3].tolist() == [[800, 0, 0], [0, 525, 275], [0, 275, 525]]
    assert np.array_equal(PEG[3].k, np.diag([300.0, 300.0, 800.0, 50.0, 50.0, 50.0]))
    for m in GEAR:
        assert np.array_equal(m.k[3:, 3:], np.diag([50.0, 50.0, 50.0]))
        assert not m.k[:3, 3:].any()


def test_k5_dither():
    k5 = GEAR[4]
    assert not k5.is_static
    assert k5.at(0.0)[5, 2] == 0.0
    assert k5.k[2, 2] == 400.0
    quarter = 0.25 * 2 * math.pi / k5.dither.omega
    assert k5.at(quarter)[5, 2] == pytest.approx(200.0)
    assert k5.at(quarter)[2, 5] == 0.0


def test_symmetry_of_static_entries():
    assert all(m.is_symmetric() for m in PEG)
    assert GEAR[4].is_symmetric()  # static part
    assert not np.allclose(GEAR[4].at(0.3), GEAR[4].at(0.3).T)


def test_catalogs_invertible_over_time():
    assert catalog_is_invertible(PEG)
    assert catalog_is_invertible(GEAR, times=np.linspace(0, 3, 3001))


def test_k5_pure_translation_when_dither_vanishes():
    x = steady_state_deviation(GEAR[4], [0, 0, 1, 0, 0, 0], t=0.0)
    assert x == pytest.approx([0, 0, 1 / 400, 0, 0, 0], abs=1e-15)


def test_k5_dither_couples_z_force_into_rotation():
    k5 = GEAR[4]
    quarter = 0.25 * 2 * math.pi / k5.dither.omega
    x = steady_state_deviation(k5, [0, 0, 1, 0, 0, 0], t=quarter)
    # rows: 400 z = 1 and 200 z + 50 rz = 0
    assert x[5] == pytest.approx(-200 / 400 / 50, rel=1e-9)


def test_zero_wrench_zero_deviation():
    for m in GEAR:
        assert not steady_state_deviation(m, np.zeros(6), t=0.4).any()


def test_design_diagonal_targets_give_k4():
    d = np.diag([1 / 300, 1 / 300, 1 / 800, 1 / 50, 1 / 50, 1 / 50])
    k = design_stiffness(DeformationSpec(np.ones(6), d))
    assert np.allclose(k.k, K4, rtol=1e-12)


def test_design_identity():
    k = design_stiffness(DeformationSpec(np.ones(6), np.eye(6)))
    assert np.allclose(k.k, np.eye(6), atol=1e-15)


def test_design_recovers_k1_from_oracle_inverse():
    inv = exact_inverse(K1.astype(int).tolist())
    # deformation[i] is column i of the compliance
    deformation = np.array([[float(v) for v in col] for col in transpose(inv)])
    k = design_stiffness(DeformationSpec(np.ones(6), deformation))
    assert np.allclose(k.k, K1, rtol=1e-6, atol=1e-6)


def test_design_with_force_scaling():
    f = np.array([2.0, 2.0, 4.0, 0.5, 0.5, 0.5])
    d = np.diag(f / np.array([300, 300, 800, 50, 50, 50]))
    assert np.allclose(design_stiffness(DeformationSpec(f, d)).k, K4, rtol=1e-12)


def test_design_rejects_bad_specs():
    with pytest.raises(SingularDesign):
        DeformationSpec(np.array([1, 1, 0, 1, 1, 1.0]), np.eye(6))
    d = np.eye(6)
    d[3] = d[2]
    with pytest.raises(SingularDesign):
        design_stiffness(DeformationSpec(np.ones(6), d))


@st.composite
def specs(draw):
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    f = rng.uniform(0.5, 20.0, 6) * rng.choice([-1.0, 1.0], 6)
    d = np.diag(rng.uniform(1e-3, 1e-2, 6)) + rng.uniform(-1e-3, 1e-3, (6, 6))
    return DeformationSpec(f, d)


@settings(max_examples=60)
@given(specs())
def test_design_round_trip(spec):
    k = design_stiffness(spec)
    for i in range(6):
        w = np.zeros(6)
        w[i] = spec.expected_force[i]
        dev = steady_state_deviation(k, w)
        assert np.allclose(dev, spec.deformation[i], rtol=1e-9, atol=1e-9 * np.abs(spec.deformation[i]).max())


def test_rotate_identity_and_isotropic():
    assert rotate_design(PEG[1], 0.0) == PEG[1]
    k4r = rotate_design(PEG[3], 0.7)
    assert np.allclose(k4r.k, K4, atol=1e-12)


def test_rotate_half_turn_flips_xz_coupling():
    r = rotate_design(PEG[1], math.pi)
    # hand-computed: diag(-1,-1,1) K diag(-1,-1,1) negates the x-z entries
    assert r.k[0, 2] == pytest.approx(275.0) and r.k[2, 0] == pytest.approx(275.0)
    assert r.k[0, 0] == pytest.approx(525.0) and r.k[1, 1] == pytest.approx(800.0)


def test_rotate_quarter_turn_maps_k2_onto_k3_pattern():
    r = rotate_design(PEG[1], -math.pi / 2)
    assert np.allclose(r.k[:3, :3], [[800, 0, 0], [0, 525, 275], [0, 275, 525]], atol=1e-9)


@given(st.floats(-math.pi, math.pi))
def test_rotate_keeps_symmetry_and_spectrum(yaw):
    for m in PEG:
        r = rotate_design(m, yaw)
        assert r.is_symmetric(atol=1e-9)
        assert np.allclose(np.linalg.eigvalsh(r.k[:3, :3]), np.linalg.eigvalsh(m.k[:3, :3]), atol=1e-9)


def test_rotate_rejects_dither():
    with pytest.raises(ValueError):
        rotate_design(GEAR[4], 0.1)


def test_matrix_is_immutable_and_hashable():
    m = StiffnessMatrix(K2)
    with pytest.raises(ValueError):
        m.k[0, 0] = 1.0
    assert hash(m) == hash(StiffnessMatrix(K2.copy()))
    assert m != StiffnessMatrix(K3)


def test_catalog_fingerprint():
    assert PEG.fingerprint == builtin_catalogs()[0].fingerprint
    assert PEG.fingerprint != GEAR.fingerprint
    swapped = ActionCatalog((PEG[1], PEG[0], PEG[2], PEG[3]))
    assert swapped.fingerprint != PEG.fingerprint
    with pytest.raises(ValueError):
        ActionCatalog((PEG[0],))
    assert PEG.max_diagonal().tolist() == [800, 800, 800, 50, 50, 50]


def test_catalog_from_config_variants():
    cat = catalog_from_config([
        {"k": K2.tolist(), "name": "A"},
        {"expected_force": [1] * 6, "deformation": np.diag(1 / np.diag(K4)).tolist(), "yaw": 0.3},
        {"k": np.diag([300, 300, 400, 50, 50, 50]).tolist(), "dither": {"row": 5, "col": 2, "amplitude": 200}},
    ])
    assert cat[0].name == "A" and cat[1].name == "K2"
    assert np.allclose(cat[1].k, K4, atol=1e-9)
    assert cat[2].dither == Dither(5, 2, 200.0)


def test_singular_matrix_propagates():
    with pytest.raises(SingularMatrix):
        steady_state_deviation(np.zeros((6, 6)), np.ones(6))
