"""Fixed-size 6-vector / 6x6-matrix helpers.

Vectors are plain ``numpy`` float arrays of shape ``(6,)`` ordered
``(x, y, z, rx, ry, rz)``; matrices are ``(6, 6)``.  The solver is a
partial-pivot Gaussian elimination specialised for small dense systems so
that the control loop does not depend on a LAPACK call per tick.
"""

from __future__ import annotations

import numpy as np

COND_BOUND = 1e12
PIVOT_RTOL = 1e-12


class SingularMatrix(ValueError):
    """Raised when elimination meets a pivot below tolerance."""


def vec6(values=None) -> np.ndarray:
    if values is None:
        return np.zeros(6)
    v = np.asarray(values, dtype=float).reshape(6)
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite entry in 6-vector")
    return v.copy()


def mat6(values) -> np.ndarray:
    m = np.asarray(values, dtype=float)
    if m.shape != (6, 6):
        raise ValueError(f"expected 6x6 matrix, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("non-finite entry in 6x6 matrix")
    return m.copy()


def _eliminate(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``a @ x = b`` in place on copies; ``b`` may have several columns."""
    n = a.shape[0]
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    scale = np.max(np.abs(a))
    if not np.isfinite(scale) or scale == 0.0:
        raise SingularMatrix("zero or non-finite matrix")
    tol = PIVOT_RTOL * scale
    for k in range(n):
        p = k + int(np.argmax(np.abs(a[k:, k])))
        if abs(a[p, k]) <= tol:
            raise SingularMatrix(f"pivot {k} below tolerance {tol:.3g}")
        if p != k:
            a[[k, p]] = a[[p, k]]
            b[[k, p]] = b[[p, k]]
        f = a[k + 1:, k] / a[k, k]
        a[k + 1:, k:] -= np.outer(f, a[k, k:])
        b[k + 1:] -= np.outer(f, b[k]) if b.ndim == 2 else f * b[k]
    x = np.empty_like(b)
    for k in range(n - 1, -1, -1):
        x[k] = (b[k] - a[k, k + 1:] @ x[k + 1:]) / a[k, k]
    return x


def solve(a, b) -> np.ndarray:
    """Return ``x`` with ``a @ x = b``.

    Raises
    ------
    SingularMatrix
        If a pivot falls below ``1e-12 * max|a|``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or b.shape[0] != a.shape[0]:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return _eliminate(a, b)


def invert(a, cond_bound: float = COND_BOUND) -> np.ndarray:
    """Columnwise inverse; rejects matrices whose 1-norm condition exceeds ``cond_bound``."""
    a = np.asarray(a, dtype=float)
    inv = _eliminate(a, np.eye(a.shape[0]))
    if condition_number(a, inv) > cond_bound:
        raise SingularMatrix("condition number above bound")
    return inv


def condition_number(a, inv=None) -> float:
    a = np.asarray(a, dtype=float)
    if inv is None:
        inv = _eliminate(a, np.eye(a.shape[0]))
    norm1 = lambda m: float(np.max(np.sum(np.abs(m), axis=0)))  # noqa: E731
    return norm1(a) * norm1(inv)


def rotation_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def block_diag6(r3: np.ndarray) -> np.ndarray:
    """Embed a 3x3 rotation as ``diag(R, R)`` acting on (force, torque) or (pos, rot)."""
    out = np.zeros((6, 6))
    out[:3, :3] = r3
    out[3:, 3:] = r3
    return out


def rotation_z6(angle: float) -> np.ndarray:
    return block_diag6(rotation_z(angle))
