"""Non-diagonal stiffness matrices: design from deformation targets, evaluation, catalogs.

The admittance model settles at ``x = K^-1 F``.  Designing ``K`` therefore
amounts to choosing, for every wrench axis ``i``, the deformation the robot
should exhibit under an expected force ``f_i`` on that axis: those
deformations divided by the force are the columns of ``K^-1``.

Units: translational block N/m, rotational block Nm/rad, coupling blocks mixed.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import SingularMatrix, condition_number, invert, mat6, rotation_z6, solve

AXES = ("x", "y", "z", "rx", "ry", "rz")
DEFAULT_DITHER_OMEGA = 2.0 * math.pi * 1.0


class SingularDesign(ValueError):
    """The assembled compliance columns do not form an invertible matrix."""


@dataclass(frozen=True)
class Dither:
    """Time-varying entry ``k[row, col] += amplitude * sin(omega * t)``."""

    row: int
    col: int
    amplitude: float
    omega: float = DEFAULT_DITHER_OMEGA

    def value(self, t: float) -> float:
        return self.amplitude * math.sin(self.omega * t)


@dataclass(frozen=True, eq=False)
class StiffnessMatrix:
    k: np.ndarray
    dither: Dither | None = None
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "k", mat6(self.k))
        self.k.setflags(write=False)

    def at(self, t: float = 0.0) -> np.ndarray:
        if self.dither is None:
            return self.k
        k = self.k.copy()
        k[self.dither.row, self.dither.col] += self.dither.value(t)
        return k

    @property
    def is_static(self) -> bool:
        return self.dither is None

    def is_symmetric(self, atol: float = 1e-9) -> bool:
        return bool(np.allclose(self.k, self.k.T, atol=atol))

    def fingerprint_bytes(self) -> bytes:
        parts = [np.ascontiguousarray(self.k, dtype="<f8").tobytes()]
        if self.dither is not None:
            d = self.dither
            parts.append(np.array([d.row, d.col, d.amplitude, d.omega], dtype="<f8").tobytes())
        return b"".join(parts)

    def __eq__(self, other):
        if not isinstance(other, StiffnessMatrix):
            return NotImplemented
        return self.fingerprint_bytes() == other.fingerprint_bytes()

    def __hash__(self):
        return hash(self.fingerprint_bytes())


@dataclass(frozen=True)
class DeformationSpec:
    """Expected force per wrench axis and the deformation wanted under it.

    ``deformation[i]`` is the 6-vector the robot should deviate by when the
    force/torque ``expected_force[i]`` acts alone on axis ``i``.
    """

    expected_force: np.ndarray
    deformation: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.expected_force, dtype=float).reshape(6)
        d = np.asarray(self.deformation, dtype=float).reshape(6, 6)
        if np.any(f == 0.0):
            raise SingularDesign("every expected force must be nonzero")
        object.__setattr__(self, "expected_force", f)
        object.__setattr__(self, "deformation", d)

    def compliance(self) -> np.ndarray:
        """Matrix whose column ``i`` is ``deformation[i] / expected_force[i]``."""
        return (self.deformation / self.expected_force[:, None]).T


@dataclass(frozen=True)
class ActionCatalog:
    matrices: tuple[StiffnessMatrix, ...]
    name: str = ""
    _fp: str = field(default="", init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.matrices) < 2:
            raise ValueError("an action catalog needs at least two matrices")
        object.__setattr__(self, "matrices", tuple(self.matrices))
        h = hashlib.sha256()
        for m in self.matrices:
            h.update(m.fingerprint_bytes())
        object.__setattr__(self, "_fp", h.hexdigest())

    def __len__(self):
        return len(self.matrices)

    def __getitem__(self, i):
        return self.matrices[i]

    def __iter__(self):
        return iter(self.matrices)

    @property
    def fingerprint(self) -> str:
        return self._fp

    def max_diagonal(self) -> np.ndarray:
        """Largest static diagonal entry per axis over the catalog."""
        return np.max([np.diag(m.k) for m in self.matrices], axis=0)


def design_stiffness(spec: DeformationSpec, name: str = "") -> StiffnessMatrix:
    try:
        k = invert(spec.compliance())
    except SingularMatrix as exc:
        raise SingularDesign(str(exc)) from exc
    return StiffnessMatrix(k, name=name)


def steady_state_deviation(k: StiffnessMatrix | np.ndarray, wrench, t: float = 0.0) -> np.ndarray:
    """Deviation ``K(t)^-1 F`` the admittance model converges to."""
    km = k.at(t) if isinstance(k, StiffnessMatrix) else np.asarray(k, dtype=float)
    return solve(km, np.asarray(wrench, dtype=float))


def rotate_design(k: StiffnessMatrix, yaw: float) -> StiffnessMatrix:
    """Re-orient a static design about the tool z axis: ``R K R^T``."""
    if not k.is_static:
        raise ValueError("only static matrices can be rotated")
    r = rotation_z6(yaw)
    return StiffnessMatrix(r @ k.k @ r.T, name=k.name)


def condition(k: StiffnessMatrix, t: float = 0.0) -> float:
    return condition_number(k.at(t))


# -- catalog constants ----------------------------------------------------

ROTATIONAL_BLOCK = np.diag([50.0, 50.0, 50.0])


def _with_rotational(trans) -> np.ndarray:
    k = np.zeros((6, 6))
    k[:3, :3] = np.asarray(trans, dtype=float)
    k[3:, 3:] = ROTATIONAL_BLOCK
    return k


K1 = _with_rotational([[525, 194, -194], [194, 662, 137], [-194, 137, 662]])
K2 = _with_rotational([[525, 0, -275], [0, 800, 0], [-275, 0, 525]])
K3 = _with_rotational([[800, 0, 0], [0, 525, 275], [0, 275, 525]])
K4 = _with_rotational(np.diag([300.0, 300.0, 800.0]))
K5_STATIC = _with_rotational(np.diag([300.0, 300.0, 400.0]))
K5_DITHER_AMPLITUDE = 200.0


def builtin_catalogs(dither_omega: float = DEFAULT_DITHER_OMEGA) -> tuple[ActionCatalog, ActionCatalog]:
    """Return ``(peg_in_hole, gear)`` catalogs; index order is K1..K4(, K5)."""
    peg = tuple(StiffnessMatrix(k, name=f"K{i + 1}") for i, k in enumerate((K1, K2, K3, K4)))
    k5 = StiffnessMatrix(
        K5_STATIC,
        dither=Dither(row=5, col=2, amplitude=K5_DITHER_AMPLITUDE, omega=dither_omega),
        name="K5",
    )
    return ActionCatalog(peg, name="peg-in-hole"), ActionCatalog(peg + (k5,), name="gear")


def catalog_is_invertible(catalog: ActionCatalog, times=None) -> bool:
    if times is None:
        times = np.linspace(0.0, 2.0, 201)
    for m in catalog:
        ts = [0.0] if m.is_static else times
        for t in ts:
            try:
                invert(m.at(t))
            except SingularMatrix:
                return False
    return True


def catalog_from_config(entries: list[dict], name: str = "custom") -> ActionCatalog:
    """Build a catalog from parsed config tables.

    Each entry has either ``k`` (6 rows of 6) or ``expected_force`` +
    ``deformation``, optionally ``yaw`` and a ``dither`` table.
    """
    mats = []
    for i, e in enumerate(entries):
        label = e.get("name", f"K{i + 1}")
        if "k" in e:
            m = StiffnessMatrix(np.asarray(e["k"], dtype=float), name=label)
        else:
            m = design_stiffness(
                DeformationSpec(e["expected_force"], e["deformation"]), name=label)
        if "yaw" in e:
            m = rotate_design(m, float(e["yaw"]))
        if "dither" in e:
            d = e["dither"]
            m = StiffnessMatrix(m.k, dither=Dither(int(d["row"]), int(d["col"]), float(d["amplitude"]),
                                                  float(d.get("omega", DEFAULT_DITHER_OMEGA))), name=label)
        mats.append(m)
    return ActionCatalog(tuple(mats), name=name)
