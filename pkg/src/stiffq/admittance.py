"""Inner control loop: admittance model, PD servo with filtered derivative, DOB.

The admittance model turns the measured wrench into a trajectory deviation
through ``I xdd + D xd + K(t) x = F``.  Its equilibrium is ``K^-1 F``.  The
position command ``x_traj + x`` is tracked by a PD servo; a disturbance
observer cancels whatever the nominal model does not explain so that the PD
loop does not act as a second, unintended stiffness.

All array arguments accept a trailing axis of length 6 and arbitrary leading
batch axes, so many independent admittance models can be stepped at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

TABLE_INERTIA = (1.58, 2.08, 1.09, 0.081, 0.112, 0.035)


class Diverged(RuntimeError):
    """Admittance deviation left the safety envelope."""


def _diag(values) -> np.ndarray:
    return np.diag(np.asarray(values, dtype=float))


@dataclass
class ControllerParams:
    kp: np.ndarray = field(default_factory=lambda: _diag([500.0] * 6))
    kd: np.ndarray = field(default_factory=lambda: _diag([50.0] * 6))
    inertia: np.ndarray = field(default_factory=lambda: _diag(TABLE_INERTIA))
    derivative_cutoff_hz: float = 12.0
    control_period: float = 0.001
    agent_period: float = 0.02
    # per-axis; None means critically damped against ``damping_reference``
    damping: np.ndarray | None = None
    damping_reference: tuple[float, ...] = (800.0, 800.0, 800.0, 50.0, 50.0, 50.0)
    dob_cutoff_hz: float = 30.0
    # admittance-model update period; the Table-II sweep raises this
    admittance_period: float | None = None
    envelope_translation: float = 0.1
    envelope_rotation: float = 1.0
    torque_clamp: float | None = None

    def __post_init__(self):
        for name in ("kp", "kd", "inertia"):
            m = np.asarray(getattr(self, name), dtype=float)
            if m.ndim == 1:
                m = np.diag(m)
            if m.shape != (6, 6) or np.any(np.diag(m) <= 0):
                raise ValueError(f"{name} must be 6x6 with positive diagonal")
            setattr(self, name, m)
        if self.damping is None:
            ref = np.asarray(self.damping_reference, dtype=float)
            self.damping = _diag(2.0 * np.sqrt(np.diag(self.inertia) * ref))
        else:
            d = np.asarray(self.damping, dtype=float)
            self.damping = np.diag(d) if d.ndim == 1 else d
        if self.admittance_period is None:
            self.admittance_period = self.control_period
        self.agent_ticks  # validates divisibility
        self.admittance_ticks

    @staticmethod
    def _ratio(big: float, small: float, what: str) -> int:
        n = round(big / small)
        if n < 1 or abs(n * small - big) > 1e-9 * big:
            raise ValueError(f"{what} must be an integer multiple of the control period")
        return int(n)

    @property
    def agent_ticks(self) -> int:
        return self._ratio(self.agent_period, self.control_period, "agent_period")

    @property
    def admittance_ticks(self) -> int:
        return self._ratio(self.admittance_period, self.control_period, "admittance_period")

    @property
    def inertia_diag(self) -> np.ndarray:
        return np.diag(self.inertia).copy()

    @property
    def envelope(self) -> np.ndarray:
        return np.array([self.envelope_translation] * 3 + [self.envelope_rotation] * 3)


@dataclass
class AdmittanceState:
    deviation: np.ndarray = field(default_factory=lambda: np.zeros(6))
    deviation_rate: np.ndarray = field(default_factory=lambda: np.zeros(6))
    deviation_accel: np.ndarray = field(default_factory=lambda: np.zeros(6))

    @classmethod
    def zeros(cls, batch: tuple[int, ...] = ()) -> "AdmittanceState":
        shape = tuple(batch) + (6,)
        return cls(np.zeros(shape), np.zeros(shape), np.zeros(shape))


def step_admittance(state: AdmittanceState, k, wrench, params: ControllerParams,
                    t: float = 0.0, dt: float | None = None) -> AdmittanceState:
    """One semi-implicit Euler step of the admittance model.

    ``k`` is either a ``StiffnessMatrix`` (sampled at ``t``) or a raw 6x6
    array.  Raises ``Diverged`` when the deviation leaves the envelope.
    """
    km = k.at(t) if hasattr(k, "at") else np.asarray(k, dtype=float)
    dt = params.admittance_period if dt is None else dt
    x, v = state.deviation, state.deviation_rate
    force = np.asarray(wrench, dtype=float) - v @ params.damping.T - x @ km.T
    acc = force / params.inertia_diag
    v_new = v + dt * acc
    x_new = x + dt * v_new
    if not np.all(np.isfinite(x_new)) or np.any(np.abs(x_new) > params.envelope):
        raise Diverged(f"admittance deviation left envelope at t={t:.4f}s")
    return AdmittanceState(x_new, v_new, acc)


@dataclass
class PDFilterState:
    prev_error: np.ndarray | None = None
    derivative: np.ndarray = field(default_factory=lambda: np.zeros(6))


def derivative_filter_coeff(params: ControllerParams) -> float:
    return math.exp(-2.0 * math.pi * params.derivative_cutoff_hz * params.control_period)


def pd_control(command, response, params: ControllerParams,
               filter_state: PDFilterState | None = None):
    """PD law on the pose error with a first-order low-passed derivative.

    Returns ``(torque, new_filter_state)``.  A fresh filter (``None``)
    starts with zero derivative.
    """
    e = np.asarray(command, dtype=float) - np.asarray(response, dtype=float)
    if filter_state is None or filter_state.prev_error is None:
        filter_state = PDFilterState(e, np.zeros_like(e))
    a = derivative_filter_coeff(params)
    raw = (e - filter_state.prev_error) / params.control_period
    d = a * filter_state.derivative + (1.0 - a) * raw
    torque = e @ params.kp.T + d @ params.kd.T
    return torque, PDFilterState(e, d)


def dob_coeff(params: ControllerParams) -> float:
    return math.exp(-2.0 * math.pi * params.dob_cutoff_hz * params.control_period)


def dob_step(estimate, applied_torque, measured_acceleration, params: ControllerParams):
    """First-order disturbance observer.

    The raw disturbance is whatever torque the nominal inertia does not
    account for, ``u - I a``; it is low-passed at ``dob_cutoff_hz``.
    Returns ``(estimated_disturbance, new_state)``; for a first-order filter
    both are the same array.
    """
    raw = np.asarray(applied_torque, dtype=float) - np.asarray(measured_acceleration) * params.inertia_diag
    b = dob_coeff(params)
    new = b * np.asarray(estimate, dtype=float) + (1.0 - b) * raw
    return new, new


@dataclass
class ServoPlant:
    """Stiffly geared tool axis: a double integrator with unmodelled drag and bias.

    Contact wrenches are sensed but do not back-drive the plant; the servo
    rejects them.  The integrator uses the same semi-implicit scheme as the
    admittance model.
    """

    inertia: np.ndarray
    pos: np.ndarray
    vel: np.ndarray
    bias: np.ndarray = field(default_factory=lambda: np.zeros(6))
    viscous: np.ndarray = field(default_factory=lambda: np.zeros(6))
    acc: np.ndarray = field(default_factory=lambda: np.zeros(6))

    @classmethod
    def at_rest(cls, params: ControllerParams, pose, velocity=None, bias=None, viscous=None):
        return cls(
            inertia=params.inertia_diag,
            pos=np.array(pose, dtype=float),
            vel=np.zeros(6) if velocity is None else np.array(velocity, dtype=float),
            bias=np.zeros(6) if bias is None else np.asarray(bias, dtype=float),
            viscous=np.zeros(6) if viscous is None else np.asarray(viscous, dtype=float),
        )

    def disturbance(self) -> np.ndarray:
        return self.bias + self.viscous * self.vel

    def step(self, torque, dt: float) -> np.ndarray:
        self.acc = (np.asarray(torque) - self.disturbance()) / self.inertia
        self.vel = self.vel + dt * self.acc
        self.pos = self.pos + dt * self.vel
        return self.acc


@dataclass
class CommandFrame:
    position_command: np.ndarray
    feedback_torque: np.ndarray


@dataclass
class LoopState:
    """Everything the 1 ms loop carries between ticks."""

    admittance: AdmittanceState = field(default_factory=AdmittanceState.zeros)
    pd: PDFilterState = field(default_factory=PDFilterState)
    disturbance: np.ndarray = field(default_factory=lambda: np.zeros(6))
    held_command: np.ndarray | None = None
    held_feedforward: np.ndarray = field(default_factory=lambda: np.zeros(6))
    tick: int = 0


def inner_loop_tick(state: LoopState, x_traj, wrench, k, params: ControllerParams,
                    t: float, plant: ServoPlant):
    """Advance admittance model, servo and DOB by one control period.

    The admittance model (and therefore the position command) is refreshed
    every ``params.admittance_ticks`` ticks and held in between.  Returns
    ``(CommandFrame, new_state)``; ``plant`` is advanced in place.
    """
    adm = state.admittance
    command = state.held_command
    ff = state.held_feedforward
    if command is None or state.tick % params.admittance_ticks == 0:
        adm = step_admittance(adm, k, wrench, params, t)
        command = np.asarray(x_traj, dtype=float) + adm.deviation
        ff = adm.deviation_accel
    torque_pd, pd_state = pd_control(command, plant.pos, params, state.pd)
    u = ff * params.inertia_diag + torque_pd + state.disturbance
    if params.torque_clamp is not None:
        u = np.clip(u, -params.torque_clamp, params.torque_clamp)
    acc = plant.step(u, params.control_period)
    dist, _ = dob_step(state.disturbance, u, acc, params)
    new_state = replace(state, admittance=adm, pd=pd_state, disturbance=dist,
                        held_command=command, held_feedforward=ff, tick=state.tick + 1)
    return CommandFrame(command, u), new_state
