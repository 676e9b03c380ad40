"""Peg-in-hole and gear-insertion worlds driven by the admittance loop.

The robot always starts from the same nominal pose and follows a straight
descent.  Position errors are produced by moving the hole (as with a manual
x-y stage), so the tool coordinates in the observation carry no direct
information about where the hole is.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .admittance import ControllerParams, Diverged, LoopState, ServoPlant, inner_loop_tick
from .contact import contact_wrench, tooth_phase_error


class TaskPhase(enum.IntEnum):
    SEARCH = 0
    INSERTION = 1
    TEETH_ALIGNMENT = 2
    DONE = 3
    FAILED = 4

    @property
    def terminal(self) -> bool:
        return self in (TaskPhase.DONE, TaskPhase.FAILED)


@dataclass(frozen=True)
class GearSpec:
    tooth_count: int = 30
    module: float = 0.002
    tooth_phase: float = 0.0
    mesh_tolerance: float = 0.01
    seat_depth: float = 0.004
    mesh_depth: float = 0.003
    # None: same as the world's contact stiffness
    tooth_stiffness: float | None = None
    tooth_rot_stiffness: float = 50.0

    def __post_init__(self):
        if self.tooth_count < 2:
            raise ValueError("tooth_count must be >= 2")
        if not 0.0 < self.mesh_tolerance < self.pitch:
            raise ValueError("mesh_tolerance must be positive and below the tooth pitch")

    @property
    def pitch(self) -> float:
        return 2.0 * math.pi / self.tooth_count


@dataclass(frozen=True)
class PegHoleWorld:
    peg_diameter: float = 0.01005
    hole_diameter: float = 0.01007
    chamfer_width: float = 0.001
    surface_height: float = 0.0
    insertion_depth_goal: float = 0.006
    entry_threshold: float = 0.002
    contact_stiffness: float = 2e4
    contact_damping: float = 100.0
    friction_coefficient: float = 0.3
    # start pose of the tool; hole_center = start - initial_offset
    start_xy: tuple[float, float] = (0.0, 0.0)
    start_height: float = 0.002
    initial_offset: tuple[float, float] = (-0.003, 0.003)
    initial_tilt: float = 0.0
    tilt_axis: float = 0.0
    descend_speed: float = 0.005
    max_agent_steps: int = 500
    force_limit: float = 40.0
    wrench_noise: float = 0.0
    plant_bias: tuple[float, ...] = (0.0, 0.0, 2.0, 0.0, 0.0, 0.0)
    plant_viscous: tuple[float, ...] = (5.0, 5.0, 5.0, 0.05, 0.05, 0.05)
    gear: GearSpec | None = None

    def __post_init__(self):
        if self.hole_diameter <= self.peg_diameter:
            raise ValueError("hole_diameter must exceed peg_diameter")
        if self.descend_speed <= 0:
            raise ValueError("descend_speed must be positive")

    @property
    def hole_center(self) -> tuple[float, float]:
        return (self.start_xy[0] - self.initial_offset[0], self.start_xy[1] - self.initial_offset[1])

    @property
    def nominal_orientation(self) -> tuple[float, float, float]:
        return (0.0, 0.0, 0.0)

    @property
    def goal_depth(self) -> float:
        if self.gear is not None:
            return self.gear.seat_depth + self.gear.mesh_depth
        return self.insertion_depth_goal

    def start_pose(self) -> np.ndarray:
        tilt = self.initial_tilt
        return np.array([
            self.start_xy[0], self.start_xy[1], self.surface_height + self.start_height,
            tilt * math.cos(self.tilt_axis), tilt * math.sin(self.tilt_axis), 0.0,
        ])

    @property
    def z_initial(self) -> float:
        return self.surface_height + self.start_height

    @property
    def z_goal(self) -> float:
        return self.surface_height - self.goal_depth

    def satisfies_preconditions(self) -> bool:
        """Peg starts at negative x and positive y relative to the hole."""
        return self.initial_offset[0] < 0.0 < self.initial_offset[1]


# kept as a distinct name for callers that think in terms of the gear task
GearWorld = PegHoleWorld


SCENARIOS = ("pegin-20um", "pegin-20um-tilt2", "gear-module2")


def scenario(name: str, **overrides) -> PegHoleWorld:
    if name == "pegin-20um":
        w = PegHoleWorld()
    elif name == "pegin-20um-tilt2":
        w = PegHoleWorld(initial_tilt=math.radians(2.0))
    elif name == "gear-module2":
        w = PegHoleWorld(peg_diameter=0.02, hole_diameter=0.02002, gear=GearSpec(),
                         descend_speed=0.008)
    else:
        raise KeyError(f"unknown scenario {name!r}; choose from {SCENARIOS}")
    return replace(w, **overrides) if overrides else w


def plan_trajectory(start, descend_speed: float, t: float) -> np.ndarray:
    """Straight descent along -z at constant speed from ``start``."""
    if descend_speed <= 0:
        raise ValueError("descend_speed must be positive")
    p = np.array(start, dtype=float)
    p[2] -= descend_speed * t
    return p


@dataclass(frozen=True)
class ObservationScale:
    force_max: tuple[float, float, float] = (20.0, 20.0, 40.0)
    torque_max: tuple[float, float] = (1.0, 1.0)
    # lateral displacement from the start pose is reported in this unit (m)
    position_unit: float = 1.0

    def __post_init__(self):
        if self.position_unit <= 0 or min(self.force_max) <= 0 or min(self.torque_max) <= 0:
            raise ValueError("observation scales must be positive")


def observe(world: PegHoleWorld, tool_pose, wrench, scale: ObservationScale = ObservationScale()) -> np.ndarray:
    """Normalised 8-dim agent state.

    ``[p_x, p_y, (p_z - p_z^i)/(p_z^i - p_z^g), f_x/fm_x, f_y/fm_y, f_z/fm_z, tau_x/tm_x, tau_y/tm_y]``
    with ``p_x, p_y`` measured from the start pose in ``scale.position_unit``.
    """
    zi, zg = world.z_initial, world.z_goal
    if zi == zg:
        raise ValueError("initial and goal heights coincide")
    return np.array([
        (tool_pose[0] - world.start_xy[0]) / scale.position_unit,
        (tool_pose[1] - world.start_xy[1]) / scale.position_unit,
        (tool_pose[2] - zi) / (zi - zg),
        wrench[0] / scale.force_max[0], wrench[1] / scale.force_max[1], wrench[2] / scale.force_max[2],
        wrench[3] / scale.torque_max[0], wrench[4] / scale.torque_max[1],
    ])


def lateral_offset(world: PegHoleWorld, pose) -> float:
    hx, hy = world.hole_center
    return math.hypot(pose[0] - hx, pose[1] - hy)


def next_phase(world: PegHoleWorld, phase: TaskPhase, pose, wrench, agent_steps: int, meshed: bool) -> TaskPhase:
    """Phase transitions; never regresses."""
    if phase.terminal:
        return phase
    depth = world.surface_height - pose[2]
    c = 0.5 * (world.hole_diameter - world.peg_diameter)
    in_mouth = lateral_offset(world, pose) < c + world.chamfer_width
    if float(np.linalg.norm(wrench[:3])) > world.force_limit:
        return TaskPhase.FAILED
    if phase == TaskPhase.SEARCH and in_mouth and depth > world.entry_threshold:
        phase = TaskPhase.INSERTION
    if world.gear is None:
        if phase == TaskPhase.INSERTION and depth >= world.insertion_depth_goal:
            phase = TaskPhase.DONE
    else:
        if phase == TaskPhase.INSERTION and depth >= world.gear.seat_depth:
            phase = TaskPhase.TEETH_ALIGNMENT
        if phase == TaskPhase.TEETH_ALIGNMENT and meshed and depth >= world.goal_depth:
            phase = TaskPhase.DONE
    if not phase.terminal and agent_steps >= world.max_agent_steps:
        phase = TaskPhase.FAILED
    return phase


@dataclass
class StepRecord:
    t: float
    pose: np.ndarray
    wrench: np.ndarray
    action: int
    # phase in effect while this tick ran
    phase: TaskPhase


@dataclass
class AssemblyEnv:
    """Couples a world, the inner control loop and an action catalog.

    ``step(action)`` holds the chosen stiffness for one agent period
    (``params.agent_ticks`` control ticks) and returns the new observation.
    """

    world: PegHoleWorld
    params: ControllerParams
    catalog: object
    obs_scale: ObservationScale = field(default_factory=ObservationScale)
    record: bool = False
    rng: np.random.Generator | None = None

    def reset(self) -> np.ndarray:
        w = self.world
        start = w.start_pose()
        self.start = start
        self.t = 0.0
        self.tick = 0
        self.agent_steps = 0
        self.phase = TaskPhase.SEARCH
        self.meshed = False
        self.diverged = False
        v0 = np.zeros(6)
        v0[2] = -w.descend_speed
        self.plant = ServoPlant.at_rest(self.params, start, v0, bias=w.plant_bias, viscous=w.plant_viscous)
        # servo has been running: DOB already holds the steady disturbance
        self.loop = LoopState(disturbance=self.plant.disturbance())
        self.wrench = np.zeros(6)
        self.rows: list[StepRecord] = []
        self.phase_ticks = {p: 0 for p in TaskPhase}
        return self.observation()

    @property
    def phase_times(self) -> dict:
        return {p: n * self.params.control_period for p, n in self.phase_ticks.items()}

    def observation(self) -> np.ndarray:
        return observe(self.world, self.plant.pos, self.wrench, self.obs_scale)

    def measure(self) -> np.ndarray:
        f = contact_wrench(self.world, self.plant.pos, self.plant.vel, self.meshed)
        if self.world.wrench_noise > 0.0 and self.rng is not None:
            f = f + self.rng.normal(0.0, self.world.wrench_noise, 6)
        return f

    def inner_tick(self, k, action: int = -1) -> None:
        w = self.world
        x_traj = plan_trajectory(self.start, w.descend_speed, self.t)
        self.wrench = self.measure()
        try:
            _, self.loop = inner_loop_tick(self.loop, x_traj, self.wrench, k, self.params, self.t, self.plant)
        except Diverged:
            self.diverged = True
            self.phase = TaskPhase.FAILED
            return
        during = self.phase
        self.phase_ticks[during] += 1
        self.tick += 1
        self.t = self.tick * self.params.control_period
        if w.gear is not None and self.phase == TaskPhase.TEETH_ALIGNMENT and not self.meshed:
            if abs(tooth_phase_error(w, self.plant.pos)) <= w.gear.mesh_tolerance:
                self.meshed = True
        self.phase = next_phase(w, self.phase, self.plant.pos, self.wrench, self.agent_steps, self.meshed)
        if self.record:
            self.rows.append(StepRecord(self.t, self.plant.pos.copy(), self.wrench.copy(), action, during))

    def step(self, action: int):
        """Hold ``catalog[action]`` for one agent period; returns ``(obs, phase)``."""
        k = self.catalog[action]
        for _ in range(self.params.agent_ticks):
            self.inner_tick(k, action)
            if self.phase.terminal:
                break
        self.agent_steps += 1
        self.phase = next_phase(self.world, self.phase, self.plant.pos, self.wrench, self.agent_steps, self.meshed)
        return self.observation(), self.phase


# lateral direction each static catalog entry pushes the peg under a downward load
IDEAL_DIRECTIONS = {0: -math.pi / 4, 1: 0.0, 2: -math.pi / 2}
CENTRE_ACTION = 3
ALIGN_ACTION = 4


def ideal_action(world: PegHoleWorld, pose, phase: TaskPhase = TaskPhase.SEARCH) -> int:
    """Catalog index an omniscient selector would pick for the true peg/hole geometry.

    Once the peg is inside the mouth the stiff-z, soft-xy entry is ideal (the
    dither entry for a gear in its alignment phase).  Otherwise the entry whose
    drift direction is closest to the direction of the hole wins.
    """
    if world.gear is not None and phase == TaskPhase.TEETH_ALIGNMENT:
        return ALIGN_ACTION
    c = 0.5 * (world.hole_diameter - world.peg_diameter)
    hx, hy = world.hole_center
    dx, dy = hx - pose[0], hy - pose[1]
    if math.hypot(dx, dy) < c + world.chamfer_width or phase != TaskPhase.SEARCH:
        return CENTRE_ACTION
    heading = math.atan2(dy, dx)

    def gap(a):
        return abs(math.remainder(heading - IDEAL_DIRECTIONS[a], 2.0 * math.pi))

    return min(IDEAL_DIRECTIONS, key=gap)
