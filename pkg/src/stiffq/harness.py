"""Experiment orchestration: training, evaluation grids, sampling sweep, timing histograms.

Every experiment is a pure function of an ``ExperimentConfig``; randomness
comes from generators seeded with ``config.seed`` so reruns are bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .agent import DQNAgent, QNetwork, q_forward, reward, select_action
from .config import ExperimentConfig
from .simenv import AssemblyEnv, StepRecord, TaskPhase, ideal_action, lateral_offset

# independent streams derived from the run seed
STREAM_AGENT, STREAM_WORLD, STREAM_GRID, STREAM_TIMING, STREAM_NOISE, STREAM_VALIDATION = range(6)


class DivergedRun(RuntimeError):
    """Too many episodes breached the admittance safety envelope."""


def stream(seed: int, which: int, *extra: int) -> np.random.Generator:
    return np.random.default_rng([seed, which, *extra])


@dataclass
class EpisodeSummary:
    outcome: TaskPhase
    steps: int
    duration: float
    search_time: float
    insertion_time: float
    alignment_time: float
    reward: float
    diverged: bool = False
    offset: tuple[float, float] = (0.0, 0.0)
    tooth_phase: float | None = None

    @property
    def success(self) -> bool:
        return self.outcome == TaskPhase.DONE


@dataclass
class EpisodeLog:
    summary: EpisodeSummary
    rows: list[StepRecord] = field(default_factory=list)
    # one entry per agent tick: (t, pose, action)
    decisions: list[tuple[float, np.ndarray, int]] = field(default_factory=list)


def greedy_policy(net: QNetwork):
    def choose(obs, env):
        return select_action(q_forward(net, obs), 0.0, None)
    return choose


def ideal_policy(obs, env) -> int:
    """Omniscient selector that reads the true hole position."""
    return ideal_action(env.world, env.plant.pos, env.phase)


def summarize(env: AssemblyEnv, r: float) -> EpisodeSummary:
    pt = env.phase_times
    w = env.world
    return EpisodeSummary(
        outcome=env.phase,
        steps=env.agent_steps,
        duration=env.tick * env.params.control_period,
        search_time=pt[TaskPhase.SEARCH],
        insertion_time=pt[TaskPhase.INSERTION],
        alignment_time=pt[TaskPhase.TEETH_ALIGNMENT],
        reward=r,
        diverged=env.diverged,
        offset=tuple(w.initial_offset),
        tooth_phase=None if w.gear is None else w.gear.tooth_phase,
    )


def run_episode(env: AssemblyEnv, choose, learner: DQNAgent | None = None) -> EpisodeLog:
    """Roll one episode; ``choose(obs, env)`` picks the action every agent period.

    When ``learner`` is given every transition is stored and trained on.
    """
    obs = env.reset()
    decisions = []
    r = 0.0
    while True:
        a = choose(obs, env)
        decisions.append((env.t, env.plant.pos.copy(), a))
        nxt, phase = env.step(a)
        terminal = phase.terminal
        r = reward(env.agent_steps, phase, env.world.max_agent_steps) if terminal else 0.0
        if learner is not None:
            learner.observe(obs, a, r, nxt, terminal)
        obs = nxt
        if terminal:
            break
    return EpisodeLog(summarize(env, r), env.rows if env.record else [], decisions)


def make_env(cfg: ExperimentConfig, world=None, params=None, record=False, rng=None) -> AssemblyEnv:
    return AssemblyEnv(
        world=cfg.build_world() if world is None else world,
        params=cfg.build_params() if params is None else params,
        catalog=cfg.build_catalog(),
        obs_scale=cfg.observation,
        record=record,
        rng=rng,
    )


def randomize_world(cfg: ExperimentConfig, base, rng: np.random.Generator, offset=None, jitter: float = 0.0):
    """Draw an episode world: offset (uniform over the training box unless given) and tooth phase."""
    if offset is None:
        ox = rng.uniform(*cfg.training.offset_x)
        oy = rng.uniform(*cfg.training.offset_y)
    else:
        ox, oy = offset
    if jitter > 0.0:
        ox += rng.uniform(-jitter, jitter)
        oy += rng.uniform(-jitter, jitter)
    kw = {"initial_offset": (float(ox), float(oy))}
    if base.gear is not None:
        half = 0.5 * base.gear.pitch
        kw["gear"] = replace(base.gear, tooth_phase=float(rng.uniform(-half, half)))
    if base.initial_tilt > 0.0:
        kw["tilt_axis"] = float(rng.uniform(0.0, 2.0 * math.pi))
    return replace(base, **kw)


# -- training -------------------------------------------------------------

@dataclass
class LearningCurve:
    rewards: list[float] = field(default_factory=list)
    successes: list[bool] = field(default_factory=list)
    epsilons: list[float] = field(default_factory=list)
    steps: list[int] = field(default_factory=list)
    outcomes: list[str] = field(default_factory=list)
    diverged: list[bool] = field(default_factory=list)
    # (episode, greedy success rate, mean greedy duration) per validation round
    validation: list[tuple[int, float, float]] = field(default_factory=list)
    window: int = 20

    def __len__(self):
        return len(self.rewards)

    def moving(self, values) -> np.ndarray:
        v = np.asarray(values, dtype=float)
        return np.array([v[max(0, i - self.window + 1):i + 1].mean() for i in range(len(v))])

    def moving_success(self) -> np.ndarray:
        return self.moving(self.successes)

    def moving_reward(self) -> np.ndarray:
        return self.moving(self.rewards)

    def reward_band(self, level: float = 0.9) -> tuple[np.ndarray, np.ndarray]:
        """Central ``level`` quantile band of the reward over the moving window."""
        v = np.asarray(self.rewards, dtype=float)
        lo_q, hi_q = 0.5 - level / 2, 0.5 + level / 2
        lo = [np.quantile(v[max(0, i - self.window + 1):i + 1], lo_q) for i in range(len(v))]
        hi = [np.quantile(v[max(0, i - self.window + 1):i + 1], hi_q) for i in range(len(v))]
        return np.array(lo), np.array(hi)

    def first_converged(self, threshold: float = 0.9) -> int | None:
        """First episode (1-based) whose full window reaches ``threshold`` success."""
        ms = self.moving_success()
        for i in range(self.window - 1, len(ms)):
            if ms[i] >= threshold:
                return i + 1
        return None


def new_agent(cfg: ExperimentConfig) -> DQNAgent:
    catalog = cfg.build_catalog()
    return DQNAgent.create(len(catalog), cfg.agent, seed=int(stream(cfg.seed, STREAM_AGENT).integers(2**31)),
                           catalog_fingerprint=catalog.fingerprint)


def validation_worlds(cfg: ExperimentConfig, base) -> list:
    """Fixed set of offsets inside the training ranges used to score greedy snapshots."""
    rng = stream(cfg.seed, STREAM_VALIDATION)
    return [randomize_world(cfg, base, rng) for _ in range(cfg.training.validation_runs)]


def validate(cfg: ExperimentConfig, net: QNetwork, worlds, params) -> tuple[float, float]:
    logs = [evaluate(cfg, net, w, params) for w in worlds]
    return (float(np.mean([g.summary.success for g in logs])),
            float(np.mean([g.summary.duration for g in logs])))


def run_training(cfg: ExperimentConfig, progress=None) -> tuple[DQNAgent, LearningCurve]:
    """Train a DQN agent for ``cfg.training.episodes`` episodes on randomised offsets.

    With ``validate_every > 0`` the greedy network is scored on a fixed validation set at that
    interval and the best snapshot (highest success, then shortest duration, later wins ties) is
    left in ``agent.best_net``. Otherwise ``agent.best_net`` is the final network.
    """
    tc = cfg.training
    agent = new_agent(cfg)
    curve = LearningCurve(window=tc.window)
    base = cfg.build_world()
    params = cfg.build_params()
    rng = stream(cfg.seed, STREAM_WORLD)
    noise = stream(cfg.seed, STREAM_NOISE)
    held_out = validation_worlds(cfg, base) if tc.validate_every > 0 else []
    best_key = None
    choose = lambda obs, env: agent.act(obs)  # noqa: E731
    for ep in range(tc.episodes):
        env = make_env(cfg, randomize_world(cfg, base, rng), params, rng=noise)
        eps = agent.schedule.epsilon
        log = run_episode(env, choose, learner=agent)
        agent.end_episode()
        s = log.summary
        curve.rewards.append(s.reward)
        curve.successes.append(s.success)
        curve.epsilons.append(eps)
        curve.steps.append(s.steps)
        curve.outcomes.append(s.outcome.name)
        curve.diverged.append(s.diverged)
        if not agent.net.finite():
            raise DivergedRun(f"network parameters became non-finite in episode {ep + 1}")
        if held_out and (ep + 1) % tc.validate_every == 0:
            rate, duration = validate(cfg, agent.net, held_out, params)
            curve.validation.append((ep + 1, rate, duration))
            if best_key is None or (rate, -duration) >= best_key:
                best_key = (rate, -duration)
                agent.best_net, agent.best_episode = agent.net.copy(), ep + 1
        if progress is not None:
            progress(ep, s, curve)
    if best_key is None:
        agent.best_net, agent.best_episode = agent.net.copy(), agent.episode
    n = len(curve)
    if n and sum(curve.diverged) > tc.max_diverged_fraction * n:
        raise DivergedRun(f"{sum(curve.diverged)} of {n} episodes breached the admittance envelope")
    return agent, curve


# -- evaluation -----------------------------------------------------------

def evaluate(cfg: ExperimentConfig, net: QNetwork | None, world, params=None, record=False) -> EpisodeLog:
    """One greedy (epsilon = 0) episode; ``net=None`` uses the omniscient selector."""
    env = make_env(cfg, world, params, record=record)
    return run_episode(env, ideal_policy if net is None else greedy_policy(net))


@dataclass
class GridResult:
    xs: tuple[float, ...]
    ys: tuple[float, ...]
    rates: np.ndarray  # shape (len(xs), len(ys))
    single_axis: list[tuple[float, float, float]] = field(default_factory=list)
    both_axes: list[tuple[float, float, float]] = field(default_factory=list)

    @staticmethod
    def mean(cells) -> float:
        return float(np.mean([c[2] for c in cells])) if cells else float("nan")


def _cell_rate(cfg, net, base, params, offset, cell_id) -> float:
    rng = stream(cfg.seed, STREAM_GRID, *cell_id)
    wins = 0
    for _ in range(cfg.grid.episodes_per_cell):
        w = randomize_world(cfg, base, rng, offset=offset, jitter=cfg.grid.jitter)
        wins += evaluate(cfg, net, w, params).summary.success
    return wins / cfg.grid.episodes_per_cell


def run_success_grid(cfg: ExperimentConfig, net: QNetwork | None) -> GridResult:
    base = cfg.build_world()
    params = cfg.build_params()
    g = cfg.grid
    rates = np.zeros((len(g.xs), len(g.ys)))
    for i, x in enumerate(g.xs):
        for j, y in enumerate(g.ys):
            rates[i, j] = _cell_rate(cfg, net, base, params, (x, y), (0, i, j))
    single = [(x, y, _cell_rate(cfg, net, base, params, (x, y), (1, k)))
              for k, (x, y) in enumerate(g.single_axis_cells)]
    both = [(x, y, _cell_rate(cfg, net, base, params, (x, y), (2, k)))
            for k, (x, y) in enumerate(g.both_axes_cells)]
    return GridResult(tuple(g.xs), tuple(g.ys), rates, single, both)


# -- sampling-period sweep ------------------------------------------------

@dataclass
class SweepRow:
    period: float
    stable: bool
    outcome: str
    recognition_time: float | None  # s
    max_force_deviation: float | None  # N
    avg_force_deviation: float | None  # N
    peak_force: float


def centered_moving_average(x: np.ndarray, n: int) -> np.ndarray:
    """Centred moving average with the window shrunk symmetrically at the ends."""
    x = np.asarray(x, dtype=float)
    h = n // 2
    c = np.concatenate([[0.0], np.cumsum(x)])
    i = np.arange(len(x))
    half = np.minimum(np.minimum(i, len(x) - 1 - i), h)
    lo, hi = i - half, i + half + 1
    return (c[hi] - c[lo]) / (hi - lo)


def contact_window(world, rows: list[StepRecord]) -> tuple[int, int] | None:
    """Index range of flat-face contact: first nonzero wrench until the peg reaches the chamfer."""
    start = next((i for i, r in enumerate(rows) if np.any(r.wrench != 0.0)), None)
    if start is None:
        return None
    c = 0.5 * (world.hole_diameter - world.peg_diameter)
    end = len(rows)
    for i in range(start, len(rows)):
        if lateral_offset(world, rows[i].pose) < c + world.chamfer_width:
            end = i
            break
    return start, end


def force_deviation(world, rows: list[StepRecord], window: int) -> tuple[float, float] | None:
    """Max and mean of ``| |f| - moving_average(|f|) |`` over the flat-face contact window."""
    span = contact_window(world, rows)
    if span is None or span[1] - span[0] < 2:
        return None
    f = np.array([np.linalg.norm(r.wrench[:3]) for r in rows[span[0]:span[1]]])
    dev = np.abs(f - centered_moving_average(f, window))
    return float(dev.max()), float(dev.mean())


def recognition_time(world, log: EpisodeLog) -> float | None:
    """Delay from first contact to the first agent decision matching the ideal selector."""
    t0 = next((r.t - 0.0 for r in log.rows if np.any(r.wrench != 0.0)), None)
    if t0 is None:
        return None
    # rows carry the end-of-tick time; contact was sensed at the start of that tick
    dt = log.rows[1].t - log.rows[0].t if len(log.rows) > 1 else 0.0
    t0 -= dt
    phase_at = {round(r.t, 9): r.phase for r in log.rows}
    for t, pose, a in log.decisions:
        if t < t0:
            continue
        phase = phase_at.get(round(t + dt, 9), TaskPhase.SEARCH)
        if a == ideal_action(world, pose, phase):
            return t - t0
    return None


def run_sampling_sweep(cfg: ExperimentConfig, net: QNetwork | None) -> list[SweepRow]:
    """Replay the configured scenario with the admittance model updated at each period."""
    world = cfg.build_world()
    rows_out = []
    for period in sorted(cfg.sweep.periods):
        params = cfg.build_params(admittance_period=period)
        log = evaluate(cfg, net, world, params, record=True)
        peak = max((float(np.linalg.norm(r.wrench[:3])) for r in log.rows), default=0.0)
        stable = not log.summary.diverged and peak <= world.force_limit
        dev = force_deviation(world, log.rows, cfg.sweep.reference_window) if stable else None
        rows_out.append(SweepRow(
            period=period,
            stable=stable,
            outcome=log.summary.outcome.name,
            recognition_time=recognition_time(world, log) if stable else None,
            max_force_deviation=None if dev is None else dev[0],
            avg_force_deviation=None if dev is None else dev[1],
            peak_force=peak,
        ))
    return rows_out


# -- timing histogram -----------------------------------------------------

@dataclass
class TimingResult:
    summaries: list[EpisodeSummary]
    bin_width: float

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.summaries if s.success])

    def histogram(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        v = self.column(name)
        if v.size == 0:
            return np.zeros(0, dtype=int), np.zeros(1)
        lo = math.floor(v.min() / self.bin_width) * self.bin_width
        n = max(1, math.ceil((v.max() - lo) / self.bin_width + 1e-9))
        edges = lo + self.bin_width * np.arange(n + 1)
        counts, _ = np.histogram(v, bins=edges)
        return counts, edges

    @property
    def success_rate(self) -> float:
        return float(np.mean([s.success for s in self.summaries]))


def run_timing_histogram(cfg: ExperimentConfig, net: QNetwork | None) -> TimingResult:
    base = cfg.build_world()
    if cfg.timing.tilt is not None:
        base = replace(base, initial_tilt=cfg.timing.tilt)
    params = cfg.build_params()
    rng = stream(cfg.seed, STREAM_TIMING)
    out = []
    for _ in range(cfg.timing.runs):
        w = randomize_world(cfg, base, rng, offset=base.initial_offset, jitter=cfg.timing.jitter)
        out.append(evaluate(cfg, net, w, params).summary)
    return TimingResult(out, cfg.timing.bin_width)


def export_action_trace(world, log: EpisodeLog) -> list[tuple[float, float, int]]:
    """Per agent tick: peg position relative to the hole axis and the chosen action."""
    hx, hy = world.hole_center
    return [(float(p[0] - hx), float(p[1] - hy), int(a)) for _, p, a in log.decisions]
