"""Experiment configuration: dataclasses, TOML loading and hashing.

Every table in the file is optional; missing keys keep the defaults below,
which in turn default to the controller values of ``ControllerParams``.

Example::

    seed = 7
    [scenario]
    name = "pegin-20um"
    [world]
    contact_stiffness = 2.0e4
    [training]
    episodes = 500
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .admittance import ControllerParams
from .agent import AgentConfig
from .simenv import GearSpec, ObservationScale, PegHoleWorld, scenario
from .stiffness import ActionCatalog, builtin_catalogs, catalog_from_config

MM = 1e-3


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


@dataclass
class TrainingConfig:
    episodes: int = 500
    # per-episode offsets are drawn uniformly from these ranges (m)
    offset_x: tuple[float, float] = (-3.5 * MM, 0.0)
    offset_y: tuple[float, float] = (0.0, 3.5 * MM)
    window: int = 20
    # a run is reported as diverged when more than this fraction of episodes breach the envelope
    max_diverged_fraction: float = 0.1
    # greedy validation interval in episodes (0 keeps the final network) and its number of offsets
    validate_every: int = 25
    validation_runs: int = 16


@dataclass
class GridConfig:
    xs: tuple[float, ...] = (-3 * MM, -2 * MM, -1 * MM, 0.0)
    ys: tuple[float, ...] = (0.0, 1 * MM, 2 * MM, 3 * MM)
    episodes_per_cell: int = 10
    jitter: float = 0.2 * MM
    # extra cells probing one-axis versus two-axis errors beyond the grid
    single_axis_cells: tuple[tuple[float, float], ...] = (
        (-5 * MM, 0.0), (-5 * MM, 1 * MM), (-1 * MM, 5 * MM), (0.0, 5 * MM))
    both_axes_cells: tuple[tuple[float, float], ...] = (
        (-5 * MM, 5 * MM), (-4 * MM, 4 * MM), (-4 * MM, 5 * MM), (-5 * MM, 4 * MM))


@dataclass
class SweepConfig:
    periods: tuple[float, ...] = (0.001, 0.002, 0.005, 0.020)
    # centred moving-average length (control ticks) used as the force reference
    reference_window: int = 101


@dataclass
class TimingConfig:
    runs: int = 100
    jitter: float = 0.2 * MM
    bin_width: float = 0.1
    tilt: float | None = None


@dataclass
class ExperimentConfig:
    seed: int = 0
    out: str = "runs"
    scenario: str = "pegin-20um"
    world: dict = field(default_factory=dict)
    gear: dict = field(default_factory=dict)
    controller: dict = field(default_factory=dict)
    observation: ObservationScale = field(default_factory=ObservationScale)
    catalog: str | list = "auto"
    agent: AgentConfig = field(default_factory=AgentConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    timing: TimingConfig = field(default_factory=TimingConfig)
    checkpoint: str | None = None

    # -- builders -------------------------------------------------------

    def build_world(self, **overrides) -> PegHoleWorld:
        try:
            w = scenario(self.scenario, **self.world)
            if w.gear is not None and self.gear:
                w = replace(w, gear=replace(w.gear, **self.gear))
            return replace(w, **overrides) if overrides else w
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid world settings: {exc}") from exc

    def build_params(self, admittance_period: float | None = None) -> ControllerParams:
        kw = dict(self.controller)
        for name in ("kp", "kd", "inertia", "damping"):
            if name in kw and kw[name] is not None:
                kw[name] = np.asarray(kw[name], dtype=float)
        if admittance_period is not None:
            kw["admittance_period"] = admittance_period
        try:
            return ControllerParams(**kw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid controller settings: {exc}") from exc

    def build_catalog(self) -> ActionCatalog:
        peg, gear = builtin_catalogs()
        if isinstance(self.catalog, list):
            try:
                return catalog_from_config(self.catalog)
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"invalid catalog: {exc}") from exc
        choice = self.catalog
        if choice == "auto":
            choice = "gear" if self.build_world().gear is not None else "peg"
        if choice == "peg":
            return peg
        if choice == "gear":
            return gear
        raise ConfigError(f"unknown catalog {self.catalog!r}")

    # -- identity -------------------------------------------------------

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("out")
        return d

    def hash(self) -> str:
        """Short digest of everything that influences results (``out`` excluded)."""
        blob = json.dumps(self.to_dict(), sort_keys=True, default=_jsonable)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(type(o).__name__)


def _build(cls, table: dict, where: str):
    if not isinstance(table, dict):
        raise ConfigError(f"[{where}] must be a table")
    known = {f.name: f for f in fields(cls)}
    unknown = set(table) - set(known)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(sorted(unknown))}")
    kw = {}
    for k, v in table.items():
        if isinstance(v, list):
            v = tuple(tuple(x) if isinstance(x, list) else x for x in v)
        kw[k] = v
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{where}]: {exc}") from exc


def _check_keys(table: dict, cls, where: str):
    known = {f.name for f in fields(cls)}
    unknown = set(table) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(sorted(unknown))}")


def config_from_dict(raw: dict) -> ExperimentConfig:
    raw = dict(raw)
    cfg = ExperimentConfig()
    top = {f.name for f in fields(ExperimentConfig)}
    unknown = set(raw) - top
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(sorted(unknown))}")
    if "seed" in raw:
        if not isinstance(raw["seed"], int) or raw["seed"] < 0:
            raise ConfigError("seed must be a non-negative integer")
        cfg.seed = raw["seed"]
    if "out" in raw:
        cfg.out = str(raw["out"])
    if "checkpoint" in raw:
        cfg.checkpoint = str(raw["checkpoint"])
    if "scenario" in raw:
        sc = raw["scenario"]
        cfg.scenario = sc["name"] if isinstance(sc, dict) else str(sc)
    for name, cls in (("world", PegHoleWorld), ("gear", GearSpec)):
        if name in raw:
            _check_keys(raw[name], cls, name)
            table = {k: tuple(v) if isinstance(v, list) else v for k, v in raw[name].items()}
            setattr(cfg, name, table)
    if "controller" in raw:
        _check_keys(raw["controller"], ControllerParams, "controller")
        cfg.controller = dict(raw["controller"])
    if "catalog" in raw:
        cat = raw["catalog"]
        if isinstance(cat, dict):
            cfg.catalog = cat.get("builtin") or list(cat.get("matrix", []))
        else:
            cfg.catalog = cat
    if "observation" in raw:
        cfg.observation = _build(ObservationScale, raw["observation"], "observation")
    if "agent" in raw:
        cfg.agent = _build(AgentConfig, raw["agent"], "agent")
    if "training" in raw:
        cfg.training = _build(TrainingConfig, raw["training"], "training")
    if "grid" in raw:
        cfg.grid = _build(GridConfig, raw["grid"], "grid")
    if "sweep" in raw:
        cfg.sweep = _build(SweepConfig, raw["sweep"], "sweep")
    if "timing" in raw:
        cfg.timing = _build(TimingConfig, raw["timing"], "timing")
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    cfg.build_world()
    params = cfg.build_params()
    cfg.build_catalog()
    for p in cfg.sweep.periods:
        cfg.build_params(p)
        if p < params.control_period:
            raise ConfigError("sweep periods cannot be shorter than the control period")
    if cfg.training.episodes < 0:
        raise ConfigError("training.episodes must be >= 0")
    if cfg.training.validate_every < 0 or cfg.training.validation_runs < 1:
        raise ConfigError("training.validate_every must be >= 0 and validation_runs >= 1")
    if cfg.grid.episodes_per_cell < 1 or cfg.timing.runs < 1:
        raise ConfigError("episode counts must be positive")
    if cfg.timing.bin_width <= 0 or not math.isfinite(cfg.timing.bin_width):
        raise ConfigError("timing.bin_width must be positive")
    if cfg.agent.optimizer not in ("sgd", "adam"):
        raise ConfigError(f"unknown optimizer {cfg.agent.optimizer!r}")


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return config_from_dict(raw)


def default_config(scenario_name: str = "pegin-20um") -> ExperimentConfig:
    return ExperimentConfig(scenario=scenario_name)


def resolve_out(cfg: ExperimentConfig, override: str | None) -> Path:
    return Path(override if override is not None else cfg.out)
