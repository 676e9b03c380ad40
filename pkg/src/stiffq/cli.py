"""Command-line entry point: ``stiffq <subcommand> [--config F] [--seed N] [--out DIR]``.

Exit codes: 0 success, 2 configuration error, 3 diverged run.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import harness as H
from .agent import CheckpointMismatch, load_checkpoint, save_checkpoint
from .config import ConfigError, ExperimentConfig, load_config, resolve_out
from .io import write_csv, write_json, write_step_log
from .linalg import invert
from .stiffness import catalog_from_config, condition

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 2, 3

log = logging.getLogger("stiffq")


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _policy_net(cfg: ExperimentConfig, args):
    """Network from ``--checkpoint`` (or the config), or ``None`` for the omniscient selector."""
    if getattr(args, "policy", "dqn") == "ideal":
        return None
    path = getattr(args, "checkpoint", None) or cfg.checkpoint
    if path is None:
        raise ConfigError("a checkpoint is required (use --checkpoint or --policy ideal)")
    try:
        net, _ = load_checkpoint(path, cfg.build_catalog().fingerprint)
    except FileNotFoundError as exc:
        raise ConfigError(f"checkpoint not found: {path}") from exc
    except CheckpointMismatch as exc:
        raise ConfigError(str(exc)) from exc
    return net


def cmd_train(cfg: ExperimentConfig, args) -> int:
    if args.episodes is not None:
        cfg.training.episodes = args.episodes
    out = resolve_out(cfg, args.out)
    h = cfg.hash()

    def progress(ep, s, curve):
        if (ep + 1) % 20 == 0:
            log.info("episode %d  success(avg20)=%.2f  epsilon=%.3f", ep + 1, curve.moving_success()[-1],
                     curve.epsilons[-1])

    try:
        agent, curve = H.run_training(cfg, progress)
    except H.DivergedRun as exc:
        log.error("%s", exc)
        return EXIT_DIVERGED
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "checkpoint.npz", agent.best_net, agent.catalog_fingerprint, agent.schedule.epsilon,
                    agent.best_episode, cfg.seed, extra={"config_hash": h, "trained_episodes": agent.episode})
    ms, mr = curve.moving_success(), curve.moving_reward()
    lo, hi = curve.reward_band()
    rows = [(i + 1, curve.rewards[i], curve.successes[i], curve.outcomes[i], curve.steps[i], curve.epsilons[i],
             ms[i], mr[i], lo[i], hi[i]) for i in range(len(curve))]
    write_csv(out / "learning_curve.csv",
              ("episode", "reward", "success", "outcome", "steps", "epsilon",
               "success_avg", "reward_avg", "reward_p05", "reward_p95"), rows, h, cfg.seed)
    write_json(out / "train.json", {
        "episodes": len(curve),
        "converged_episode": curve.first_converged(),
        "final_success_avg": float(ms[-1]) if len(ms) else None,
        "diverged_episodes": int(sum(curve.diverged)),
        "selected_episode": agent.best_episode,
        "validation": [list(v) for v in curve.validation],
    }, h, cfg.seed)
    print(f"trained {len(curve)} episodes; checkpoint at {out / 'checkpoint.npz'}")
    return EXIT_OK


def cmd_eval_grid(cfg: ExperimentConfig, args) -> int:
    net = _policy_net(cfg, args)
    out = resolve_out(cfg, args.out)
    h = cfg.hash()
    res = H.run_success_grid(cfg, net)
    rows = [("grid", x * 1e3, y * 1e3, res.rates[i, j]) for i, x in enumerate(res.xs) for j, y in enumerate(res.ys)]
    rows += [("single_axis", x * 1e3, y * 1e3, r) for x, y, r in res.single_axis]
    rows += [("both_axes", x * 1e3, y * 1e3, r) for x, y, r in res.both_axes]
    write_csv(out / "grid.csv", ("kind", "x_mm", "y_mm", "success_rate"), rows, h, cfg.seed)
    write_json(out / "grid.json", {
        "grid_min": float(res.rates.min()),
        "single_axis_mean": res.mean(res.single_axis),
        "both_axes_mean": res.mean(res.both_axes),
    }, h, cfg.seed)
    print(f"grid success min {res.rates.min():.2f}, mean {res.rates.mean():.2f}")
    return EXIT_OK


def cmd_sweep(cfg: ExperimentConfig, args) -> int:
    net = _policy_net(cfg, args)
    out = resolve_out(cfg, args.out)
    h = cfg.hash()
    rows = H.run_sampling_sweep(cfg, net)
    ms = lambda v: None if v is None else v * 1e3  # noqa: E731
    write_csv(out / "sweep.csv",
              ("period_ms", "stable", "outcome", "recognition_ms", "max_force_dev_N", "avg_force_dev_N", "peak_force_N"),
              [(r.period * 1e3, r.stable, r.outcome, ms(r.recognition_time), r.max_force_deviation,
                r.avg_force_deviation, r.peak_force) for r in rows], h, cfg.seed)
    write_json(out / "sweep.json", {"rows": [r.__dict__ for r in rows]}, h, cfg.seed)
    for r in rows:
        state = "stable" if r.stable else "UNSTABLE"
        print(f"{r.period * 1e3:5.0f} ms  {state:8s}  max dev {r.max_force_deviation}  mean dev {r.avg_force_deviation}")
    return EXIT_OK


def cmd_timing(cfg: ExperimentConfig, args) -> int:
    net = _policy_net(cfg, args)
    out = resolve_out(cfg, args.out)
    h = cfg.hash()
    res = H.run_timing_histogram(cfg, net)
    write_csv(out / "timing_runs.csv",
              ("run", "outcome", "search_s", "insertion_s", "alignment_s", "total_s", "offset_x_mm", "offset_y_mm"),
              [(i, s.outcome.name, s.search_time, s.insertion_time, s.alignment_time, s.duration,
                s.offset[0] * 1e3, s.offset[1] * 1e3) for i, s in enumerate(res.summaries)], h, cfg.seed)
    hist_rows = []
    means = {}
    for name in ("search_time", "insertion_time", "alignment_time", "duration"):
        counts, edges = res.histogram(name)
        hist_rows += [(name, edges[k], edges[k + 1], int(c)) for k, c in enumerate(counts)]
        col = res.column(name)
        means[name] = float(col.mean()) if col.size else None
    write_csv(out / "timing_hist.csv", ("quantity", "bin_lo_s", "bin_hi_s", "count"), hist_rows, h, cfg.seed)
    write_json(out / "timing.json", {"success_rate": res.success_rate, "means_s": means}, h, cfg.seed)
    print(f"success {res.success_rate:.2f}; mean total {means['duration']}")
    return EXIT_OK


def cmd_trace(cfg: ExperimentConfig, args) -> int:
    net = _policy_net(cfg, args)
    out = resolve_out(cfg, args.out)
    h = cfg.hash()
    world = cfg.build_world()
    ep = H.evaluate(cfg, net, world, record=True)
    write_step_log(out / "steplog.csv", ep.rows, h, cfg.seed)
    write_csv(out / "actions.csv", ("px_rel", "py_rel", "action"), H.export_action_trace(world, ep), h, cfg.seed)
    print(f"{ep.summary.outcome.name} after {ep.summary.duration:.3f} s")
    return EXIT_OK


def load_design_entries(path) -> list[dict]:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"spec file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    entries = raw.get("matrix") or raw.get("catalog", {}).get("matrix")
    if not entries:
        raise ConfigError("spec file needs at least one [[matrix]] table")
    return entries


def cmd_design(cfg_path, args) -> int:
    if not cfg_path:
        raise ConfigError("design-stiffness needs --config pointing at a spec file")
    entries = load_design_entries(cfg_path)
    if len(entries) == 1:
        entries = entries * 2  # a catalog needs two members; report the one
    try:
        cat = catalog_from_config(entries, name="design")
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid stiffness spec: {exc}") from exc
    np.set_printoptions(precision=6, suppress=True, linewidth=120)
    report = []
    seen = set()
    for m in cat:
        if m.name in seen:
            continue
        seen.add(m.name)
        inv = invert(m.at(0.0))
        cond = condition(m)
        print(f"[{m.name}]\nK =\n{m.k}\nK^-1 =\n{inv}\ncondition = {cond:.6g}\n")
        report.append({"name": m.name, "k": m.k, "k_inv": inv, "condition": cond})
    if args.out:
        write_json(Path(args.out) / "design.json", {"matrices": report}, cat.fingerprint[:16],
                   args.seed if args.seed is not None else 0)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stiffq", description="Stiffness-selecting DQN assembly simulator")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, policy=False):
        sp.add_argument("--config", help="TOML experiment config")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("-v", "--verbose", action="store_true")
        if policy:
            sp.add_argument("--checkpoint", help="trained network (.npz)")
            sp.add_argument("--policy", choices=("dqn", "ideal"), default="dqn",
                            help="'ideal' uses the omniscient selector instead of a network")
        return sp

    common(sub.add_parser("train", help="train a DQN agent")).add_argument("--episodes", type=int)
    common(sub.add_parser("eval-grid", help="success rate over initial offsets"), policy=True)
    common(sub.add_parser("sweep-sampling", help="admittance sampling-period sweep"), policy=True)
    common(sub.add_parser("timing-hist", help="execution-time histogram"), policy=True)
    common(sub.add_parser("design-stiffness", help="design matrices from a deformation spec"))
    common(sub.add_parser("trace-actions", help="step log and selected actions of one episode"), policy=True)
    return p


COMMANDS = {
    "train": cmd_train,
    "eval-grid": cmd_eval_grid,
    "sweep-sampling": cmd_sweep,
    "timing-hist": cmd_timing,
    "trace-actions": cmd_trace,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "design-stiffness":
            return cmd_design(args.config, args)
        cfg = _config(args)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
