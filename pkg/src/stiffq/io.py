"""Deterministic CSV and JSON writers.

Each file starts with a provenance header (config hash and seed).  CSV
headers are ``#`` comment lines so ``pandas.read_csv(comment="#")`` and
``numpy.loadtxt`` both skip them.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

STEP_LOG_COLUMNS = ("t_s", "px", "py", "pz", "rx", "ry", "rz", "fx", "fy", "fz", "tx", "ty", "tz", "action", "phase")


def fmt(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".10g")
    return str(v)


def write_csv(path, columns, rows, config_hash: str, seed: int) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={config_hash} seed={seed}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(v) for v in r])
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]


def step_log_rows(rows):
    for r in rows:
        yield (r.t, *r.pose, *r.wrench, r.action, r.phase.name)


def write_step_log(path, rows, config_hash: str, seed: int) -> Path:
    return write_csv(path, STEP_LOG_COLUMNS, step_log_rows(rows), config_hash, seed)


def _plain(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(type(o).__name__)


def write_json(path, payload: dict, config_hash: str, seed: int) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"config_hash": config_hash, "seed": seed, **payload}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_plain) + "\n")
    return path
