"""Seeded experiment grids: one trace CSV per (problem, noise, method, rep) cell."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np

from ..problems import StochasticOracle, get_problem, start_point
from ..trust_region import run
from .config import GridConfig, MethodSpec, cells

COLUMNS = (
    "problem", "dim", "noise_sd", "method", "seed", "iteration", "n_evals", "cost",
    "radius", "reps", "accepted", "gate_fired", "center_value_true", "regret", "best_regret",
)
MANIFEST = "manifest.json"


def fmt(v) -> str:
    """Serialize a float with 17 significant digits."""
    return format(float(v), ".17g")


def noise_id(noise_sd: float) -> str:
    return fmt(noise_sd)


def cell_seed(master_seed: int, problem_id: str, noise_sd: float, method: str, rep: int, paired: bool = False) -> int:
    """64-bit seed hashed from the cell coordinates.

    With ``paired`` the method is left out, so every method sees the same
    initial design and noise stream for a given rep.
    """
    key = "|".join([str(int(master_seed)), problem_id, noise_id(noise_sd), "" if paired else method, str(int(rep))])
    return int.from_bytes(hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest(), "little")


def cell_filename(problem_id: str, noise_sd: float, method: str, rep: int) -> str:
    return f"{problem_id}__sd{noise_id(noise_sd)}__{method}__r{rep}.csv"


@dataclass
class CellResult:
    file: str
    problem: str
    noise_sd: float
    method: str
    rep: int
    seed: int
    status: str
    iterations: int = 0
    stop_reason: Optional[str] = None
    error: Optional[str] = None
    seconds: float = 0.0


def atomic_write(path: Path, text: str):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def trace_rows(result, problem, method: str, seed: int) -> List[list]:
    """Rows of the trace table, starting with the initial center as iteration 0."""
    fstar = problem.optimum_value
    rows = []
    best = np.inf

    def row(it, evals, cost, radius, reps, accepted, gate, center):
        nonlocal best
        value = problem(center)
        regret = value - fstar
        best = min(best, regret)
        rows.append([
            problem.id, problem.dim, fmt(problem.noise_sd), method, seed, it, evals, fmt(cost),
            fmt(radius), reps, int(accepted), int(gate), fmt(value), fmt(regret), fmt(best),
        ])

    row(0, result.initial_eval_count, result.initial_cost, result.initial_radius, 0, False, False, result.initial_center)
    for r in result.reports:
        row(r.iteration, r.eval_count, r.cost_spent, r.radius, r.reps, r.accepted, r.decrease_gate_fired, r.center)
    return rows


def render_csv(rows) -> str:
    lines = [",".join(COLUMNS)]
    lines += [",".join(str(v) for v in r) for r in rows]
    return "\n".join(lines) + "\n"


def run_cell(cfg: GridConfig, problem_id: str, noise_sd: float, method: MethodSpec, rep: int):
    """Execute one cell; returns ``(csv_text, OptimizationResult, seed)``."""
    problem = get_problem(problem_id, noise_sd)
    seed = cell_seed(cfg.master_seed, problem_id, noise_sd, method.name, rep, cfg.paired)
    opt_seq, noise_seq = np.random.SeedSequence(seed).spawn(2)
    tr = cfg.tr_config(method, problem.dim)
    oracle = StochasticOracle(problem, tr.cost, np.random.default_rng(noise_seq))
    callback = None
    if cfg.max_seconds is not None:
        deadline = time.monotonic() + cfg.max_seconds

        def callback(report):
            return time.monotonic() > deadline

    result = run(oracle, tr, np.random.default_rng(opt_seq), start_point(problem_id), callback)
    return render_csv(trace_rows(result, problem, method.name, seed)), result, seed


def _cell_job(args):
    cfg, problem_id, noise_sd, method, rep, out_dir = args
    name = cell_filename(problem_id, noise_sd, method.name, rep)
    seed = cell_seed(cfg.master_seed, problem_id, noise_sd, method.name, rep, cfg.paired)
    t0 = time.monotonic()
    try:
        text, result, seed = run_cell(cfg, problem_id, noise_sd, method, rep)
        atomic_write(Path(out_dir) / name, text)
        return CellResult(name, problem_id, noise_sd, method.name, rep, seed, "ok",
                          len(result.reports), result.stop_reason, None, time.monotonic() - t0)
    except Exception as exc:  # recorded in the manifest; the grid carries on
        msg = f"{type(exc).__name__}: {exc}\n{traceback.format_exc(limit=5)}"
        return CellResult(name, problem_id, noise_sd, method.name, rep, seed, "failed",
                          error=msg, seconds=time.monotonic() - t0)


def _load_manifest(out_dir: Path) -> dict:
    path = out_dir / MANIFEST
    if not path.exists():
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        return {c["file"]: c for c in data.get("cells", [])}
    except (OSError, ValueError, KeyError):
        return {}


def run_grid(cfg: GridConfig, out_dir, force: bool = False, jobs: int = 1, log=None) -> List[CellResult]:
    """Run every cell of the grid, skipping completed ones unless ``force``.

    Writes one CSV per cell plus ``manifest.json``.  A failing cell is
    recorded with its error and does not stop the others.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    previous = _load_manifest(out_dir)
    todo, done = [], []
    for problem_id, noise_sd, method, rep in cells(cfg):
        name = cell_filename(problem_id, noise_sd, method.name, rep)
        prev = previous.get(name)
        if not force and prev is not None and prev.get("status") == "ok" and (out_dir / name).exists():
            done.append(CellResult(**{**prev, "status": "skipped"}))
            continue
        todo.append((cfg, problem_id, noise_sd, method, rep, str(out_dir)))
    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            fresh = list(pool.map(_cell_job, todo))
    else:
        fresh = []
        for job in todo:
            fresh.append(_cell_job(job))
            if log is not None:
                c = fresh[-1]
                log(f"{c.file}: {c.status} ({c.iterations} iterations, {c.seconds:.1f} s)")
    results = done + fresh
    order = {cell_filename(p, s, m.name, r): i for i, (p, s, m, r) in enumerate(cells(cfg))}
    results.sort(key=lambda c: order[c.file])
    manifest = {
        "master_seed": cfg.master_seed,
        "columns": list(COLUMNS),
        "cells": [
            {k: v for k, v in vars(c).items() if k != "seconds"} | {"status": "ok" if c.status == "skipped" else c.status}
            for c in results
        ],
    }
    atomic_write(out_dir / MANIFEST, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return results


def read_trace(path) -> dict:
    """Parse a trace CSV into a dict of column arrays plus the identifying fields."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    if tuple(header) != COLUMNS:
        raise ValueError(f"{path}: unexpected trace header")
    if not rows:
        raise ValueError(f"{path}: empty trace")
    cols = {h: [r[i] for r in rows] for i, h in enumerate(header)}
    out = {
        "problem": cols["problem"][0],
        "dim": int(cols["dim"][0]),
        "noise_sd": float(cols["noise_sd"][0]),
        "method": cols["method"][0],
        "seed": int(cols["seed"][0]),
    }
    for key in ("iteration", "n_evals", "reps", "accepted", "gate_fired"):
        out[key] = np.array([int(v) for v in cols[key]])
    for key in ("cost", "radius", "center_value_true", "regret", "best_regret"):
        out[key] = np.array([float(v) for v in cols[key]])
    return out


def read_traces(directory) -> List[dict]:
    paths = sorted(Path(directory).glob("*.csv"))
    return [read_trace(p) for p in paths]
