"""Data profiles and cost curves from recorded traces.

Only the noise-free center values written into the traces are used; the
objective itself is never called here.

Traces are the dicts returned by :func:`ogpit.harness.grid.read_trace`
(column arrays plus ``problem``, ``dim``, ``noise_sd``, ``method`` and
``seed``).
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from .grid import fmt


@dataclass
class ProfileCurve:
    method: str
    tau: float
    alphas: np.ndarray
    solved_fraction: np.ndarray


@dataclass
class CostCurve:
    problem: str
    noise_sd: float
    method: str
    costs: np.ndarray
    mean: np.ndarray
    q10: np.ndarray
    q90: np.ndarray
    count: np.ndarray


def _group_key(t):
    return (t["problem"], float(t["noise_sd"]))


def reference_values(traces) -> Dict[tuple, float]:
    """Best recorded true center value per (problem, noise) over every trace."""
    f_L = {}
    for t in traces:
        k = _group_key(t)
        f_L[k] = min(f_L.get(k, np.inf), float(np.min(t["center_value_true"])))
    return f_L


def solve_budget(trace, tau: float, f_L: float) -> float:
    """Smallest normalized budget N/(d+1) at which the convergence test holds.

    The test is ``f_best - f_L <= tau * (f_start - f_L)`` with ``f_start``
    the true value at the initial center.  A zero initial gap counts as
    solved at 0; ``inf`` means never solved.
    """
    values = np.asarray(trace["center_value_true"], dtype=float)
    gap0 = values[0] - f_L
    if gap0 <= 0:
        return 0.0
    best = np.minimum.accumulate(values)
    hit = np.nonzero(best - f_L <= tau * gap0)[0]
    if len(hit) == 0:
        return np.inf
    return float(trace["n_evals"][hit[0]]) / (trace["dim"] + 1)


def data_profile(traces, tau: float, alphas: Optional[Sequence[float]] = None) -> List[ProfileCurve]:
    """Fraction of runs solved against normalized budget, one curve per method.

    Each trace is one (problem, noise, seed) run.  ``f_L`` is the best value
    recorded for its (problem, noise) pair across all supplied methods and
    seeds.
    """
    traces = list(traces)
    if not traces:
        raise ValueError("no traces supplied")
    if not 0 < tau < 1:
        raise ValueError("tau must lie in (0, 1)")
    f_L = reference_values(traces)
    by_method = defaultdict(list)
    for t in traces:
        by_method[t["method"]].append(solve_budget(t, tau, f_L[_group_key(t)]))
    if alphas is None:
        grid = {0.0}
        for t in traces:
            grid.update(np.asarray(t["n_evals"], float) / (t["dim"] + 1))
        alphas = sorted(grid)
    alphas = np.asarray(sorted(float(a) for a in alphas))
    curves = []
    for method in sorted(by_method):
        solved = np.asarray(by_method[method])
        frac = np.array([np.mean(solved <= a) for a in alphas])
        curves.append(ProfileCurve(method, float(tau), alphas, frac))
    return curves


def _step_values(costs, values, grid):
    """Last recorded value at or before each grid cost (NaN before the first row)."""
    idx = np.searchsorted(costs, grid, side="right") - 1
    out = np.where(idx >= 0, values[np.clip(idx, 0, None)], np.nan)
    return out


def cost_curves(traces, grid: Optional[Sequence[float]] = None, column: str = "regret") -> List[CostCurve]:
    """Regret against cost per (problem, noise, method), with 10/90% bands.

    Traces are aligned on a shared cost grid (the union of recorded costs
    unless ``grid`` is given) by step interpolation.
    """
    traces = list(traces)
    if not traces:
        raise ValueError("no traces supplied")
    groups = defaultdict(list)
    for t in traces:
        groups[(t["problem"], float(t["noise_sd"]), t["method"])].append(t)
    out = []
    for (problem, noise, method) in sorted(groups):
        ts = groups[(problem, noise, method)]
        if grid is None:
            g = np.unique(np.concatenate([np.asarray(t["cost"], float) for t in ts]))
        else:
            g = np.asarray(sorted(float(c) for c in grid))
        M = np.stack([_step_values(np.asarray(t["cost"], float), np.asarray(t[column], float), g) for t in ts])
        count = np.sum(np.isfinite(M), axis=0)
        mean = np.full(len(g), np.nan)
        q10 = np.full(len(g), np.nan)
        q90 = np.full(len(g), np.nan)
        for j in np.nonzero(count)[0]:
            col = M[np.isfinite(M[:, j]), j]
            mean[j] = col.mean()
            q10[j], q90[j] = np.quantile(col, [0.1, 0.9])
        out.append(CostCurve(problem, noise, method, g, mean, q10, q90, count))
    return out


def profiles_csv(curves: Sequence[ProfileCurve]) -> str:
    lines = ["method,tau,alpha,solved_fraction"]
    for c in curves:
        lines += [f"{c.method},{fmt(c.tau)},{fmt(a)},{fmt(f)}" for a, f in zip(c.alphas, c.solved_fraction)]
    return "\n".join(lines) + "\n"


def cost_curves_csv(curves: Sequence[CostCurve]) -> str:
    lines = ["problem,noise_sd,method,cost,mean_regret,q10,q90,count"]
    for c in curves:
        for j in range(len(c.costs)):
            lines.append(",".join([
                c.problem, fmt(c.noise_sd), c.method, fmt(c.costs[j]),
                fmt(c.mean[j]), fmt(c.q10[j]), fmt(c.q90[j]), str(int(c.count[j])),
            ]))
    return "\n".join(lines) + "\n"
