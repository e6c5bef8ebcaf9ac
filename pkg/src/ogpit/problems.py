"""Benchmark objectives, noisy oracles and cost accounting.

Objectives are vectorized: an ``(m, d)`` array returns ``m`` values, a
single point returns a float.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .acquisition import CostModel
from .optim_utils import BoxRegion, local_refine

SPHERE_OFFSET = 0.3
BRANIN_OPTIMUM = 0.397887357729738
BRANIN_MINIMIZERS = ((-np.pi, 12.275), (np.pi, 2.275), (9.42477796076938, 2.475))


@dataclass(frozen=True)
class Problem:
    name: str
    dim: int
    bounds: BoxRegion
    true_objective: Callable
    optimum_value: float
    noise_sd: float = 0.0

    @property
    def id(self) -> str:
        return f"{self.name}-{self.dim}"

    def __call__(self, x):
        """Noise-free value; for regret bookkeeping only."""
        X = np.asarray(x, dtype=float)
        out = np.asarray(self.true_objective(X.reshape(-1, self.dim)), dtype=float)
        return float(out[0]) if X.ndim == 1 else out

    def with_noise(self, noise_sd: float) -> "Problem":
        if noise_sd < 0:
            raise ValueError("noise_sd must be nonnegative")
        return Problem(self.name, self.dim, self.bounds, self.true_objective, self.optimum_value, float(noise_sd))


@dataclass
class EvaluationReceipt:
    samples: np.ndarray
    cost_charged: float
    rng_draws_consumed: int


def evaluate(problem: Problem, x, p: int, cost: CostModel, rng) -> EvaluationReceipt:
    x = np.asarray(x, dtype=float).reshape(problem.dim)
    if p < 1:
        raise ValueError("need at least one replicate")
    if not bool(problem.bounds.contains(x)[0]):
        raise ValueError("point outside the problem bounds")
    f = problem(x)
    if problem.noise_sd > 0:
        samples = f + problem.noise_sd * rng.standard_normal(p)
        drawn = p
    else:
        samples = np.full(p, f)
        drawn = 0
    return EvaluationReceipt(samples, cost(p), drawn)


class StochasticOracle:
    """Noisy black box seen by the optimizer.

    Hides the noise-free objective; only samples and cost are returned.
    """

    def __init__(self, problem: Problem, cost: CostModel, rng):
        self._problem = problem
        self.cost = cost
        self._rng = rng
        self.dim = problem.dim
        self.bounds = problem.bounds
        self.cost_spent = 0.0
        self.evaluations = 0

    def __call__(self, x, p: int) -> EvaluationReceipt:
        receipt = evaluate(self._problem, x, int(p), self.cost, self._rng)
        self.cost_spent += receipt.cost_charged
        self.evaluations += int(p)
        return receipt


# ---------------------------------------------------------------------------
# Objectives
# ---------------------------------------------------------------------------


def sphere(X):
    X = np.atleast_2d(X) - SPHERE_OFFSET
    return np.sum(X * X, axis=1)


def squared_sphere(X):
    return sphere(X) ** 2


def branin(X):
    X = np.atleast_2d(X)
    x1, x2 = X[:, 0], X[:, 1]
    b = 5.1 / (4 * np.pi**2)
    c = 5 / np.pi
    t = 1 / (8 * np.pi)
    return (x2 - b * x1**2 + c * x1 - 6) ** 2 + 10 * (1 - t) * np.cos(x1) + 10


def rosenbrock(X):
    X = np.atleast_2d(X)
    return np.sum(100.0 * (X[:, 1:] - X[:, :-1] ** 2) ** 2 + (1.0 - X[:, :-1]) ** 2, axis=1)


def zero(X):
    return np.zeros(len(np.atleast_2d(X)))


def _box(lo, hi, d):
    return BoxRegion(np.full(d, float(lo)), np.full(d, float(hi)))


BENCHMARK1 = {
    "sphere": ((2, 4, 6), sphere, (-5.0, 5.0), 0.0),
    "squared_sphere": ((2, 4, 6), squared_sphere, (-5.0, 5.0), 0.0),
    "rosenbrock": ((2, 4), rosenbrock, (-2.048, 2.048), 0.0),
}


def make_benchmark1(name: str, dim: int, noise_sd: float = 0.0) -> Problem:
    """Standard test functions on their usual domains."""
    if name == "branin":
        if dim != 2:
            raise ValueError("branin is two-dimensional")
        bounds = BoxRegion(np.array([-5.0, 0.0]), np.array([10.0, 15.0]))
        return Problem("branin", 2, bounds, branin, BRANIN_OPTIMUM, float(noise_sd))
    if name == "flat":
        return Problem("flat", dim, _box(-1, 1, dim), zero, 0.0, float(noise_sd))
    if name not in BENCHMARK1 or dim not in BENCHMARK1[name][0]:
        raise ValueError(f"unsupported benchmark {name!r} in dimension {dim}")
    _, fn, (lo, hi), fstar = BENCHMARK1[name]
    return Problem(name, dim, _box(lo, hi, dim), fn, fstar, float(noise_sd))


# ---------------------------------------------------------------------------
# Least squares
# ---------------------------------------------------------------------------


@dataclass
class LeastSquares:
    residuals: Sequence[Callable]

    def __call__(self, X):
        X = np.atleast_2d(X)
        R = np.stack([np.asarray(r(X), dtype=float).reshape(len(X)) for r in self.residuals], axis=1)
        return np.sum(R * R, axis=1)


def make_least_squares(
    residuals: Sequence[Callable],
    bounds: BoxRegion,
    name: str = "lsq",
    optimum_value: Optional[float] = None,
    noise_sd: float = 0.0,
    starts: int = 20,
    rng=None,
) -> Problem:
    """Sum-of-squares problem from vectorized residuals ``r_i(X) -> (m,)``.

    Without ``optimum_value`` the optimum is estimated by bounded local
    minimization from ``starts`` random points.
    """
    if len(residuals) == 0:
        raise ValueError("need at least one residual")
    f = LeastSquares(list(residuals))
    if optimum_value is None:
        rng = np.random.default_rng(0 if rng is None else rng)
        best = np.inf
        for x0 in bounds.lower + rng.random((starts, bounds.dim)) * bounds.width:
            _, v = local_refine(lambda X: -f(X), x0, bounds, max_iter=500, tol=1e-12)
            best = min(best, -v)
        optimum_value = max(best, 0.0)
    return Problem(name, bounds.dim, bounds, f, float(optimum_value), float(noise_sd))


def _linear_full_rank(n=4, m=8):
    # r_i = x_i - (2/m) sum(x) - 1 for i <= n, r_i = -(2/m) sum(x) - 1 otherwise
    def make(i):
        def r(X):
            s = X.sum(axis=1)
            base = -2.0 / m * s - 1.0
            return base + X[:, i] if i < n else base

        return r

    return [make(i) for i in range(m)], float(m - n)


def _powell_singular():
    return [
        lambda X: X[:, 0] + 10 * X[:, 1],
        lambda X: np.sqrt(5.0) * (X[:, 2] - X[:, 3]),
        lambda X: (X[:, 1] - 2 * X[:, 2]) ** 2,
        lambda X: np.sqrt(10.0) * (X[:, 0] - X[:, 3]) ** 2,
    ]


def _rosenbrock_residuals():
    return [lambda X: 10.0 * (X[:, 1] - X[:, 0] ** 2), lambda X: 1.0 - X[:, 0]]


def make_bundled_least_squares(name: str, noise_sd: float = 0.0) -> Problem:
    if name == "linear":
        res, fstar = _linear_full_rank()
        return make_least_squares(res, _box(-5, 5, 4), "linear", fstar, noise_sd)
    if name == "rosenbrock_lsq":
        return make_least_squares(_rosenbrock_residuals(), _box(-2.048, 2.048, 2), "rosenbrock_lsq", 0.0, noise_sd)
    if name == "powell":
        return make_least_squares(_powell_singular(), _box(-4, 4, 4), "powell", 0.0, noise_sd)
    raise ValueError(f"unknown least-squares instance {name!r}")


# start points for the bundled least-squares instances, as in the usual test set
LSQ_STARTS = {
    "linear-4": np.ones(4),
    "rosenbrock_lsq-2": np.array([-1.2, 1.0]),
    "powell-4": np.array([3.0, -1.0, 0.0, 1.0]),
}

REGISTRY = {
    **{f"{n}-{d}": (n, d) for n, (dims, *_rest) in BENCHMARK1.items() for d in dims},
    "branin-2": ("branin", 2),
    "flat-2": ("flat", 2),
    "linear-4": ("linear", 4),
    "rosenbrock_lsq-2": ("rosenbrock_lsq", 2),
    "powell-4": ("powell", 4),
}


def get_problem(problem_id: str, noise_sd: float = 0.0) -> Problem:
    """Look up a problem by its ``name-dim`` id."""
    if problem_id not in REGISTRY:
        raise ValueError(f"unknown problem id {problem_id!r}")
    name, dim = REGISTRY[problem_id]
    if name in ("linear", "rosenbrock_lsq", "powell"):
        return make_bundled_least_squares(name, noise_sd)
    return make_benchmark1(name, dim, noise_sd)


def start_point(problem_id: str):
    return LSQ_STARTS.get(problem_id)
