"""Search primitives: space-filling designs, swarm search, local refinement.

Objectives passed to :func:`pso` and :func:`local_refine` are vectorized:
they take an ``(m, d)`` array of points and return ``m`` values, and both
routines *maximize*.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.spatial.distance import pdist


@dataclass(frozen=True)
class BoxRegion:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower and upper must be vectors of equal length")
        if np.any(hi < lo) or not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("box bounds must be finite with lower <= upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def trust_region(cls, center, radius, domain: "BoxRegion") -> "BoxRegion":
        """Infinity-norm ball ``|x - center| <= radius * halfwidth`` clipped to the domain.

        ``radius`` is expressed relative to the domain half-widths.
        """
        c = np.asarray(center, dtype=float)
        r = radius * domain.halfwidth
        return cls(np.maximum(domain.lower, c - r), np.minimum(domain.upper, c + r))

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def halfwidth(self) -> np.ndarray:
        return 0.5 * (self.upper - self.lower)

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.upper + self.lower)

    @property
    def is_degenerate(self) -> bool:
        return bool(np.any(self.upper <= self.lower))

    def contains(self, X) -> np.ndarray:
        X = np.atleast_2d(X)
        return np.all((X >= self.lower) & (X <= self.upper), axis=-1)

    def clip(self, X) -> np.ndarray:
        return np.clip(X, self.lower, self.upper)


def lhs(count: int, dim: int, rng) -> np.ndarray:
    """One random Latin hypercube in the unit cube."""
    cells = np.stack([rng.permutation(count) for _ in range(dim)], axis=1)
    return (cells + rng.random((count, dim))) / count


def lhs_maximin(count: int, dim: int, rng, restarts: int = 100) -> np.ndarray:
    """Best of ``restarts`` random Latin hypercubes under the maximin criterion.

    The first candidate is exactly ``lhs(count, dim, rng)`` for the same
    generator state, so the result is never worse than a plain LHS.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    best, best_score = None, -np.inf
    for _ in range(max(1, restarts)):
        pts = lhs(count, dim, rng)
        score = pdist(pts).min() if count > 1 else 0.0
        if score > best_score:
            best, best_score = pts, score
    return best


def uniform_candidates(region: BoxRegion, count: int, rng) -> np.ndarray:
    if region.is_degenerate:
        raise ValueError("cannot sample a degenerate region")
    if count == 0:
        return np.empty((0, region.dim))
    return region.lower + rng.random((count, region.dim)) * region.width


def pso(
    objective,
    region: BoxRegion,
    particles: int = 50,
    iterations: int = 40,
    rng=None,
    inertia: float = 0.72,
    cognitive: float = 1.49,
    social: float = 1.49,
    initial=None,
):
    """Particle swarm maximization over a box; returns the best evaluated point.

    ``initial`` optionally replaces the first rows of the starting swarm.
    """
    rng = np.random.default_rng(rng)
    lo, hi = region.lower, region.upper
    width = region.width
    vmax = 0.5 * width
    x = lo + rng.random((particles, region.dim)) * width
    if initial is not None:
        init = region.clip(np.atleast_2d(initial))[:particles]
        x[: len(init)] = init
    v = (rng.random((particles, region.dim)) - 0.5) * vmax
    f = np.asarray(objective(x), dtype=float)
    f = np.where(np.isfinite(f), f, -np.inf)
    pbest_x, pbest_f = x.copy(), f.copy()
    g = int(np.argmax(pbest_f))
    gbest_x, gbest_f = pbest_x[g].copy(), pbest_f[g]
    for _ in range(iterations):
        r1 = rng.random(x.shape)
        r2 = rng.random(x.shape)
        v = inertia * v + cognitive * r1 * (pbest_x - x) + social * r2 * (gbest_x - x)
        v = np.clip(v, -vmax, vmax)
        x = np.clip(x + v, lo, hi)
        f = np.asarray(objective(x), dtype=float)
        f = np.where(np.isfinite(f), f, -np.inf)
        improved = f > pbest_f
        pbest_x[improved] = x[improved]
        pbest_f[improved] = f[improved]
        g = int(np.argmax(pbest_f))
        if pbest_f[g] > gbest_f:
            gbest_x, gbest_f = pbest_x[g].copy(), pbest_f[g]
    return gbest_x, float(gbest_f)


def _fd_stencil(x, lo, hi, rel_step):
    """Central-difference points, one-sided next to a bound."""
    d = len(x)
    h = rel_step * np.maximum(np.abs(x), 1.0)
    up = np.minimum(x + h, hi)
    dn = np.maximum(x - h, lo)
    pts = np.repeat(x[None, :], 2 * d, axis=0)
    idx = np.arange(d)
    pts[idx, idx] = up
    pts[d + idx, idx] = dn
    return pts, up - dn


def _fd_gradient(vals, span):
    d = len(span)
    grad = np.zeros(d)
    ok = span > 0
    grad[ok] = (vals[:d][ok] - vals[d:][ok]) / span[ok]
    return grad


def local_refine(
    objective,
    start,
    region: BoxRegion,
    max_iter: int = 100,
    tol: float = 1e-8,
    rel_step: float = 1e-6,
    ftol: float = 1e-15,
):
    """Bounded quasi-Newton (L-BFGS-B) ascent from ``start`` with finite-difference gradients.

    ``tol`` bounds the projected gradient and ``ftol`` the relative change
    in value at termination.  Never returns a point worse than ``start``.
    """
    x0 = region.clip(np.asarray(start, dtype=float).reshape(region.dim))
    f0 = float(np.asarray(objective(x0[None, :]))[0])
    if not np.isfinite(f0):
        raise ValueError("objective is not finite at the start point")
    lo, hi = region.lower, region.upper
    cache = {}

    def neg(x):
        key = x.tobytes()
        if key not in cache:
            x = np.clip(x, lo, hi)
            # value and stencil in one vectorized call
            pts, span = _fd_stencil(x, lo, hi, rel_step)
            vals = np.asarray(objective(np.vstack([x[None, :], pts])), dtype=float)
            fx = float(vals[0])
            if not np.isfinite(fx):
                cache[key] = (np.inf, np.zeros_like(x))
            else:
                cache[key] = (-fx, -_fd_gradient(vals[1:], span))
        return cache[key]

    res = optimize.minimize(
        neg, x0, jac=True, method="L-BFGS-B", bounds=list(zip(lo, hi)),
        options={"maxiter": max_iter, "gtol": tol, "ftol": ftol},
    )
    x = np.clip(res.x, lo, hi)
    fx = -neg(x)[0]
    if not np.isfinite(fx) or fx < f0:
        return x0, f0
    return x, fx
