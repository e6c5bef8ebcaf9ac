"""Improvement-based acquisition: EI, fixed-stream qEI, qERCI and adaptive replication.

All multi-point criteria share one quasi-random normal stream per seed, so
repeated evaluations with identical inputs agree bit for bit and the
criterion surfaces are smooth enough for local refinement.  Batched
``*_batch`` variants evaluate many candidates in one vectorized pass; the
scalar functions are thin wrappers around them.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import math

import numpy as np
from scipy import special, stats
from scipy.stats import qmc

from .gp import DEDUP_TOL, GPModel
from .optim_utils import BoxRegion, local_refine, pso

SQRT_2PI = math.sqrt(2.0 * math.pi)
DEFAULT_DRAWS = 4096
DEFAULT_SEED = 7
STREAM_DIM = 8
PSD_TOL = 1e-8
FACTOR_JITTER = 1e-12
# relative value change that ends refinement of the swarm's best point
REFINE_FTOL = 1e-12


@dataclass(frozen=True)
class ImprovementThreshold:
    value: float
    source: str = "user_supplied"

    @classmethod
    def best_predictive_mean(cls, model: GPModel) -> "ImprovementThreshold":
        """Plug-in threshold: smallest predictive mean over the unique designs."""
        if model.n == 0:
            raise ValueError("threshold needs at least one design")
        return cls(float(np.min(model.design_means())), "best_predictive_mean")


@dataclass(frozen=True)
class CostModel:
    setup_cost: float = 0.0
    per_replicate_cost: float = 1.0

    def __post_init__(self):
        if self.setup_cost < 0 or self.per_replicate_cost < 0:
            raise ValueError("costs must be nonnegative")

    @property
    def is_free(self) -> bool:
        return self.setup_cost == 0 and self.per_replicate_cost == 0

    def __call__(self, p) -> float:
        p = np.asarray(p, dtype=float)
        out = np.where(p > 0, self.setup_cost + self.per_replicate_cost * p, 0.0)
        return float(out) if out.ndim == 0 else out


@dataclass
class BatchProposal:
    first_point: np.ndarray
    first_reps: int
    second_point: Optional[np.ndarray]
    second_reps: int
    criterion_value: float

    def chosen(self):
        """The point carrying the larger replicate count (first on ties)."""
        if self.second_point is None or self.first_reps >= self.second_reps:
            return self.first_point, self.first_reps
        return self.second_point, self.second_reps


def _threshold_value(model, threshold) -> float:
    if threshold is None:
        return ImprovementThreshold.best_predictive_mean(model).value
    if isinstance(threshold, ImprovementThreshold):
        return threshold.value
    return float(threshold)


# ---------------------------------------------------------------------------
# EI
# ---------------------------------------------------------------------------


def expected_improvement(mean, sd, threshold):
    """Closed-form E[max(T - Y, 0)] for Y ~ N(mean, sd^2), vectorized."""
    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    diff = threshold - mean
    pos = sd > 0
    safe = np.where(pos, sd, 1.0)
    z = diff / safe
    val = diff * special.ndtr(z) + safe * np.exp(-0.5 * z * z) / SQRT_2PI
    out = np.where(pos, val, np.maximum(diff, 0.0))
    out = np.maximum(out, 0.0)
    return float(out) if out.ndim == 0 else out


def ei(m: GPModel, x, T=None):
    """EI at ``x`` using the observation-scale predictive standard deviation."""
    X = np.asarray(x, dtype=float)
    mean, _, var_obs = m.predict(X.reshape(-1, m.dim))
    out = expected_improvement(mean, np.sqrt(var_obs), _threshold_value(m, T))
    return float(out[0]) if X.ndim == 1 else out


# ---------------------------------------------------------------------------
# qEI with a fixed stream
# ---------------------------------------------------------------------------


@lru_cache(maxsize=16)
def normal_stream(draws: int = DEFAULT_DRAWS, seed: int = DEFAULT_SEED, dim: int = STREAM_DIM) -> np.ndarray:
    """Scrambled Sobol points pushed through the normal quantile, shape (draws, dim)."""
    sampler = qmc.Sobol(dim, scramble=True, seed=seed)
    u = sampler.random(draws)
    z = stats.norm.ppf(np.clip(u, 1e-12, 1 - 1e-12))
    z.setflags(write=False)
    return z


def _stream(q: int, draws: int, seed: int) -> np.ndarray:
    if q > STREAM_DIM:
        return normal_stream(draws, seed, q)
    return normal_stream(draws, seed)[:, :q]


def _collapse_duplicates(means, covs, active):
    """Mark later coordinates that are almost surely equal to an earlier one as inactive."""
    q = means.shape[-1]
    diag = np.diagonal(covs, axis1=-2, axis2=-1)
    scale = np.maximum(diag.max(axis=-1), 1e-300)
    # pairwise tests in one pass, [b, i, j] compares coordinate i with j
    dvar = diag[:, :, None] + diag[:, None, :] - 2.0 * covs
    close = (np.abs(dvar) <= 1e-12 * scale[:, None, None]) & (
        np.abs(means[:, :, None] - means[:, None, :]) <= 1e-12 * (1.0 + np.abs(means))[:, :, None]
    )
    return _mark_later_duplicates(close, active)


def _mark_later_duplicates(close, active):
    """Drop coordinate j when it is close to an earlier coordinate that is still active."""
    for j in range(1, close.shape[-1]):
        for i in range(j):
            active[:, j] &= ~(close[:, i, j] & active[:, i])
    return active


def _factor(covs):
    """Batched lower factor of PSD matrices after an eigenvalue floor check."""
    q = covs.shape[-1]
    covs = 0.5 * (covs + np.swapaxes(covs, -1, -2))
    scale = np.maximum(np.max(np.diagonal(covs, axis1=-2, axis2=-1), axis=-1), 1e-300)
    eye = np.eye(q)
    try:
        # succeeds unless some eigenvalue is below -FACTOR_JITTER * scale
        return np.linalg.cholesky(covs + (FACTOR_JITTER * scale)[:, None, None] * eye)
    except np.linalg.LinAlgError:
        pass
    lam = np.linalg.eigvalsh(covs)[:, 0]
    if np.any(lam < -PSD_TOL * scale):
        raise ValueError("covariance is not positive semidefinite")
    eps = FACTOR_JITTER * scale + 2.0 * np.maximum(-lam, 0.0)
    for _ in range(8):
        try:
            return np.linalg.cholesky(covs + eps[:, None, None] * eye)
        except np.linalg.LinAlgError:
            eps = eps * 10.0
    raise ValueError("covariance factorization failed")


def _improvement_samples(means, covs, T, Z, active):
    """Samples of max(0, T - min over active coordinates), shape (B, draws)."""
    covs = covs * (active[:, :, None] & active[:, None, :])
    L = _factor(covs)
    B, q = means.shape
    # the mean rides along as an extra factor column against a row of ones;
    # an inactive coordinate gets +inf and never attains the minimum
    Lm = np.concatenate([L, np.where(active, means, np.inf)[:, :, None]], axis=2)
    Za = np.vstack([Z.T, np.ones(len(Z))])
    Y = (Lm.reshape(B * q, q + 1) @ Za).reshape(B, q, len(Z))
    low = Y.min(axis=1)
    np.subtract(T, low, out=low)
    return np.maximum(low, 0.0, out=low)


def _single_ei(means, covs, T, active):
    """Rows with one active coordinate, and the exact EI of that coordinate."""
    single = active.sum(axis=1) == 1
    j = np.argmax(active[single], axis=1)
    rows = np.nonzero(single)[0]
    var = np.maximum(covs[rows, j, j], 0.0)
    return single, expected_improvement(means[rows, j], np.sqrt(var), T)


def qei_batch(means, covs, T, draws=DEFAULT_DRAWS, seed=DEFAULT_SEED, return_se=False):
    """qEI for a batch of Gaussian vectors: means (B, q), covs (B, q, q)."""
    means = np.asarray(means, dtype=float)
    covs = np.asarray(covs, dtype=float)
    if means.ndim != 2 or covs.shape != means.shape + (means.shape[-1],):
        raise ValueError("expected means (B, q) and covs (B, q, q)")
    active = _collapse_duplicates(means, covs, np.ones(means.shape, dtype=bool))
    imp = _improvement_samples(means, covs, float(T), _stream(means.shape[1], draws, seed), active)
    val = imp.mean(axis=1)
    se = imp.std(axis=1, ddof=1) / np.sqrt(draws) if return_se else None
    # a single active coordinate is plain EI, known in closed form
    if np.any(active.sum(axis=1) == 1):
        single, exact = _single_ei(means, covs, float(T), active)
        val[single] = exact
        if return_se:
            se[single] = 0.0
    return (val, se) if return_se else val


def qei(mean, cov, T, draws=DEFAULT_DRAWS, seed=DEFAULT_SEED, return_se=False):
    """Estimate E[max(0, T - min_i Y_i)] for Y ~ N(mean, cov) on a fixed quasi-random stream.

    Parameters
    ----------
    mean : array_like, shape (q,)
    cov : array_like, shape (q, q)
        Symmetric positive semidefinite; small negative eigenvalues are
        floored, larger ones raise ``ValueError``.
    T : float
        Improvement threshold.
    draws, seed : int
        Size and seed of the common normal stream.
    return_se : bool
        Also return the Monte Carlo standard error.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if cov.shape != (len(mean), len(mean)):
        raise ValueError("mean and covariance shapes differ")
    out = qei_batch(mean[None], cov[None], T, draws, seed, return_se)
    if return_se:
        return float(out[0][0]), float(out[1][0])
    return float(out[0])


# ---------------------------------------------------------------------------
# qERCI
# ---------------------------------------------------------------------------


def _dedup_refs(refs, tol):
    """Active mask (B, q): later references within ``tol`` of an earlier one are dropped."""
    B, q, _ = refs.shape
    diff = refs[:, :, None, :] - refs[:, None, :, :]
    close = np.sqrt(np.einsum("bijk,bijk->bij", diff, diff)) <= tol
    return _mark_later_duplicates(close, np.ones((B, q), dtype=bool))


def qerci_batch(
    m: GPModel,
    refs,
    new_points,
    reps,
    T=None,
    draws=DEFAULT_DRAWS,
    seed=DEFAULT_SEED,
    return_se=False,
    new_index=None,
):
    """qERCI for a batch of planned designs.

    Parameters
    ----------
    refs : array, shape (B, q, d)
        Reference points whose joint improvement is measured.
    new_points : array, shape (B, k, d), or None
        Planned evaluation locations.
    reps : array, shape (B, k)
        Replicates at each planned location; zero drops the location.
    new_index : sequence of int, optional
        With ``new_points`` None, the planned locations are ``refs[:, new_index]``
        and the joint posterior is formed over the references alone.
    """
    refs = np.asarray(refs, dtype=float)
    reps = np.asarray(reps, dtype=float)
    B, q, d = refs.shape
    T = _threshold_value(m, T)
    if new_points is None:
        idx = np.asarray(new_index, dtype=int)
        new_points = refs[:, idx]
        k = len(idx)
        mean, cov_r = m.joint_posterior(refs)
        cov = np.concatenate([cov_r, cov_r[:, :, idx]], axis=2)
        cov = np.concatenate([cov, cov[:, idx]], axis=1)
    else:
        new_points = np.asarray(new_points, dtype=float)
        k = new_points.shape[1]
        mean, cov = m.joint_posterior(np.concatenate([refs, new_points], axis=1))
    mean_r = mean[:, :q]
    s_rr = cov[:, :q, :q]
    s_rn = cov[:, :q, q:]
    s_nn = cov[:, q:, q:]
    r2_refs = m.noise.variance(refs.reshape(-1, d)).reshape(B, q)
    r2_new = m.noise.variance(new_points.reshape(-1, d)).reshape(B, k)
    used = reps > 0
    s_rn = s_rn * used[:, None, :]
    planned = np.where(used, r2_new / np.where(used, reps, 1.0), 1.0)
    # a tiny ridge keeps noise-free replicates of existing designs solvable
    ridge = FACTOR_JITTER * m.kernel.process_var
    M = s_nn * (used[:, :, None] & used[:, None, :]) + (planned + ridge)[:, :, None] * np.eye(k)
    gain = np.linalg.solve(M, np.swapaxes(s_rn, -1, -2))
    s_cond = s_rr - s_rn @ gain
    obs = r2_refs[:, :, None] * np.eye(q)
    before = s_rr + obs
    after = s_cond + obs
    active = _dedup_refs(refs, m.designs.dedup_tol if m.n else DEDUP_TOL)
    active = _collapse_duplicates(mean_r, before, active)
    Z = _stream(q, draws, seed)
    # both states share the stream, so one pass handles the stacked batch
    both = _improvement_samples(
        np.concatenate([mean_r, mean_r]), np.concatenate([before, after]), T, Z, np.concatenate([active, active])
    )
    diff = both[:B] - both[B:]
    val = diff.mean(axis=1)
    se = diff.std(axis=1, ddof=1) / np.sqrt(draws) if return_se else None
    if np.any(active.sum(axis=1) == 1):
        single, ei_before = _single_ei(mean_r, before, T, active)
        _, ei_after = _single_ei(mean_r, after, T, active)
        val[single] = ei_before - ei_after
        if return_se:
            se[single] = 0.0
    return (val, se) if return_se else val


def qerci(m: GPModel, refs, new_points, T=None, draws=DEFAULT_DRAWS, seed=DEFAULT_SEED, return_se=False):
    """Reduction of qEI at ``refs`` from planned replicated observations.

    ``new_points`` is a sequence of ``(point, reps)`` pairs.  Both qEI terms
    use the same mean vector, threshold and normal stream; only the
    covariance changes.
    """
    refs = np.atleast_2d(np.asarray(refs, dtype=float))
    pts = np.array([np.asarray(p, dtype=float).reshape(m.dim) for p, _ in new_points])
    reps = np.array([float(a) for _, a in new_points])
    if reps.sum() < 1:
        raise ValueError("at least one replicate must be planned")
    out = qerci_batch(m, refs[None], pts[None], reps[None], T, draws, seed, return_se)
    if return_se:
        return float(out[0][0]), float(out[1][0])
    return float(out[0])


# ---------------------------------------------------------------------------
# Adaptive replication
# ---------------------------------------------------------------------------


def _reduction(s2, r2, p):
    """Relative latent-variance reduction at a point after p replicates there."""
    fantasy = s2 - s2 * s2 / (s2 + r2 / p)
    return (s2 - fantasy) / s2


def adaptive_replicates(s2, r2, T_a, p_max):
    """Smallest p in [1, p_max] whose relative variance reduction reaches ``T_a``.

    Binary search on the monotone reduction ratio.  The printed closed
    form ``ceil(r2 (s2 / T_a - s2))`` is not dimensionally consistent with
    the ratio it inverts, so it is not used.
    """
    s2 = np.atleast_1d(np.asarray(s2, dtype=float))
    r2 = np.broadcast_to(np.asarray(r2, dtype=float), s2.shape)
    p_max = int(p_max)
    if p_max < 1:
        raise ValueError("p_max must be at least 1")
    out = np.ones(s2.shape, dtype=int)
    live = (s2 > 0) & (r2 > 0)
    if np.any(live):
        s, r = s2[live], r2[live]
        lo = np.ones(s.shape, dtype=int)
        hi = np.full(s.shape, p_max, dtype=int)
        ok_lo = _reduction(s, r, lo) >= T_a
        ok_hi = _reduction(s, r, hi) >= T_a
        hi = np.where(ok_lo, 1, hi)
        # invariant: predicate false at lo (unless ok_lo), true at hi or hi = p_max
        lo = np.where(ok_lo | ~ok_hi, hi, lo)
        while np.any(hi - lo > 1):
            mid = (lo + hi) // 2
            ok = _reduction(s, r, mid) >= T_a
            hi = np.where(ok & (hi - lo > 1), mid, hi)
            lo = np.where(~ok & (hi - lo > 1), mid, lo)
        out[live] = hi
    return out


def p_adaptive(m: GPModel, x, T_a: float, p_max: int):
    """Adaptive replicate count at ``x`` under the latent predictive variance."""
    X = np.asarray(x, dtype=float)
    Xf = X.reshape(-1, m.dim)
    _, s2, _ = m.predict(Xf)
    out = adaptive_replicates(s2, m.noise.variance(Xf), T_a, p_max)
    return int(out[0]) if X.ndim == 1 else out


# ---------------------------------------------------------------------------
# qERCI versions
# ---------------------------------------------------------------------------


def estimated_optimum(m: GPModel):
    """Index and location of the design with the smallest predictive mean."""
    i = int(np.argmin(m.design_means()))
    return i, m.designs.locations[i].copy()


def qerci_v1_batch(m, X, x_c, x_star, T_a, p_max, T=None, draws=DEFAULT_DRAWS, seed=DEFAULT_SEED):
    """Version 1 at candidates ``X`` (B, d); returns (values, adaptive reps)."""
    X = np.asarray(X, dtype=float).reshape(-1, m.dim)
    B = len(X)
    p = p_adaptive(m, X, T_a, p_max)
    base = np.broadcast_to(np.stack([np.asarray(x_c, float), np.asarray(x_star, float)]), (B, 2, m.dim))
    refs = np.concatenate([base, X[:, None, :]], axis=1)
    vals = qerci_batch(m, refs, X[:, None, :], p[:, None].astype(float), T, draws, seed)
    return vals, p


def qerci_v1(m, x, x_c, x_star, T_a, p_max, T=None, draws=DEFAULT_DRAWS, seed=DEFAULT_SEED) -> float:
    vals, _ = qerci_v1_batch(m, np.asarray(x)[None], x_c, x_star, T_a, p_max, T, draws, seed)
    return float(vals[0])


def _v2_denominator(cost: CostModel, a, a2):
    if cost.is_free:
        return np.ones(np.shape(a))
    return cost.setup_cost * ((a > 0).astype(float) + (a2 > 0)) + cost.per_replicate_cost * (a + a2)


def qerci_v2_batch(m, X, A, X2, A2, cost: CostModel, x_c, x_star, T=None, draws=DEFAULT_DRAWS, seed=DEFAULT_SEED):
    """Version 2 for batches of (x, a, x2, a2); ``a`` and ``a2`` may be fractional."""
    X = np.asarray(X, dtype=float).reshape(-1, m.dim)
    X2 = np.asarray(X2, dtype=float).reshape(-1, m.dim)
    A = np.asarray(A, dtype=float).reshape(-1)
    A2 = np.asarray(A2, dtype=float).reshape(-1)
    B = len(X)
    base = np.broadcast_to(np.stack([np.asarray(x_c, float), np.asarray(x_star, float)]), (B, 2, m.dim))
    refs = np.concatenate([base, X[:, None, :], X2[:, None, :]], axis=1)
    vals = qerci_batch(m, refs, None, np.stack([A, A2], axis=1), T, draws, seed, new_index=[2, 3])
    den = _v2_denominator(cost, A, A2)
    return np.where(den > 0, vals / np.where(den > 0, den, 1.0), 0.0)


def qerci_v2(m, x, a, x2, a2, cost: CostModel, x_c, x_star, T=None, draws=DEFAULT_DRAWS, seed=DEFAULT_SEED) -> float:
    """qERCI over (x, a) and (x2, a2) divided by the setup-cost denominator."""
    if a < 0 or a2 < 0 or a + a2 < 1:
        raise ValueError("need a, a2 >= 0 with a + a2 >= 1")
    vals = qerci_v2_batch(m, np.asarray(x)[None], [a], np.asarray(x2)[None], [a2], cost, x_c, x_star, T, draws, seed)
    return float(vals[0])


def _round_half_away(v):
    return np.sign(v) * np.floor(np.abs(v) + 0.5)


def _feasible_counts(a, a2, p_max):
    """Scale continuous counts down onto a + a2 <= p_max."""
    total = a + a2
    scale = np.where(total > p_max, p_max / np.maximum(total, 1e-300), 1.0)
    return a * scale, a2 * scale


def round_counts(a: float, a2: float, p_max: int):
    """Integer replicate pair from a continuous pair.

    Round half away from zero, clamp to [0, p_max], trim the smaller count
    if the sum exceeds p_max and force at least one replicate.
    """
    ra = int(np.clip(_round_half_away(a), 0, p_max))
    rb = int(np.clip(_round_half_away(a2), 0, p_max))
    excess = ra + rb - p_max
    if excess > 0:
        if ra >= rb:
            rb -= excess
        else:
            ra -= excess
    if ra == 0 and rb == 0:
        if a >= a2:
            ra = 1
        else:
            rb = 1
    return ra, rb


def optimize_qerci_v2(
    m: GPModel,
    region: BoxRegion,
    cost: CostModel,
    x_c,
    x_star,
    p_max: int,
    rng=None,
    T=None,
    draws=DEFAULT_DRAWS,
    seed=DEFAULT_SEED,
    search_draws: Optional[int] = None,
    particles: int = 50,
    iterations: int = 40,
    refine: bool = True,
) -> BatchProposal:
    """Maximize version 2 jointly over two points and continuous replicate counts.

    Swarm search over (x, x2, a, a2), local refinement of the best
    particle, then rounding and a final evaluation at integer counts.
    ``search_draws`` optionally shortens the normal stream during the
    continuous search.
    """
    d = m.dim
    T = _threshold_value(m, T)
    sd = draws if search_draws is None else search_draws
    lower = np.concatenate([region.lower, region.lower, [0.0, 0.0]])
    upper = np.concatenate([region.upper, region.upper, [float(p_max), float(p_max)]])
    box = BoxRegion(lower, upper)

    def objective(Z):
        Z = np.atleast_2d(Z)
        a, a2 = _feasible_counts(Z[:, 2 * d], Z[:, 2 * d + 1], p_max)
        vals = qerci_v2_batch(m, Z[:, :d], a, Z[:, d : 2 * d], a2, cost, x_c, x_star, T, sd, seed)
        return np.where(a + a2 > 0, vals, -np.inf)

    best, _ = pso(objective, box, particles, iterations, rng)
    if refine:
        best, _ = local_refine(objective, best, box, ftol=REFINE_FTOL)
    a, a2 = _feasible_counts(best[2 * d], best[2 * d + 1], p_max)
    ra, rb = round_counts(float(a), float(a2), p_max)
    x1 = region.clip(best[:d])
    x2 = region.clip(best[d : 2 * d])
    value = qerci_v2(m, x1, ra, x2, rb, cost, x_c, x_star, T, draws, seed)
    return BatchProposal(x1, ra, x2, rb, value)
