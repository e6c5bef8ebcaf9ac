"""Gaussian-process regression on replicated designs.

Replicates at one location are stored as a single aggregated observation
(count, mean, within-location scatter).  With ``a_i`` replicates at ``x_i``
and noise variance ``r2(x_i)`` the latent system solved is

    (K_n + diag(r2(x_i) / a_i)) alpha = ybar,

which gives exactly the same posterior as the full system with every raw
sample as its own row, at O(n^3) instead of O(N^3) cost.

Everything in this module lives in *model space*: inputs are whatever
coordinates the caller chose (the trust-region code maps its box to
[-1, 1]^d) and outputs are standardized.  The GP prior mean is zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import linalg, optimize
from scipy.linalg import lapack
from scipy.stats import qmc

from .errors import DataError, NumericalError

SQRT5 = math.sqrt(5.0)
LOG_2PI = math.log(2.0 * math.pi)

JITTER_START = 1e-10
JITTER_MAX = 1e-4
DEDUP_TOL = 1e-9

NOISE_KINDS = ("known_function", "constant_mle", "empirical_pooled")


# ---------------------------------------------------------------------------
# Design storage
# ---------------------------------------------------------------------------


@dataclass
class DesignSet:
    """Unique design locations with replicate statistics.

    ``sq_dev_sums[i]`` is the sum of squared deviations of the raw samples at
    location ``i`` from their mean (zero when there is a single sample).
    """

    dim: int
    locations: np.ndarray = None
    rep_counts: np.ndarray = None
    agg_means: np.ndarray = None
    sq_dev_sums: np.ndarray = None
    dedup_tol: float = DEDUP_TOL

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if self.locations is None:
            self.locations = np.empty((0, self.dim))
            self.rep_counts = np.empty(0, dtype=np.int64)
            self.agg_means = np.empty(0)
            self.sq_dev_sums = np.empty(0)
        self.locations = np.asarray(self.locations, dtype=float).reshape(-1, self.dim)
        self.rep_counts = np.asarray(self.rep_counts, dtype=np.int64).reshape(-1)
        self.agg_means = np.asarray(self.agg_means, dtype=float).reshape(-1)
        self.sq_dev_sums = np.asarray(self.sq_dev_sums, dtype=float).reshape(-1)
        n = len(self.locations)
        if not (len(self.rep_counts) == len(self.agg_means) == len(self.sq_dev_sums) == n):
            raise ValueError("design arrays must have equal length")
        if np.any(self.rep_counts < 1):
            raise ValueError("replicate counts must be positive")

    @classmethod
    def from_samples(cls, dim, batches, dedup_tol=DEDUP_TOL):
        """Build a design set from ``(x, samples)`` pairs, merging replicates."""
        ds = cls(dim, dedup_tol=dedup_tol)
        for x, samples in batches:
            ds.add(x, samples)
        return ds

    @property
    def n(self) -> int:
        return len(self.locations)

    @property
    def total_count(self) -> int:
        return int(self.rep_counts.sum())

    def copy(self) -> "DesignSet":
        return DesignSet(
            self.dim,
            self.locations.copy(),
            self.rep_counts.copy(),
            self.agg_means.copy(),
            self.sq_dev_sums.copy(),
            self.dedup_tol,
        )

    def subset(self, index) -> "DesignSet":
        index = np.asarray(index, dtype=np.int64)
        return DesignSet(
            self.dim,
            self.locations[index],
            self.rep_counts[index],
            self.agg_means[index],
            self.sq_dev_sums[index],
            self.dedup_tol,
        )

    def find(self, x) -> int:
        """Index of the design within ``dedup_tol`` of ``x``, or -1."""
        if self.n == 0:
            return -1
        x = np.asarray(x, dtype=float).reshape(self.dim)
        dist = np.sqrt(np.sum((self.locations - x) ** 2, axis=1))
        i = int(np.argmin(dist))
        return i if dist[i] <= self.dedup_tol else -1

    def add(self, x, samples) -> int:
        """Merge ``samples`` observed at ``x`` in place; return the design index."""
        x = np.asarray(x, dtype=float).reshape(self.dim)
        y = np.asarray(samples, dtype=float).reshape(-1)
        if y.size == 0:
            raise DataError("samples must be nonempty")
        if not np.all(np.isfinite(y)) or not np.all(np.isfinite(x)):
            raise DataError("non-finite sample or location")
        p = y.size
        batch_mean = float(y.mean())
        batch_m2 = float(np.sum((y - batch_mean) ** 2)) if p > 1 else 0.0
        i = self.find(x)
        if i < 0:
            self.locations = np.vstack([self.locations, x[None, :]])
            self.rep_counts = np.append(self.rep_counts, p)
            self.agg_means = np.append(self.agg_means, batch_mean)
            self.sq_dev_sums = np.append(self.sq_dev_sums, batch_m2)
            return self.n - 1
        # pairwise (Chan et al.) merge of two sample summaries
        a = int(self.rep_counts[i])
        total = a + p
        delta = batch_mean - self.agg_means[i]
        self.agg_means[i] += delta * p / total
        self.sq_dev_sums[i] += batch_m2 + delta * delta * a * p / total
        self.rep_counts[i] = total
        return i


# ---------------------------------------------------------------------------
# Kernel and noise
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KernelSpec:
    """Anisotropic Matérn-5/2 product kernel parameters."""

    process_var: float
    lengthscales: tuple

    def __post_init__(self):
        ls = tuple(float(v) for v in np.atleast_1d(self.lengthscales))
        object.__setattr__(self, "lengthscales", ls)
        values = (self.process_var,) + ls
        if not all(np.isfinite(v) and v > 0 for v in values):
            raise ValueError(f"kernel parameters must be positive and finite: {values}")

    @property
    def dim(self) -> int:
        return len(self.lengthscales)

    def matrix(self, X1, X2) -> np.ndarray:
        return matern52_matrix(X1, X2, self)


def _matern_factors(u):
    return (1.0 + u + u * u / 3.0) * np.exp(-u)


def matern52(x, x2, k: KernelSpec) -> float:
    """Matérn-5/2 covariance between two points."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    if x.shape != x2.shape or x.shape != (k.dim,):
        raise ValueError(f"dimension mismatch: {x.shape}, {x2.shape}, kernel dim {k.dim}")
    u = SQRT5 * np.abs(x - x2) / np.asarray(k.lengthscales)
    return float(k.process_var * np.prod(_matern_factors(u)))


def matern52_matrix(X1, X2, k: KernelSpec) -> np.ndarray:
    X1 = np.asarray(X1, dtype=float).reshape(-1, k.dim)
    X2 = np.asarray(X2, dtype=float).reshape(-1, k.dim)
    scale = SQRT5 / np.asarray(k.lengthscales)
    A, B = X1 * scale, X2 * scale
    out = None
    total = None
    for j in range(k.dim):
        u = np.abs(A[:, j, None] - B[None, :, j])
        poly = 1.0 + u * (1.0 + u / 3.0)
        if out is None:
            out, total = poly, u
        else:
            out *= poly
            total += u
    return k.process_var * out * np.exp(-total)


@dataclass(frozen=True)
class NoiseModel:
    """Observation-noise variance r2(x).

    ``known_function`` carries a callable mapping an (m, d) array to m
    variances; the other kinds carry a scalar estimate.
    """

    kind: str
    value: object

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kind == "known_function":
            if not callable(self.value):
                raise ValueError("known_function noise needs a callable")
        else:
            v = float(self.value)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError("noise variance must be finite and nonnegative")
            object.__setattr__(self, "value", v)

    @classmethod
    def constant(cls, value, kind="constant_mle"):
        return cls(kind, float(value))

    @property
    def is_constant(self) -> bool:
        return self.kind != "known_function"

    def variance(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.kind == "known_function":
            r2 = np.asarray(self.value(X), dtype=float).reshape(len(X))
            if np.any(r2 < 0) or not np.all(np.isfinite(r2)):
                raise DataError("noise function returned a negative or non-finite variance")
            return r2
        return np.full(len(X), self.value)


# ---------------------------------------------------------------------------
# Fitted model
# ---------------------------------------------------------------------------


def _cholesky_with_jitter(C, scale, nugget=0.0):
    """Lower Cholesky factor of ``C + jitter*I`` under the escalation policy.

    When the smallest noise ``nugget`` on the diagonal already exceeds the
    starting jitter, the unjittered factorization is tried first.
    """
    n = len(C)
    if nugget >= JITTER_START * scale:
        try:
            return linalg.cholesky(C, lower=True, check_finite=False), 0.0
        except linalg.LinAlgError:
            pass
    jitter = JITTER_START * scale
    while True:
        try:
            L = linalg.cholesky(C + jitter * np.eye(n), lower=True, check_finite=False)
            return L, jitter
        except linalg.LinAlgError:
            if jitter >= JITTER_MAX * scale * (1 - 1e-12):
                raise NumericalError(
                    f"covariance factorization failed at jitter {jitter:.3g}"
                ) from None
            jitter *= 10.0


class GPModel:
    """Zero-mean GP conditioned on aggregated replicate observations.

    Instances are treated as frozen: :meth:`ingest` returns a new model.
    """

    def __init__(self, designs: DesignSet, kernel: KernelSpec, noise: NoiseModel):
        if kernel.dim != designs.dim:
            raise ValueError("kernel and design dimensions differ")
        self.designs = designs
        self.kernel = kernel
        self.noise = noise
        self._Cinv = None
        n = designs.n
        if n == 0:
            self.noise_at_designs = np.empty(0)
            self.chol = np.empty((0, 0))
            self.alpha = np.empty(0)
            self.jitter = 0.0
            return
        X = designs.locations
        self.noise_at_designs = noise.variance(X)
        C = kernel.matrix(X, X)
        nugget = self.noise_at_designs / designs.rep_counts
        C[np.diag_indices(n)] += nugget
        self.chol, self.jitter = _cholesky_with_jitter(C, kernel.process_var, float(nugget.min()))
        self.alpha = linalg.cho_solve((self.chol, True), designs.agg_means, check_finite=False)

    # -- basic quantities -------------------------------------------------

    @property
    def dim(self) -> int:
        return self.designs.dim

    @property
    def n(self) -> int:
        return self.designs.n

    def _solve_lower(self, B):
        return linalg.solve_triangular(self.chol, B, lower=True, check_finite=False)

    @property
    def c_inverse(self) -> np.ndarray:
        """(K_n + Lambda_n A_n^-1 + jitter I)^-1, computed lazily."""
        if self._Cinv is None:
            self._Cinv = linalg.cho_solve((self.chol, True), np.eye(self.n), check_finite=False)
        return self._Cinv

    def predict(self, X):
        """Posterior mean, latent variance and observation variance.

        A single point returns floats; an (m, d) array returns arrays.
        """
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X = X.reshape(-1, self.dim)
        prior = np.full(len(X), self.kernel.process_var)
        r2 = self.noise.variance(X)
        if self.n == 0:
            mean = np.zeros(len(X))
            var = prior
        else:
            kx = self.kernel.matrix(self.designs.locations, X)
            mean = kx.T @ self.alpha
            v = self._solve_lower(kx)
            var = np.maximum(prior - np.sum(v * v, axis=0), 0.0)
        var_obs = var + r2
        if single:
            return float(mean[0]), float(var[0]), float(var_obs[0])
        return mean, var, var_obs

    def predict_mean(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(-1, self.dim)
        if self.n == 0:
            return np.zeros(len(X))
        return self.kernel.matrix(X, self.designs.locations) @ self.alpha

    def posterior_cov(self, X1, X2=None) -> np.ndarray:
        """Latent posterior cross-covariance matrix between point sets."""
        X1 = np.asarray(X1, dtype=float).reshape(-1, self.dim)
        X2 = X1 if X2 is None else np.asarray(X2, dtype=float).reshape(-1, self.dim)
        prior = self.kernel.matrix(X1, X2)
        if self.n == 0:
            return prior
        v1 = self._solve_lower(self.kernel.matrix(self.designs.locations, X1))
        v2 = v1 if X2 is X1 else self._solve_lower(self.kernel.matrix(self.designs.locations, X2))
        return prior - v1.T @ v2

    def joint_posterior(self, P):
        """Mean and latent covariance over stacked point sets.

        ``P`` has shape (..., k, d); returns means (..., k) and
        covariances (..., k, k).
        """
        P = np.asarray(P, dtype=float)
        lead = P.shape[:-2]
        k = P.shape[-2]
        flat = P.reshape(-1, self.dim)
        B = flat.shape[0] // k
        pts = flat.reshape(B, k, self.dim)
        ls = np.asarray(self.kernel.lengthscales)
        u = SQRT5 * np.abs(pts[:, :, None, :] - pts[:, None, :, :]) / ls
        prior = self.kernel.process_var * np.prod(1.0 + u + u * u / 3.0, axis=-1) * np.exp(-u.sum(-1))
        if self.n == 0:
            mean = np.zeros((B, k))
            cov = prior
        else:
            kx = self.kernel.matrix(self.designs.locations, flat)  # (n, B*k)
            mean = (kx.T @ self.alpha).reshape(B, k)
            v = self._solve_lower(kx).T.reshape(B, k, self.n)
            cov = prior - v @ np.swapaxes(v, -1, -2)
        return mean.reshape(lead + (k,)), cov.reshape(lead + (k, k))

    def design_means(self) -> np.ndarray:
        """Predictive mean at every design location."""
        if self.n == 0:
            return np.empty(0)
        K = self.kernel.matrix(self.designs.locations, self.designs.locations)
        return K @ self.alpha

    # -- updates ----------------------------------------------------------

    def ingest(self, x, samples) -> "GPModel":
        """Return a new model with ``samples`` observed at ``x``."""
        designs = self.designs.copy()
        designs.add(x, samples)
        return GPModel(designs, self.kernel, self.noise)

    def with_designs(self, designs: DesignSet) -> "GPModel":
        return GPModel(designs, self.kernel, self.noise)

    # -- look-ahead -------------------------------------------------------

    def _fantasy_terms(self, x_new, p, x_query):
        x_new = np.asarray(x_new, dtype=float).reshape(1, self.dim)
        Xq = np.asarray(x_query, dtype=float).reshape(-1, self.dim)
        s2_new = float(self.posterior_cov(x_new)[0, 0])
        r2_new = float(self.noise.variance(x_new)[0])
        p = np.asarray(p, dtype=float)
        if np.any(p <= 0):
            raise ValueError("replicate count must be positive")
        # the jitter sits on every diagonal entry, so a refit would add it too
        denom = s2_new + r2_new / p + self.jitter
        if np.any(denom <= 0):
            raise NumericalError("non-positive fantasy denominator (noise-free replicate of a design)")
        cross = self.posterior_cov(Xq, x_new)[:, 0]
        return Xq, cross, denom

    def fantasy_variance(self, x_new, p, x_query):
        """Latent variance at ``x_query`` after ``p`` replicates at ``x_new``.

        Does not depend on the values that would be observed.
        """
        single = np.ndim(x_query) == 1 and np.ndim(p) == 0
        Xq, cross, denom = self._fantasy_terms(x_new, p, x_query)
        _, var, _ = self.predict(Xq)
        out = np.maximum(var - cross**2 / denom, 0.0)
        return float(out[0]) if single else out

    def fantasy_mean(self, x_new, p, ybar_new, x_query):
        """Posterior mean at ``x_query`` after observing mean ``ybar_new`` of ``p`` replicates."""
        single = np.ndim(x_query) == 1 and np.ndim(p) == 0
        Xq, cross, denom = self._fantasy_terms(x_new, p, x_query)
        m_new = float(self.predict_mean(np.asarray(x_new).reshape(1, -1))[0])
        out = self.predict_mean(Xq) + cross / denom * (ybar_new - m_new)
        return float(out[0]) if single else out

    # -- leave-one-out ----------------------------------------------------

    def loo_all(self):
        """Leave-one-out mean and latent variance at every design.

        Deleting aggregated observation i from the linear system gives
        mean ybar_i - [C^-1 ybar]_i / [C^-1]_ii and observation variance
        1 / [C^-1]_ii (Dubrule's identity).  The literature form
        ``[C^-1]_ii - r2_i / a_i`` for the variance does not match an
        explicit deletion; the reciprocal is what deletion produces and
        is what we return, minus the noise and jitter of the deleted
        aggregate to give the latent variance.
        """
        if self.n < 2:
            raise ValueError("leave-one-out needs at least two designs")
        qii = np.diag(self.c_inverse)
        mean = self.designs.agg_means - self.alpha / qii
        var = 1.0 / qii - self.noise_at_designs / self.designs.rep_counts - self.jitter
        return mean, np.maximum(var, 0.0)

    def loo(self, i: int):
        mean, var = self.loo_all()
        return float(mean[i]), float(var[i])


def predict(m: GPModel, x):
    return m.predict(x)


def ingest(m: GPModel, x, samples) -> GPModel:
    return m.ingest(x, samples)


# ---------------------------------------------------------------------------
# Variance decomposition over a box
# ---------------------------------------------------------------------------


@lru_cache(maxsize=32)
def _unit_nodes(dim: int, size: int) -> np.ndarray:
    sampler = qmc.Sobol(dim, scramble=True, seed=20240611)
    m = int(round(math.log2(size)))
    pts = sampler.random_base2(m) if 2**m == size else sampler.random(size)
    pts.setflags(write=False)
    return pts


def quadrature_nodes(lower, upper, size=1024) -> np.ndarray:
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if np.any(upper - lower <= 0):
        raise ValueError("degenerate box")
    return lower + _unit_nodes(len(lower), int(size)) * (upper - lower)


def variance_decomposition(m: GPModel, lower, upper, size=1024):
    """Split the variance of Y(X), X uniform on the box, into two parts.

    Returns ``(mean_pred_var, var_of_mean)`` = (E[s_n^2(X)], Var[m_n(X)])
    using the latent predictive variance, estimated on a fixed scrambled
    Sobol point set.
    """
    nodes = quadrature_nodes(lower, upper, size)
    mean, var, _ = m.predict(nodes)
    return float(np.mean(var)), float(np.var(mean))


# ---------------------------------------------------------------------------
# Likelihood and hyperparameter fitting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HyperBounds:
    """Box for the hyperparameters in model space."""

    lengthscale: tuple = (0.05, 10.0)
    process_var: tuple = (0.05, 20.0)
    noise_var: tuple = (1e-8, 10.0)


class _Likelihood:
    """Negative log marginal likelihood over log-hyperparameters.

    Includes the within-replicate terms, so the value equals the full-N
    Gaussian likelihood of the raw samples.
    """

    def __init__(self, designs: DesignSet, noise_kind: str, noise_fixed=None):
        self.d = designs.dim
        self.designs = designs
        self.y = designs.agg_means
        self.a = designs.rep_counts.astype(float)
        X = designs.locations
        self.absdiff = np.abs(X[:, None, :] - X[None, :, :]).transpose(2, 0, 1)  # (d, n, n)
        self.noise_kind = noise_kind
        self.learn_noise = noise_kind == "constant_mle"
        # r2 at designs for fixed-noise kinds
        self.noise_fixed = None if noise_fixed is None else np.asarray(noise_fixed, dtype=float)
        self.dof = float(np.sum(self.a - 1.0))
        self.S = designs.sq_dev_sums
        self.const = -0.5 * np.sum(np.log(self.a)) - 0.5 * designs.total_count * LOG_2PI

    def n_params(self):
        return 1 + self.d + int(self.learn_noise)

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        n = len(self.y)
        sigma2 = math.exp(theta[0])
        ls = np.exp(theta[1 : 1 + self.d])
        u = self.absdiff * (SQRT5 / ls)[:, None, None]
        poly = u / 3.0
        poly += 1.0
        poly *= u
        poly += 1.0
        R = np.exp(-u.sum(axis=0))
        for j in range(self.d):
            R *= poly[j]
        K = R
        K *= sigma2
        if self.learn_noise:
            r2 = np.full(n, math.exp(theta[-1]))
        else:
            r2 = self.noise_fixed
        C = K.copy()
        nugget = r2 / self.a
        C.flat[:: n + 1] += nugget
        try:
            L, jitter = _cholesky_with_jitter(C, sigma2, float(nugget.min()))
        except NumericalError:
            return math.inf, np.zeros_like(theta)
        alpha = linalg.cho_solve((L, True), self.y, check_finite=False)
        loglik = -0.5 * self.y @ alpha - np.sum(np.log(np.diag(L))) + self.const
        pos = r2 > 0
        loglik += -0.5 * np.sum((self.a[pos] - 1.0) * np.log(r2[pos])) - 0.5 * np.sum(self.S[pos] / r2[pos])
        Cinv, info = lapack.dpotri(L, lower=1)
        if info != 0:
            return math.inf, np.zeros_like(theta)
        Cinv = np.tril(Cinv) + np.tril(Cinv, -1).T
        W = np.outer(alpha, alpha)
        W -= Cinv
        WK = W * K
        grad = np.empty_like(theta)
        # jitter is proportional to sigma2, so it carries the same derivative
        grad[0] = 0.5 * (WK.sum() + jitter * np.trace(W))
        for j in range(self.d):
            # d log k / d log l_j = u^2 (1 + u) / (3 poly)
            uj = u[j]
            t = uj * uj
            t *= uj + 1.0
            t /= poly[j]
            t *= WK
            grad[1 + j] = t.sum() / 6.0
        if self.learn_noise:
            r2c = r2[0]
            grad[-1] = 0.5 * np.sum(np.diag(W) * r2 / self.a) - 0.5 * self.dof + 0.5 * np.sum(self.S) / r2c
        return -loglik, -grad


def log_marginal_likelihood(designs: DesignSet, kernel: KernelSpec, noise: NoiseModel) -> float:
    """Gaussian log likelihood of all raw samples under the model."""
    theta = [math.log(kernel.process_var)] + [math.log(v) for v in kernel.lengthscales]
    if noise.kind == "constant_mle":
        lik = _Likelihood(designs, "constant_mle")
        theta.append(math.log(max(noise.value, 1e-300)))
    else:
        lik = _Likelihood(designs, noise.kind, noise.variance(designs.locations))
    value, _ = lik(np.array(theta))
    return -value


def _log_box(bounds: HyperBounds, d: int, learn_noise: bool):
    lo = [math.log(bounds.process_var[0])] + [math.log(bounds.lengthscale[0])] * d
    hi = [math.log(bounds.process_var[1])] + [math.log(bounds.lengthscale[1])] * d
    if learn_noise:
        lo.append(math.log(bounds.noise_var[0]))
        hi.append(math.log(bounds.noise_var[1]))
    return np.array(lo), np.array(hi)


def start_points(bounds: HyperBounds, d: int, learn_noise: bool, restarts: int, rng) -> np.ndarray:
    """Scrambled Halton multi-start points in log-hyperparameter space."""
    lo, hi = _log_box(bounds, d, learn_noise)
    seed = int(rng.integers(2**32)) if rng is not None else 0
    unit = qmc.Halton(len(lo), scramble=True, seed=seed).random(restarts)
    return lo + unit * (hi - lo)


def pooled_noise(designs: DesignSet) -> Optional[float]:
    """Pooled within-location variance, or None with fewer than 3 dof."""
    dof = float(np.sum(designs.rep_counts - 1))
    if dof < 3:
        return None
    return float(np.sum(designs.sq_dev_sums) / dof)


def fit_hyperparameters(
    designs: DesignSet,
    noise_kind: str = "constant_mle",
    bounds: HyperBounds | None = None,
    restarts: int = 5,
    rng=None,
    noise_function: Callable | None = None,
    extra_starts: Sequence | None = None,
    info: dict | None = None,
):
    """Maximum-likelihood kernel (and constant noise) estimates.

    Runs bounded L-BFGS-B from ``restarts`` low-discrepancy starting points
    (plus any ``extra_starts`` given as log-parameter vectors) and keeps
    the best.  Returns ``(KernelSpec, NoiseModel)``.  When ``info`` is a
    dict it receives the starting points, their likelihoods and the final
    likelihood.
    """
    if designs.n < 2:
        raise ValueError("need at least two designs to fit hyperparameters")
    bounds = bounds or HyperBounds()
    d = designs.dim
    kind = noise_kind
    fixed = None
    if kind == "empirical_pooled":
        pooled = pooled_noise(designs)
        if pooled is None:
            kind = "constant_mle"
        else:
            fixed = np.full(designs.n, pooled)
    elif kind == "known_function":
        if noise_function is None:
            raise ValueError("known_function noise needs noise_function")
        fixed = NoiseModel("known_function", noise_function).variance(designs.locations)
    elif kind != "constant_mle":
        raise ValueError(f"unknown noise kind {kind!r}")

    lik = _Likelihood(designs, kind, fixed)
    lo, hi = _log_box(bounds, d, lik.learn_noise)
    starts = start_points(bounds, d, lik.learn_noise, restarts, rng)
    if extra_starts is not None:
        extra = np.clip(np.atleast_2d(np.asarray(extra_starts, dtype=float)), lo, hi)
        starts = np.vstack([starts, extra])
    best_theta, best_val = None, math.inf
    start_vals = []
    for theta0 in starts:
        f0, _ = lik(theta0)
        start_vals.append(-f0)
        if not np.isfinite(f0):
            continue
        res = optimize.minimize(
            lik, theta0, jac=True, method="L-BFGS-B", bounds=list(zip(lo, hi)),
            options={"maxiter": 200},
        )
        theta, val = np.clip(res.x, lo, hi), res.fun
        if not np.isfinite(val) or val > f0:
            theta, val = theta0, f0
        if val < best_val:
            best_theta, best_val = theta, val
    if best_theta is None:
        raise NumericalError("likelihood factorization failed at every start point")

    # clip against the literal bounds; exp(log(b)) can round just past b
    vlo = [bounds.process_var[0]] + [bounds.lengthscale[0]] * d + ([bounds.noise_var[0]] if lik.learn_noise else [])
    vhi = [bounds.process_var[1]] + [bounds.lengthscale[1]] * d + ([bounds.noise_var[1]] if lik.learn_noise else [])
    values = np.clip(np.exp(best_theta), vlo, vhi)
    kernel = KernelSpec(float(values[0]), tuple(values[1 : 1 + d]))
    if lik.learn_noise:
        noise = NoiseModel("constant_mle", float(values[-1]))
    elif kind == "empirical_pooled":
        noise = NoiseModel("empirical_pooled", float(fixed[0]))
    else:
        noise = NoiseModel("known_function", noise_function)
    if info is not None:
        info["starts"] = starts
        info["start_loglik"] = np.array(start_vals)
        info["loglik"] = -best_val
        info["noise_kind"] = kind
    return kernel, noise
