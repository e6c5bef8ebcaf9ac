"""GP-based trust-region loop with adaptive replication.

Coordinates come in three flavours:

* domain coordinates, where the oracle is evaluated and the archive lives;
* normalized domain coordinates (domain box mapped to [-1, 1]^d), in which
  the radius is measured;
* model coordinates, where the current trust-region box is mapped to
  [-1, 1]^d and outputs are standardized before kriging.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from . import acquisition as acq
from .acquisition import CostModel
from .errors import ConfigError
from .gp import (
    DEDUP_TOL,
    DesignSet,
    GPModel,
    HyperBounds,
    KernelSpec,
    NoiseModel,
    fit_hyperparameters,
    variance_decomposition,
)
from .optim_utils import BoxRegion, lhs_maximin, local_refine, uniform_candidates

ACQUISITIONS = ("ei", "qerci_v1", "qerci_v2")
SD_FLOOR = 1e-12
LOO_FLOOR = 1e-12


@dataclass(frozen=True)
class AcquisitionChoice:
    """Criterion driving candidate and replicate selection.

    ``fixed_reps`` switches on fixed-replication mode: every evaluation
    uses exactly that many replicates.  ``search_draws`` shortens the
    normal stream during the qERCIv2 swarm search.
    """

    kind: str = "ei"
    fixed_reps: Optional[int] = None
    draws: int = acq.DEFAULT_DRAWS
    search_draws: Optional[int] = None
    seed: int = acq.DEFAULT_SEED

    def __post_init__(self):
        if self.kind not in ACQUISITIONS:
            raise ConfigError(f"unknown acquisition {self.kind!r}; expected one of {ACQUISITIONS}")


@dataclass(frozen=True)
class TRConfig:
    gamma_dec: float = 0.8
    gamma_inc: Optional[float] = None
    eta: float = 0.2
    beta: float = 1e-3
    n_b: Optional[int] = None
    N0: Optional[int] = None
    N_max: Optional[int] = None
    p_max: int = 500
    delta0: float = 0.2
    delta_min: Optional[float] = None
    T_a: float = 0.2
    var_ratio: float = 4.0
    imse_ratio: float = 10.0
    refit_period: int = 3
    acquisition: AcquisitionChoice = field(default_factory=AcquisitionChoice)
    cost: CostModel = field(default_factory=CostModel)
    max_cost: Optional[float] = None
    max_iterations: Optional[int] = None
    noise_kind: str = "constant_mle"
    hyper_restarts: int = 5
    warm_restarts: int = 0
    n_candidates: Optional[int] = None
    pso_particles: int = 50
    pso_iterations: int = 40
    decrease_units: str = "normalized"

    def resolved(self, dim: int) -> "TRConfig":
        """Copy with every dimension-dependent default filled in, validated."""
        cfg = replace(
            self,
            gamma_inc=1.0 / self.gamma_dec if self.gamma_inc is None else self.gamma_inc,
            n_b=50 * dim if self.n_b is None else self.n_b,
            N0=max(dim + 1, min(10, 2 * dim)) if self.N0 is None else self.N0,
            N_max=10_000 * (dim + 1) if self.N_max is None else self.N_max,
            delta_min=1e-6 * self.delta0 if self.delta_min is None else self.delta_min,
            n_candidates=min(100 * dim, 5000) if self.n_candidates is None else self.n_candidates,
        )
        cfg.validate()
        return cfg

    def validate(self):
        checks = [
            (0 < self.gamma_dec < 1, "gamma_dec must lie in (0, 1)"),
            (self.gamma_inc is None or self.gamma_inc > 1, "gamma_inc must exceed 1"),
            (0 < self.eta < 1, "eta must lie in (0, 1)"),
            (0 < self.beta < 1, "beta must lie in (0, 1)"),
            (0 < self.T_a < 1, "T_a must lie in (0, 1)"),
            (self.var_ratio > 1, "var_ratio must exceed 1"),
            (self.imse_ratio >= 0, "imse_ratio must be nonnegative"),
            (self.p_max >= 1, "p_max must be at least 1"),
            (self.delta0 > 0, "delta0 must be positive"),
            (self.delta_min is None or 0 < self.delta_min < self.delta0, "need 0 < delta_min < delta0"),
            (self.refit_period >= 1, "refit_period must be at least 1"),
            (self.hyper_restarts >= 1 and self.warm_restarts >= 0, "need hyper_restarts >= 1 and warm_restarts >= 0"),
            (self.n_b is None or self.n_b >= 2, "n_b must be at least 2"),
            (self.N0 is None or self.N0 >= 2, "N0 must be at least 2"),
        ]
        k = self.acquisition.fixed_reps
        checks.append((k is None or 1 <= k <= self.p_max, "fixed replicate count must lie in [1, p_max]"))
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)


# ---------------------------------------------------------------------------
# Local model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InputTransform:
    """Affine map of a box onto [-1, 1]^d."""

    lower: np.ndarray
    upper: np.ndarray

    @property
    def halfwidth(self) -> np.ndarray:
        return 0.5 * (self.upper - self.lower)

    def to_model(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.lower) / self.halfwidth - 1.0

    def to_domain(self, U) -> np.ndarray:
        return self.lower + (np.asarray(U, dtype=float) + 1.0) * self.halfwidth


@dataclass(frozen=True)
class OutputTransform:
    mean: float
    sd: float

    def to_model(self, y):
        return (np.asarray(y, dtype=float) - self.mean) / self.sd

    def to_domain(self, z):
        return self.mean + self.sd * np.asarray(z, dtype=float)


FLOOR_RTOL = 1e-3


@dataclass
class PhysicalHyper:
    """Hyperparameters in domain/output units, reusable across trust regions."""

    process_var: float
    lengthscales: np.ndarray
    noise_var: Optional[float]
    # a noise estimate pinned to its lower bound stays pinned after rescaling
    noise_at_floor: bool = False

    @classmethod
    def from_model(cls, kernel: KernelSpec, noise: NoiseModel, inputs: InputTransform, outputs: OutputTransform):
        s2 = outputs.sd**2
        nv = noise.value * s2 if noise.is_constant else None
        floor = noise.is_constant and noise.value <= HyperBounds().noise_var[0] * (1 + FLOOR_RTOL)
        return cls(kernel.process_var * s2, np.asarray(kernel.lengthscales) * inputs.halfwidth, nv, bool(floor))

    def to_model(self, inputs: InputTransform, outputs: OutputTransform, bounds: HyperBounds):
        s2 = outputs.sd**2
        pv = float(np.clip(self.process_var / s2, bounds.process_var[0], bounds.process_var[1]))
        ls = np.clip(self.lengthscales / inputs.halfwidth, bounds.lengthscale[0], bounds.lengthscale[1])
        kernel = KernelSpec(pv, tuple(float(v) for v in ls))
        noise = None
        if self.noise_var is not None:
            nv = bounds.noise_var[0] if self.noise_at_floor else self.noise_var / s2
            noise = NoiseModel.constant(float(np.clip(nv, bounds.noise_var[0], bounds.noise_var[1])))
        return kernel, noise


@dataclass
class LocalModel:
    gp: GPModel
    inputs: InputTransform
    outputs: OutputTransform
    archive_index: np.ndarray

    @property
    def region(self) -> BoxRegion:
        """The trust-region box in model coordinates (always [-1, 1]^d)."""
        d = self.gp.dim
        return BoxRegion(-np.ones(d), np.ones(d))

    def predict_mean_domain(self, X) -> np.ndarray:
        U = self.inputs.to_model(np.atleast_2d(X))
        return self.outputs.to_domain(self.gp.predict_mean(U))


def _model_designs(archive: DesignSet, index, inputs: InputTransform, outputs: OutputTransform) -> DesignSet:
    index = np.asarray(index, dtype=np.int64)
    return DesignSet(
        archive.dim,
        inputs.to_model(archive.locations[index]),
        archive.rep_counts[index],
        outputs.to_model(archive.agg_means[index]),
        archive.sq_dev_sums[index] / outputs.sd**2,
        DEDUP_TOL,
    )


def _noise_for(kind, noise, designs):
    if noise is not None:
        return noise
    if kind == "empirical_pooled":
        from .gp import pooled_noise

        pooled = pooled_noise(designs)
        if pooled is not None:
            return NoiseModel("empirical_pooled", pooled)
    raise ValueError("no reusable noise estimate")


def _log_theta(kernel: KernelSpec, noise: NoiseModel):
    theta = [math.log(kernel.process_var)] + [math.log(v) for v in kernel.lengthscales]
    if noise.is_constant and noise.kind == "constant_mle":
        theta.append(math.log(noise.value))
    return np.array(theta)


def fit_local(archive, index, inputs, outputs, config, rng, hyper: Optional[PhysicalHyper], refit: bool):
    """Build a local GP, refitting hyperparameters or reusing ``hyper``."""
    designs = _model_designs(archive, index, inputs, outputs)
    bounds = HyperBounds()
    warm = None
    if hyper is not None:
        kernel, noise = hyper.to_model(inputs, outputs, bounds)
        if not refit:
            try:
                gp = GPModel(designs, kernel, _noise_for(config.noise_kind, noise, designs))
                return LocalModel(gp, inputs, outputs, np.asarray(index)), hyper
            except ValueError:
                pass
        elif config.noise_kind == "constant_mle" and noise is not None:
            warm = _log_theta(kernel, noise)
    restarts = config.hyper_restarts if warm is None else config.warm_restarts
    kernel, noise = fit_hyperparameters(designs, config.noise_kind, bounds, restarts, rng, extra_starts=warm)
    gp = GPModel(designs, kernel, noise)
    return LocalModel(gp, inputs, outputs, np.asarray(index)), PhysicalHyper.from_model(kernel, noise, inputs, outputs)


# ---------------------------------------------------------------------------
# State and reports
# ---------------------------------------------------------------------------


@dataclass
class TrustRegionState:
    center: np.ndarray
    radius: float
    designs: DesignSet
    eval_count: int
    cost_spent: float
    iteration: int = 0
    last_model: Optional[LocalModel] = None
    hyper: Optional[PhysicalHyper] = None
    last_refit: int = -(10**9)
    center_moved: bool = True
    domain: Optional[BoxRegion] = None

    def tr_box(self) -> BoxRegion:
        return BoxRegion.trust_region(self.center, self.radius, self.domain)


@dataclass
class IterationReport:
    iteration: int
    candidate: np.ndarray
    reps_requested: int
    reps: int
    accepted: bool
    rho: Optional[float]
    sufficient_decrease: bool
    radius_action: str
    decrease_gate_fired: bool
    used_corner_case: bool
    augmented: int
    center: np.ndarray
    radius: float
    eval_count: int
    cost_spent: float
    cost_charged: float
    estimated_center_value: float


@dataclass
class OptimizationResult:
    center: np.ndarray
    estimated_value: float
    initial_center: np.ndarray
    initial_eval_count: int
    initial_cost: float
    initial_radius: float
    reports: List[IterationReport]
    state: TrustRegionState
    stop_reason: str


# ---------------------------------------------------------------------------
# Algorithm steps
# ---------------------------------------------------------------------------


def _evaluate(state: TrustRegionState, oracle, x, reps: int) -> float:
    x = state.domain.clip(np.asarray(x, dtype=float))
    receipt = oracle(x, int(reps))
    state.designs.add(x, receipt.samples)
    state.eval_count += int(reps)
    state.cost_spent += receipt.cost_charged
    return receipt.cost_charged


def _archive_tol(domain: BoxRegion) -> float:
    return 1e-13 * float(np.max(domain.width))


def initialize(oracle, config: TRConfig, rng, x0=None) -> TrustRegionState:
    """Initial maximin design, global GP and starting center."""
    domain = oracle.bounds
    d = domain.dim
    cfg = config.resolved(d)
    if cfg.N_max < cfg.N0:
        raise ConfigError("budget N_max is smaller than the initial design")
    unit = lhs_maximin(cfg.N0, d, rng)
    X = domain.lower + unit * domain.width
    state = TrustRegionState(
        center=np.zeros(d), radius=cfg.delta0, designs=DesignSet(d, dedup_tol=_archive_tol(domain)),
        eval_count=0, cost_spent=0.0, domain=domain,
    )
    for x in X:
        _evaluate(state, oracle, x, 1)
    inputs = InputTransform(domain.lower, domain.upper)
    outputs = _output_transform(state.designs.agg_means)
    index = np.arange(state.designs.n)
    state.last_model, state.hyper = fit_local(state.designs, index, inputs, outputs, cfg, rng, None, True)
    if x0 is not None:
        state.center = np.asarray(x0, dtype=float).reshape(d).copy()
        if not bool(domain.contains(state.center)[0]):
            raise ConfigError("x0 lies outside the domain")
    else:
        state.center = state.designs.locations[int(np.argmin(state.last_model.gp.design_means()))].copy()
    return state


def _output_transform(y) -> OutputTransform:
    y = np.asarray(y, dtype=float)
    sd = float(np.std(y)) if len(y) > 1 else 0.0
    return OutputTransform(float(np.mean(y)), max(sd, SD_FLOOR))


def _budget_left(state: TrustRegionState, cfg: TRConfig) -> bool:
    if state.eval_count >= cfg.N_max:
        return False
    return cfg.max_cost is None or state.cost_spent < cfg.max_cost


def noise_unresolved(gp: GPModel) -> bool:
    """True when the fitted constant noise sits on its lower bound.

    The data then cannot tell the noise from zero, and replicating a
    deterministic response buys nothing, so every replicate count drops to 1.
    """
    floor = HyperBounds().noise_var[0]
    return gp.noise.is_constant and gp.noise.kind == "constant_mle" and gp.noise.value <= floor * (1 + FLOOR_RTOL)


def augment_poisedness(state: TrustRegionState, config: TRConfig, rng, oracle) -> tuple:
    """Add uniform trust-region points until it holds d + 1 unique designs.

    Returns ``(points_added, cost_charged, exhausted)``.
    """
    cfg = config.resolved(state.domain.dim)
    d = state.domain.dim
    box = state.tr_box()
    added, charged = 0, 0.0
    while int(np.sum(box.contains(state.designs.locations))) < d + 1:
        if not _budget_left(state, cfg):
            return added, charged, True
        x = uniform_candidates(box, 1, rng)[0]
        if cfg.acquisition.fixed_reps is not None:
            reps = cfg.acquisition.fixed_reps
        else:
            model = state.last_model
            reps = 1 if noise_unresolved(model.gp) else acq.p_adaptive(model.gp, model.inputs.to_model(x), cfg.T_a, cfg.p_max)
        reps = int(min(reps, cfg.N_max - state.eval_count))
        charged += _evaluate(state, oracle, x, reps)
        added += 1
    return added, charged, False


def neighbors(designs: DesignSet, center, n_b: int, box: Optional[BoxRegion] = None) -> np.ndarray:
    """The ``n_b`` designs nearest to ``center`` (Euclidean), designs inside ``box`` first.

    Ranking trust-region members first keeps designs in the corners of the
    box in the local model; otherwise the acquisition can keep proposing a
    point the model never sees.
    """
    dist = np.sum((designs.locations - center) ** 2, axis=1)
    outside = np.zeros(designs.n) if box is None else (~box.contains(designs.locations)).astype(float)
    order = np.lexsort((dist, outside))
    k = min(n_b, designs.n)
    return np.sort(order[:k])


def build_local_model(state: TrustRegionState, config: TRConfig, rng) -> LocalModel:
    """Fit the GP on the nearest designs, in trust-region model coordinates."""
    cfg = config.resolved(state.domain.dim)
    if state.designs.n < 2:
        raise ValueError("need at least two designs for a local model")
    box = state.tr_box()
    index = neighbors(state.designs, state.center, cfg.n_b, box)
    inputs = InputTransform(box.lower, box.upper)
    outputs = _output_transform(state.designs.agg_means[index])
    refit = state.hyper is None or state.center_moved or state.iteration - state.last_refit >= cfg.refit_period
    model, hyper = fit_local(state.designs, index, inputs, outputs, cfg, rng, state.hyper, refit)
    if refit:
        state.last_refit = state.iteration
        state.center_moved = False
    state.hyper = hyper
    return model


def _snap(model: LocalModel, archive: DesignSet, u):
    """Domain point for model point ``u``, reusing an existing design when it coincides."""
    i = model.gp.designs.find(u)
    if i >= 0:
        return archive.locations[model.archive_index[i]].copy()
    return model.inputs.to_domain(u)


def select_candidate(model: LocalModel, state: TrustRegionState, config: TRConfig, rng):
    """Acquisition maximizer over the trust region; returns (model point, reps)."""
    cfg = config.resolved(state.domain.dim)
    ac = cfg.acquisition
    gp = model.gp
    region = model.region
    T = acq.ImprovementThreshold.best_predictive_mean(gp).value
    x_c = model.inputs.to_model(state.center)
    if ac.kind == "qerci_v2":
        _, x_star = acq.estimated_optimum(gp)
        prop = acq.optimize_qerci_v2(
            gp, region, cfg.cost, x_c, x_star, cfg.p_max, rng, T, ac.draws, ac.seed,
            ac.search_draws, cfg.pso_particles, cfg.pso_iterations,
        )
        u, reps = prop.chosen()
    else:
        if ac.kind == "ei":
            def objective(U):
                return acq.ei(gp, U, T)
        else:
            _, x_star = acq.estimated_optimum(gp)

            def objective(U):
                return acq.qerci_v1_batch(gp, U, x_c, x_star, cfg.T_a, cfg.p_max, T, ac.draws, ac.seed)[0]

        cand = uniform_candidates(region, cfg.n_candidates, rng)
        vals = objective(cand)
        start = cand[int(np.argmax(vals))]
        u, _ = local_refine(objective, start, region)
        reps = acq.p_adaptive(gp, u, cfg.T_a, cfg.p_max)
    if noise_unresolved(gp):
        reps = 1
    if ac.fixed_reps is not None:
        reps = ac.fixed_reps
    return region.clip(u), int(max(1, min(reps, cfg.p_max)))


def safeguard_replicates(model: LocalModel, state: TrustRegionState, config: TRConfig, candidate, reps: int) -> int:
    """Raise replicates until the candidate's fantasy variance is at most var_ratio times the center's."""
    cfg = config.resolved(state.domain.dim)
    gp = model.gp
    if cfg.acquisition.fixed_reps is not None or noise_unresolved(gp):
        return int(reps)
    _, s2_c, _ = gp.predict(model.inputs.to_model(state.center))
    limit = cfg.var_ratio * s2_c
    _, s2, _ = gp.predict(candidate)
    r2 = float(gp.noise.variance(np.asarray(candidate)[None])[0])

    def fantasy(p):
        return s2 * r2 / (p * s2 + r2) if s2 > 0 and r2 > 0 else 0.0

    if fantasy(reps) <= limit or reps >= cfg.p_max:
        return int(reps)
    if fantasy(cfg.p_max) > limit:
        return int(cfg.p_max)
    lo, hi = int(reps), int(cfg.p_max)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if fantasy(mid) <= limit:
            hi = mid
        else:
            lo = mid
    return hi


def acceptance_ratio(model_after: GPModel, x_c, x_new):
    """Model-based decrease over leave-one-out predicted decrease.

    Returns ``(rho, used_corner_case, degenerate)``.  A center that is not
    a design of the model has no observation to leave out, so its LOO mean
    is the plain predictive mean.
    """
    means = model_after.design_means()
    loo_mean, _ = model_after.loo_all()

    def both(x):
        i = model_after.designs.find(x)
        if i >= 0:
            return means[i], loo_mean[i]
        m = float(model_after.predict_mean(np.asarray(x)[None])[0])
        return m, m

    m_c, l_c = both(x_c)
    m_n, l_n = both(x_new)
    decrease = m_c - m_n
    loo_decrease = l_c - l_n
    if abs(loo_decrease) < LOO_FLOOR:
        return 0.0, loo_decrease <= 0, True
    if loo_decrease > 0:
        return decrease / loo_decrease, False, False
    return (decrease - loo_decrease) / abs(loo_decrease), True, False


def _updated_model(model: LocalModel, state: TrustRegionState, new_index: int) -> LocalModel:
    """Same transforms and hyperparameters, conditioned on the neighbors plus the new design."""
    index = model.archive_index
    if new_index not in set(index.tolist()):
        index = np.sort(np.append(index, new_index))
    designs = _model_designs(state.designs, index, model.inputs, model.outputs)
    gp = model.gp
    noise = gp.noise
    if noise.kind == "empirical_pooled":
        from .gp import pooled_noise

        pooled = pooled_noise(designs)
        if pooled is not None:
            noise = NoiseModel("empirical_pooled", pooled)
    return LocalModel(GPModel(designs, gp.kernel, noise), model.inputs, model.outputs, index)


def iterate(state: TrustRegionState, config: TRConfig, rng, oracle):
    """One pass of the loop body; returns ``(state, report)`` or ``(state, None)`` if the budget ran out."""
    cfg = config.resolved(state.domain.dim)
    added, charged, exhausted = augment_poisedness(state, cfg, rng, oracle)
    if exhausted:
        return state, None
    model = build_local_model(state, cfg, rng)
    state.last_model = model
    u, reps0 = select_candidate(model, state, cfg, rng)
    reps = safeguard_replicates(model, state, cfg, u, reps0)
    x_new = _snap(model, state.designs, u)
    charged += _evaluate(state, oracle, x_new, reps)
    new_index = state.designs.find(x_new)
    after = _updated_model(model, state, new_index)
    gp = after.gp
    u_c = after.inputs.to_model(state.center)
    u_new = after.inputs.to_model(state.designs.locations[new_index])

    m_c = float(gp.predict_mean(u_c[None])[0])
    m_new = float(gp.predict_mean(u_new[None])[0])
    i_c = gp.designs.find(u_c)
    i_new = gp.designs.find(u_new)
    dm = gp.design_means()
    if i_c >= 0:
        m_c = float(dm[i_c])
    if i_new >= 0:
        m_new = float(dm[i_new])
    # the trust region is [-1, 1]^d in model units, so the radius there is 1
    delta = 1.0 if cfg.decrease_units == "model" else state.radius
    sufficient = (m_c - m_new) >= cfg.beta * min(delta, delta**2)
    mean_var, var_mean = variance_decomposition(gp, -np.ones(gp.dim), np.ones(gp.dim))
    gate = bool(var_mean >= cfg.imse_ratio * mean_var)

    rho, corner, accepted = None, False, False
    if sufficient and i_new != i_c:
        rho, corner, _ = acceptance_ratio(gp, u_c, u_new)
        _, s2_new, _ = gp.predict(u_new)
        _, s2_c, _ = gp.predict(u_c)
        accepted = rho >= cfg.eta and s2_new <= cfg.var_ratio * s2_c
    if accepted:
        state.center = state.designs.locations[new_index].copy()
        state.radius *= cfg.gamma_inc
        state.center_moved = True
        action = "increase"
    elif gate:
        state.radius *= cfg.gamma_dec
        action = "decrease"
    else:
        action = "hold"
    state.last_model = after
    state.iteration += 1
    est = float(after.predict_mean_domain(state.center)[0])
    report = IterationReport(
        iteration=state.iteration, candidate=state.designs.locations[new_index].copy(),
        reps_requested=reps0, reps=reps, accepted=accepted, rho=rho, sufficient_decrease=sufficient,
        radius_action=action, decrease_gate_fired=gate, used_corner_case=corner, augmented=added,
        center=state.center.copy(), radius=state.radius, eval_count=state.eval_count,
        cost_spent=state.cost_spent, cost_charged=charged, estimated_center_value=est,
    )
    return state, report


def _stop_reason(state: TrustRegionState, cfg: TRConfig):
    if state.eval_count > cfg.N_max:
        return "evaluations"
    if state.radius <= cfg.delta_min:
        return "radius"
    if cfg.max_cost is not None and state.cost_spent >= cfg.max_cost:
        return "cost"
    if cfg.max_iterations is not None and state.iteration >= cfg.max_iterations:
        return "iterations"
    return None


def run(oracle, config: TRConfig, rng=None, x0=None, callback=None) -> OptimizationResult:
    """Optimize the noisy black box ``oracle`` from a fresh initial design.

    ``oracle(x, p)`` must return an object with ``samples`` and
    ``cost_charged``; it also exposes ``bounds``.  ``callback(report)`` is
    invoked after every completed iteration; a true return value stops the
    run with reason ``"callback"``.
    """
    rng = np.random.default_rng(rng)
    cfg = config.resolved(oracle.bounds.dim)
    state = initialize(oracle, cfg, rng, x0)
    x_start = state.center.copy()
    n0, c0 = state.eval_count, state.cost_spent
    reports = []
    reason = _stop_reason(state, cfg)
    if cfg.N_max <= cfg.N0:
        reason = "evaluations"
    while reason is None:
        state, report = iterate(state, cfg, rng, oracle)
        if report is None:
            reason = "budget"
            break
        reports.append(report)
        if callback is not None and callback(report):
            reason = "callback"
            break
        reason = _stop_reason(state, cfg)
    est = float(state.last_model.predict_mean_domain(state.center)[0])
    return OptimizationResult(state.center.copy(), est, x_start, n0, c0, cfg.delta0, reports, state, reason)
