from dataclasses import replace
from types import SimpleNamespace

import numpy as np
import pytest

from ogpit import trust_region as tr
from ogpit.acquisition import CostModel
from ogpit.errors import ConfigError
from ogpit.gp import DesignSet
from ogpit.problems import StochasticOracle, get_problem
from ogpit.trust_region import (
    AcquisitionChoice,
    InputTransform,
    OutputTransform,
    TRConfig,
    acceptance_ratio,
    augment_poisedness,
    build_local_model,
    initialize,
    iterate,
    neighbors,
    run,
    safeguard_replicates,
)


def oracle(pid, sd=0.0, seed=0, cost=None):
    return StochasticOracle(get_problem(pid, sd), cost or CostModel(), np.random.default_rng(seed + 1000))


# -- configuration -------------------------------------------------------------


def test_defaults_resolve_per_dimension():
    cfg = TRConfig().resolved(2)
    assert cfg.gamma_inc == pytest.approx(1.25)
    assert cfg.n_b == 100 and cfg.N0 == 4 and cfg.N_max == 30_000
    assert cfg.delta_min == pytest.approx(2e-7)
    assert cfg.n_candidates == 200
    assert TRConfig().resolved(6).N0 == 10
    assert TRConfig().resolved(1).N0 == 2


@pytest.mark.parametrize(
    "kw",
    [
        {"gamma_dec": 1.2},
        {"gamma_inc": 0.9},
        {"eta": 0.0},
        {"beta": 1.0},
        {"T_a": 1.0},
        {"var_ratio": 1.0},
        {"imse_ratio": -1.0},
        {"delta_min": 0.5},
        {"p_max": 0},
        {"acquisition": AcquisitionChoice(fixed_reps=501)},
    ],
)
def test_invalid_config(kw):
    with pytest.raises(ConfigError):
        TRConfig(**kw).resolved(2)


def test_unknown_acquisition():
    with pytest.raises(ConfigError):
        AcquisitionChoice(kind="ucb")


def test_transforms_round_trip():
    t = InputTransform(np.array([-5.0, 0.0]), np.array([10.0, 15.0]))
    X = np.random.default_rng(0).uniform(-5, 15, (20, 2))
    np.testing.assert_allclose(t.to_domain(t.to_model(X)), X, atol=1e-12)
    np.testing.assert_allclose(t.to_model(np.array([[-5.0, 0.0], [10.0, 15.0]])), [[-1, -1], [1, 1]])
    o = OutputTransform(3.0, 2.0)
    assert o.to_domain(o.to_model(7.5)) == pytest.approx(7.5, abs=1e-12)


# -- initialization --------------------------------------------------------------


def test_initialize_with_x0_and_budget_check():
    x0 = np.array([1.25, -3.5])
    s = initialize(oracle("sphere-2"), TRConfig(), np.random.default_rng(0), x0)
    assert np.array_equal(s.center, x0)
    assert s.radius == TRConfig().delta0
    assert s.eval_count == 4 and np.all(s.designs.rep_counts == 1)
    with pytest.raises(ConfigError):
        initialize(oracle("sphere-2"), TRConfig(N_max=3), np.random.default_rng(0))
    with pytest.raises(ConfigError):
        initialize(oracle("sphere-2"), TRConfig(), np.random.default_rng(0), np.array([9.0, 0.0]))


def test_initial_center_is_best_design():
    prob = get_problem("sphere-2")
    hits = 0
    for seed in range(10):
        s = initialize(oracle("sphere-2", seed=seed), TRConfig(N0=10), np.random.default_rng(seed))
        best = s.designs.locations[np.argmin(prob(s.designs.locations))]
        hits += np.array_equal(best, s.center)
    assert hits >= 9


def test_no_augmentation_when_initial_design_is_poised():
    cfg = TRConfig(N0=3, delta0=2.0, max_iterations=1)
    res = run(oracle("sphere-2"), cfg, 0)
    assert res.reports[0].augmented == 0


# -- augmentation and local model --------------------------------------------------


def test_augmentation_fills_empty_region():
    cfg = TRConfig(delta0=1e-3)
    s = initialize(oracle("sphere-2", 0.1), cfg, np.random.default_rng(1), np.array([2.0, 2.0]))
    box = s.tr_box()
    before = s.designs.n
    added, charged, exhausted = augment_poisedness(s, cfg, np.random.default_rng(2), oracle("sphere-2", 0.1))
    assert added == 3 and not exhausted and charged > 0
    new = s.designs.locations[before:]
    assert len(new) == 3 and np.all(box.contains(new))
    again, _, _ = augment_poisedness(s, cfg, np.random.default_rng(3), oracle("sphere-2", 0.1))
    assert again == 0


def test_augmentation_stops_on_budget():
    cfg = TRConfig(delta0=1e-3, N_max=5)
    s = initialize(oracle("sphere-2"), cfg, np.random.default_rng(1), np.array([2.0, 2.0]))
    added, _, exhausted = augment_poisedness(s, cfg, np.random.default_rng(2), oracle("sphere-2"))
    assert exhausted and added == 1 and s.eval_count == 5


def test_neighbors_clamp_and_order():
    ds = DesignSet.from_samples(1, [(np.array([v]), [0.0]) for v in (0.0, 0.1, 0.5, 2.0)])
    assert list(neighbors(ds, np.array([0.0]), 10)) == [0, 1, 2, 3]
    assert list(neighbors(ds, np.array([0.45]), 2)) == [1, 2]


def test_flat_outputs_give_zero_model():
    prob = get_problem("flat-2")
    orc = StochasticOracle(prob, CostModel(), np.random.default_rng(0))
    cfg = TRConfig(delta0=1.0, n_b=500)
    s = initialize(orc, cfg, np.random.default_rng(0))
    m = build_local_model(s, cfg, np.random.default_rng(1))
    assert np.all(m.gp.designs.agg_means == 0.0)
    assert np.all(m.gp.predict_mean(np.random.default_rng(2).uniform(-1, 1, (10, 2))) == 0.0)
    assert len(m.archive_index) == s.designs.n


def test_local_model_is_unit_equivariant():
    """Predictions in domain units do not depend on the output scale of the data."""
    cfg = TRConfig(delta0=0.5)
    s1 = initialize(oracle("sphere-2", 0.1, seed=3), cfg, np.random.default_rng(3))
    s2 = initialize(oracle("sphere-2", 0.1, seed=3), cfg, np.random.default_rng(3))
    s2.designs.agg_means = 1000.0 * s2.designs.agg_means + 7.0
    s2.designs.sq_dev_sums = 1e6 * s2.designs.sq_dev_sums
    s2.hyper = replace(s1.hyper, process_var=1e6 * s1.hyper.process_var, noise_var=1e6 * s1.hyper.noise_var)
    m1 = build_local_model(replace(s1, center_moved=False, last_refit=0), cfg, np.random.default_rng(4))
    m2 = build_local_model(replace(s2, center_moved=False, last_refit=0), cfg, np.random.default_rng(4))
    X = s1.tr_box().lower + np.random.default_rng(5).random((10, 2)) * s1.tr_box().width
    np.testing.assert_allclose(m2.predict_mean_domain(X), 1000.0 * m1.predict_mean_domain(X) + 7.0, rtol=1e-6)


# -- replicate safeguard -------------------------------------------------------------


def noisy_state(seed=0, iterations=4):
    cfg = TRConfig(max_iterations=iterations)
    res = run(oracle("sphere-2", 0.1, seed), cfg, seed)
    return res.state, cfg


def test_safeguard_at_center_is_slack():
    s, cfg = noisy_state()
    m = s.last_model
    u_c = m.inputs.to_model(s.center)
    assert safeguard_replicates(m, s, cfg, u_c, 1) == 1


def test_safeguard_matches_brute_force():
    s, cfg = noisy_state(seed=2, iterations=6)
    m = s.last_model
    gp = m.gp
    _, s2_c, _ = gp.predict(m.inputs.to_model(s.center))
    r2 = gp.noise.value
    limit = cfg.var_ratio * s2_c
    # a far corner of the model box carries the most latent variance
    u = np.array([1.0, -1.0])
    got = safeguard_replicates(m, s, cfg, u, 1)
    brute = next((p for p in range(1, cfg.p_max + 1) if gp.fantasy_variance(u, p, u) <= limit), cfg.p_max)
    assert got == brute
    assert got == 1 or gp.fantasy_variance(u, 1, u) > limit


def test_safeguard_respects_fixed_mode():
    s, cfg = noisy_state()
    fixed = replace(cfg, acquisition=AcquisitionChoice(fixed_reps=3))
    assert safeguard_replicates(s.last_model, s, fixed, np.array([1.0, -1.0]), 3) == 3


# -- acceptance ratio --------------------------------------------------------------


def fake_model(means, loo, points):
    designs = DesignSet.from_samples(1, [(np.array([p]), [0.0]) for p in points])
    return SimpleNamespace(
        designs=designs,
        design_means=lambda: np.asarray(means, float),
        loo_all=lambda: (np.asarray(loo, float), np.ones(len(loo))),
        predict_mean=lambda X: np.zeros(len(X)),
    )


def test_rho_self_consistent_and_arithmetic():
    m = fake_model([1.0, 0.5], [1.0, 0.5], [0.0, 1.0])
    assert acceptance_ratio(m, np.array([0.0]), np.array([1.0])) == (1.0, False, False)
    m = fake_model([1.0, 0.0], [1.0, 0.5], [0.0, 1.0])
    assert acceptance_ratio(m, np.array([0.0]), np.array([1.0]))[0] == pytest.approx(2.0)


def test_rho_corner_case_and_degenerate():
    m = fake_model([1.0, 0.8], [1.0, 1.3], [0.0, 1.0])
    rho, corner, degenerate = acceptance_ratio(m, np.array([0.0]), np.array([1.0]))
    assert corner and not degenerate
    assert rho == pytest.approx((0.2 - (-0.3)) / 0.3)
    m = fake_model([1.0, 0.8], [1.0, 1.0], [0.0, 1.0])
    assert acceptance_ratio(m, np.array([0.0]), np.array([1.0]))[0] == 0.0


def test_rho_corner_case_on_real_model():
    found = False
    for seed in range(10):
        res = run(oracle("sphere-2", 0.1, seed), TRConfig(max_iterations=15), seed)
        for r in res.reports:
            if r.used_corner_case:
                assert np.isfinite(r.rho)
                found = True
    assert found


# -- loop body ----------------------------------------------------------------------


def test_step_to_true_minimizer_is_accepted(monkeypatch):
    cfg = TRConfig(delta0=0.5)
    orc = oracle("sphere-2")
    s = initialize(orc, cfg, np.random.default_rng(0), np.array([1.0, 1.0]))
    s.iteration = 1

    def to_minimizer(model, state, config, rng):
        return model.inputs.to_model(np.full(2, 0.3)), 1

    monkeypatch.setattr(tr, "select_candidate", to_minimizer)
    r0 = s.radius
    s, rep = iterate(s, cfg, np.random.default_rng(1), orc)
    assert rep.accepted and rep.radius_action == "increase"
    np.testing.assert_allclose(s.center, [0.3, 0.3])
    assert s.radius == pytest.approx(r0 * cfg.resolved(2).gamma_inc)


def test_pure_noise_gate_holds_radius():
    fired = []
    for seed in range(2):
        res = run(oracle("flat-2", 0.1, seed), TRConfig(delta0=0.01, max_iterations=10), seed)
        fired += [r.decrease_gate_fired for r in res.reports]
    assert sum(not f for f in fired) >= 0.8 * len(fired)


def check_invariants(res, cfg, initial_radius):
    cfg = cfg.resolved(len(res.center))
    radius = initial_radius
    total = res.initial_cost
    prev_center = res.initial_center
    for r in res.reports:
        factor = r.radius / radius
        expected = {"increase": cfg.gamma_inc, "decrease": cfg.gamma_dec, "hold": 1.0}[r.radius_action]
        assert factor == pytest.approx(expected, rel=1e-12)
        if r.radius_action == "increase":
            assert r.accepted
        if not r.accepted:
            assert np.array_equal(r.center, prev_center)
            assert r.radius_action in ("decrease", "hold")
        total += r.cost_charged
        assert r.cost_spent == pytest.approx(total, rel=1e-12, abs=1e-12)
        assert r.eval_count <= cfg.N_max + cfg.p_max
        radius, prev_center = r.radius, r.center
    assert res.state.eval_count == int(res.state.designs.rep_counts.sum())


@pytest.mark.parametrize("pid,sd", [("sphere-2", 0.1), ("branin-2", 0.0), ("rosenbrock-2", 0.01)])
def test_loop_invariants(pid, sd):
    cfg = TRConfig(max_iterations=25, cost=CostModel(1.0, 0.01), N_max=3000)
    res = run(oracle(pid, sd, cost=cfg.cost), cfg, 4)
    check_invariants(res, cfg, cfg.delta0)


def test_run_with_budget_equal_to_initial_design():
    res = run(oracle("sphere-2"), TRConfig(N_max=4), 0)
    assert res.reports == [] and res.stop_reason == "evaluations"


def test_run_is_deterministic_and_callback_stops():
    cfg = TRConfig(max_iterations=8)
    a = run(oracle("sphere-2", 0.1), cfg, 5)
    b = run(oracle("sphere-2", 0.1), cfg, 5)
    assert [r.center.tolist() for r in a.reports] == [r.center.tolist() for r in b.reports]
    assert [r.reps for r in a.reports] == [r.reps for r in b.reports]
    c = run(oracle("sphere-2", 0.1), cfg, 5, callback=lambda rep: rep.iteration >= 3)
    assert c.stop_reason == "callback" and len(c.reports) == 3


def test_cost_budget_accounting():
    cost = CostModel(1.0, 0.05)
    cfg = TRConfig(cost=cost, max_cost=40.0)
    res = run(oracle("sphere-2", 0.01, cost=cost), cfg, 1)
    assert res.stop_reason == "cost"
    charged = res.initial_cost + sum(r.cost_charged for r in res.reports)
    assert charged == pytest.approx(res.state.cost_spent, rel=1e-12)


def test_fixed_mode_reports_constant_replicates():
    cfg = TRConfig(max_iterations=6, acquisition=AcquisitionChoice(fixed_reps=7))
    res = run(oracle("sphere-2", 0.1), cfg, 2)
    assert all(r.reps == 7 for r in res.reports)


def test_noise_free_runs_do_not_replicate():
    a = run(oracle("sphere-2"), TRConfig(max_iterations=20), 3)
    assert all(r.reps == 1 for r in a.reports)
    b = run(oracle("sphere-2"), TRConfig(max_iterations=20, acquisition=AcquisitionChoice(fixed_reps=1)), 3)
    assert [r.center.tolist() for r in a.reports] == [r.center.tolist() for r in b.reports]


@pytest.mark.parametrize("kind", ["qerci_v1", "qerci_v2"])
def test_other_acquisitions_run(kind):
    cfg = TRConfig(max_iterations=3, acquisition=AcquisitionChoice(kind=kind, search_draws=256), pso_iterations=10)
    res = run(oracle("sphere-2", 0.1), cfg, 0)
    assert len(res.reports) == 3
    assert all(1 <= r.reps <= cfg.p_max for r in res.reports)
