import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import model_from, random_model
from ogpit import acquisition as acq
from ogpit.acquisition import BatchProposal, CostModel, ImprovementThreshold
from ogpit.gp import DesignSet, GPModel, KernelSpec, NoiseModel
from ogpit.optim_utils import BoxRegion


def noisy_1d(seed=3, noise=0.5, n=6):
    rng = np.random.default_rng(seed)
    X = np.linspace(-0.9, 0.9, n)[:, None]
    batches = [(x, rng.normal(x[0] ** 2, math.sqrt(noise), 2)) for x in X]
    return GPModel(DesignSet.from_samples(1, batches), KernelSpec(1.0, (0.4,)), NoiseModel.constant(noise))


# -- costs and thresholds ---------------------------------------------------------


def test_cost_model():
    c = CostModel(1.0, 0.001)
    assert c(3) == pytest.approx(1.003)
    assert c(0) == 0.0
    assert np.all(np.diff(c(np.arange(10))) >= 0)
    with pytest.raises(ValueError):
        CostModel(-1.0, 0.0)


def test_threshold_is_best_design_mean():
    m = random_model(np.random.default_rng(0))
    T = ImprovementThreshold.best_predictive_mean(m)
    assert T.value == np.min(m.design_means())
    assert T.source == "best_predictive_mean"


# -- EI ------------------------------------------------------------------------


def test_ei_closed_form_cases():
    assert acq.expected_improvement(0.0, 0.0, 1.0) == 1.0
    assert acq.expected_improvement(2.0, 0.0, 1.0) == 0.0
    assert acq.expected_improvement(0.0, 1.0, 0.0) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-14)


def test_ei_matches_monte_carlo():
    rng = np.random.default_rng(11)
    for _ in range(5):
        mu, s, T = rng.normal(), rng.uniform(0.1, 2), rng.normal()
        y = mu + s * rng.standard_normal(1_000_000)
        imp = np.maximum(T - y, 0.0)
        se = imp.std() / math.sqrt(len(y))
        assert abs(acq.expected_improvement(mu, s, T) - imp.mean()) <= 3 * se


def test_ei_uses_observation_scale():
    m = model_from([[0.0], [0.5]], [0.0, 1.0], noise=0.2)
    x = np.array([0.25])
    mean, _, var_obs = m.predict(x[None])
    assert acq.ei(m, x, 0.1) == pytest.approx(acq.expected_improvement(mean[0], math.sqrt(var_obs[0]), 0.1))


# -- qEI ------------------------------------------------------------------------


def test_qei_q1_matches_ei():
    rng = np.random.default_rng(5)
    for _ in range(20):
        mu, s, T = rng.normal(), rng.uniform(0.1, 2), rng.normal()
        val, se = acq.qei([mu], [[s * s]], T, return_se=True)
        assert abs(val - acq.expected_improvement(mu, s, T)) <= 3 * se + 1e-12


def test_qei_duplicate_coordinates_collapse():
    mu, s2, T = 0.2, 0.7, 0.5
    one = acq.qei([mu], [[s2]], T)
    two = acq.qei([mu, mu], [[s2, s2], [s2, s2]], T)
    assert two == one


def test_qei_q3_matches_independent_monte_carlo():
    rng = np.random.default_rng(8)
    A = rng.normal(size=(3, 3))
    cov = A @ A.T + 0.1 * np.eye(3)
    mean = rng.normal(size=3)
    T = 0.0
    val, se = acq.qei(mean, cov, T, return_se=True)
    Y = rng.multivariate_normal(mean, cov, size=1_000_000)
    imp = np.maximum(T - Y.min(axis=1), 0.0)
    se_mc = imp.std() / math.sqrt(len(imp))
    assert abs(val - imp.mean()) <= 3 * math.hypot(se, se_mc)


def test_qei_permutation_invariance_and_determinism():
    rng = np.random.default_rng(2)
    A = rng.normal(size=(3, 3))
    cov = A @ A.T
    mean = rng.normal(size=3)
    perm = [2, 0, 1]
    a = acq.qei(mean, cov, 0.3)
    b = acq.qei(mean[perm], cov[np.ix_(perm, perm)], 0.3)
    # the stream columns follow the coordinates, so agreement is statistical
    assert abs(a - b) <= 0.02 * max(a, 1e-3)
    assert acq.qei(mean, cov, 0.3) == a


def test_qei_monotone_in_threshold():
    mean, cov = np.array([0.0, 0.4]), np.array([[1.0, 0.3], [0.3, 0.5]])
    vals = [acq.qei(mean, cov, T) for T in np.linspace(-2, 2, 9)]
    assert np.all(np.diff(vals) >= 0)


def test_qei_rejects_indefinite_covariance():
    with pytest.raises(ValueError):
        acq.qei([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]], 0.0)


# -- qERCI ---------------------------------------------------------------------


def test_qerci_decorrelated_point_gives_zero():
    m = model_from([[0.0], [0.1]], [0.0, 0.2], lengthscale=0.05)
    val = acq.qerci(m, [[0.0], [0.1]], [(np.array([5.0]), 10)])
    assert abs(val) <= 1e-12


def test_qerci_single_point_closed_form():
    m = noisy_1d()
    x = np.array([0.3])
    p = 4
    mu, s2, _ = m.predict(x[None])
    r2 = m.noise.value
    T = ImprovementThreshold.best_predictive_mean(m).value
    s2_next = m.fantasy_variance(x, p, x)
    expect = acq.expected_improvement(mu[0], math.sqrt(s2[0] + r2), T) - acq.expected_improvement(
        mu[0], math.sqrt(s2_next + r2), T
    )
    val, se = acq.qerci(m, [x], [(x, p)], T, return_se=True)
    assert abs(val - expect) <= 3 * se + 1e-12


def test_qerci_more_replicates_help_more():
    m = noisy_1d()
    x = np.array([0.1])
    assert acq.qerci(m, [x], [(x, 100)]) >= acq.qerci(m, [x], [(x, 1)])


def test_qerci_nonnegative_on_random_instances():
    rng = np.random.default_rng(19)
    for _ in range(10):
        m = random_model(rng, d=2, n=5, noise=0.1)
        refs = rng.uniform(-1, 1, (3, 2))
        pts = [(rng.uniform(-1, 1, 2), int(rng.integers(1, 20)))]
        val, se = acq.qerci(m, refs, pts, return_se=True)
        assert val >= -3 * se - 1e-12


def test_qerci_needs_a_replicate():
    m = noisy_1d()
    with pytest.raises(ValueError):
        acq.qerci(m, [[0.0]], [(np.array([0.0]), 0)])


# -- adaptive replication ---------------------------------------------------------


def brute_force(s2, r2, T_a, p_max):
    for p in range(1, p_max + 1):
        after = s2 - s2 * s2 / (s2 + r2 / p)
        if (s2 - after) / s2 >= T_a:
            return p
    return p_max


def test_adaptive_replicates_examples():
    assert acq.adaptive_replicates(1.0, 0.0, 0.2, 500)[0] == 1
    assert acq.adaptive_replicates(1.0, 1.0, 0.2, 500)[0] == 1
    assert acq.adaptive_replicates(0.01, 1.0, 0.5, 500)[0] == 100
    assert acq.adaptive_replicates(0.0, 1.0, 0.5, 500)[0] == 1
    assert acq.adaptive_replicates(1e-6, 1.0, 0.9, 50)[0] == 50


@settings(max_examples=100, deadline=None)
@given(
    st.floats(1e-4, 10.0), st.floats(1e-4, 10.0), st.floats(0.01, 0.99), st.integers(1, 500)
)
def test_adaptive_replicates_match_brute_force(s2, r2, T_a, p_max):
    assert acq.adaptive_replicates(s2, r2, T_a, p_max)[0] == brute_force(s2, r2, T_a, p_max)


def test_adaptive_replicates_monotone_in_target():
    ps = [acq.adaptive_replicates(0.05, 1.0, t, 500)[0] for t in np.linspace(0.05, 0.95, 19)]
    assert np.all(np.diff(ps) >= 0)


def test_p_adaptive_uses_fantasy_variance():
    m = noisy_1d()
    x = np.array([0.2])
    p = acq.p_adaptive(m, x, 0.5, 500)
    s2 = m.predict(x[None])[1][0]
    assert (s2 - m.fantasy_variance(x, p, x)) / s2 >= 0.5
    if p > 1:
        assert (s2 - m.fantasy_variance(x, p - 1, x)) / s2 < 0.5


def test_p_adaptive_noise_free_is_one():
    m = model_from([[0.0], [0.5]], [0.0, 1.0], noise=0.0)
    assert acq.p_adaptive(m, np.array([0.25]), 0.9, 500) == 1


# -- version 1 ------------------------------------------------------------------


def test_v1_collapses_duplicate_references():
    m = noisy_1d()
    x = np.array([0.0])
    val = acq.qerci_v1(m, x, x, x, 0.2, 500)
    assert val >= 0


def test_v1_high_noise_asks_for_replicates():
    m = noisy_1d(noise=2.0, n=10)
    vals, p = acq.qerci_v1_batch(m, np.linspace(-1, 1, 41)[:, None], [0.0], [0.0], 0.2, 500)
    assert p[int(np.argmax(vals))] > 1


def test_v1_adaptive_maximizer_differs_from_single_replicate():
    m = noisy_1d(seed=1, noise=2.0, n=4)
    X = np.linspace(-1, 1, 201)[:, None]
    _, x_star = acq.estimated_optimum(m)
    x_c = m.designs.locations[0]
    v_adapt, p = acq.qerci_v1_batch(m, X, x_c, x_star, 0.2, 500)
    refs = np.concatenate([np.broadcast_to(np.stack([x_c, x_star]), (len(X), 2, 1)), X[:, None, :]], axis=1)
    v_one = acq.qerci_batch(m, refs, X[:, None, :], np.ones((len(X), 1)))
    assert np.argmax(v_adapt) != np.argmax(v_one)


# -- version 2 ------------------------------------------------------------------


def test_v2_denominator_and_scaling():
    m = noisy_1d()
    x, x2 = np.array([0.2]), np.array([-0.4])
    xc, xs = np.array([0.0]), np.array([0.0])
    cost = CostModel(1.0, 0.01)
    raw = acq.qerci(m, [xc, xs, x, x2], [(x, 5), (x2, 0)])
    assert acq.qerci_v2(m, x, 5, x2, 0, cost, xc, xs) == pytest.approx(raw / (1.0 + 0.05), rel=1e-12)
    doubled = CostModel(2.0, 0.02)
    assert acq.qerci_v2(m, x, 5, x2, 3, doubled, xc, xs) == pytest.approx(
        0.5 * acq.qerci_v2(m, x, 5, x2, 3, cost, xc, xs), rel=1e-12
    )
    free = CostModel(0.0, 0.0)
    raw2 = acq.qerci(m, [xc, xs, x, x2], [(x, 5), (x2, 3)])
    assert acq.qerci_v2(m, x, 5, x2, 3, free, xc, xs) == pytest.approx(raw2, rel=1e-12)
    with pytest.raises(ValueError):
        acq.qerci_v2(m, x, 0, x2, 0, cost, xc, xs)


def test_v2_argmax_invariant_to_cost_scaling():
    m = noisy_1d()
    region = BoxRegion([-1.0], [1.0])
    xc, xs = np.array([0.0]), np.array([0.0])
    a = acq.optimize_qerci_v2(m, region, CostModel(1.0, 0.01), xc, xs, 10, rng=4, search_draws=512)
    b = acq.optimize_qerci_v2(m, region, CostModel(2.0, 0.02), xc, xs, 10, rng=4, search_draws=512)
    assert (a.first_reps, a.second_reps) == (b.first_reps, b.second_reps)
    np.testing.assert_allclose(a.first_point, b.first_point, atol=1e-4)
    assert b.criterion_value == pytest.approx(0.5 * a.criterion_value, rel=1e-4)


def test_v2_expensive_replicates_mean_fewer_replicates():
    m = noisy_1d(noise=1.0, n=6)
    region = BoxRegion([-1.0], [1.0])
    _, xs = acq.estimated_optimum(m)
    xc = m.designs.locations[2]
    cheap = acq.optimize_qerci_v2(m, region, CostModel(1.0, 0.001), xc, xs, 10, rng=1)
    dear = acq.optimize_qerci_v2(m, region, CostModel(1.0, 1.0), xc, xs, 10, rng=1)
    assert dear.first_reps + dear.second_reps < cheap.first_reps + cheap.second_reps
    for prop in (cheap, dear):
        assert 1 <= prop.first_reps + prop.second_reps <= 10


def test_round_counts():
    assert acq.round_counts(2.5, 0.4, 10) == (3, 0)
    assert acq.round_counts(0.2, 0.3, 10) == (0, 1)
    assert acq.round_counts(0.3, 0.2, 10) == (1, 0)
    assert acq.round_counts(7.6, 3.5, 10) == (8, 2)
    assert acq.round_counts(12.0, -1.0, 10) == (10, 0)


def test_batch_choice_prefers_larger_count_then_first():
    a, b = np.array([0.1]), np.array([0.2])
    assert BatchProposal(a, 2, b, 5, 0.0).chosen()[1] == 5
    p, r = BatchProposal(a, 3, b, 3, 0.0).chosen()
    assert p is a and r == 3
    assert BatchProposal(a, 1, None, 0, 0.0).chosen()[0] is a
