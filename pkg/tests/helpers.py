"""Shared builders for seeded GP instances and trace fixtures."""

import numpy as np

from ogpit.gp import DesignSet, GPModel, KernelSpec, NoiseModel


def random_model(rng, d=2, n=6, noise=0.05, max_reps=5, box=1.0):
    X = rng.uniform(-box, box, (n, d))
    batches = [(x, rng.normal(np.sin(x.sum()), 0.3, rng.integers(1, max_reps + 1))) for x in X]
    designs = DesignSet.from_samples(d, batches)
    kernel = KernelSpec(rng.uniform(0.5, 2.0), tuple(rng.uniform(0.3, 1.5, d)))
    return GPModel(designs, kernel, NoiseModel.constant(noise))


def model_from(X, y, reps=1, process_var=1.0, lengthscale=0.3, noise=0.01):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    d = X.shape[1]
    reps = np.broadcast_to(reps, len(X))
    batches = [(x, np.full(int(a), float(v))) for x, v, a in zip(X, y, reps)]
    designs = DesignSet.from_samples(d, batches)
    return GPModel(designs, KernelSpec(process_var, (lengthscale,) * d), NoiseModel.constant(noise))


def trace(problem, method, values, evals, dim=1, noise=0.0, cost=None, seed=0):
    values = np.asarray(values, float)
    evals = np.asarray(evals)
    return {
        "problem": problem, "dim": dim, "noise_sd": noise, "method": method, "seed": seed,
        "n_evals": evals, "center_value_true": values,
        "cost": np.asarray(evals if cost is None else cost, float),
        "regret": values - values.min(), "best_regret": np.minimum.accumulate(values - values.min()),
    }


# hand-built fixture: f_L(P) = 0 (from b), f_L(Q) = f_start(Q)
FIXTURE = [
    trace("P", "a", [10, 4, 1, 1], [2, 4, 6, 8]),
    trace("P", "b", [10, 10, 0, 0], [2, 4, 6, 8]),
    trace("Q", "a", [3, 3, 3, 3], [2, 4, 6, 8]),
]
