"""A logistic model fitted to step-function data: target, spread and interval coverage.

Run with ``python3 demos/misspecified_step.py``.
"""

import numpy as np

from leastfalse import FiniteSupport, StepFunction, least_false
from leastfalse.simulation import Scenario, run_experiment

H = FiniteSupport([[-1.0], [0.0], [1.0]], [1 / 3, 1 / 3, 1 / 3])
truth = StepFunction(0, (0.0,), (0.2, 0.9))

lf = least_false("logistic", H, truth)
print("least false beta0     ", np.round(lf.beta0, 5))
print("KL distance at beta0  ", f"{lf.delta_at_beta0:.5f}")
print("J^-1 (model-based)    ", np.round(np.diag(np.linalg.inv(lf.population_J)), 4))
print("J^-1 K J^-1 (sandwich)", np.round(np.diag(lf.population_sandwich), 4))

summary = run_experiment(Scenario(H, truth, n=4000, replications=400, seed=1))
mle = summary["mle"]
print("\nmean of beta_hat over 400 runs", np.round(mle.mean(), 4), "+-", np.round(mle.mc_standard_error(), 4))
print("n * empirical covariance diag ", np.round(np.diag(summary.scaled_covariance()), 4))
rates = mle.coverage_rates()[0.95]
print("95% coverage, sandwich        ", rates["sandwich"])
print("95% coverage, naive           ", rates["naive"])
