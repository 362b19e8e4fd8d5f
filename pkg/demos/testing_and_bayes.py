"""Bootstrap test for the link model, and a posterior mean that tracks the MLE.

Run with ``python3 demos/testing_and_bayes.py``.
"""

import numpy as np

from leastfalse import Dataset, PriorSpec, fit_bayes_posterior_mean, fit_mle, misspecification_test

rng = np.random.default_rng(8)
n = 4000
x = rng.uniform(-2, 2, n)
well = Dataset.from_arrays(x, (rng.random(n) < 1 / (1 + np.exp(-(0.5 - x)))).astype(float))
xs = rng.choice([-1.0, 0.0, 1.0], n)
step = Dataset.from_arrays(xs, (rng.random(n) < np.where(xs < 0, 0.2, 0.9)).astype(float))

for name, data in (("logistic truth", well), ("step truth", step)):
    fit = fit_mle("logistic", data)
    gof = misspecification_test("logistic", fit, data, 200, seed=1)
    post = fit_bayes_posterior_mean("logistic", data, PriorSpec.isotropic(2, 10.0), seed=2, fit=fit)
    print(f"{name:15s} T={gof.statistic:8.3f}  p={gof.p_value:.3f}  mle={np.round(fit.beta_hat, 4)}  posterior mean={np.round(post, 4)}")
