"""Two-class Gaussian data: the exact logistic form and three ways to estimate it.

Run with ``python3 demos/class_mixtures.py``.
"""

import numpy as np

from leastfalse import Dataset, ProductGaussian, TwoClassMixture, fit_mle
from leastfalse.nonparam import density_ratio_from_data
from leastfalse.oracle import gaussian_groupwise_fit, gaussian_mixture_logit, mixture_truth

mix = TwoClassMixture(0.5, ProductGaussian((0.0,), (1.0,)), 0.5, ProductGaussian((1.5,), (1.0,)))
print("exact logistic coefficients", gaussian_mixture_logit(mix))

rng = np.random.default_rng(5)
n = 5000
x = np.concatenate([mix.f0.sample(rng, n)[:, 0], mix.f1.sample(rng, n)[:, 0]])
data = Dataset.from_arrays(x, np.repeat([0.0, 1.0], n))
print("groupwise (moments)        ", np.round(gaussian_groupwise_fit(data), 4))
print("logistic MLE               ", np.round(fit_mle("logistic", data).beta_hat, 4))

grid = np.linspace(-1.5, 3.0, 7)
print("\n    x   exact   kernel ratio")
for xi, exact, est in zip(grid, mixture_truth(mix)(grid[:, None]), density_ratio_from_data(data, grid)):
    print(f"{xi:5.2f}  {exact:.4f}  {est:.4f}")
