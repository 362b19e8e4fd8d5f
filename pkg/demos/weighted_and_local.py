"""Weighting shifts the target; kernel weights around a point recover a local slope.

Run with ``python3 demos/weighted_and_local.py``.
"""

import numpy as np

from leastfalse import Dataset, FiniteSupport, IndicatorWeight, StepFunction, least_false
from leastfalse.distributions import piecewise_logistic
from leastfalse.fit import Kernel, KernelSpec, local_probability_curve

H = FiniteSupport([[-1.0], [0.0], [1.0]], [1 / 3, 1 / 3, 1 / 3])
truth = StepFunction(0, (0.0,), (0.2, 0.9))
print("unweighted target ", np.round(least_false("logistic", H, truth).beta0, 4))
print("target for x >= 0 ", np.round(least_false("logistic", H, truth, weight=IndicatorWeight(0, 0.0)).beta0, 4) + 0.0)
print("logit(0.9)        ", round(np.log(9.0), 4))

# slope 1 left of zero, slope 3 right of it
rng = np.random.default_rng(3)
x = rng.uniform(-2, 2, 50_000)
q = piecewise_logistic(0, 0.0, (0.0, 1.0), (0.0, 3.0))
data = Dataset.from_arrays(x, (rng.random(x.size) < q(x[:, None])).astype(float))
curve = local_probability_curve("logistic", data, [[-1.5], [-1.0], [0.0], [1.0], [1.5]], KernelSpec(Kernel.GAUSSIAN, (0.3,)))
print("\n   x0   q_hat   q_true  local slope")
for est in curve:
    print(f"{est.x[1]:5.1f}  {est.q:.4f}  {q(est.x[1:][None])[0]:.4f}  {est.beta[1]:.3f}")
