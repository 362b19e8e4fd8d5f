"""Plug-in class probability from two kernel density estimates.

``q_hat(x) = pi1 f1_hat(x) / (pi0 f0_hat(x) + pi1 f1_hat(x))``
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np

from .core import Dataset, DimensionError

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


class DensityKernel(enum.Enum):
    GAUSSIAN = "gaussian"
    EPANECHNIKOV = "epanechnikov"

    @classmethod
    def parse(cls, value) -> "DensityKernel":
        return value if isinstance(value, DensityKernel) else cls(str(value).lower())

    def density(self, u: np.ndarray) -> np.ndarray:
        if self is DensityKernel.GAUSSIAN:
            return _INV_SQRT_2PI * np.exp(-0.5 * u * u)
        return 0.75 * np.clip(1.0 - u * u, 0.0, None)


class PriorFallbackWarning(RuntimeWarning):
    """Both class densities vanished at a query point; the prior was returned."""


def normal_reference_bandwidth(points) -> np.ndarray:
    """``1.06 * sd * m^(-1/5)`` per coordinate."""
    pts = _as_points(points)
    m = pts.shape[0]
    if m < 2:
        raise ValueError("at least 2 points are needed for a bandwidth")
    sd = pts.std(axis=0, ddof=1)
    if np.any(sd <= 0):
        raise ValueError("zero spread in a coordinate; supply the bandwidth explicitly")
    return 1.06 * sd * m ** (-0.2)


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2:
        raise DimensionError("points must be 1-d or 2-d")
    return pts


@dataclass(frozen=True, eq=False)
class DensityEstimate:
    points: np.ndarray
    kernel: DensityKernel = DensityKernel.GAUSSIAN
    bandwidth: np.ndarray | None = None

    def __post_init__(self):
        pts = _as_points(self.points)
        if pts.shape[0] < 2:
            raise ValueError("a density estimate needs at least 2 points")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "kernel", DensityKernel.parse(self.kernel))
        h = normal_reference_bandwidth(pts) if self.bandwidth is None else np.atleast_1d(np.asarray(self.bandwidth, dtype=float))
        if h.shape == (1,) and pts.shape[1] > 1:
            h = np.repeat(h, pts.shape[1])
        if h.shape != (pts.shape[1],) or np.any(h <= 0) or not np.all(np.isfinite(h)):
            raise ValueError("bandwidths must be positive, one per coordinate")
        object.__setattr__(self, "bandwidth", h)

    @property
    def d(self) -> int:
        return self.points.shape[1]


def kde_evaluate(est: DensityEstimate, x, chunk: int = 512) -> float | np.ndarray:
    """``(1/m) sum_j prod_k K((x_k - X_jk) / h_k) / h_k`` at one point or a batch of points."""
    x = np.asarray(x, dtype=float)
    single = True
    if x.ndim == 0:
        xs = x.reshape(1, 1)
    elif x.ndim == 1 and x.shape[0] == est.d:
        xs = x[None, :]
    elif x.ndim == 1 and est.d == 1:
        xs, single = x[:, None], False
    else:
        xs, single = np.atleast_2d(x), False
    if xs.shape[1] != est.d:
        raise DimensionError(f"query points have {xs.shape[1]} coordinates, expected {est.d}")
    h = est.bandwidth
    norm = 1.0 / (est.points.shape[0] * np.prod(h))
    out = np.empty(xs.shape[0])
    for s in range(0, xs.shape[0], chunk):
        u = (xs[s:s + chunk, None, :] - est.points[None, :, :]) / h
        out[s:s + chunk] = np.sum(np.prod(est.kernel.density(u), axis=2), axis=1) * norm
    return float(out[0]) if single else out


def estimate_priors(data: Dataset) -> tuple[float, float]:
    """Class proportions ``(pi0_hat, pi1_hat)``."""
    n1 = int(np.sum(data.z == 1))
    if n1 == 0 or n1 == data.n:
        raise ValueError("single-class data: both outcomes are required")
    p1 = n1 / data.n
    return 1.0 - p1, p1


def density_ratio_with_flags(
    class0,
    class1,
    priors: tuple[float, float],
    x,
    kernel: DensityKernel | str = DensityKernel.GAUSSIAN,
    bandwidths: tuple | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """``q_hat`` at a batch of points plus a mask of points where the prior fallback was used."""
    pi0, pi1 = (float(v) for v in priors)
    if not (pi0 > 0 and pi1 > 0) or abs(pi0 + pi1 - 1.0) > 1e-12:
        raise ValueError("priors must be positive and sum to 1")
    c0, c1 = _as_points(class0), _as_points(class1)
    if c0.shape[0] == 0 or c1.shape[0] == 0:
        raise ValueError("empty class")
    h0, h1 = (None, None) if bandwidths is None else bandwidths
    a = pi0 * np.atleast_1d(kde_evaluate(DensityEstimate(c0, kernel, h0), x))
    b = pi1 * np.atleast_1d(kde_evaluate(DensityEstimate(c1, kernel, h1), x))
    tot = a + b
    zero = tot <= 0
    return np.where(zero, pi1, b / np.where(zero, 1.0, tot)), zero


def density_ratio_probability(
    class0,
    class1,
    priors: tuple[float, float],
    x,
    kernel: DensityKernel | str = DensityKernel.GAUSSIAN,
    bandwidths: tuple | None = None,
) -> float | np.ndarray:
    """Plug-in ``q_hat(x)``; ``bandwidths`` is ``(h0, h1)`` or ``None`` for the normal-reference rule.

    Where both estimates are zero (compact kernels far from the data) the
    prior ``pi1`` is returned and a :class:`PriorFallbackWarning` is issued.
    """
    q, zero = density_ratio_with_flags(class0, class1, priors, x, kernel, bandwidths)
    if np.any(zero):
        warnings.warn("both class densities are zero; returning the prior", PriorFallbackWarning, stacklevel=2)
    single = np.ndim(x) == 0 or (np.ndim(x) == 1 and _as_points(class0).shape[1] == np.shape(x)[0])
    return float(q[0]) if single else q


def density_ratio_from_data(
    data: Dataset, x, kernel: DensityKernel | str = DensityKernel.GAUSSIAN, bandwidths: tuple | None = None
):
    """Split a dataset by outcome, estimate priors by class proportions and evaluate ``q_hat``."""
    priors = estimate_priors(data)
    ones = data.z == 1
    return density_ratio_probability(data.covariates[~ones], data.covariates[ones], priors, x, kernel, bandwidths)


def split_classes(data: Dataset) -> tuple[np.ndarray, np.ndarray]:
    ones = data.z == 1
    return data.covariates[~ones], data.covariates[ones]
