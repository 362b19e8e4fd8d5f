"""Covariate distributions, true probability functions and their quadrature rules.

Every distribution can sample raw covariates (no intercept column) and build
an integration rule: exact sums for finite support, tensor Gauss-Legendre
panels for uniform and Gaussian coordinates (split at discontinuities of the
integrand), Gauss-Jacobi for Beta coordinates, and scrambled Sobol points
when there are more than three covariates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import special, stats
from scipy.stats import qmc

from .core import Link, inverse_link

NODES_PER_PANEL = 64
MAX_TENSOR_DIM = 3
QMC_LOG2_POINTS = 13
QMC_REPLICAS = 8
GAUSSIAN_SPAN = 10.0

Breaks = Mapping[int, Sequence[float]]


@dataclass(frozen=True)
class Rule:
    """Nodes (raw covariates, shape ``(m, d)``) and weights summing to the total mass."""

    points: np.ndarray
    weights: np.ndarray

    def integrate(self, values: np.ndarray) -> np.ndarray:
        return np.tensordot(self.weights, values, axes=(0, 0))


@dataclass(frozen=True)
class Integrator:
    """A main rule plus companion rules used only to estimate its error."""

    main: Rule
    checks: tuple[Rule, ...] = ()
    kind: str = "exact"

    def error(self, fn: Callable[[np.ndarray], np.ndarray]) -> float:
        main = self.main.integrate(fn(self.main.points))
        floor = 10 * np.finfo(float).eps * float(np.max(np.abs(self.main.integrate(np.abs(fn(self.main.points))))))
        if not self.checks:
            return floor
        vals = np.array([r.integrate(fn(r.points)) for r in self.checks])
        if self.kind == "qmc":
            spread = np.std(vals, axis=0, ddof=1) / np.sqrt(len(vals))
            return float(max(np.max(spread), floor))
        return float(max(np.max(np.abs(vals - main)), floor))


def _product(rules: Sequence[tuple[np.ndarray, np.ndarray]]) -> Rule:
    nodes = np.meshgrid(*[r[0] for r in rules], indexing="ij")
    wts = np.meshgrid(*[r[1] for r in rules], indexing="ij")
    pts = np.column_stack([g.reshape(-1) for g in nodes])
    w = np.prod(np.column_stack([g.reshape(-1) for g in wts]), axis=1)
    return Rule(pts, w)


def _panels(lo: float, hi: float, breaks: Sequence[float], nodes: int) -> tuple[np.ndarray, np.ndarray]:
    edges = np.unique(np.concatenate(([lo], [b for b in breaks if lo < b < hi], [hi])))
    t, w = leggauss(nodes)
    xs, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        xs.append(0.5 * (b - a) * t + 0.5 * (a + b))
        ws.append(0.5 * (b - a) * w)
    return np.concatenate(xs), np.concatenate(ws)


class CovariateDistribution:
    d: int

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def integrator(self, breaks: Breaks | None = None) -> Integrator:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class FiniteSupport(CovariateDistribution):
    points: np.ndarray
    probabilities: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        p = np.asarray(self.probabilities, dtype=float)
        if pts.shape[0] != p.shape[0] or p.ndim != 1:
            raise ValueError("one probability per support point is required")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("probabilities must be nonnegative and sum to 1")
        if not np.all(np.isfinite(pts)):
            raise ValueError("support points must be finite")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "probabilities", p / p.sum())

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def sample(self, rng, n):
        idx = rng.choice(self.points.shape[0], size=n, p=self.probabilities)
        return self.points[idx]

    def integrator(self, breaks=None):
        return Integrator(Rule(self.points, self.probabilities), (), "exact")


class _Product(CovariateDistribution):
    """Independent coordinates; subclasses define the one-dimensional pieces."""

    def _rule_1d(self, k: int, breaks: Sequence[float], nodes: int) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def _ppf(self, k: int, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def logpdf(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def rule(self, breaks: Breaks | None = None, nodes: int = NODES_PER_PANEL) -> Rule:
        breaks = breaks or {}
        return _product([self._rule_1d(k, breaks.get(k, ()), nodes) for k in range(self.d)])

    def qmc_rule(self, replica: int, log2_points: int = QMC_LOG2_POINTS) -> Rule:
        u = qmc.Sobol(self.d, scramble=True, seed=np.random.default_rng([self.d, replica])).random_base2(log2_points)
        pts = np.column_stack([self._ppf(k, u[:, k]) for k in range(self.d)])
        return Rule(pts, np.full(u.shape[0], 1.0 / u.shape[0]))

    def integrator(self, breaks=None):
        if self.d <= MAX_TENSOR_DIM:
            main = self.rule(breaks, NODES_PER_PANEL)
            check = self.rule(breaks, 3 * NODES_PER_PANEL // 4)
            return Integrator(main, (check,), "tensor")
        subs = [self.qmc_rule(r) for r in range(QMC_REPLICAS)]
        main = Rule(np.vstack([s.points for s in subs]), np.concatenate([s.weights for s in subs]) / len(subs))
        return Integrator(main, tuple(subs), "qmc")


@dataclass(frozen=True)
class ProductUniform(_Product):
    bounds: tuple[tuple[float, float], ...]

    def __post_init__(self):
        b = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        if not b or any(not hi > lo for lo, hi in b):
            raise ValueError("uniform bounds must satisfy lower < upper")
        object.__setattr__(self, "bounds", b)

    @property
    def d(self):
        return len(self.bounds)

    def sample(self, rng, n):
        lo, hi = np.array(self.bounds).T
        return lo + (hi - lo) * rng.random((n, self.d))

    def _rule_1d(self, k, breaks, nodes):
        lo, hi = self.bounds[k]
        x, w = _panels(lo, hi, breaks, nodes)
        return x, w / (hi - lo)

    def _ppf(self, k, u):
        lo, hi = self.bounds[k]
        return lo + (hi - lo) * u

    def logpdf(self, x):
        x = np.atleast_2d(x)
        lo, hi = np.array(self.bounds).T
        inside = np.all((x >= lo) & (x <= hi), axis=1)
        return np.where(inside, -np.sum(np.log(hi - lo)), -np.inf)


@dataclass(frozen=True)
class ProductGaussian(_Product):
    mean: tuple[float, ...]
    sd: tuple[float, ...]

    def __post_init__(self):
        m = tuple(float(v) for v in np.atleast_1d(self.mean))
        s = tuple(float(v) for v in np.atleast_1d(self.sd))
        if len(m) != len(s) or not m:
            raise ValueError("mean and sd must have the same positive length")
        if any(not v > 0 for v in s):
            raise ValueError("Gaussian sds must be positive")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "sd", s)

    @property
    def d(self):
        return len(self.mean)

    def sample(self, rng, n):
        return np.asarray(self.mean) + np.asarray(self.sd) * rng.standard_normal((n, self.d))

    def _rule_1d(self, k, breaks, nodes):
        mu, s = self.mean[k], self.sd[k]
        x, w = _panels(mu - GAUSSIAN_SPAN * s, mu + GAUSSIAN_SPAN * s, breaks, nodes)
        return x, w * stats.norm.pdf(x, mu, s)

    def _ppf(self, k, u):
        return self.mean[k] + self.sd[k] * special.ndtri(u)

    def logpdf(self, x):
        x = np.atleast_2d(x)
        return np.sum(stats.norm.logpdf(x, np.asarray(self.mean), np.asarray(self.sd)), axis=1)


@dataclass(frozen=True)
class ProductBeta(_Product):
    """Independent Beta(a_k, b_k) coordinates on (0, 1).

    Integrated with Gauss-Jacobi nodes, which absorb the endpoint behaviour of
    the density; discontinuity breaks are not used for this family.
    """

    shapes: tuple[tuple[float, float], ...]

    def __post_init__(self):
        sh = tuple((float(a), float(b)) for a, b in self.shapes)
        if not sh or any(not (a > 0 and b > 0) for a, b in sh):
            raise ValueError("Beta shapes must be positive")
        object.__setattr__(self, "shapes", sh)

    @property
    def d(self):
        return len(self.shapes)

    def sample(self, rng, n):
        a, b = np.array(self.shapes).T
        return rng.beta(a, b, size=(n, self.d))

    def _rule_1d(self, k, breaks, nodes):
        a, b = self.shapes[k]
        t, w = special.roots_jacobi(nodes, b - 1.0, a - 1.0)
        return 0.5 * (1.0 + t), w / w.sum()

    def _ppf(self, k, u):
        a, b = self.shapes[k]
        return special.betaincinv(a, b, u)

    def logpdf(self, x):
        x = np.atleast_2d(x)
        a, b = np.array(self.shapes).T
        return np.sum(stats.beta.logpdf(x, a, b), axis=1)


@dataclass(frozen=True)
class TwoClassMixture(CovariateDistribution):
    """``h(x) = pi0 f0(x) + pi1 f1(x)`` with class densities from the product families."""

    pi0: float
    f0: _Product
    pi1: float
    f1: _Product

    def __post_init__(self):
        if not (self.pi0 > 0 and self.pi1 > 0) or abs(self.pi0 + self.pi1 - 1.0) > 1e-12:
            raise ValueError("class priors must be positive and sum to 1")
        if not isinstance(self.f0, _Product) or not isinstance(self.f1, _Product):
            raise TypeError("class densities must be product uniform, Gaussian or Beta")
        if self.f0.d != self.f1.d:
            raise ValueError("class densities must share the dimension")

    @property
    def d(self):
        return self.f0.d

    def sample(self, rng, n):
        labels = rng.random(n) < self.pi1
        x = np.empty((n, self.d))
        x[~labels] = self.f0.sample(rng, int(np.sum(~labels)))
        x[labels] = self.f1.sample(rng, int(np.sum(labels)))
        return x

    def sample_class(self, rng, label: int, n: int) -> np.ndarray:
        return (self.f1 if label else self.f0).sample(rng, n)

    def log_class_terms(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``log(pi0 f0(x))`` and ``log(pi1 f1(x))``."""
        return np.log(self.pi0) + self.f0.logpdf(x), np.log(self.pi1) + self.f1.logpdf(x)

    def logpdf(self, x):
        l0, l1 = self.log_class_terms(x)
        return np.logaddexp(l0, l1)

    def integrator(self, breaks=None):
        parts = [self.f0.integrator(breaks), self.f1.integrator(breaks)]
        pis = (self.pi0, self.pi1)

        def merge(r0: Rule, r1: Rule) -> Rule:
            return Rule(np.vstack([r0.points, r1.points]), np.concatenate([pis[0] * r0.weights, pis[1] * r1.weights]))

        main = merge(parts[0].main, parts[1].main)
        checks = tuple(merge(a, b) for a, b in zip(parts[0].checks, parts[1].checks))
        return Integrator(main, checks, parts[0].kind)


# -- true probability functions ----------------------------------------------


def identity_features(x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(x)
    return np.column_stack([np.ones(x.shape[0]), x])


def beta_log_features(x: np.ndarray) -> np.ndarray:
    """``(1, log x_1, log(1 - x_1), log x_2, log(1 - x_2), ...)``."""
    x = np.atleast_2d(x)
    cols = [np.ones(x.shape[0])]
    for k in range(x.shape[1]):
        cols += [np.log(x[:, k]), np.log1p(-x[:, k])]
    return np.column_stack(cols)


FEATURE_MAPS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "identity": identity_features,
    "beta_log": beta_log_features,
}


class TrueModel:
    def q(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def breakpoints(self) -> dict[int, list[float]]:
        return {}

    def __call__(self, x):
        return self.q(x)


@dataclass(frozen=True)
class LogisticInFeatures(TrueModel):
    """``q(x) = link^{-1}(beta . phi(x))``; logistic unless another link is given."""

    beta: tuple[float, ...]
    features: str = "identity"
    link: Link = Link.LOGISTIC

    def __post_init__(self):
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        if self.features not in FEATURE_MAPS:
            raise ValueError(f"unknown feature map {self.features!r}")
        object.__setattr__(self, "link", Link.parse(self.link))

    def q(self, x):
        return inverse_link(self.link, FEATURE_MAPS[self.features](x) @ np.asarray(self.beta))


@dataclass(frozen=True)
class StepFunction(TrueModel):
    """Piecewise-constant ``q`` along one coordinate: ``levels[k]`` on ``[thresholds[k-1], thresholds[k])``."""

    coordinate: int
    thresholds: tuple[float, ...]
    levels: tuple[float, ...]

    def __post_init__(self):
        th = tuple(float(t) for t in self.thresholds)
        lv = tuple(float(v) for v in self.levels)
        if len(lv) != len(th) + 1:
            raise ValueError("need one more level than thresholds")
        if any(b <= a for a, b in zip(th, th[1:])):
            raise ValueError("thresholds must be strictly increasing")
        if any(not 0.0 <= v <= 1.0 for v in lv):
            raise ValueError("levels must lie in [0, 1]")
        object.__setattr__(self, "thresholds", th)
        object.__setattr__(self, "levels", lv)

    def q(self, x):
        x = np.atleast_2d(x)
        idx = np.searchsorted(np.asarray(self.thresholds), x[:, self.coordinate], side="right")
        return np.asarray(self.levels)[idx]

    def breakpoints(self):
        return {self.coordinate: list(self.thresholds)}


@dataclass(frozen=True)
class MixtureRatio(TrueModel):
    """``q(x) = pi1 f1(x) / h(x)`` induced by a two-class mixture."""

    mixture: TwoClassMixture

    def q(self, x):
        l0, l1 = self.mixture.log_class_terms(np.atleast_2d(x))
        # pi1 f1 / (pi0 f0 + pi1 f1) as a logistic of the log-ratio
        with np.errstate(invalid="ignore"):
            r = l1 - l0
        r = np.where(np.isnan(r), 0.0, r)
        return special.expit(r)

    def log_ratio(self, x):
        l0, l1 = self.mixture.log_class_terms(np.atleast_2d(x))
        return l1 - l0

    @property
    def covariates(self) -> TwoClassMixture:
        return self.mixture


@dataclass(frozen=True)
class Tabulated(TrueModel):
    """Linear interpolation of ``(x, q)`` pairs in one covariate, constant beyond the ends."""

    grid: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if g.ndim != 1 or g.shape != v.shape or g.size < 2:
            raise ValueError("grid and values must be equal-length 1-d sequences of length >= 2")
        if np.any(np.diff(g) <= 0):
            raise ValueError("grid must be strictly increasing")
        if np.any((v < 0) | (v > 1)):
            raise ValueError("tabulated probabilities must lie in [0, 1]")
        object.__setattr__(self, "grid", tuple(g))
        object.__setattr__(self, "values", tuple(v))

    def q(self, x):
        x = np.atleast_2d(x)
        return np.interp(x[:, 0], self.grid, self.values)

    def breakpoints(self):
        return {0: list(self.grid)}


@dataclass(frozen=True)
class CallableTruth(TrueModel):
    """Arbitrary ``q`` given as a vectorized function of raw covariates ``(m, d)``."""

    fn: Callable[[np.ndarray], np.ndarray]
    breaks: dict = field(default_factory=dict)

    def q(self, x):
        out = np.asarray(self.fn(np.atleast_2d(x)), dtype=float)
        if np.any((out < 0) | (out > 1)):
            raise ValueError("true probabilities must lie in [0, 1]")
        return out

    def breakpoints(self):
        return {int(k): list(v) for k, v in self.breaks.items()}


def piecewise_logistic(coordinate: int, threshold: float, beta_low, beta_high) -> CallableTruth:
    """Logistic in ``(1, x)`` with coefficients switching at ``x[coordinate] = threshold``."""
    lo, hi = np.asarray(beta_low, dtype=float), np.asarray(beta_high, dtype=float)

    def fn(x):
        X = identity_features(x)
        eta = np.where(x[:, coordinate] < threshold, X @ lo, X @ hi)
        return special.expit(eta)

    return CallableTruth(fn, {coordinate: [threshold]})


# -- weight functions for weighted least-false targets ------------------------


@dataclass(frozen=True)
class IndicatorWeight:
    """``w(x) = 1{lower <= x[coordinate] < upper}``."""

    coordinate: int = 0
    lower: float = -np.inf
    upper: float = np.inf

    def __call__(self, x):
        v = np.atleast_2d(x)[:, self.coordinate]
        return ((v >= self.lower) & (v < self.upper)).astype(float)

    def breakpoints(self):
        return {self.coordinate: [b for b in (self.lower, self.upper) if np.isfinite(b)]}


@dataclass(frozen=True)
class KernelWeight:
    """Local-likelihood weight ``prod_k K((x0_k - x_k) / h_k)`` centred at raw point ``x0``."""

    x0: tuple[float, ...]
    spec: "object"

    def __call__(self, x):
        return self.spec.weights(np.asarray(self.x0, dtype=float), np.atleast_2d(x))

    def breakpoints(self):
        if self.spec.kernel.value == "gaussian":
            return {}
        return {k: [c - h, c + h] for k, (c, h) in enumerate(zip(self.x0, self.spec.bandwidth))}


def merge_breaks(*sources) -> dict[int, list[float]]:
    out: dict[int, list[float]] = {}
    for s in sources:
        if s is None or not hasattr(s, "breakpoints"):
            continue
        for k, v in s.breakpoints().items():
            out.setdefault(k, []).extend(v)
    return {k: sorted(set(v)) for k, v in out.items()}
