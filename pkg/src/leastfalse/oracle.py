"""Population quantities for a declared covariate distribution and true model.

The least false parameter maximizes the limit of the normalized log-likelihood,

    E[q(x) log q_beta(x) + (1 - q(x)) log(1 - q_beta(x))],

equivalently minimizes the (weighted) average Kullback-Leibler distance
between Bernoulli(q(x)) and Bernoulli(q_beta(x)). Expectations are taken over
``H`` with the integration rules from :mod:`leastfalse.distributions`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy import special

from . import likelihood as lik
from ._linalg import SingularInformationError, spd_inverse, symmetrize
from .core import DimensionError, Link, log_inverse_link
from .distributions import (
    CovariateDistribution,
    MixtureRatio,
    ProductBeta,
    ProductGaussian,
    TrueModel,
    TwoClassMixture,
    identity_features,
    merge_breaks,
)
from .fit import FitConfig, newton_maximize

WeightFn = Callable[[np.ndarray], np.ndarray]


class OracleDivergenceError(RuntimeError):
    """The population objective has no finite maximizer (or integration failed)."""


class Integral(NamedTuple):
    value: float
    error: float


@dataclass(frozen=True)
class LeastFalseResult:
    beta0: np.ndarray
    delta_at_beta0: float
    population_J: np.ndarray
    population_K: np.ndarray
    population_sandwich: np.ndarray
    integration_error_estimate: float
    score_norm: float
    iterations: int


class PopulationProblem:
    """Integration nodes, true probabilities and weights for one ``(H, truth, w)`` triple."""

    def __init__(self, H: CovariateDistribution, truth: TrueModel, weight: WeightFn | None = None):
        self.H, self.truth, self.weight = H, truth, weight
        self.integrator = H.integrator(merge_breaks(truth, weight))
        pts = self.integrator.main.points
        if pts.shape[1] != H.d:
            raise DimensionError("integration nodes do not match the covariate dimension")
        self.X = identity_features(pts)
        self.q = self._truth_values(pts)
        self.quad = self.integrator.main.weights
        self.w = self._weights(pts)

    def _truth_values(self, pts):
        q = np.asarray(self.truth.q(pts), dtype=float)
        if q.shape != (pts.shape[0],) or np.any((q < 0) | (q > 1)) or not np.all(np.isfinite(q)):
            raise ValueError("true model must return probabilities in [0, 1]")
        return q

    def _weights(self, pts):
        if self.weight is None:
            return np.ones(pts.shape[0])
        w = np.asarray(self.weight(pts), dtype=float)
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weight function must be finite and nonnegative")
        return w

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def _check_beta(self, beta) -> np.ndarray:
        beta = np.asarray(beta, dtype=float)
        if beta.shape != (self.p,):
            raise DimensionError(f"beta has shape {beta.shape}, expected ({self.p},)")
        return beta

    # integrands as functions of raw nodes, so the same expression feeds the error estimate
    def _fields(self, pts):
        return identity_features(pts), self._truth_values(pts), self._weights(pts)

    def objective_terms(self, link, beta, pts=None):
        X, q, w = (self.X, self.q, self.w) if pts is None else self._fields(pts)
        return lik.case_loglik(link, X @ beta, q) * w

    def score_terms(self, link, beta, pts=None):
        X, q, w = (self.X, self.q, self.w) if pts is None else self._fields(pts)
        return X * (lik.case_score_factor(link, X @ beta, q) * w)[:, None]

    def J_terms(self, link, beta, pts=None):
        X, q, w = (self.X, self.q, self.w) if pts is None else self._fields(pts)
        c = lik.curvature_factor(link, X @ beta, q) * w
        return X[:, :, None] * X[:, None, :] * c[:, None, None]

    def K_terms(self, link, beta, pts=None):
        X, q, w = (self.X, self.q, self.w) if pts is None else self._fields(pts)
        g1, g0 = lik.score_factors(link, X @ beta)
        c = (q * g1 * g1 + (1.0 - q) * g0 * g0) * w * w
        return X[:, :, None] * X[:, None, :] * c[:, None, None]

    def delta_terms(self, link, beta, pts=None):
        X, q, w = (self.X, self.q, self.w) if pts is None else self._fields(pts)
        eta = X @ beta
        return kl_terms(q, log_inverse_link(link, eta), log_inverse_link(link, -eta)) * w

    def integrate(self, terms) -> np.ndarray:
        return self.integrator.main.integrate(terms)

    def error(self, term_fn, link, beta) -> float:
        return self.integrator.error(lambda pts: term_fn(link, beta, pts))

    def evaluate(self, link: Link, beta) -> lik.LikelihoodEvaluation:
        beta = self._check_beta(beta)
        eta = self.X @ beta
        value = float(np.sum(self.quad * self.w * lik.case_loglik(link, eta, self.q)))
        s = lik.weighted_moment(self.X, self.quad * self.w * lik.case_score_factor(link, eta, self.q))
        H = lik.weighted_gram(self.X, self.quad * self.w * lik.curvature_factor(link, eta, self.q))
        return lik.LikelihoodEvaluation(value, s, H)

    def J_K(self, link: Link, beta) -> tuple[np.ndarray, np.ndarray]:
        beta = self._check_beta(beta)
        eta = self.X @ beta
        J = lik.weighted_gram(self.X, self.quad * self.w * lik.curvature_factor(link, eta, self.q))
        g1, g0 = lik.score_factors(link, eta)
        kc = (self.q * g1 * g1 + (1.0 - self.q) * g0 * g0) * self.w * self.w
        K = lik.weighted_gram(self.X, self.quad * kc)
        return J, K


def kl_terms(q, log_qb, log_1mqb) -> np.ndarray:
    """Bernoulli Kullback-Leibler distance ``D(q, q_b)`` from log-probabilities of ``q_b``.

    Uses ``0 log 0 = 0``; returns ``inf`` where ``q_b`` is numerically 0 or 1 but ``q`` is not.
    """
    q = np.asarray(q, dtype=float)
    with np.errstate(invalid="ignore"):
        a = np.where(q > 0, special.xlogy(q, q) - q * log_qb, 0.0)
        b = np.where(q < 1, special.xlogy(1 - q, 1 - q) - (1 - q) * log_1mqb, 0.0)
    return a + b


def bernoulli_kl(q, q_beta) -> np.ndarray:
    """``D(q, q_beta) = q log(q/q_beta) + (1-q) log((1-q)/(1-q_beta))``."""
    q_beta = np.asarray(q_beta, dtype=float)
    with np.errstate(divide="ignore"):
        return kl_terms(q, np.log(q_beta), np.log1p(-q_beta))


def population_objective(
    link: Link | str, beta, H: CovariateDistribution, truth: TrueModel, weight: WeightFn | None = None
) -> Integral:
    """``int [q log q_beta + (1 - q) log(1 - q_beta)] w dH`` with an error estimate."""
    link = Link.parse(link)
    prob = PopulationProblem(H, truth, weight)
    beta = prob._check_beta(beta)
    value = float(prob.integrate(prob.objective_terms(link, beta)))
    return Integral(value, prob.error(prob.objective_terms, link, beta))


def delta_distance(
    link: Link | str, beta, H: CovariateDistribution, truth: TrueModel, weight: WeightFn | None = None
) -> float:
    """``int D(q(x), q_beta(x)) w(x) H(dx)``; ``inf`` signals a divergent distance."""
    link = Link.parse(link)
    prob = PopulationProblem(H, truth, weight)
    beta = prob._check_beta(beta)
    terms = prob.delta_terms(link, beta)
    if np.any(np.isinf(terms) & (prob.quad * prob.w > 0)):
        return float("inf")
    return float(max(prob.integrate(np.where(np.isinf(terms), 0.0, terms)), 0.0))


def population_score(link: Link | str, beta, H, truth, weight: WeightFn | None = None) -> Integral:
    """``int x w(x) dl/d eta dH``: for the logistic link ``int x {q - q_beta} w dH``."""
    link = Link.parse(link)
    prob = PopulationProblem(H, truth, weight)
    beta = prob._check_beta(beta)
    s = prob.integrate(prob.score_terms(link, beta))
    return Integral(s, prob.error(prob.score_terms, link, beta))


def population_J_K(
    link: Link | str, beta, H: CovariateDistribution, truth: TrueModel, weight: WeightFn | None = None
) -> tuple[np.ndarray, np.ndarray]:
    link = Link.parse(link)
    prob = PopulationProblem(H, truth, weight)
    return prob.J_K(link, beta)


def least_false(
    link: Link | str,
    H: CovariateDistribution,
    truth: TrueModel,
    tolerance: float = 1e-10,
    weight: WeightFn | None = None,
    max_iterations: int = 200,
) -> LeastFalseResult:
    """Maximize the population objective by Newton's method and report J, K and Delta there."""
    link = Link.parse(link)
    prob = PopulationProblem(H, truth, weight)
    cfg = FitConfig(max_iterations=max_iterations, gradient_tolerance=tolerance)
    res = newton_maximize(lambda b: prob.evaluate(link, b), np.zeros(prob.p), cfg)
    if not res.converged:
        raise OracleDivergenceError(f"least false parameter not found: {res.status.value}")
    beta0 = res.beta_hat
    s = prob.integrate(prob.score_terms(link, beta0))
    J, K = prob.J_K(link, beta0)
    try:
        Jinv = spd_inverse(J)
    except SingularInformationError as exc:
        raise OracleDivergenceError(f"population information is singular: {exc}") from None
    errs = [
        prob.error(prob.objective_terms, link, beta0),
        prob.error(prob.score_terms, link, beta0),
        prob.error(prob.J_terms, link, beta0),
        prob.error(prob.K_terms, link, beta0),
    ]
    delta = float(max(prob.integrate(prob.delta_terms(link, beta0)), 0.0))
    return LeastFalseResult(
        beta0=beta0,
        delta_at_beta0=delta,
        population_J=J,
        population_K=K,
        population_sandwich=symmetrize(Jinv @ K @ Jinv),
        integration_error_estimate=float(max(errs)),
        score_norm=float(np.max(np.abs(s))),
        iterations=res.iterations,
    )


# -- mixture generators ------------------------------------------------------


def mixture_truth(mix: TwoClassMixture) -> MixtureRatio:
    """Exact ``P(z = 1 | x)`` of a two-class mixture; ``.covariates`` is the marginal ``h``."""
    if not isinstance(mix, TwoClassMixture):
        raise TypeError("expected a TwoClassMixture")
    return MixtureRatio(mix)


def gaussian_mixture_logit(mix: TwoClassMixture) -> np.ndarray:
    """Coefficients of the exactly logistic ``q(x)`` for equal-variance Gaussian classes."""
    f0, f1 = mix.f0, mix.f1
    if not (isinstance(f0, ProductGaussian) and isinstance(f1, ProductGaussian)) or f0.sd != f1.sd:
        raise ValueError("requires Gaussian classes with equal standard deviations")
    m0, m1, s2 = np.asarray(f0.mean), np.asarray(f1.mean), np.asarray(f0.sd) ** 2
    slope = (m1 - m0) / s2
    intercept = np.log(mix.pi1 / mix.pi0) - np.sum((m1 * m1 - m0 * m0) / (2 * s2))
    return np.concatenate(([intercept], slope))


def beta_mixture_logit(mix: TwoClassMixture) -> np.ndarray:
    """Coefficients of ``q(x)`` on ``(1, log x_1, log(1-x_1), ...)`` for Beta classes."""
    f0, f1 = mix.f0, mix.f1
    if not (isinstance(f0, ProductBeta) and isinstance(f1, ProductBeta)):
        raise ValueError("requires Beta class densities")
    intercept = np.log(mix.pi1 / mix.pi0)
    coefs = []
    for (a0, b0), (a1, b1) in zip(f0.shapes, f1.shapes):
        intercept += special.betaln(a0, b0) - special.betaln(a1, b1)
        coefs += [a1 - a0, b1 - b0]
    return np.array([intercept] + coefs)


def gaussian_groupwise_beta(mean0, mean1, pooled_cov, pi0: float, pi1: float) -> np.ndarray:
    """Logistic coefficients implied by equal-covariance Gaussian classes.

    slope ``S^{-1}(m1 - m0)``, intercept ``log(pi1/pi0) - (m1' S^{-1} m1 - m0' S^{-1} m0) / 2``.
    """
    m0 = np.atleast_1d(np.asarray(mean0, dtype=float))
    m1 = np.atleast_1d(np.asarray(mean1, dtype=float))
    S = np.atleast_2d(np.asarray(pooled_cov, dtype=float))
    if m0.shape != m1.shape or S.shape != (m0.size, m0.size):
        raise DimensionError("class means and pooled covariance dimensions disagree")
    if not (pi0 > 0 and pi1 > 0):
        raise ValueError("class priors must be positive")
    try:
        Sinv = spd_inverse(S)
    except SingularInformationError:
        raise ValueError("singular pooled covariance") from None
    slope = Sinv @ (m1 - m0)
    intercept = np.log(pi1 / pi0) - 0.5 * (m1 @ Sinv @ m1 - m0 @ Sinv @ m0)
    return np.concatenate(([intercept], slope))


def class_moments(data) -> tuple[np.ndarray, np.ndarray, np.ndarray, float, float]:
    """Class means, pooled covariance and class proportions from a dataset."""
    x = data.covariates
    ones = data.z == 1
    n1, n0 = int(np.sum(ones)), int(np.sum(~ones))
    if n0 == 0 or n1 == 0:
        raise ValueError("empty class")
    if n0 + n1 < x.shape[1] + 3:
        raise ValueError("too few observations for a pooled covariance")
    x0, x1 = x[~ones], x[ones]
    m0, m1 = x0.mean(axis=0), x1.mean(axis=0)
    r = np.vstack([x0 - m0, x1 - m1])
    S = r.T @ r / (n0 + n1 - 2)
    return m0, m1, S, n0 / data.n, n1 / data.n


def gaussian_groupwise_fit(data) -> np.ndarray:
    m0, m1, S, pi0, pi1 = class_moments(data)
    return gaussian_groupwise_beta(m0, m1, S, pi0, pi1)
