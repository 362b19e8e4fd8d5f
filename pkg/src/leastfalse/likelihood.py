"""Normalized log-likelihood, score and negative Hessian for logistic and probit links.

All quantities are averages ``(1/n) * sum_i w_i * (...)`` with ``w_i = 1`` unless
the dataset carries case weights. The array-level helpers accept fractional
outcomes so the population code can integrate the same expressions with
``z`` replaced by the true probability ``q(x)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .core import Dataset, DimensionError, Link, log_inverse_link

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass(frozen=True)
class LikelihoodEvaluation:
    value: float
    score: np.ndarray
    neg_hessian: np.ndarray


def _check(beta, X) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    if beta.ndim != 1 or beta.shape[0] != X.shape[1]:
        raise DimensionError(f"beta has shape {beta.shape}, design has {X.shape[1]} columns")
    return beta


def _mills(eta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``phi/Phi`` at ``eta`` and at ``-eta``, evaluated in log space."""
    log_phi = -0.5 * eta * eta - _LOG_SQRT_2PI
    lam1 = np.exp(log_phi - special.log_ndtr(eta))
    lam0 = np.exp(log_phi - special.log_ndtr(-eta))
    return lam1, lam0


def case_loglik(link: Link, eta: np.ndarray, z: np.ndarray) -> np.ndarray:
    """``z log q + (1 - z) log(1 - q)`` per case, with ``0 * log 0 = 0``."""
    if link is Link.LOGISTIC:
        return z * eta - np.logaddexp(0.0, eta)
    l1 = log_inverse_link(link, eta)
    l0 = log_inverse_link(link, -eta)
    return np.where(z > 0, z * l1, 0.0) + np.where(z < 1, (1.0 - z) * l0, 0.0)


def score_factors(link: Link, eta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Derivative of the case log-likelihood in ``eta`` when ``z = 1`` and when ``z = 0``."""
    if link is Link.LOGISTIC:
        q = special.expit(eta)
        return 1.0 - q, -q
    lam1, lam0 = _mills(eta)
    return lam1, -lam0


def case_score_factor(link: Link, eta: np.ndarray, z: np.ndarray) -> np.ndarray:
    """``d/d eta`` of the case log-likelihood (``z - q`` for the logistic link)."""
    if link is Link.LOGISTIC:
        return z - special.expit(eta)
    g1, g0 = score_factors(link, eta)
    return z * g1 + (1.0 - z) * g0


def curvature_factor(link: Link, eta: np.ndarray, z: np.ndarray) -> np.ndarray:
    """``-d^2/d eta^2`` of the case log-likelihood.

    Logistic gives ``q(1 - q)`` regardless of ``z``; probit uses the exact
    second derivative, which depends on ``z``.
    """
    if link is Link.LOGISTIC:
        q = special.expit(eta)
        return q * (1.0 - q)
    lam1, lam0 = _mills(eta)
    return z * lam1 * (eta + lam1) + (1.0 - z) * lam0 * (lam0 - eta)


def weighted_gram(X: np.ndarray, c: np.ndarray, norm: float = 1.0) -> np.ndarray:
    """``sum_i c_i x_i x_i^T / norm`` with each entry accumulated by pairwise summation."""
    p = X.shape[1]
    cols = np.ascontiguousarray(X.T)
    out = np.empty((p, p))
    for u in range(p):
        cu = c * cols[u]
        for v in range(u, p):
            out[u, v] = out[v, u] = np.sum(cu * cols[v]) / norm
    return out


def weighted_moment(X: np.ndarray, c: np.ndarray, norm: float = 1.0) -> np.ndarray:
    """``sum_i c_i x_i / norm`` column by column."""
    cols = np.ascontiguousarray(X.T)
    return np.array([np.sum(c * col) for col in cols]) / norm


def log_likelihood(link: Link | str, beta, data: Dataset) -> float:
    """``(1/n) log L`` (or ``(1/n) log WL`` when the dataset is weighted)."""
    link = Link.parse(link)
    beta = _check(beta, data.X)
    terms = case_loglik(link, data.X @ beta, data.z)
    if data.weights is not None:
        terms = terms * data.weights
    return float(np.sum(terms) / data.n)


def score(link: Link | str, beta, data: Dataset) -> np.ndarray:
    link = Link.parse(link)
    beta = _check(beta, data.X)
    g = case_score_factor(link, data.X @ beta, data.z) * data.case_weights()
    return weighted_moment(data.X, g, data.n)


def information_matrix(link: Link | str, beta, data: Dataset) -> np.ndarray:
    """``J_n(beta)``, the negative Hessian of the normalized log-likelihood."""
    link = Link.parse(link)
    beta = _check(beta, data.X)
    c = curvature_factor(link, data.X @ beta, data.z) * data.case_weights()
    return weighted_gram(data.X, c, data.n)


def evaluate(link: Link | str, beta, data: Dataset) -> LikelihoodEvaluation:
    """Value, score and negative Hessian from one pass over the linear predictor."""
    link = Link.parse(link)
    beta = _check(beta, data.X)
    eta = data.X @ beta
    w = data.case_weights()
    value = np.sum(case_loglik(link, eta, data.z) * w) / data.n
    s = weighted_moment(data.X, case_score_factor(link, eta, data.z) * w, data.n)
    H = weighted_gram(data.X, curvature_factor(link, eta, data.z) * w, data.n)
    return LikelihoodEvaluation(float(value), s, H)
