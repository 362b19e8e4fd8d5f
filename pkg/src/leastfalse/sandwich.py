"""Naive and sandwich covariance estimates, Wald intervals, and the J-vs-K test."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import special

from . import likelihood as lik
from ._linalg import SingularInformationError, spd_inverse, symmetrize
from ._parallel import ordered_map, substream
from .core import Dataset, Link, inverse_link
from .fit import FitConfig, FitResult, FitStatus, fit_mle


class Flavor(enum.Enum):
    NAIVE = "naive"
    SANDWICH = "sandwich"


class BootstrapFailureError(RuntimeError):
    pass


@dataclass(frozen=True)
class CovarianceReport:
    J_hat: np.ndarray
    K_hat: np.ndarray
    naive_cov: np.ndarray
    sandwich_cov: np.ndarray
    n: int

    def standard_errors(self, flavor: Flavor | str = Flavor.SANDWICH) -> np.ndarray:
        cov = self.sandwich_cov if Flavor(flavor) is Flavor.SANDWICH else self.naive_cov
        return np.sqrt(np.diag(cov))


@dataclass(frozen=True)
class GofReport:
    statistic: float
    p_value: float
    bootstrap_replicates: int
    dropped_replicates: int
    seed: int


def estimate_J_hat(link: Link | str, beta_hat, data: Dataset) -> np.ndarray:
    return lik.information_matrix(link, beta_hat, data)


def estimate_K_hat(link: Link | str, beta_hat, data: Dataset) -> np.ndarray:
    """``(1/n) sum_i s_i s_i^T`` over per-case scores ``s_i = w_i x_i g_i``."""
    link = Link.parse(link)
    beta_hat = np.asarray(beta_hat, dtype=float)
    g = lik.case_score_factor(link, data.X @ beta_hat, data.z) * data.case_weights()
    return lik.weighted_gram(data.X, g * g, data.n)


def sandwich_from(J: np.ndarray, K: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``(J^{-1}, J^{-1} K J^{-1})``."""
    Jinv = spd_inverse(J)
    return Jinv, symmetrize(Jinv @ K @ Jinv)


def covariance_at(link: Link | str, beta_hat, data: Dataset) -> CovarianceReport:
    J = estimate_J_hat(link, beta_hat, data)
    K = estimate_K_hat(link, beta_hat, data)
    Jinv, S = sandwich_from(J, K)
    return CovarianceReport(J, K, Jinv / data.n, S / data.n, data.n)


def covariance_report(link: Link | str, fit: FitResult, data: Dataset) -> CovarianceReport:
    """Naive ``J^-1/n`` and sandwich ``J^-1 K J^-1 / n`` covariances at a converged fit."""
    if fit.status is FitStatus.SINGULAR_INFORMATION:
        raise SingularInformationError("information matrix is singular")
    fit.require_converged()
    return covariance_at(link, fit.beta_hat, data)


def wald_interval(
    report: CovarianceReport,
    beta_hat,
    coordinate: int,
    level: float = 0.95,
    flavor: Flavor | str = Flavor.SANDWICH,
) -> tuple[float, float]:
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    beta_hat = np.asarray(beta_hat, dtype=float)
    if not 0 <= coordinate < beta_hat.shape[0]:
        raise IndexError(f"coordinate {coordinate} out of range")
    cov = report.sandwich_cov if Flavor(flavor) is Flavor.SANDWICH else report.naive_cov
    half = special.ndtri(0.5 * (1.0 + level)) * np.sqrt(cov[coordinate, coordinate])
    b = float(beta_hat[coordinate])
    return b - half, b + half


def jk_statistic(J: np.ndarray, K: np.ndarray, n: int) -> float:
    """``n * ||vech(J - K)||^2``."""
    iu = np.triu_indices(J.shape[0])
    diff = (J - K)[iu]
    return float(n * np.dot(diff, diff))


def misspecification_test(
    link: Link | str,
    fit: FitResult,
    data: Dataset,
    bootstrap_replicates: int = 200,
    seed: int = 0,
    config: FitConfig | None = None,
) -> GofReport:
    """Parametric-bootstrap test of the link model based on the distance between J_hat and K_hat.

    Outcomes are redrawn from the fitted model with covariates held fixed, the
    model is refitted, and the statistic recomputed. Refits that fail are
    dropped; more than 10% dropped is an error.
    """
    link = Link.parse(link)
    if bootstrap_replicates < 200:
        raise ValueError("at least 200 bootstrap replicates are required")
    fit.require_converged()
    beta_hat = fit.beta_hat
    T = jk_statistic(estimate_J_hat(link, beta_hat, data), estimate_K_hat(link, beta_hat, data), data.n)
    q_hat = inverse_link(link, data.X @ beta_hat)
    base = config or FitConfig()
    cfg = FitConfig(base.max_iterations, base.gradient_tolerance, base.step_halving_limit, tuple(beta_hat))

    def replicate(b: int) -> float | None:
        rng = substream(seed, b)
        z_star = (rng.random(data.n) < q_hat).astype(float)
        boot = data.with_outcomes(z_star)
        res = fit_mle(link, boot, cfg)
        if not res.converged:
            return None
        bh = res.beta_hat
        return jk_statistic(estimate_J_hat(link, bh, boot), estimate_K_hat(link, bh, boot), boot.n)

    stats = ordered_map(replicate, range(bootstrap_replicates))
    kept = np.array([t for t in stats if t is not None])
    dropped = bootstrap_replicates - kept.size
    if dropped > 0.1 * bootstrap_replicates:
        raise BootstrapFailureError(f"{dropped} of {bootstrap_replicates} bootstrap refits failed")
    p = (1.0 + np.count_nonzero(kept >= T)) / (1.0 + kept.size)
    return GofReport(T, float(p), bootstrap_replicates, int(dropped), int(seed))
