"""Newton maximization of plain, weighted and kernel-local likelihoods.

Also provides an importance-sampling posterior mean under a product Gaussian
prior, which is asymptotically equivalent to the maximum likelihood estimate.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import special

from . import likelihood as lik
from ._linalg import MAX_CONDITION, SingularInformationError, condition_number, spd_inverse, spd_solve
from .core import Dataset, DimensionError, Link, mean_response

SEPARATION_THRESHOLD = 1e3


class FitStatus(enum.Enum):
    CONVERGED = "Converged"
    SEPARATION_SUSPECTED = "SeparationSuspected"
    SINGULAR_INFORMATION = "SingularInformation"
    ITERATION_LIMIT = "IterationLimit"


class FitError(RuntimeError):
    """Raised when a converged fit is required but not available."""

    def __init__(self, message: str, status: FitStatus | None = None):
        super().__init__(message)
        self.status = status


class InsufficientLocalMassError(ValueError):
    pass


class DegenerateWeightsError(RuntimeError):
    pass


@dataclass(frozen=True)
class FitConfig:
    max_iterations: int = 100
    gradient_tolerance: float = 1e-9
    step_halving_limit: int = 30
    initial_beta: Sequence[float] | None = None

    def __post_init__(self):
        if self.max_iterations <= 0 or self.step_halving_limit <= 0:
            raise ValueError("iteration limits must be positive")
        if not self.gradient_tolerance > 0:
            raise ValueError("gradient_tolerance must be positive")


@dataclass(frozen=True)
class FitResult:
    beta_hat: np.ndarray
    converged: bool
    iterations: int
    final_score_norm: float
    log_likelihood_at_optimum: float
    status: FitStatus
    loglik_path: tuple[float, ...] = field(default=(), repr=False)

    def require_converged(self) -> "FitResult":
        if not self.converged:
            raise FitError(f"fit did not converge: {self.status.value}", self.status)
        return self


def newton_maximize(
    evaluate: Callable[[np.ndarray], lik.LikelihoodEvaluation],
    beta0: np.ndarray,
    config: FitConfig,
) -> FitResult:
    """Damped Newton ascent for a concave objective.

    ``evaluate`` returns value, gradient and negative Hessian. A step is halved
    until the objective does not decrease. Separation shows up either as
    ``|beta|`` passing ``SEPARATION_THRESHOLD`` or as a vanishing gradient
    while the Newton step stays large (the supremum lies at infinity).
    """
    beta = np.array(beta0, dtype=float)
    ev = evaluate(beta)
    path = [ev.value]

    def done(status: FitStatus, it: int) -> FitResult:
        gnorm = float(np.max(np.abs(ev.score)))
        return FitResult(beta.copy(), status is FitStatus.CONVERGED, it, gnorm, ev.value, status, tuple(path))

    if condition_number(ev.neg_hessian) > MAX_CONDITION:
        return done(FitStatus.SINGULAR_INFORMATION, 0)

    it = 0
    while True:
        gnorm = float(np.max(np.abs(ev.score)))
        try:
            step = spd_solve(ev.neg_hessian, ev.score)
        except SingularInformationError:
            # information degenerates along the path only when fitted probabilities saturate
            return done(FitStatus.SEPARATION_SUSPECTED if it else FitStatus.SINGULAR_INFORMATION, it)
        if gnorm <= config.gradient_tolerance:
            small = np.max(np.abs(step)) <= 1e-6 * (1.0 + np.max(np.abs(beta)))
            if not small:
                return done(FitStatus.SEPARATION_SUSPECTED, it)
            # one more (quadratically convergent) step makes the result independent of weight scale
            ev_c = evaluate(beta + step)
            if np.isfinite(ev_c.value) and np.max(np.abs(ev_c.score)) <= gnorm:
                beta, ev = beta + step, ev_c
                path.append(ev.value)
            return done(FitStatus.CONVERGED, it)
        if it >= config.max_iterations:
            return done(FitStatus.ITERATION_LIMIT, it)

        # near the optimum the objective changes by less than its rounding error
        slack = 64.0 * np.finfo(float).eps * (1.0 + abs(ev.value))
        t = 1.0
        for _ in range(config.step_halving_limit + 1):
            cand = beta + t * step
            ev_c = evaluate(cand)
            if np.isfinite(ev_c.value) and ev_c.value >= ev.value - slack:
                break
            t *= 0.5
        else:
            return done(FitStatus.ITERATION_LIMIT, it)
        beta, ev = cand, ev_c
        path.append(ev.value)
        it += 1
        if np.max(np.abs(beta)) > SEPARATION_THRESHOLD and np.max(np.abs(ev.score)) > config.gradient_tolerance:
            return done(FitStatus.SEPARATION_SUSPECTED, it)


def _start(config: FitConfig, p: int) -> np.ndarray:
    if config.initial_beta is None:
        return np.zeros(p)
    b = np.asarray(config.initial_beta, dtype=float)
    if b.shape != (p,):
        raise DimensionError(f"initial_beta has shape {b.shape}, expected ({p},)")
    return b


def fit_mle(link: Link | str, data: Dataset, config: FitConfig | None = None) -> FitResult:
    """Maximum (weighted) likelihood estimate by Newton's method."""
    link = Link.parse(link)
    config = config or FitConfig()
    return newton_maximize(lambda b: lik.evaluate(link, b, data), _start(config, data.p), config)


# -- local likelihood ---------------------------------------------------------


class Kernel(enum.Enum):
    GAUSSIAN = "gaussian"
    EPANECHNIKOV = "epanechnikov"
    UNIFORM = "uniform"

    @classmethod
    def parse(cls, value) -> "Kernel":
        return value if isinstance(value, Kernel) else cls(str(value).lower())

    def profile(self, u: np.ndarray) -> np.ndarray:
        """Unnormalized kernel with ``K(0) = 1``."""
        u = np.asarray(u, dtype=float)
        if self is Kernel.GAUSSIAN:
            return np.exp(-0.5 * u * u)
        if self is Kernel.EPANECHNIKOV:
            return np.clip(1.0 - u * u, 0.0, None)
        return (np.abs(u) <= 1.0).astype(float)


@dataclass(frozen=True)
class KernelSpec:
    kernel: Kernel
    bandwidth: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "kernel", Kernel.parse(self.kernel))
        bw = tuple(float(h) for h in np.atleast_1d(self.bandwidth))
        if not bw or not all(h > 0 and np.isfinite(h) for h in bw):
            raise ValueError("bandwidths must be positive and finite")
        object.__setattr__(self, "bandwidth", bw)

    def weights(self, x0_raw: np.ndarray, covariates: np.ndarray) -> np.ndarray:
        """Product-kernel weights ``prod_k K((x0_k - x_ik) / h_k)``."""
        covariates = np.asarray(covariates, dtype=float)
        if covariates.ndim == 1:
            covariates = covariates[:, None]
        h = np.asarray(self.bandwidth)
        if h.shape[0] != covariates.shape[1]:
            raise DimensionError(f"{h.shape[0]} bandwidths for {covariates.shape[1]} covariates")
        return np.prod(self.kernel.profile((x0_raw - covariates) / h), axis=1)


def _raw_point(x0, d: int) -> np.ndarray:
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.shape[0] == d + 1:
        if x0[0] != 1.0:
            raise DimensionError("covariate vector must start with the intercept 1")
        return x0[1:]
    if x0.shape[0] == d:
        return x0
    raise DimensionError(f"point has length {x0.shape[0]}, expected {d + 1}")


def local_weights(data: Dataset, x0, spec: KernelSpec) -> np.ndarray:
    w = spec.weights(_raw_point(x0, data.d), data.covariates)
    if data.weights is not None:
        w = w * data.weights
    return w


def fit_local(
    link: Link | str, data: Dataset, x0, spec: KernelSpec, config: FitConfig | None = None
) -> FitResult:
    """Kernel-weighted likelihood fit centred at ``x0``; returns ``beta_hat(x0)``."""
    w = local_weights(data, x0, spec)
    mass = float(np.sum(w))
    if mass < data.d + 2:
        raise InsufficientLocalMassError(f"insufficient local mass: {mass:.3g} < {data.d + 2}")
    return fit_mle(link, data.with_weights(w), config)


@dataclass(frozen=True)
class LocalEstimate:
    x: np.ndarray
    q: float
    beta: np.ndarray | None
    status: str
    error: str | None = None


def local_probability_curve(
    link: Link | str, data: Dataset, grid, spec: KernelSpec, config: FitConfig | None = None
) -> list[LocalEstimate]:
    """``q*(x) = q_{beta_hat(x)}(x)`` at each grid point; failures are reported per point."""
    link = Link.parse(link)
    out = []
    for x in grid:
        raw = _raw_point(x, data.d)
        xv = np.concatenate(([1.0], raw))
        try:
            res = fit_local(link, data, xv, spec, config)
        except (InsufficientLocalMassError, SingularInformationError) as exc:
            out.append(LocalEstimate(xv, float("nan"), None, "Error", str(exc)))
            continue
        if not res.converged:
            out.append(LocalEstimate(xv, float("nan"), res.beta_hat, res.status.value, res.status.value))
            continue
        out.append(LocalEstimate(xv, mean_response(link, res.beta_hat, xv), res.beta_hat, res.status.value))
    return out


# -- Bayes posterior mean -----------------------------------------------------


@dataclass(frozen=True)
class PriorSpec:
    """Independent Gaussian prior on each coefficient."""

    mean: tuple[float, ...]
    sd: tuple[float, ...]

    def __post_init__(self):
        m = tuple(float(v) for v in np.atleast_1d(self.mean))
        s = tuple(float(v) for v in np.atleast_1d(self.sd))
        if len(m) != len(s):
            raise DimensionError("prior mean and sd lengths differ")
        if not all(v > 0 and np.isfinite(v) for v in s):
            raise ValueError("prior standard deviations must be positive")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "sd", s)

    @classmethod
    def isotropic(cls, p: int, sd: float, mean: float = 0.0) -> "PriorSpec":
        return cls((mean,) * p, (sd,) * p)

    def logpdf(self, B: np.ndarray) -> np.ndarray:
        m, s = np.asarray(self.mean), np.asarray(self.sd)
        u = (B - m) / s
        return np.sum(-0.5 * u * u - np.log(s) - 0.5 * np.log(2 * np.pi), axis=-1)


def _chunked_loglik(link: Link, B: np.ndarray, data: Dataset, chunk: int = 256) -> np.ndarray:
    """Unnormalized ``log L(beta)`` for each row of ``B``."""
    w = data.case_weights()[:, None]
    out = np.empty(B.shape[0])
    for start in range(0, B.shape[0], chunk):
        eta = data.X @ B[start:start + chunk].T
        out[start:start + chunk] = np.sum(lik.case_loglik(link, eta, data.z[:, None]) * w, axis=0)
    return out


def fit_bayes_posterior_mean(
    link: Link | str,
    data: Dataset,
    prior: PriorSpec,
    draws: int = 10_000,
    seed: int = 0,
    fit: FitResult | None = None,
    inflation: float = 2.0,
) -> np.ndarray:
    """Posterior mean ``int beta L p / int L p`` by self-normalized importance sampling.

    The proposal is Gaussian at ``beta_hat`` with covariance
    ``inflation * J_hat^{-1} / n``.
    """
    link = Link.parse(link)
    if data.p > 6:
        raise ValueError("posterior mean supported for at most 6 coefficients")
    if len(prior.mean) != data.p:
        raise DimensionError(f"prior has {len(prior.mean)} coordinates, model has {data.p}")
    if fit is None:
        fit = fit_mle(link, data)
    fit.require_converged()
    beta_hat = fit.beta_hat
    cov = inflation * spd_inverse(lik.information_matrix(link, beta_hat, data)) / data.n
    L = np.linalg.cholesky(cov)
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal((draws, data.p))
    B = beta_hat + eps @ L.T
    # proposal log-density up to a constant shared by all draws
    log_prop = -0.5 * np.sum(eps * eps, axis=1)
    logw = _chunked_loglik(link, B, data) + prior.logpdf(B) - log_prop
    logw -= special.logsumexp(logw)
    w = np.exp(logw)
    ess = 1.0 / np.sum(w * w)
    if ess < 50:
        raise DegenerateWeightsError(f"degenerate importance weights (effective sample size {ess:.1f})")
    return w @ B
