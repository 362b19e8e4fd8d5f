"""Replicated experiments: draw data from a scenario, run estimators, compare with the oracle."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import oracle
from ._linalg import SingularInformationError
from ._parallel import ordered_map, substream
from .core import Dataset, Link
from .distributions import CovariateDistribution, KernelWeight, TrueModel
from .fit import (
    DegenerateWeightsError,
    FitError,
    InsufficientLocalMassError,
    KernelSpec,
    PriorSpec,
    fit_bayes_posterior_mean,
    fit_local,
    fit_mle,
    local_weights,
)
from .nonparam import DensityKernel, density_ratio_from_data
from .sandwich import Flavor, covariance_at, wald_interval

FAILURE_BUDGET = 0.05


class FailureBudgetExceeded(RuntimeError):
    pass


# -- estimator declarations ---------------------------------------------------


@dataclass(frozen=True)
class MLE:
    name: str = "mle"


@dataclass(frozen=True)
class WeightedMLE:
    weight: object
    name: str = "weighted_mle"


@dataclass(frozen=True)
class Local:
    x0: tuple[float, ...]
    spec: KernelSpec
    name: str = "local"


@dataclass(frozen=True)
class Bayes:
    prior: PriorSpec
    draws: int = 10_000
    name: str = "bayes"


@dataclass(frozen=True)
class DensityRatio:
    grid: tuple[tuple[float, ...], ...]
    kernel: DensityKernel = DensityKernel.GAUSSIAN
    bandwidths: tuple | None = None
    name: str = "density_ratio"


@dataclass(frozen=True)
class GaussianGroupwise:
    name: str = "gaussian_groupwise"


_CAUGHT = (FitError, InsufficientLocalMassError, DegenerateWeightsError, SingularInformationError, ValueError)


@dataclass(frozen=True)
class Scenario:
    H: CovariateDistribution
    truth: TrueModel
    link: Link = Link.LOGISTIC
    n: int = 1000
    replications: int = 100
    seed: int = 0
    estimators: tuple = (MLE(),)
    levels: tuple[float, ...] = (0.95,)
    name: str = "scenario"

    def __post_init__(self):
        object.__setattr__(self, "link", Link.parse(self.link))
        if self.n < self.H.d + 2:
            raise ValueError(f"n = {self.n} is below d + 2 = {self.H.d + 2}")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        names = [e.name for e in self.estimators]
        if len(set(names)) != len(names):
            raise ValueError("estimator names must be unique")

    def with_n(self, n: int, replications: int | None = None) -> "Scenario":
        return replace(self, n=n, replications=self.replications if replications is None else replications)


def draw_dataset(scenario: Scenario, index: int) -> Dataset:
    """``x_i ~ H`` then ``z_i | x_i ~ Bernoulli(q(x_i))``, keyed by ``(seed, index)``."""
    rng = substream(scenario.seed, index)
    x = scenario.H.sample(rng, scenario.n)
    q = np.asarray(scenario.truth.q(x), dtype=float)
    z = (rng.random(scenario.n) < q).astype(float)
    return Dataset.from_arrays(x, z)


# -- summaries ----------------------------------------------------------------


@dataclass
class EstimatorSummary:
    name: str
    kind: str
    estimates: np.ndarray
    converged: np.ndarray
    flags: list[str]
    target: np.ndarray | None = None
    oracle_sandwich: np.ndarray | None = None
    oracle_naive: np.ndarray | None = None
    coverage: dict = field(default_factory=dict)
    J_hat_sum: np.ndarray | None = None
    K_hat_sum: np.ndarray | None = None
    naive_cov_sum: np.ndarray | None = None
    sandwich_cov_sum: np.ndarray | None = None

    @property
    def failures(self) -> int:
        return int(np.sum(~self.converged))

    @property
    def successes(self) -> int:
        return int(np.sum(self.converged))

    def ok(self) -> np.ndarray:
        return self.estimates[self.converged]

    def mean(self) -> np.ndarray:
        return self.ok().mean(axis=0)

    def covariance(self) -> np.ndarray | None:
        """Empirical covariance across replications; ``None`` with fewer than two."""
        ok = self.ok()
        if ok.shape[0] < 2:
            return None
        return np.atleast_2d(np.cov(ok, rowvar=False, ddof=1))

    def mc_standard_error(self) -> np.ndarray | None:
        cov = self.covariance()
        if cov is None:
            return None
        return np.sqrt(np.diag(cov) / self.successes)

    def average(self, which: str) -> np.ndarray | None:
        total = getattr(self, f"{which}_sum")
        return None if total is None else total / max(self.successes, 1)

    def coverage_rates(self) -> dict:
        return {lvl: {fl: (cnt / max(self.successes, 1)).tolist() for fl, cnt in d.items()} for lvl, d in self.coverage.items()}


@dataclass
class ReplicationSummary:
    scenario: Scenario
    estimators: dict[str, EstimatorSummary]
    oracle_results: dict[str, oracle.LeastFalseResult]

    def __getitem__(self, name: str) -> EstimatorSummary:
        return self.estimators[name]

    def scaled_covariance(self, name: str = "mle") -> np.ndarray | None:
        """Empirical covariance of ``sqrt(n) (beta_hat - beta0)``."""
        cov = self.estimators[name].covariance()
        return None if cov is None else self.scenario.n * cov

    def covariance_relative_error(self, name: str = "mle", min_entry: float = 0.01) -> np.ndarray | None:
        """Entrywise ``|n cov - J^-1 K J^-1| / |J^-1 K J^-1|``; NaN where the oracle entry is small."""
        emp = self.scaled_covariance(name)
        S = self.estimators[name].oracle_sandwich
        if emp is None or S is None:
            return None
        rel = np.abs(emp - S) / np.abs(S)
        return np.where(np.abs(S) > min_entry, rel, np.nan)

    def mean_z_scores(self, name: str = "mle") -> np.ndarray | None:
        est = self.estimators[name]
        se = est.mc_standard_error()
        if se is None or est.target is None:
            return None
        return (est.mean() - est.target) / se

    def to_dict(self) -> dict:
        sc = self.scenario
        out = {
            "scenario": {
                "name": sc.name,
                "link": sc.link.value,
                "n": sc.n,
                "replications": sc.replications,
                "seed": sc.seed,
                "levels": list(sc.levels),
                "estimators": [e.name for e in sc.estimators],
            },
            "estimators": {},
        }
        for name, est in self.estimators.items():
            cov = est.covariance()
            entry = {
                "kind": est.kind,
                "successes": est.successes,
                "failures": est.failures,
                "mean": _jsonable(est.mean() if est.successes else None),
                "covariance": _jsonable(cov),
                "covariance_defined": cov is not None,
            }
            if est.target is not None:
                entry["target"] = _jsonable(est.target)
            if est.oracle_sandwich is not None:
                entry["oracle_sandwich"] = _jsonable(est.oracle_sandwich)
                entry["oracle_naive"] = _jsonable(est.oracle_naive)
                entry["empirical_scaled_covariance"] = _jsonable(None if cov is None else sc.n * cov)
                entry["covariance_relative_error"] = _jsonable(self.covariance_relative_error(name))
                entry["mean_z_scores"] = _jsonable(self.mean_z_scores(name))
            for which in ("J_hat", "K_hat", "naive_cov", "sandwich_cov"):
                avg = est.average(which)
                if avg is not None:
                    entry[f"average_{which}"] = _jsonable(avg)
            if est.coverage:
                entry["coverage"] = {str(k): v for k, v in est.coverage_rates().items()}
            out["estimators"][name] = entry
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        width = max(est.estimates.shape[1] for est in self.estimators.values())
        w.writerow(["replication", "estimator"] + [f"beta_{j}" for j in range(width)] + ["converged", "flags"])
        for r in range(self.scenario.replications):
            for name, est in self.estimators.items():
                vals = [repr(float(v)) for v in est.estimates[r]] + [""] * (width - est.estimates.shape[1])
                w.writerow([r, name] + vals + [int(est.converged[r]), est.flags[r]])
        return buf.getvalue()


def _jsonable(a):
    if a is None:
        return None
    arr = np.asarray(a, dtype=float)
    return [None if not np.isfinite(v) else float(v) for v in arr.reshape(-1)] if arr.ndim <= 1 else [_jsonable(r) for r in arr]


# -- running ------------------------------------------------------------------


def _target(scenario: Scenario, est) -> oracle.LeastFalseResult | None:
    if isinstance(est, (MLE, Bayes, GaussianGroupwise)):
        return oracle.least_false(scenario.link, scenario.H, scenario.truth)
    if isinstance(est, WeightedMLE):
        return oracle.least_false(scenario.link, scenario.H, scenario.truth, weight=est.weight)
    if isinstance(est, Local):
        x0 = np.asarray(est.x0, dtype=float)
        raw = x0[1:] if x0.shape[0] == scenario.H.d + 1 else x0
        return oracle.least_false(scenario.link, scenario.H, scenario.truth, weight=KernelWeight(tuple(raw), est.spec))
    return None


def _run_one(scenario: Scenario, est, data: Dataset, r: int):
    """Returns ``(estimate, flag, covariance report or None)``; a non-empty flag marks failure."""
    link = scenario.link
    if isinstance(est, (MLE, WeightedMLE, Local)):
        if isinstance(est, Local):
            fitted = fit_local(link, data, est.x0, est.spec)
            used = data.with_weights(local_weights(data, est.x0, est.spec))
        elif isinstance(est, WeightedMLE):
            used = data.with_weights(est.weight(data.covariates))
            fitted = fit_mle(link, used)
        else:
            used = data
            fitted = fit_mle(link, data)
        if not fitted.converged:
            return fitted.beta_hat, fitted.status.value, None
        return fitted.beta_hat, "", covariance_at(link, fitted.beta_hat, used)
    if isinstance(est, Bayes):
        seed = int(np.random.SeedSequence((scenario.seed, r, 1)).generate_state(1)[0])
        return fit_bayes_posterior_mean(link, data, est.prior, est.draws, seed), "", None
    if isinstance(est, GaussianGroupwise):
        return oracle.gaussian_groupwise_fit(data), "", None
    if isinstance(est, DensityRatio):
        grid = np.asarray(est.grid, dtype=float)
        return np.atleast_1d(density_ratio_from_data(data, grid, est.kernel, est.bandwidths)), "", None
    raise TypeError(f"unknown estimator {est!r}")


def _width(scenario: Scenario, est) -> int:
    if isinstance(est, DensityRatio):
        return len(est.grid)
    return scenario.H.d + 1


def run_experiment(scenario: Scenario) -> ReplicationSummary:
    """Run every estimator on every replication and aggregate against the oracle targets."""
    targets = {e.name: _target(scenario, e) for e in scenario.estimators}
    R = scenario.replications
    summaries: dict[str, EstimatorSummary] = {}
    for est in scenario.estimators:
        lf = targets[est.name]
        s = EstimatorSummary(
            est.name,
            type(est).__name__,
            np.full((R, _width(scenario, est)), np.nan),
            np.zeros(R, dtype=bool),
            [""] * R,
        )
        if isinstance(est, DensityRatio):
            s.target = np.asarray(scenario.truth.q(np.asarray(est.grid, dtype=float)), dtype=float)
        elif lf is not None:
            s.target = lf.beta0
            s.oracle_sandwich = lf.population_sandwich
            s.oracle_naive = np.linalg.inv(lf.population_J)
        summaries[est.name] = s

    def replicate(r: int):
        data = draw_dataset(scenario, r)
        out = []
        for est in scenario.estimators:
            try:
                out.append(_run_one(scenario, est, data, r))
            except _CAUGHT as exc:
                out.append((None, f"{type(exc).__name__}: {exc}".replace("\n", " "), None))
        return out

    results = ordered_map(replicate, range(R))

    # deterministic fold in replication order
    for r, row in enumerate(results):
        for est, (value, flag, report) in zip(scenario.estimators, row):
            s = summaries[est.name]
            if value is not None:
                s.estimates[r] = value
            s.flags[r] = flag
            s.converged[r] = not flag
            if flag or report is None:
                continue
            for which in ("J_hat", "K_hat", "naive_cov", "sandwich_cov"):
                cur = getattr(s, f"{which}_sum")
                setattr(s, f"{which}_sum", getattr(report, which).copy() if cur is None else cur + getattr(report, which))
            if s.target is None:
                continue
            for level in scenario.levels:
                cov = s.coverage.setdefault(level, {f.value: np.zeros(s.estimates.shape[1], dtype=int) for f in Flavor})
                for flavor in Flavor:
                    for u in range(s.estimates.shape[1]):
                        lo, hi = wald_interval(report, value, u, level, flavor)
                        cov[flavor.value][u] += int(lo <= s.target[u] <= hi)

    for s in summaries.values():
        if s.failures > FAILURE_BUDGET * R:
            raise FailureBudgetExceeded(f"{s.name}: {s.failures} of {R} replications failed")
    return ReplicationSummary(scenario, summaries, {k: v for k, v in targets.items() if v is not None})


@dataclass(frozen=True)
class CurveRow:
    n: int
    mean_sup_error: float
    scaled_covariance_error: float


def convergence_curve(
    scenario: Scenario, n_values: Sequence[int], replications: int, estimator: str = "mle"
) -> list[CurveRow]:
    """Mean ``||beta_hat - beta0||_inf`` and relative Frobenius error of ``n cov`` against the oracle sandwich."""
    rows = []
    for n in n_values:
        summ = run_experiment(scenario.with_n(int(n), replications))
        est = summ[estimator]
        dev = np.max(np.abs(est.ok() - est.target), axis=1).mean()
        emp = summ.scaled_covariance(estimator)
        S = est.oracle_sandwich
        err = np.nan if emp is None else float(np.linalg.norm(emp - S) / np.linalg.norm(S))
        rows.append(CurveRow(int(n), float(dev), err))
    return rows
