"""Reading scenario files (TOML) into :class:`~leastfalse.simulation.Scenario` objects.

A scenario file has top-level keys ``name``, ``link``, ``n``, ``replications``,
``seed`` and ``levels``, and the tables ``[covariates]``, ``[truth]``,
``[[estimators]]``, ``[oracle]`` (optional weight for the oracle command) and
``[checks]`` (verdict thresholds for the simulate command). See
``scenarios/*.toml`` for complete examples.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .core import Link
from .distributions import (
    FiniteSupport,
    IndicatorWeight,
    KernelWeight,
    LogisticInFeatures,
    ProductBeta,
    ProductGaussian,
    ProductUniform,
    StepFunction,
    Tabulated,
    TwoClassMixture,
    piecewise_logistic,
)
from .fit import KernelSpec, PriorSpec
from .nonparam import DensityKernel
from .oracle import mixture_truth
from .simulation import MLE, Bayes, DensityRatio, GaussianGroupwise, Local, Scenario, WeightedMLE


class ScenarioError(ValueError):
    pass


@dataclass
class ScenarioFile:
    scenario: Scenario
    checks: dict[str, Any] = field(default_factory=dict)
    oracle_weight: object | None = None
    raw: dict[str, Any] = field(default_factory=dict)

    @property
    def has_seed(self) -> bool:
        return "seed" in self.raw


def _req(table: dict, key: str, where: str):
    if key not in table:
        raise ScenarioError(f"missing key '{key}' in {where}")
    return table[key]


def parse_covariates(t: dict, where: str = "[covariates]"):
    kind = _req(t, "kind", where)
    if kind == "finite_support":
        return FiniteSupport(_req(t, "points", where), _req(t, "probabilities", where))
    if kind == "uniform":
        return ProductUniform(tuple(tuple(b) for b in _req(t, "bounds", where)))
    if kind == "gaussian":
        return ProductGaussian(tuple(_req(t, "mean", where)), tuple(_req(t, "sd", where)))
    if kind == "beta":
        return ProductBeta(tuple(tuple(s) for s in _req(t, "shapes", where)))
    if kind == "mixture":
        f0 = parse_covariates(_req(t, "f0", where), f"{where}.f0")
        f1 = parse_covariates(_req(t, "f1", where), f"{where}.f1")
        return TwoClassMixture(float(_req(t, "pi0", where)), f0, float(_req(t, "pi1", where)), f1)
    raise ScenarioError(f"unknown covariate kind {kind!r}")


def parse_truth(t: dict, H):
    where = "[truth]"
    kind = _req(t, "kind", where)
    if kind == "logistic":
        return LogisticInFeatures(tuple(_req(t, "beta", where)), t.get("features", "identity"), t.get("link", "logistic"))
    if kind == "step":
        return StepFunction(int(t.get("coordinate", 0)), tuple(_req(t, "thresholds", where)), tuple(_req(t, "levels", where)))
    if kind == "tabulated":
        return Tabulated(tuple(_req(t, "grid", where)), tuple(_req(t, "values", where)))
    if kind == "piecewise_logistic":
        return piecewise_logistic(
            int(t.get("coordinate", 0)), float(t.get("threshold", 0.0)), _req(t, "beta_low", where), _req(t, "beta_high", where)
        )
    if kind == "mixture":
        if not isinstance(H, TwoClassMixture):
            raise ScenarioError("truth kind 'mixture' requires covariates of kind 'mixture'")
        return mixture_truth(H)
    raise ScenarioError(f"unknown truth kind {kind!r}")


def parse_weight(t: dict):
    kind = _req(t, "kind", "weight")
    if kind == "indicator":
        return IndicatorWeight(int(t.get("coordinate", 0)), float(t.get("lower", float("-inf"))), float(t.get("upper", float("inf"))))
    if kind == "kernel":
        spec = KernelSpec(t.get("kernel", "gaussian"), tuple(_req(t, "bandwidth", "weight")))
        return KernelWeight(tuple(float(v) for v in _req(t, "x0", "weight")), spec)
    raise ScenarioError(f"unknown weight kind {kind!r}")


def parse_estimator(t: dict, p: int):
    kind = _req(t, "kind", "[[estimators]]")
    name = t.get("name", kind)
    if kind == "mle":
        return MLE(name)
    if kind == "weighted_mle":
        return WeightedMLE(parse_weight(_req(t, "weight", name)), name)
    if kind == "local":
        spec = KernelSpec(t.get("kernel", "gaussian"), tuple(_req(t, "bandwidth", name)))
        return Local(tuple(float(v) for v in _req(t, "x0", name)), spec, name)
    if kind == "bayes":
        sd = t.get("prior_sd", [10.0] * p)
        mean = t.get("prior_mean", [0.0] * p)
        return Bayes(PriorSpec(tuple(mean), tuple(sd)), int(t.get("draws", 10_000)), name)
    if kind == "density_ratio":
        bw = t.get("bandwidths", "normal_reference")
        bandwidths = None if bw == "normal_reference" else (tuple(bw[0]), tuple(bw[1]))
        grid = tuple(tuple(float(v) for v in _as_row(g)) for g in _req(t, "grid", name))
        return DensityRatio(grid, DensityKernel.parse(t.get("kernel", "gaussian")), bandwidths, name)
    if kind == "gaussian_groupwise":
        return GaussianGroupwise(name)
    raise ScenarioError(f"unknown estimator kind {kind!r}")


def _as_row(g):
    return g if isinstance(g, (list, tuple)) else [g]


def parse_scenario(doc: dict) -> ScenarioFile:
    try:
        H = parse_covariates(_req(doc, "covariates", "scenario"))
        truth = parse_truth(_req(doc, "truth", "scenario"), H)
        p = H.d + 1
        estimators = tuple(parse_estimator(e, p) for e in doc.get("estimators", [{"kind": "mle"}]))
        scenario = Scenario(
            H=H,
            truth=truth,
            link=Link.parse(doc.get("link", "logistic")),
            n=int(doc.get("n", 1000)),
            replications=int(doc.get("replications", 100)),
            seed=int(doc.get("seed", 0)),
            estimators=estimators,
            levels=tuple(float(v) for v in doc.get("levels", [0.95])),
            name=str(doc.get("name", "scenario")),
        )
        oracle_cfg = doc.get("oracle", {})
        weight = parse_weight(oracle_cfg["weight"]) if "weight" in oracle_cfg else None
    except ScenarioError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(str(exc)) from None
    return ScenarioFile(scenario, dict(doc.get("checks", {})), weight, doc)


def load_scenario(path: str | Path) -> ScenarioFile:
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"{path}: {exc}") from None
    return parse_scenario(doc)
