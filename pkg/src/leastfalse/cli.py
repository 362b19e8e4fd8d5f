"""Command-line entry point.

Exit codes: 0 success, 2 input/parse error, 3 fit failure, 4 oracle
divergence, 5 simulation failure budget exceeded.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from ._linalg import SingularInformationError
from .core import DatasetError, DimensionError, Link, read_csv
from .fit import FitConfig, FitStatus, Kernel, KernelSpec, fit_mle, local_probability_curve
from .nonparam import DensityKernel, density_ratio_with_flags, estimate_priors, split_classes
from .oracle import OracleDivergenceError, least_false
from .sandwich import BootstrapFailureError, Flavor, covariance_report, misspecification_test, wald_interval
from .scenario_io import ScenarioError, load_scenario
from .simulation import FailureBudgetExceeded, ReplicationSummary, run_experiment

EXIT_PARSE, EXIT_FIT, EXIT_ORACLE, EXIT_BUDGET = 2, 3, 4, 5


class CliError(Exception):
    def __init__(self, code: int, kind: str, message: str, **extra):
        super().__init__(message)
        self.code, self.kind, self.extra = code, kind, extra


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


def _emit(text: str, output: str | None) -> None:
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _matrix(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def _load_data(path: str):
    try:
        return read_csv(path)
    except FileNotFoundError:
        raise CliError(EXIT_PARSE, "ParseError", f"no such file: {path}") from None
    except (DatasetError, DimensionError) as exc:
        raise CliError(EXIT_PARSE, "ParseError", str(exc)) from None


def _fit_config(args) -> FitConfig:
    return FitConfig(args.max_iterations, args.gradient_tolerance, args.step_halving_limit)


def _fit_or_fail(link, data, cfg):
    res = fit_mle(link, data, cfg)
    if not res.converged:
        raise CliError(EXIT_FIT, "FitFailure", f"fit did not converge: {res.status.value}", status=res.status.value,
                       iterations=res.iterations, beta=res.beta_hat.tolist())
    return res


# -- commands -------------------------------------------------------------------


def cmd_fit(args) -> int:
    link = Link.parse(args.link)
    data = _load_data(args.dataset)
    cfg = _fit_config(args)
    res = _fit_or_fail(link, data, cfg)
    try:
        rep = covariance_report(link, res, data)
    except SingularInformationError as exc:
        raise CliError(EXIT_FIT, "FitFailure", str(exc), status=FitStatus.SINGULAR_INFORMATION.value) from None
    coefs = []
    for u in range(data.p):
        coefs.append({
            "index": u,
            "name": "intercept" if u == 0 else f"x{u}",
            "estimate": float(res.beta_hat[u]),
            "se_naive": float(np.sqrt(rep.naive_cov[u, u])),
            "se_sandwich": float(np.sqrt(rep.sandwich_cov[u, u])),
            "ci_naive": list(wald_interval(rep, res.beta_hat, u, args.level, Flavor.NAIVE)),
            "ci_sandwich": list(wald_interval(rep, res.beta_hat, u, args.level, Flavor.SANDWICH)),
        })
    out = {
        "config": {
            "command": "fit",
            "dataset": args.dataset,
            "link": link.value,
            "level": args.level,
            "max_iterations": cfg.max_iterations,
            "gradient_tolerance": cfg.gradient_tolerance,
            "step_halving_limit": cfg.step_halving_limit,
            "initial_beta": "zeros",
        },
        "n": data.n,
        "d": data.d,
        "status": res.status.value,
        "converged": res.converged,
        "iterations": res.iterations,
        "final_score_norm": res.final_score_norm,
        "log_likelihood": res.log_likelihood_at_optimum,
        "beta_hat": res.beta_hat.tolist(),
        "coefficients": coefs,
        "J_hat": _matrix(rep.J_hat),
        "K_hat": _matrix(rep.K_hat),
        "naive_cov": _matrix(rep.naive_cov),
        "sandwich_cov": _matrix(rep.sandwich_cov),
    }
    _emit(_dump(out), args.output)
    return 0


def _load_scenario(path: str):
    try:
        return load_scenario(path)
    except FileNotFoundError:
        raise CliError(EXIT_PARSE, "ParseError", f"no such file: {path}") from None
    except (ScenarioError, ValueError, TypeError) as exc:
        raise CliError(EXIT_PARSE, "ParseError", str(exc)) from None


def cmd_oracle(args) -> int:
    sf = _load_scenario(args.scenario)
    sc = sf.scenario
    try:
        lf = least_false(sc.link, sc.H, sc.truth, args.tolerance, weight=sf.oracle_weight)
    except OracleDivergenceError as exc:
        raise CliError(EXIT_ORACLE, "OracleDivergence", str(exc)) from None
    out = {
        "config": {
            "command": "oracle",
            "scenario": args.scenario,
            "name": sc.name,
            "link": sc.link.value,
            "tolerance": args.tolerance,
            "weighted": sf.oracle_weight is not None,
            "covariates": sf.raw.get("covariates"),
            "truth": sf.raw.get("truth"),
        },
        "beta0": lf.beta0.tolist(),
        "delta_at_beta0": lf.delta_at_beta0,
        "J": _matrix(lf.population_J),
        "K": _matrix(lf.population_K),
        "sandwich": _matrix(lf.population_sandwich),
        "naive": _matrix(np.linalg.inv(lf.population_J)),
        "score_norm": lf.score_norm,
        "integration_error_estimate": lf.integration_error_estimate,
        "iterations": lf.iterations,
    }
    _emit(_dump(out), args.output)
    return 0


def evaluate_checks(summary: ReplicationSummary, checks: dict) -> list[dict]:
    """Verdicts for the thresholds declared in a scenario's ``[checks]`` table."""
    verdicts = []
    z_max = checks.get("mean_z_max")
    rel_tol = checks.get("covariance_rel_tol")
    band = checks.get("coverage_band")
    naive_out = checks.get("naive_outside_band", False)
    level = float(checks.get("coverage_level", 0.95))
    for name, est in summary.estimators.items():
        if est.oracle_sandwich is None:
            continue

        def add(check, passed, detail):
            verdicts.append({"estimator": name, "check": check,
                             "verdict": "UNDEFINED" if passed is None else ("PASS" if passed else "FAIL"), "detail": detail})

        if z_max is not None:
            z = summary.mean_z_scores(name)
            if z is None:
                add("mean_within_mc_se", None, "fewer than two successful replications")
            else:
                add("mean_within_mc_se", bool(np.all(np.abs(z) <= z_max)), f"max|z|={np.max(np.abs(z)):.3f} <= {z_max}")
        if rel_tol is not None:
            rel = summary.covariance_relative_error(name)
            if rel is None:
                add("sandwich_covariance_agreement", None, "covariance undefined")
            else:
                worst = float(np.nanmax(rel)) if np.any(np.isfinite(rel)) else 0.0
                add("sandwich_covariance_agreement", worst <= rel_tol, f"max relative error={worst:.4f} <= {rel_tol}")
        if band is not None and level in est.coverage:
            rates = est.coverage_rates()[level]
            lo, hi = band
            sw = rates[Flavor.SANDWICH.value]
            add("sandwich_coverage_in_band", all(lo <= c <= hi for c in sw), f"sandwich coverage={sw} in [{lo}, {hi}]")
            if naive_out:
                nv = rates[Flavor.NAIVE.value]
                add("naive_coverage_outside_band", any(not lo <= c <= hi for c in nv), f"naive coverage={nv} outside [{lo}, {hi}]")
    return verdicts


def cmd_simulate(args) -> int:
    sf = _load_scenario(args.scenario)
    sc = sf.scenario
    if args.seed is not None:
        sc = replace(sc, seed=args.seed)
    elif not sf.has_seed:
        raise CliError(EXIT_PARSE, "ParseError", "a seed is required: set 'seed' in the scenario or pass --seed")
    if args.replications is not None:
        sc = sc.with_n(sc.n, args.replications)
    try:
        summary = run_experiment(sc)
    except FailureBudgetExceeded as exc:
        raise CliError(EXIT_BUDGET, "FailureBudgetExceeded", str(exc)) from None
    except OracleDivergenceError as exc:
        raise CliError(EXIT_ORACLE, "OracleDivergence", str(exc)) from None
    verdicts = evaluate_checks(summary, sf.checks)
    doc = summary.to_dict()
    doc["config"] = {"command": "simulate", "scenario": args.scenario, "file": sf.raw, "seed": sc.seed,
                     "replications": sc.replications}
    doc["checks"] = verdicts
    prefix = Path(args.out or sc.name)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    Path(f"{prefix}.json").write_text(_dump(doc) + "\n", encoding="utf-8")
    Path(f"{prefix}.csv").write_text(summary.to_csv(), encoding="utf-8")
    for v in verdicts:
        print(f"{v['verdict']:9s} {v['estimator']}: {v['check']} ({v['detail']})")
    print(f"wrote {prefix}.json and {prefix}.csv")
    return 0


def cmd_goftest(args) -> int:
    link = Link.parse(args.link)
    data = _load_data(args.dataset)
    cfg = _fit_config(args)
    res = _fit_or_fail(link, data, cfg)
    try:
        rep = misspecification_test(link, res, data, args.replicates, args.seed, cfg)
    except BootstrapFailureError as exc:
        raise CliError(EXIT_FIT, "BootstrapFailure", str(exc)) from None
    except ValueError as exc:
        raise CliError(EXIT_PARSE, "ParseError", str(exc)) from None
    out = {
        "config": {"command": "goftest", "dataset": args.dataset, "link": link.value, "replicates": args.replicates,
                   "seed": args.seed, "max_iterations": cfg.max_iterations,
                   "gradient_tolerance": cfg.gradient_tolerance, "step_halving_limit": cfg.step_halving_limit},
        "statistic": rep.statistic,
        "p_value": rep.p_value,
        "bootstrap_replicates": rep.bootstrap_replicates,
        "dropped_replicates": rep.dropped_replicates,
        "seed": rep.seed,
        "beta_hat": res.beta_hat.tolist(),
    }
    _emit(_dump(out), args.output)
    return 0


def _grid(args, d: int) -> np.ndarray:
    if args.grid_file:
        g = read_grid_file(args.grid_file)
    elif args.grid:
        try:
            start, stop, num = args.grid.split(":")
            g = np.linspace(float(start), float(stop), int(num))[:, None]
        except ValueError:
            raise CliError(EXIT_PARSE, "ParseError", "--grid must look like START:STOP:NUM") from None
    else:
        raise CliError(EXIT_PARSE, "ParseError", "a grid is required (--grid or --grid-file)")
    if g.shape[1] != d:
        raise CliError(EXIT_PARSE, "ParseError", f"grid has {g.shape[1]} columns, dataset has {d} covariates")
    return g


def read_grid_file(path: str) -> np.ndarray:
    try:
        return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise CliError(EXIT_PARSE, "ParseError", f"bad grid file: {exc}") from None


def _bandwidth(values, d: int) -> tuple[float, ...]:
    bw = tuple(values)
    if len(bw) == 1 and d > 1:
        bw = bw * d
    if len(bw) != d:
        raise CliError(EXIT_PARSE, "ParseError", f"{len(bw)} bandwidths for {d} covariates")
    return bw


def cmd_local_curve(args) -> int:
    link = Link.parse(args.link)
    data = _load_data(args.dataset)
    grid = _grid(args, data.d)
    try:
        spec = KernelSpec(Kernel.parse(args.kernel), _bandwidth(args.bandwidth, data.d))
    except ValueError as exc:
        raise CliError(EXIT_PARSE, "ParseError", str(exc)) from None
    curve = local_probability_curve(link, data, grid, spec, _fit_config(args))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{j}" for j in range(1, data.d + 1)] + ["q_star"] + [f"beta_{j}" for j in range(data.p)] + ["status", "error"])
    for pt in curve:
        beta = [""] * data.p if pt.beta is None else [repr(float(b)) for b in pt.beta]
        w.writerow([repr(float(v)) for v in pt.x[1:]] + [repr(pt.q)] + beta + [pt.status, pt.error or ""])
    if curve and all(pt.error for pt in curve):
        _emit(buf.getvalue(), args.output)
        raise CliError(EXIT_FIT, "FitFailure", "local fit failed at every grid point")
    _emit(buf.getvalue(), args.output)
    return 0


def cmd_density_ratio(args) -> int:
    data = _load_data(args.dataset)
    grid = _grid(args, data.d)
    bws = None
    if args.bandwidth0 or args.bandwidth1:
        if not (args.bandwidth0 and args.bandwidth1):
            raise CliError(EXIT_PARSE, "ParseError", "give both --bandwidth0 and --bandwidth1, or neither")
        bws = (_bandwidth(args.bandwidth0, data.d), _bandwidth(args.bandwidth1, data.d))
    try:
        c0, c1 = split_classes(data)
        q, fallback = density_ratio_with_flags(c0, c1, estimate_priors(data), grid, DensityKernel.parse(args.kernel), bws)
    except ValueError as exc:
        raise CliError(EXIT_PARSE, "ParseError", str(exc)) from None
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{j}" for j in range(1, data.d + 1)] + ["q_hat", "prior_fallback"])
    for x, qv, fb in zip(grid, q, fallback):
        w.writerow([repr(float(v)) for v in x] + [repr(float(qv)), int(fb)])
    _emit(buf.getvalue(), args.output)
    return 0


# -- parser ------------------------------------------------------------------


def _add_fit_flags(p):
    p.add_argument("--link", default="logistic", choices=[l.value for l in Link])
    p.add_argument("--max-iterations", type=int, default=FitConfig.max_iterations)
    p.add_argument("--gradient-tolerance", type=float, default=FitConfig.gradient_tolerance)
    p.add_argument("--step-halving-limit", type=int, default=FitConfig.step_halving_limit)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="leastfalse", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a dataset and report naive and sandwich inference")
    p.add_argument("dataset")
    _add_fit_flags(p)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("oracle", help="least false parameter and population J, K for a scenario")
    p.add_argument("scenario")
    p.add_argument("--tolerance", type=float, default=1e-10)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("simulate", help="run a scenario's replicated experiment")
    p.add_argument("scenario")
    p.add_argument("--seed", type=int)
    p.add_argument("--replications", type=int)
    p.add_argument("--out", help="output prefix for PREFIX.json and PREFIX.csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("goftest", help="bootstrap test comparing J_hat with K_hat")
    p.add_argument("dataset")
    _add_fit_flags(p)
    p.add_argument("--replicates", type=int, default=200)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_goftest)

    p = sub.add_parser("local-curve", help="kernel-local likelihood probability curve")
    p.add_argument("dataset")
    _add_fit_flags(p)
    p.add_argument("--grid", help="START:STOP:NUM for one covariate; write --grid=-1:1:21 when START is negative")
    p.add_argument("--grid-file", help="CSV with header x1,...,xd")
    p.add_argument("--kernel", default="gaussian", choices=[k.value for k in Kernel])
    p.add_argument("--bandwidth", type=float, nargs="+", required=True)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_local_curve)

    p = sub.add_parser("density-ratio", help="class probability from two kernel density estimates")
    p.add_argument("dataset")
    p.add_argument("--grid", help="START:STOP:NUM for one covariate")
    p.add_argument("--grid-file")
    p.add_argument("--kernel", default="gaussian", choices=[k.value for k in DensityKernel])
    p.add_argument("--bandwidth0", type=float, nargs="+")
    p.add_argument("--bandwidth1", type=float, nargs="+")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_density_ratio)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        err = {"error": {"type": exc.kind, "message": str(exc), "exit_code": exc.code, **exc.extra}}
        sys.stdout.write(_dump(err) + "\n")
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
