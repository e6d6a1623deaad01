"""Command-line entry point.

Subcommands: simulate, estimate, deviation, chain, bounds, report. Every run
writes a deterministic report.json plus a delimited table into the output
directory, and a manifest.json recording version, wall clock and the file
list. The report subcommand re-reads a report.json and renders its figure
next to a fresh copy of the table.

Exit codes: 0 success, 2 configuration errors (JSON list on stderr),
1 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import yaml

from .bar import simulate_population, state_bound
from .bounds import (
    a_r_term,
    bound_centered,
    bound_conditional,
    bound_theta,
    bound_uncentered,
    classify_regime,
    r0_threshold,
)
from .chain import (
    empirical_Qk_gap,
    ergodicity_alpha,
    estimate_mu_f,
    fit_geometric_rate,
    stationary_moments,
)
from .config import SETS, RunConfig, apply_overrides, load_config, validate_config
from .estimator import estimation_error, lse
from .experiments import (
    DeviationEstimate,
    ExperimentPlan,
    NoMass,
    StatFunction,
    decay_fit,
    mc_conditional_deviation,
    mc_deviation,
    mc_gw_lln,
    mc_theta_deviation,
    resolve_mu,
)
from .plots import render_figures
from .reports import read_report, sanitize, write_csv, write_json, write_manifest
from .rng import DOMAIN_CHAIN, DOMAIN_MU, DOMAIN_SIMULATE, derive_rng
from .tree import sample_tree, write_tree_fixture
from .bar import write_sample_fixture

__all__ = ["main"]

_MC = {
    "tilde": mc_deviation,
    "conditional": mc_conditional_deviation,
    "theta": mc_theta_deviation,
    "gw_lln": mc_gw_lln,
}


def _model_echo(rc: RunConfig) -> dict:
    law = dataclasses.asdict(rc.law)
    law["mean"] = rc.law.mean
    return {
        "law": law,
        "params": dataclasses.asdict(rc.params),
        "noise": dataclasses.asdict(rc.noise),
        "init": dataclasses.asdict(rc.init),
    }


def _write_text(path: str, text: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _tabulate(report: dict) -> tuple[str, list[str], list[list]]:
    """The delimited table for a report, shared by run and report paths."""
    kind = report["kind"]
    if kind == "simulate":
        rows = [[r, s] for r, s in enumerate(report["generation_sizes"])]
        return "generation_sizes.csv", ["r", "size"], rows
    if kind == "estimate":
        rows = [[name, report["estimate"][name], report["truth"][name]]
                for name in report["estimate"]]
        return "theta.csv", ["component", "estimate", "truth"], rows
    if kind == "deviation":
        header = ["delta", "r", "n_rep", "n_kept", "k_exceed",
                  "p_hat", "ci_low", "ci_high"]
        rows = [[e["delta"], e["r"], e["n_rep"], e["n_kept"], e["k_exceed"],
                 e["p_hat"], e["ci_low"], e["ci_high"]]
                for e in report["estimates"]]
        return "deviation.csv", header, rows
    if kind == "chain":
        rows = [[g["k"], g["gap"], g["se"]] for g in report["gaps"]]
        return "gap.csv", ["k", "gap", "se"], rows
    if kind == "bounds":
        rows = [[b["form"], b["delta"], b["r"], b["value"]]
                for b in report["bounds"]]
        return "bounds.csv", ["form", "delta", "r", "value"], rows
    raise ValueError(f"no table layout for report kind {kind!r}")


def _emit(out_dir: str, report: dict) -> list[str]:
    report = sanitize(report)
    report_path = os.path.join(out_dir, "report.json")
    write_json(report_path, report)
    name, header, rows = _tabulate(report)
    table_path = os.path.join(out_dir, name)
    write_csv(table_path, header, rows)
    return [report_path, table_path]


def _run_simulate(rc: RunConfig, out_dir: str, jobs: int = 1) -> list[str]:
    depth = rc.experiment["max_depth"]
    rng = derive_rng(rc.seed, DOMAIN_SIMULATE)
    tree = sample_tree(rc.law, depth, rng)
    sample = simulate_population(tree, rc.params, rc.noise, rc.init, rng)
    report = {
        "kind": "simulate",
        "seed": rc.seed,
        "max_depth": depth,
        "model": _model_echo(rc),
        "generation_sizes": tree.generation_sizes,
        "n_alive": tree.n_alive,
        "state_bound": state_bound(rc.params, rc.noise, rc.init),
    }
    outputs = _emit(out_dir, report)
    tree_path = os.path.join(out_dir, "tree.csv")
    sample_path = os.path.join(out_dir, "sample.csv")
    _write_text(tree_path, write_tree_fixture(tree))
    _write_text(sample_path, write_sample_fixture(sample))
    return outputs + [tree_path, sample_path]


def _run_estimate(rc: RunConfig, out_dir: str, jobs: int = 1) -> list[str]:
    n = rc.experiment["n"]
    depth = rc.experiment["max_depth"]
    rng = derive_rng(rc.seed, DOMAIN_SIMULATE)
    tree = sample_tree(rc.law, depth, rng)
    sample = simulate_population(tree, rc.params, rc.noise, rc.init, rng)
    est = lse(sample, n)
    report = {
        "kind": "estimate",
        "seed": rc.seed,
        "n": n,
        "max_depth": depth,
        "model": _model_echo(rc),
        "estimate": est.as_dict(),
        "truth": dataclasses.asdict(rc.params),
        "error": estimation_error(est, rc.params) if est.available else None,
        "class_counts": est.class_counts(),
        "degenerate": est.degenerate,
    }
    return _emit(out_dir, report)


def _run_deviation(rc: RunConfig, out_dir: str, jobs: int = 1) -> list[str]:
    e = rc.experiment
    f = StatFunction(**e["f"]) if e.get("f") else None
    plan = ExperimentPlan(
        law=rc.law, params=rc.params, noise=rc.noise, init=rc.init,
        mode=e["mode"], deltas=e["deltas"], grid=e["r_grid"], n_rep=e["n_rep"],
        seed=rc.seed, set_kind=SETS[e["set"]], f=f, centered=e["centered"],
        a=e["a"], w_depth=e["w_depth"], mu_burn_in=e["mu"]["burn_in"],
        mu_length=e["mu"]["length"], mu_chains=e["mu"]["n_chains"])
    plan, mu_info = resolve_mu(plan)
    results = _MC[plan.mode](plan, jobs=jobs)
    estimates = [r for r in results if isinstance(r, DeviationEstimate)]
    no_mass = [r for r in results if isinstance(r, NoMass)]
    m = rc.law.mean
    alpha = ergodicity_alpha(rc.params)
    sk = SETS[e["set"]]
    recentred = plan.centered or (plan.f is not None and plan.f.subtract_mu)
    bound_rows = []
    for d in plan.deltas:
        for g in plan.grid:
            try:
                if plan.mode == "tilde":
                    v = (bound_centered if recentred else bound_uncentered)(
                        d, g, m, alpha, plan.set_kind, rc.constants)
                elif plan.mode == "conditional":
                    v = bound_conditional(d, g, m, alpha, plan.set_kind, rc.constants)
                elif plan.mode == "theta":
                    v = bound_theta(d, g, m, alpha, rc.constants)
                else:
                    v = a_r_term(d, g, m, plan.set_kind, rc.constants)
            except ValueError:
                v = None
            bound_rows.append({"delta": d, "r": g, "value": v})
    fits: dict[str, dict] = {}
    for d in plan.deltas:
        entry: dict[str, object] = {}
        sub = [r for r in estimates if r.delta == d]
        for transform in ("vs_r", "vs_h_r"):
            try:
                entry[transform] = decay_fit(sub, transform, m=rc.law.mean,
                                             set_kind=plan.set_kind)
            except ValueError:
                entry[transform] = None
        fits[repr(d)] = entry
    report = {
        "kind": "deviation",
        "mode": plan.mode,
        "set": e["set"],
        "seed": rc.seed,
        "model": _model_echo(rc),
        "experiment": {
            "deltas": plan.deltas, "r_grid": plan.grid, "n_rep": plan.n_rep,
            "centered": plan.centered, "a": plan.a, "w_depth": plan.w_depth,
            "f": dataclasses.asdict(plan.f) if plan.f else None,
        },
        "mu": mu_info or None,
        "estimates": estimates,
        "no_mass": no_mass,
        "decay_fits": fits,
        "regime": classify_regime(m, alpha).value,
        "bounds": bound_rows,
        "constants": rc.constants,
    }
    return _emit(out_dir, report)


def _run_chain(rc: RunConfig, out_dir: str, jobs: int = 1) -> list[str]:
    e = rc.experiment
    f = StatFunction(**e["f"]).base_callable()
    mu1, mu2 = stationary_moments(rc.law, rc.params, rc.noise)
    alpha = ergodicity_alpha(rc.params)
    mu_hat, mu_se = estimate_mu_f(
        f, rc.law, rc.params, rc.noise, rc.init, derive_rng(rc.seed, DOMAIN_MU),
        burn_in=e["mu"]["burn_in"], length=e["mu"]["length"],
        n_chains=e["mu"]["n_chains"])
    curve = empirical_Qk_gap(
        f, e["x_grid"], e["k_max"], e["n_rep"], rc.law, rc.params, rc.noise,
        derive_rng(rc.seed, DOMAIN_CHAIN), mu_hat=mu_hat, mu_se=mu_se,
        init=rc.init)
    try:
        fit = fit_geometric_rate(curve)
    except ValueError:
        fit = None
    report = {
        "kind": "chain",
        "seed": rc.seed,
        "model": _model_echo(rc),
        "experiment": {"f": e["f"], "x_grid": e["x_grid"], "k_max": e["k_max"],
                       "n_rep": e["n_rep"], "mu": e["mu"]},
        "moments": {"mu1": mu1, "mu2": mu2},
        "alpha": alpha,
        "mu_hat": mu_hat,
        "mu_se": mu_se,
        "floor": curve.floor,
        "gaps": [{"k": k, "gap": g, "se": s} for k, g, s in curve.as_rows()],
        "rate_fit": fit,
    }
    return _emit(out_dir, report)


def _run_bounds(rc: RunConfig, out_dir: str, jobs: int = 1) -> list[str]:
    e = rc.experiment
    m = rc.law.mean
    alpha = ergodicity_alpha(rc.params)
    sk = SETS[e["set"]]
    c = rc.constants
    rows = []
    for form in e["forms"]:
        for d in e["deltas"]:
            for r in e["r_grid"]:
                if form == "centered":
                    v = bound_centered(d, r, m, alpha, sk, c)
                elif form == "uncentered":
                    v = bound_uncentered(d, r, m, alpha, sk, c)
                elif form == "conditional":
                    v = bound_conditional(d, r, m, alpha, sk, c)
                else:
                    v = bound_theta(d, r, m, alpha, c)
                rows.append({"form": form, "delta": d, "r": r, "value": v})
    report = {
        "kind": "bounds",
        "seed": rc.seed,
        "model": _model_echo(rc),
        "set": e["set"],
        "regime": classify_regime(m, alpha).value,
        "m": m,
        "alpha": alpha,
        "constants": rc.constants,
        "r0": {repr(d): r0_threshold(d, alpha, c) for d in e["deltas"]},
        "bounds": rows,
    }
    return _emit(out_dir, report)


def _run_report(rc: RunConfig, out_dir: str, jobs: int = 1) -> list[str]:
    report = read_report(rc.report_input)
    name, header, rows = _tabulate(report)
    table_path = os.path.join(out_dir, name)
    write_csv(table_path, header, rows)
    figures = render_figures(report, out_dir)
    return [table_path] + figures


_RUNNERS = {
    "simulate": _run_simulate,
    "estimate": _run_estimate,
    "deviation": _run_deviation,
    "chain": _run_chain,
    "bounds": _run_bounds,
    "report": _run_report,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="barlab",
        description="Bifurcating autoregressions with missing data: "
                    "simulation, estimation, deviation probabilities and bounds.")
    sub = parser.add_subparsers(dest="command", required=True)
    specs = {
        "simulate": "sample one genealogy and its values, write fixtures",
        "estimate": "least-squares coefficients from one simulated population",
        "deviation": "Monte Carlo deviation probabilities over a depth grid",
        "chain": "lineage-chain moments and empirical mixing gaps",
        "bounds": "closed-form deviation bounds on a (delta, depth) grid",
        "report": "render figures and tables from an existing report.json",
    }
    for name, help_text in specs.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="YAML run configuration")
        p.add_argument("--set", action="append", default=[], metavar="PATH=VALUE",
                       help="override a config entry (dotted path, YAML value)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--jobs", type=int, default=1,
                       help="worker processes (results do not depend on this)")
        if name == "report":
            p.add_argument("--input", help="path to a report.json")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        raw = load_config(args.config) if args.config else {}
        raw = apply_overrides(raw, args.set)
    except (OSError, ValueError, yaml.YAMLError) as exc:
        print(json.dumps({"errors": [{"field": "config", "reason": str(exc)}]},
                         indent=2), file=sys.stderr)
        return 2
    if getattr(args, "input", None):
        raw.setdefault("report", {})["input"] = args.input
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.out:
        raw["output"] = args.out
    rc, errors = validate_config(raw, args.command)
    if errors:
        print(json.dumps({"errors": [e.as_dict() for e in errors]}, indent=2),
              file=sys.stderr)
        return 2
    out_dir = rc.output or os.path.join("out", rc.command)
    jobs = max(1, getattr(args, "jobs", 1))
    try:
        os.makedirs(out_dir, exist_ok=True)
        outputs = _RUNNERS[rc.command](rc, out_dir, jobs=jobs)
        outputs.append(write_manifest(out_dir, rc.command, rc.seed, outputs,
                                      extra={"config": rc.raw}))
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in outputs:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
