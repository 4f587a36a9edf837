"""Command-line entry points.

One JSON configuration file per run; flags only override the seed, the
output directory, and the tolerance.  Validation happens before any output
path is created, so a bad invocation leaves no files behind.  Exit code 0
means every requested computation completed and every requested
certification or bound held.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import config as configs
from . import reporting
from .bounds import run_bound_family, write_counterexamples
from .follower import solve_follower
from .scenarios.contract import sweep_epsilon_ic
from .scenarios.metalearn import adaptation_estimate, resolve_task, train_meta
from .stackelberg import solve_stripe


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 2


def _load(args) -> dict | None:
    path = Path(args.config)
    if not path.is_file():
        _fail(f"config file not found: {path}")
        return None
    try:
        return configs.load_config(path)
    except configs.ConfigError as exc:
        _fail(str(exc))
        return None


def _outdir(args, cfg: dict, default: str) -> Path:
    out = Path(args.out if args.out is not None else cfg.get("out", default))
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_solve_follower(args) -> int:
    cfg = _load(args)
    if cfg is None:
        return 2
    try:
        parts = configs.follower_run(cfg, seed_override=args.seed)
    except configs.ConfigError as exc:
        return _fail(str(exc))
    sol = solve_follower(parts["mu"], parts["type_space"], parts["scenarios"],
                         parts["model"], parts["solver"])
    out = _outdir(args, cfg, "runs/follower")
    reporting.write_record(out / "result.json", sol.record())
    reporting.write_table(out / "iterates.csv", ["iteration", "best_value"],
                          sol.trace)
    reporting.fig_convergence(out / "convergence.png", sol.trace)
    print(f"value {sol.value:.12g} at x {np.array2string(sol.x_star, precision=6)}")
    print(f"iterations {sol.iterations}, converged {sol.converged}")
    print(f"results in {out}")
    return 0 if sol.converged else 1


def cmd_solve_stripe(args) -> int:
    cfg = _load(args)
    if cfg is None:
        return 2
    try:
        prob, settings = configs.stripe_run(cfg, seed_override=args.seed,
                                            epsilon_override=args.epsilon)
    except configs.ConfigError as exc:
        return _fail(str(exc))
    eq = solve_stripe(prob, settings)
    out = _outdir(args, cfg, "runs/stripe")
    record = eq.record()
    verification = eq.diagnostics.get("verification")
    if verification is not None:
        record["verification"] = verification.record()
    reporting.write_record(out / "result.json", record)
    trace = eq.diagnostics["trace"]
    m = prob.type_space.m
    dim = prob.loss_model.box.dim
    header = (["round", "penalty", "objective", "violation"]
              + [f"w_{i}" for i in range(m)] + [f"x_{i}" for i in range(dim)])
    reporting.write_table(out / "trace.csv", header, trace)
    reporting.fig_stripe_trace(out / "trace.png", trace)
    w = np.array2string(eq.mu_hat.weights, precision=6)
    print(f"leader value {eq.leader_value:.12g} at weights {w}")
    print(f"epsilon {eq.epsilon:.12g}, delta "
          f"{'n/a' if eq.delta is None else format(eq.delta, '.12g')}, "
          f"certified {eq.certified}")
    print(f"results in {out}")
    if settings.verify and not eq.certified:
        return 1
    return 0


def cmd_verify_bounds(args) -> int:
    cfg = _load(args)
    if cfg is None:
        return 2
    try:
        plan = configs.bounds_run(cfg, seed_override=args.seed,
                                  epsilon_override=args.epsilon)
    except configs.ConfigError as exc:
        return _fail(str(exc))
    reports = run_bound_family(
        plan["count"], plan["seed"], plan["epsilon"], plan["checks"],
        grid_points=plan["grid_points"], resolution=plan["resolution"],
        regularity_trials=plan["regularity_trials"],
        n_scenarios=plan["n_scenarios"])
    out = _outdir(args, cfg, "runs/bounds")
    reporting.write_record(out / "reports.json",
                           {"reports": [r.record() for r in reports]})
    rows = [[i, r.lhs, r.rhs, 1.0 if r.holds else 0.0]
            for i, r in enumerate(reports)]
    reporting.write_table(out / "reports.csv",
                          ["index", "measured", "bound", "holds"], rows)
    reporting.fig_bound_reports(out / "reports.png", reports)
    failed = [r for r in reports if not r.holds]
    if failed:
        paths = write_counterexamples(reports, out / "counterexamples")
        print(f"{len(failed)} of {len(reports)} checks FAILED; "
              f"counterexamples in {paths[0].parent}")
    else:
        print(f"all {len(reports)} checks hold")
    print(f"results in {out}")
    return 1 if failed else 0


def cmd_scenario_contract(args) -> int:
    cfg = _load(args)
    if cfg is None:
        return 2
    try:
        inst, eps_list, resolution = configs.contract_run(
            cfg, epsilon_override=args.epsilon)
    except configs.ConfigError as exc:
        return _fail(str(exc))
    try:
        sweep = sweep_epsilon_ic(inst, eps_list, resolution=resolution)
    except ValueError as exc:
        return _fail(str(exc))
    out = _outdir(args, cfg, "runs/contract")
    reporting.write_table(out / "sweep.csv",
                          ["epsilon", "principal_value", "gap"], sweep.rows())
    reporting.write_record(out / "result.json", {
        "exponent": (None if not np.isfinite(sweep.exponent)
                     else float(sweep.exponent)),
        "baseline": sweep.baseline.record(),
        "records": [r.record() for r in sweep.records],
    })
    reporting.fig_contract_sweep(out / "gap.png", sweep.epsilons, sweep.gaps,
                                 sweep.exponent)
    label = "n/a" if not np.isfinite(sweep.exponent) else f"{sweep.exponent:.3f}"
    print(f"baseline value {sweep.baseline.principal_value:.12g}, "
          f"fitted gap exponent {label}")
    print(f"results in {out}")
    return 0


def cmd_scenario_meta(args) -> int:
    cfg = _load(args)
    if cfg is None:
        return 2
    try:
        inst, train_cfg = configs.meta_run(cfg, seed_override=args.seed)
    except configs.ConfigError as exc:
        return _fail(str(exc))
    sol = train_meta(inst, train_cfg)
    m = inst.type_space.m
    estimates = np.array([adaptation_estimate(sol, inst, k) for k in range(m)])
    resolved = np.array([resolve_task(inst, k, start=sol.x_star,
                                      cfg=train_cfg).value for k in range(m)])
    out = _outdir(args, cfg, "runs/meta")
    rows = np.column_stack([np.arange(m), estimates, resolved,
                            estimates - resolved])
    reporting.write_table(out / "adaptation.csv",
                          ["task", "estimate", "resolved", "margin"], rows)
    record = sol.record()
    record["adaptation"] = [
        {"task": int(k), "estimate": float(estimates[k]),
         "resolved": float(resolved[k])} for k in range(m)]
    reporting.write_record(out / "result.json", record)
    reporting.fig_meta_adaptation(out / "adaptation.png", estimates, resolved)
    print(f"meta objective {sol.objective:.12g}, converged {sol.converged}")
    for k in range(m):
        print(f"task {k}: estimate {estimates[k]:.12g}, "
              f"re-solve {resolved[k]:.12g}")
    print(f"results in {out}")
    return 0 if sol.converged else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="riskdesign",
        description="Risk preference design: solvers, bound checks, scenarios.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("config", help="path to the JSON run configuration")
        p.add_argument("--seed", type=int, default=None,
                       help="override the scenario seed")
        p.add_argument("--out", default=None,
                       help="override the output directory")
        p.add_argument("--epsilon", type=float, default=None,
                       help="override the run tolerance")

    p = sub.add_parser("solve-follower",
                       help="solve one follower decision problem")
    add_common(p)
    p.set_defaults(func=cmd_solve_follower)

    p = sub.add_parser("solve-stripe",
                       help="solve and certify a design problem")
    add_common(p)
    p.set_defaults(func=cmd_solve_stripe)

    p = sub.add_parser("verify-bounds",
                       help="run bound checks over a randomized family")
    add_common(p)
    p.set_defaults(func=cmd_verify_bounds)

    p = sub.add_parser("scenario", help="run an application scenario")
    scen_sub = p.add_subparsers(dest="scenario", required=True)
    pc = scen_sub.add_parser("contract", help="wage design sweep")
    add_common(pc)
    pc.set_defaults(func=cmd_scenario_contract)
    pm = scen_sub.add_parser("meta", help="guided adaptation run")
    add_common(pm)
    pm.set_defaults(func=cmd_scenario_meta)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
