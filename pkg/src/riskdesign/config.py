"""Run configuration parsing.

JSON files describe one run each.  Validation is strict: unknown keys are
rejected everywhere so that typos fail loudly before any computation starts.
Builders return the domain objects the solvers consume.
"""
from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from .follower import Box, LossModel, ScenarioSet, SolverConfig
from .risk import RiskSpectrum
from .scenarios.contract import ContractInstance
from .scenarios.metalearn import MetaConfig, MetaInstance
from .stackelberg import LeaderLoss, StripeConfig, StripeProblem
from .typespace import TypeDistribution, TypeSpace


class ConfigError(ValueError):
    """Raised when a configuration file fails validation."""


def load_config(path) -> dict:
    path = Path(path)
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return cfg


def _check_keys(d: dict, where: str, required=(), optional=()):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = sorted(set(d) - set(required) - set(optional))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    missing = sorted(set(required) - set(d))
    if missing:
        raise ConfigError(f"{where}: missing keys {missing}")


def build_spectrum(d, where: str) -> RiskSpectrum:
    _check_keys(d, where, required=("kind",),
                optional=("alpha", "theta", "kappa", "breakpoints", "jumps"))
    kind = d["kind"]
    try:
        if kind == "flat":
            _check_keys(d, where, required=("kind",))
            return RiskSpectrum.flat()
        if kind == "tail-average":
            _check_keys(d, where, required=("kind", "alpha"))
            return RiskSpectrum.tail_average(float(d["alpha"]))
        if kind == "mean-semideviation":
            _check_keys(d, where, required=("kind", "theta"), optional=("kappa",))
            return RiskSpectrum.mean_semideviation(float(d["theta"]),
                                                   float(d.get("kappa", 0.5)))
        if kind == "pairs":
            _check_keys(d, where, required=("kind", "breakpoints", "jumps"))
            return RiskSpectrum(d["breakpoints"], d["jumps"])
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    raise ConfigError(f"{where}: unknown spectrum kind {kind!r}")


def build_type_space(d, where: str) -> TypeSpace:
    _check_keys(d, where, required=("locations", "spectra"))
    spectra = [build_spectrum(s, f"{where}.spectra[{i}]")
               for i, s in enumerate(d["spectra"])]
    try:
        return TypeSpace(d["locations"], spectra)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def build_distribution(v, where: str) -> TypeDistribution:
    try:
        return TypeDistribution(v)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def build_box(d, where: str) -> Box:
    _check_keys(d, where, required=("lower", "upper"))
    try:
        return Box(np.asarray(d["lower"], dtype=float),
                   np.asarray(d["upper"], dtype=float))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def build_scenarios(d, where: str, seed_override: int | None = None) -> ScenarioSet:
    _check_keys(d, where, optional=("kind", "n", "seed", "path", "low", "high",
                                    "mean", "std", "dim", "separation"))
    if "path" in d:
        _check_keys(d, where, required=("path",))
        try:
            return ScenarioSet.load_table(d["path"])
        except OSError as exc:
            raise ConfigError(f"{where}: cannot read {d['path']} ({exc})") from exc
    _check_keys(d, where, required=("kind", "n", "seed"),
                optional=("low", "high", "mean", "std", "dim", "separation"))
    params = {k: d[k] for k in ("low", "high", "mean", "std", "dim", "separation")
              if k in d}
    seed = int(d["seed"]) if seed_override is None else int(seed_override)
    try:
        return ScenarioSet.generate(d["kind"], int(d["n"]), seed, **params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def build_model(d, where: str) -> LossModel:
    _check_keys(d, where, required=("kind", "box"),
                optional=("scale", "over_cost", "under_cost"))
    box = build_box(d["box"], f"{where}.box")
    try:
        return LossModel(kind=d["kind"], box=box,
                         scale=float(d.get("scale", 1.0)),
                         over_cost=float(d.get("over_cost", 1.0)),
                         under_cost=float(d.get("under_cost", 1.0)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def build_leader(d, where: str) -> LeaderLoss:
    _check_keys(d, where, required=("kind",), optional=("target", "scale"))
    target = d.get("target")
    try:
        return LeaderLoss(kind=d["kind"],
                          target=(None if target is None
                                  else np.asarray(target, dtype=float)),
                          scale=float(d.get("scale", 1.0)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


_SOLVER_KEYS = ("max_iter", "step_scale", "tolerance", "check_every",
                "patience", "polish", "polish_sweeps", "polish_iters")


def build_solver(d, where: str) -> SolverConfig:
    _check_keys(d, where, optional=_SOLVER_KEYS)
    try:
        return SolverConfig(**{k: d[k] for k in _SOLVER_KEYS if k in d})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


_STRIPE_KEYS = ("epsilon", "feas_tol", "penalty_init", "penalty_growth",
                "max_outer", "inner_iter", "step_scale_x", "step_scale_mu",
                "multistart", "verify", "verify_x_points", "verify_resolution",
                "delta_margin", "lattice_cap")


def build_stripe_settings(d, where: str) -> StripeConfig:
    _check_keys(d, where, optional=_STRIPE_KEYS + ("follower",))
    kwargs = {k: d[k] for k in _STRIPE_KEYS if k in d}
    if "follower" in d:
        kwargs["follower"] = build_solver(d["follower"], f"{where}.follower")
    try:
        return StripeConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def follower_run(cfg: dict, seed_override: int | None = None) -> dict:
    """Validated pieces of a follower solve: mu, type space, data, model."""
    _check_keys(cfg, "config", required=("type_space", "mu", "scenarios", "model"),
                optional=("solver", "out"))
    ts = build_type_space(cfg["type_space"], "type_space")
    mu = build_distribution(cfg["mu"], "mu")
    if mu.m != ts.m:
        raise ConfigError("mu: length must match the number of types")
    return {
        "type_space": ts,
        "mu": mu,
        "scenarios": build_scenarios(cfg["scenarios"], "scenarios", seed_override),
        "model": build_model(cfg["model"], "model"),
        "solver": build_solver(cfg.get("solver", {}), "solver"),
    }


def stripe_run(cfg: dict, seed_override: int | None = None,
               epsilon_override: float | None = None,
               gamma_override: float | None = None):
    _check_keys(cfg, "config",
                required=("type_space", "mu0", "gamma", "leader", "model",
                          "scenarios"),
                optional=("settings", "out"))
    ts = build_type_space(cfg["type_space"], "type_space")
    mu0 = build_distribution(cfg["mu0"], "mu0")
    gamma = float(cfg["gamma"]) if gamma_override is None else float(gamma_override)
    if gamma <= 0.0:
        raise ConfigError("gamma: must be positive")
    try:
        prob = StripeProblem(
            type_space=ts,
            mu0=mu0,
            gamma=gamma,
            leader_loss=build_leader(cfg["leader"], "leader"),
            loss_model=build_model(cfg["model"], "model"),
            scenarios=build_scenarios(cfg["scenarios"], "scenarios", seed_override),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    settings = build_stripe_settings(cfg.get("settings", {}), "settings")
    if epsilon_override is not None:
        settings = dataclasses.replace(settings, epsilon=float(epsilon_override))
    return prob, settings


_BOUND_CHECKS = ("set-deviation", "performance-reduction", "compromise")


def bounds_run(cfg: dict, seed_override: int | None = None,
               epsilon_override: float | None = None) -> dict:
    _check_keys(cfg, "config", required=("family", "checks", "epsilon"),
                optional=("grid_points", "resolution", "regularity_trials",
                          "out"))
    fam = cfg["family"]
    _check_keys(fam, "family", required=("count", "seed"),
                optional=("n_scenarios",))
    checks = cfg["checks"]
    if not isinstance(checks, list) or not checks:
        raise ConfigError("checks: need a nonempty list")
    for c in checks:
        if c not in _BOUND_CHECKS:
            raise ConfigError(f"checks: unknown check {c!r} "
                              f"(choose from {list(_BOUND_CHECKS)})")
    eps = float(cfg["epsilon"]) if epsilon_override is None else float(epsilon_override)
    if eps <= 0.0:
        raise ConfigError("epsilon: must be positive")
    return {
        "count": int(fam["count"]),
        "seed": int(fam["seed"]) if seed_override is None else int(seed_override),
        "n_scenarios": int(fam.get("n_scenarios", 96)),
        "checks": list(checks),
        "epsilon": eps,
        "grid_points": int(cfg.get("grid_points", 1001)),
        "resolution": int(cfg.get("resolution", 50)),
        "regularity_trials": int(cfg.get("regularity_trials", 300)),
    }


def contract_run(cfg: dict, epsilon_override: float | None = None):
    _check_keys(cfg, "config", required=("instance", "epsilons"),
                optional=("resolution", "out"))
    inst_cfg = cfg["instance"]
    _check_keys(inst_cfg, "instance",
                required=("outcomes", "p_low", "p_high", "type_space", "mu0",
                          "gamma", "wage_levels", "action_grid"),
                optional=("effort_cost", "utility_kink", "utility_slope",
                          "reservation"))
    ts = build_type_space(inst_cfg["type_space"], "instance.type_space")
    kwargs = {}
    for k in ("effort_cost", "utility_kink", "utility_slope", "reservation"):
        if k in inst_cfg:
            kwargs[k] = float(inst_cfg[k])
    try:
        inst = ContractInstance(
            outcomes=np.asarray(inst_cfg["outcomes"], dtype=float),
            p_low=np.asarray(inst_cfg["p_low"], dtype=float),
            p_high=np.asarray(inst_cfg["p_high"], dtype=float),
            type_space=ts,
            mu0=build_distribution(inst_cfg["mu0"], "instance.mu0"),
            gamma=float(inst_cfg["gamma"]),
            wage_levels=np.asarray(inst_cfg["wage_levels"], dtype=float),
            action_grid=np.asarray(inst_cfg["action_grid"], dtype=float),
            **kwargs,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"instance: {exc}") from exc
    eps = [float(e) for e in cfg["epsilons"]]
    if epsilon_override is not None:
        eps = sorted(set(eps) | {float(epsilon_override)})
    return inst, eps, int(cfg.get("resolution", 10))


_META_TRAIN_KEYS = ("max_iter", "init_step", "shrink", "max_halvings",
                    "tolerance")


def meta_run(cfg: dict, seed_override: int | None = None):
    _check_keys(cfg, "config", required=("instance",),
                optional=("training", "out"))
    inst_cfg = cfg["instance"]
    _check_keys(inst_cfg, "instance",
                required=("data", "type_space", "mu", "step", "box"),
                optional=("guidance", "guidance_weight"))
    ts = build_type_space(inst_cfg["type_space"], "instance.type_space")
    guidance = None
    if "guidance" in inst_cfg:
        guidance = build_leader(inst_cfg["guidance"], "instance.guidance")
    scen = build_scenarios(inst_cfg["data"], "instance.data", seed_override)
    try:
        inst = MetaInstance.from_scenarios(
            scen,
            type_space=ts,
            mu=build_distribution(inst_cfg["mu"], "instance.mu"),
            step=float(inst_cfg["step"]),
            box=build_box(inst_cfg["box"], "instance.box"),
            guidance=guidance,
            guidance_weight=float(inst_cfg.get("guidance_weight", 0.0)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"instance: {exc}") from exc
    train_cfg = cfg.get("training", {})
    _check_keys(train_cfg, "training", optional=_META_TRAIN_KEYS)
    try:
        mc = MetaConfig(**{k: train_cfg[k] for k in _META_TRAIN_KEYS
                           if k in train_cfg})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"training: {exc}") from exc
    return inst, mc
