"""Empirical verification of the sensitivity and compromise bounds.

All checks here use pure grid semantics: optimal values are grid minima,
optimal sets are grid argmin sets, and every estimated constant (growth,
Lipschitz, metric regularity) is taken over the same grids that the
inequalities are evaluated on.  Reports either hold or produce a persistable
counterexample record.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .follower import Box, FollowerGrid, LossModel, ScenarioSet
from .risk import RiskSpectrum
from .stackelberg import (
    Equilibrium,
    LeaderLoss,
    StripeProblem,
    brute_force_stripe,
    simplex_lattice,
)
from .typespace import TypeDistribution, TypeSpace, _weights_of, wasserstein1


@dataclass
class GrowthEstimate:
    """Second-order growth constant of the follower objective on a grid."""

    iota: float
    u_star: float
    star_points: np.ndarray = field(repr=False)
    exclusion_radius: float
    grid_spacing: float
    eligible: int

    def record(self) -> dict:
        return {
            "iota": float(self.iota),
            "u_star": float(self.u_star),
            "star_count": int(self.star_points.shape[0]),
            "exclusion_radius": float(self.exclusion_radius),
            "grid_spacing": float(self.grid_spacing),
            "eligible": int(self.eligible),
        }


@dataclass
class BoundReport:
    """One inequality instance: measured left side against its bound."""

    name: str
    lhs: float
    rhs: float
    holds: bool
    inputs: dict = field(default_factory=dict)

    def record(self) -> dict:
        return {
            "name": self.name,
            "lhs": float(self.lhs),
            "rhs": float(self.rhs),
            "holds": bool(self.holds),
            "inputs": self.inputs,
        }


@dataclass
class RegularityEstimate:
    """Largest observed transport-to-decision distance ratio."""

    value: float
    trials_used: int
    skipped: int


_SLACK = 1e-12


def _as_points(arr) -> np.ndarray:
    pts = np.asarray(arr, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    return pts


def _grid_spacing(points: np.ndarray) -> float:
    spacing = 0.0
    for j in range(points.shape[1]):
        uniq = np.unique(points[:, j])
        if uniq.size > 1:
            spacing = max(spacing, float(np.diff(uniq).max()))
    return spacing


def _min_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from each row of ``a`` to its nearest row of ``b``."""
    diffs = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.square(diffs).sum(axis=2)).min(axis=1)


def set_deviation(a, b) -> float:
    """One-sided deviation: worst distance from a point of ``a`` to ``b``."""
    a = _as_points(a)
    b = _as_points(b)
    if b.shape[0] == 0:
        raise ValueError("reference set must be nonempty")
    if a.shape[0] == 0:
        return 0.0
    return float(_min_dists(a, b).max())


def estimate_growth_constant(mu_bar, prob: StripeProblem, x_grid,
                             exclusion_radius: float | None = None,
                             star_tol: float = 1e-6,
                             fg: FollowerGrid | None = None) -> GrowthEstimate:
    """Smallest quadratic-growth ratio away from the grid optimal set.

    Points within ``exclusion_radius`` of the optimal set (default twice the
    grid spacing) are ignored so that discretization noise next to the
    minimizers cannot drive the ratio.
    """
    if fg is None:
        fg = FollowerGrid(prob.type_space, prob.scenarios, prob.loss_model, x_grid)
    vals = fg.values(mu_bar)
    u_star = float(vals.min())
    star = fg.points[vals <= u_star + star_tol]
    spacing = _grid_spacing(fg.points)
    radius = 2.0 * spacing if exclusion_radius is None else float(exclusion_radius)
    dists = _min_dists(fg.points, star)
    eligible = dists > radius
    if not np.any(eligible):
        raise ValueError("no grid points beyond the exclusion radius")
    ratios = (vals[eligible] - u_star) / np.square(dists[eligible])
    return GrowthEstimate(
        iota=float(ratios.min()),
        u_star=u_star,
        star_points=star,
        exclusion_radius=radius,
        grid_spacing=spacing,
        eligible=int(eligible.sum()),
    )


def estimate_lipschitz(loss: LeaderLoss, x_grid, chunk: int = 256) -> float:
    """Largest pairwise slope of the leader loss over the grid."""
    pts = _as_points(x_grid)
    if pts.shape[0] < 2:
        raise ValueError("need at least two grid points")
    vals = loss.values(pts)
    best = 0.0
    for start in range(0, pts.shape[0], chunk):
        blk = slice(start, start + chunk)
        d = np.sqrt(np.square(pts[blk, None, :] - pts[None, :, :]).sum(axis=2))
        gaps = np.abs(vals[blk, None] - vals[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = np.where(d > 0.0, gaps / d, 0.0)
        best = max(best, float(ratios.max()))
    return best


def _eps_mask(vals: np.ndarray, epsilon: float) -> np.ndarray:
    return vals <= float(vals.min()) + epsilon


def check_deviation_bound(prob: StripeProblem, mu, mu_bar, epsilon: float,
                          x_grid, growth: GrowthEstimate | None = None,
                          fg: FollowerGrid | None = None) -> BoundReport:
    """Near-optimal set drift against the square-root transport bound."""
    if epsilon < 0.0:
        raise ValueError("epsilon must be nonnegative")
    if fg is None:
        fg = FollowerGrid(prob.type_space, prob.scenarios, prob.loss_model, x_grid)
    if growth is None:
        growth = estimate_growth_constant(mu_bar, prob, x_grid, fg=fg)
    set_a = fg.points[_eps_mask(fg.values(mu), epsilon)]
    set_b = fg.points[_eps_mask(fg.values(mu_bar), epsilon)]
    lhs = set_deviation(set_a, set_b)
    w1 = wasserstein1(mu, mu_bar, prob.type_space)
    rhs = float(np.sqrt(3.0 / growth.iota * w1))
    return BoundReport(
        name="set-deviation",
        lhs=lhs,
        rhs=rhs,
        holds=bool(lhs <= rhs + _SLACK),
        inputs={
            "epsilon": float(epsilon),
            "w1": w1,
            "iota": float(growth.iota),
            "mu": [float(v) for v in _weights_of(mu)],
            "mu_bar": [float(v) for v in _weights_of(mu_bar)],
        },
    )


def check_performance_reduction(prob: StripeProblem, mu_bar, r: float,
                                epsilon: float, x_grid,
                                growth: GrowthEstimate | None = None,
                                lipschitz: float | None = None,
                                fg: FollowerGrid | None = None) -> BoundReport:
    """Leader-loss change along the mixture path toward the baseline.

    The compared weighting is ``r * mu_bar + (1 - r) * mu0``; the bound uses
    the transport distance between ``mu_bar`` and the baseline, which must be
    positive.
    """
    if not 0.0 <= r <= 1.0:
        raise ValueError("mixture coefficient must lie in [0, 1]")
    ts = prob.type_space
    w_bar = _weights_of(mu_bar)
    big_w = wasserstein1(w_bar, prob.mu0, ts)
    if big_w <= 0.0:
        raise ValueError("mu_bar must differ from the baseline weights")
    if fg is None:
        fg = FollowerGrid(ts, prob.scenarios, prob.loss_model, x_grid)
    if growth is None:
        growth = estimate_growth_constant(mu_bar, prob, x_grid, fg=fg)
    if lipschitz is None:
        lipschitz = estimate_lipschitz(prob.leader_loss, fg.points)
    mu_r = r * w_bar + (1.0 - r) * prob.mu0.weights
    set_a = fg.points[_eps_mask(fg.values(mu_r), epsilon)]
    set_b_mask = _eps_mask(fg.values(mu_bar), epsilon)
    set_b = fg.points[set_b_mask]
    loss_a = prob.leader_loss.values(set_a)
    loss_b = prob.leader_loss.values(set_b)
    lhs = float(np.abs(loss_a[:, None] - loss_b[None, :]).min(axis=1).max())
    rhs = float(lipschitz * np.sqrt(3.0 / growth.iota * (1.0 - r) * big_w))
    return BoundReport(
        name="performance-reduction",
        lhs=lhs,
        rhs=rhs,
        holds=bool(lhs <= rhs + _SLACK),
        inputs={
            "epsilon": float(epsilon),
            "r": float(r),
            "w_baseline": big_w,
            "iota": float(growth.iota),
            "lipschitz": float(lipschitz),
            "mu_bar": [float(v) for v in w_bar],
        },
    )


def _lattice_w1_matrix(lattice: np.ndarray, ts: TypeSpace) -> np.ndarray:
    cdfs = np.cumsum(lattice, axis=1)[:, :-1]
    spacings = np.diff(ts.locations)
    gaps = np.abs(cdfs[:, None, :] - cdfs[None, :, :])
    return gaps @ spacings


def estimate_regularity_constant(prob: StripeProblem, trial_count: int, seed: int,
                                 epsilon: float, x_grid, resolution: int = 50,
                                 proximity: float | None = None,
                                 fg: FollowerGrid | None = None) -> RegularityEstimate:
    """Sampled inverse sensitivity of near-optimal decisions to the weights.

    Each trial picks a lattice weighting, one of its near-optimal grid
    decisions, and a nearby second decision; the trial's ratio is the least
    transport movement that makes the second decision near-optimal, divided
    by the decision distance.  Trials with no consistent weighting are
    skipped and counted.
    """
    if trial_count < 1:
        raise ValueError("need at least one trial")
    ts = prob.type_space
    if fg is None:
        fg = FollowerGrid(ts, prob.scenarios, prob.loss_model, x_grid)
    if proximity is None:
        proximity = 0.25 * prob.loss_model.box.diameter
    lattice = simplex_lattice(ts.m, resolution)
    values = fg.values_many(lattice)
    u_stars = values.min(axis=0)
    feasible = values <= u_stars[None, :] + epsilon
    w1_mat = _lattice_w1_matrix(lattice, ts)
    pts = fg.points
    rng = np.random.default_rng(seed)
    best = 0.0
    used = 0
    skipped = 0
    for _ in range(trial_count):
        p1 = int(rng.integers(lattice.shape[0]))
        rows1 = np.nonzero(feasible[:, p1])[0]
        r1 = int(rows1[rng.integers(rows1.size)])
        d_all = np.sqrt(np.square(pts - pts[r1]).sum(axis=1))
        nearby = np.nonzero((d_all > 0.0) & (d_all <= proximity))[0]
        if nearby.size == 0:
            skipped += 1
            continue
        r2 = int(nearby[rng.integers(nearby.size)])
        consistent = np.nonzero(feasible[r2])[0]
        if consistent.size == 0:
            skipped += 1
            continue
        ratio = float(w1_mat[p1, consistent].min() / d_all[r2])
        best = max(best, ratio)
        used += 1
    return RegularityEstimate(value=best, trials_used=used, skipped=skipped)


def check_compromise_bound(prob: StripeProblem, epsilon: float, x_grid,
                           resolution: int = 50,
                           growth: GrowthEstimate | None = None,
                           lipschitz: float | None = None,
                           regularity: RegularityEstimate | float | None = None,
                           regularity_trials: int = 300,
                           seed: int = 0) -> BoundReport:
    """Leader's compromise from accepting consistent near-optimal responses.

    The empirical compromise pairs each decision that is near-optimal for the
    exact design optimum with the friendliest weighting that also makes it
    near-optimal; the bound combines the growth, Lipschitz, and regularity
    constants estimated on the same grids.
    """
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    ts = prob.type_space
    fg = FollowerGrid(ts, prob.scenarios, prob.loss_model, x_grid)
    exact = brute_force_stripe(prob, resolution, fg.points, epsilon=0.0)
    lattice = simplex_lattice(ts.m, resolution)
    values = fg.values_many(lattice)
    u_stars = values.min(axis=0)
    feasible = values <= u_stars[None, :] + epsilon
    p_star = int(np.nonzero(np.all(lattice == exact.mu_hat.weights[None, :],
                                   axis=1))[0][0])
    if growth is None:
        growth = estimate_growth_constant(exact.mu_hat, prob, fg.points,
                                          star_tol=0.0, fg=fg)
    if lipschitz is None:
        lipschitz = estimate_lipschitz(prob.leader_loss, fg.points)
    if regularity is None:
        regularity = estimate_regularity_constant(
            prob, regularity_trials, seed, epsilon, fg.points,
            resolution=resolution, fg=fg)
    reg_value = regularity if isinstance(regularity, float) else regularity.value
    transport = np.array([wasserstein1(row, prob.mu0, ts) for row in lattice])
    leader_vals = prob.leader_loss.values(fg.points)
    rows = np.nonzero(feasible[:, p_star])[0]
    best_gap = 0.0
    for row in rows:
        consistent = np.nonzero(feasible[row])[0]
        j_min = float(leader_vals[row] + prob.gamma * transport[consistent].min())
        best_gap = max(best_gap, j_min - exact.leader_value)
    lhs = best_gap
    rhs = float(np.sqrt(epsilon / growth.iota)
                * (lipschitz + prob.gamma * reg_value))
    return BoundReport(
        name="compromise",
        lhs=lhs,
        rhs=rhs,
        holds=bool(lhs <= rhs + _SLACK),
        inputs={
            "epsilon": float(epsilon),
            "iota": float(growth.iota),
            "lipschitz": float(lipschitz),
            "regularity": float(reg_value),
            "gamma": float(prob.gamma),
            "exact_value": float(exact.leader_value),
            "candidates": int(rows.size),
        },
    )


def write_counterexamples(reports, directory) -> list[Path]:
    """Persist every failed report as a JSON record; returns written paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for i, rep in enumerate(reports):
        if rep.holds:
            continue
        path = directory / f"counterexample_{i:03d}_{rep.name}.json"
        path.write_text(json.dumps(rep.record(), indent=2, sort_keys=True) + "\n")
        written.append(path)
    return written


def run_bound_family(count: int, seed: int, epsilon: float, checks,
                     grid_points: int = 1001, resolution: int = 50,
                     regularity_trials: int = 300,
                     n_scenarios: int = 96) -> list[BoundReport]:
    """Run the requested checks over a stream of randomized instances.

    The mixture coefficient for the comparison weighting is drawn per
    instance from its own seeded stream, so the whole family is reproducible
    from (count, seed).
    """
    if count < 1:
        raise ValueError("need at least one instance")
    reports = []
    for i in range(count):
        prob, mu_bar = random_bound_instance(seed + i, n_scenarios)
        box = prob.loss_model.box
        grid = np.linspace(float(box.lower[0]), float(box.upper[0]),
                           grid_points)[:, None]
        rng = np.random.default_rng((seed, i))
        r = float(rng.uniform(0.2, 0.8))
        mu = r * mu_bar.weights + (1.0 - r) * prob.mu0.weights
        fg = FollowerGrid(prob.type_space, prob.scenarios, prob.loss_model, grid)
        for name in checks:
            if name == "set-deviation":
                rep = check_deviation_bound(prob, mu, mu_bar, epsilon, grid, fg=fg)
            elif name == "performance-reduction":
                rep = check_performance_reduction(prob, mu_bar, r, epsilon,
                                                 grid, fg=fg)
            elif name == "compromise":
                rep = check_compromise_bound(prob, epsilon, grid,
                                             resolution=resolution,
                                             regularity_trials=regularity_trials,
                                             seed=seed + i)
            else:
                raise ValueError(f"unknown bound check {name!r}")
            rep.inputs["instance_seed"] = seed + i
            reports.append(rep)
    return reports


def random_bound_instance(seed: int, n_scenarios: int = 96) -> tuple[StripeProblem, TypeDistribution]:
    """One randomized two-type instance for the bound checks.

    Mean-semideviation types on bounded quadratic losses keep the per-type
    risks 1-Lipschitz across type locations, which the transport bounds
    require; locations, weights, and the leader target are drawn so that the
    compared weightings stay well separated.
    """
    rng = np.random.default_rng(seed)
    t1 = rng.uniform(0.05, 0.5)
    t2 = t1 + rng.uniform(0.2, min(0.45, 0.95 - t1))
    ts = TypeSpace(
        [t1, t2],
        [RiskSpectrum.mean_semideviation(t1, 0.5),
         RiskSpectrum.mean_semideviation(t2, 0.5)],
    )
    w_bar = rng.uniform(0.15, 0.85)
    shift = rng.uniform(0.15, 0.4) * (1.0 if rng.uniform() < 0.5 else -1.0)
    w0 = float(np.clip(w_bar + shift, 0.05, 0.95))
    if abs(w0 - w_bar) < 0.1:
        w0 = float(np.clip(w_bar + (0.15 if shift >= 0 else -0.15), 0.05, 0.95))
    scen = ScenarioSet.generate("uniform", n_scenarios, int(rng.integers(2**31)),
                                low=0.0, high=1.0, dim=1)
    model = LossModel(kind="quadratic", box=Box(np.array([0.0]), np.array([1.0])))
    leader = LeaderLoss(kind="quadratic",
                        target=np.array([rng.uniform(0.2, 0.8)]))
    prob = StripeProblem(
        type_space=ts,
        mu0=TypeDistribution([w0, 1.0 - w0]),
        gamma=float(rng.uniform(0.2, 1.0)),
        leader_loss=leader,
        loss_model=model,
        scenarios=scen,
    )
    return prob, TypeDistribution([w_bar, 1.0 - w_bar])
