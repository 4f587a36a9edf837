"""Leader-level design of the population's risk-type distribution.

The leader reshapes the type weights at a transport cost and anticipates an
approximately optimal follower.  The solver relaxes the follower-optimality
constraint by ``epsilon``, penalizes its violation with a growing multiplier,
and certifies the returned pair against grid enumerations.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .follower import (
    FollowerGrid,
    LossModel,
    ScenarioSet,
    SolverConfig,
    follower_objective,
    solve_follower,
    type_risk_profile,
    value_sensitivity,
)
from .typespace import (
    TypeDistribution,
    TypeSpace,
    equivalent_spectrum,
    simplex_project,
    wasserstein1,
    wasserstein1_subgradient,
)

_LEADER_KINDS = ("quadratic", "distance", "zero")


@dataclass(frozen=True)
class LeaderLoss:
    """Leader's direct cost of the follower decision."""

    kind: str
    target: np.ndarray = None
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in _LEADER_KINDS:
            raise ValueError(f"unknown leader loss kind {self.kind!r}")
        tgt = np.atleast_1d(np.asarray(
            0.0 if self.target is None else self.target, dtype=float))
        tgt.flags.writeable = False
        object.__setattr__(self, "target", tgt)
        if self.scale < 0.0:
            raise ValueError("scale must be nonnegative")

    def value(self, x) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.kind == "zero":
            return 0.0
        gap = x - self.target
        if self.kind == "quadratic":
            return float(self.scale * np.dot(gap, gap))
        return float(self.scale * np.linalg.norm(gap))

    def values(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        if xs.ndim == 1:
            xs = xs[:, None]
        if self.kind == "zero":
            return np.zeros(xs.shape[0])
        gap = xs - self.target[None, :]
        sq = np.square(gap).sum(axis=1)
        return self.scale * (sq if self.kind == "quadratic" else np.sqrt(sq))

    def grad(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.kind == "zero":
            return np.zeros_like(x)
        gap = x - self.target
        if self.kind == "quadratic":
            return 2.0 * self.scale * gap
        nrm = float(np.linalg.norm(gap))
        if nrm == 0.0:
            return np.zeros_like(x)
        return self.scale * gap / nrm

    def lipschitz(self, box) -> float:
        """Exact Lipschitz constant on the given box."""
        if self.kind == "zero":
            return 0.0
        if self.kind == "distance":
            return float(self.scale)
        reach = np.maximum(np.abs(box.lower - self.target),
                           np.abs(box.upper - self.target))
        return float(2.0 * self.scale * np.linalg.norm(reach))


@dataclass(frozen=True)
class StripeProblem:
    """Full problem data for the distribution-design game."""

    type_space: TypeSpace
    mu0: TypeDistribution
    gamma: float
    leader_loss: LeaderLoss
    loss_model: LossModel
    scenarios: ScenarioSet

    def __post_init__(self):
        if self.gamma <= 0.0:
            raise ValueError("transport weight gamma must be positive")
        if self.mu0.m != self.type_space.m:
            raise ValueError("baseline weights do not match the type count")


def leader_objective(mu, x, prob: StripeProblem) -> float:
    """Leader cost: direct loss plus transport distance from the baseline."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if not prob.loss_model.box.contains(x):
        raise ValueError(f"decision {x} lies outside the box domain")
    return prob.leader_loss.value(x) + prob.gamma * wasserstein1(
        mu, prob.mu0, prob.type_space)


def simplex_lattice(m: int, resolution: int) -> np.ndarray:
    """All weight vectors with coordinates that are multiples of 1/resolution.

    Rows are emitted in lexicographic order of the integer compositions, so
    enumeration (and tie-breaking on it) is deterministic.
    """
    if m < 1 or resolution < 1:
        raise ValueError("need at least one type and a positive resolution")
    rows = []
    for cuts in itertools.combinations(range(resolution + m - 1), m - 1):
        prev = -1
        comp = []
        for c in cuts:
            comp.append(c - prev - 1)
            prev = c
        comp.append(resolution + m - 2 - prev)
        rows.append(comp)
    return np.asarray(rows, dtype=float) / float(resolution)


@dataclass
class Equilibrium:
    """Candidate design with its certification metadata."""

    mu_hat: TypeDistribution
    x_hat: np.ndarray
    leader_value: float
    follower_value: float
    epsilon: float
    delta: float | None
    certified: bool
    diagnostics: dict = field(default_factory=dict, repr=False)

    def record(self) -> dict:
        return {
            "mu_hat": [float(v) for v in self.mu_hat.weights],
            "x_hat": [float(v) for v in np.atleast_1d(self.x_hat)],
            "leader_value": float(self.leader_value),
            "follower_value": float(self.follower_value),
            "epsilon": float(self.epsilon),
            "delta": None if self.delta is None else float(self.delta),
            "certified": bool(self.certified),
        }


@dataclass
class VerificationReport:
    """Both sides of the equilibrium check on the verification grids."""

    follower_ok: bool
    follower_gap: float
    u_star_hat: float
    lhs: float
    rhs: float
    delta_needed: float
    epsilon: float
    delta: float | None
    certified: bool
    lattice: np.ndarray = field(repr=False, default=None)
    sup_values: np.ndarray = field(repr=False, default=None)

    def record(self) -> dict:
        return {
            "follower_ok": bool(self.follower_ok),
            "follower_gap": float(self.follower_gap),
            "u_star_hat": float(self.u_star_hat),
            "lhs": float(self.lhs),
            "rhs": float(self.rhs),
            "delta_needed": float(self.delta_needed),
            "epsilon": float(self.epsilon),
            "delta": None if self.delta is None else float(self.delta),
            "certified": bool(self.certified),
        }


@dataclass(frozen=True)
class StripeConfig:
    """Settings for :func:`solve_stripe`.

    ``epsilon`` defaults to ``1e-4`` times the follower value scale at the
    baseline weights.  Steps are normalized subgradient steps on a diminishing
    schedule; the penalty multiplier grows by ``penalty_growth`` per outer
    round.  With ``multistart`` the descent restarts from the baseline and
    from every vertex of the simplex and keeps the best feasible outcome.
    """

    epsilon: float | None = None
    feas_tol: float | None = None
    penalty_init: float = 1.0
    penalty_growth: float = 10.0
    max_outer: int = 8
    inner_iter: int = 60
    step_scale_x: float = 0.05
    step_scale_mu: float = 0.08
    multistart: bool = True
    follower: SolverConfig = field(default_factory=SolverConfig)
    verify: bool = True
    verify_x_points: int = 201
    verify_resolution: int = 50
    delta_margin: float = 1e-9
    lattice_cap: int = 2_000_000


def _default_grid(box, points: int) -> np.ndarray:
    if box.dim != 1:
        raise ValueError("default verification grids require a 1-d decision; "
                         "pass x_grid explicitly")
    return np.linspace(float(box.lower[0]), float(box.upper[0]), points)[:, None]


def _penalty_descent(prob: StripeProblem, start: np.ndarray, eps: float,
                     feas_tol: float, cfg: StripeConfig):
    """One penalty run; returns feasible candidates and an iterate trace."""
    ts, model, scen = prob.type_space, prob.loss_model, prob.scenarios
    box = model.box
    gamma = prob.gamma
    mu0w = prob.mu0.weights
    w = start.copy()
    lam = cfg.penalty_init
    candidates = []
    trace = []
    x = None
    global_k = 0
    for rnd in range(cfg.max_outer):
        sol = solve_follower(w, ts, scen, model, cfg.follower)
        g_star = value_sensitivity(sol, w, ts, scen, model)
        anchor_w = w.copy()
        anchor_val = sol.value
        if x is None:
            x = sol.x_star.copy()
        # the follower's own response is always feasible for the relaxed constraint
        candidates.append((prob.leader_loss.value(sol.x_star)
                           + gamma * wasserstein1(w, mu0w, ts),
                           w.copy(), sol.x_star.copy(), -eps))
        rho_x = type_risk_profile(model.evaluate(x, scen.samples), ts)
        viol = float(np.dot(w, rho_x) - anchor_val - eps)
        if viol <= feas_tol:
            candidates.append((prob.leader_loss.value(x)
                               + gamma * wasserstein1(w, mu0w, ts),
                               w.copy(), x.copy(), viol))
        trace.append((rnd, lam,
                      prob.leader_loss.value(x) + gamma * wasserstein1(w, mu0w, ts),
                      viol, *w, *x))
        n = scen.n
        for _ in range(cfg.inner_iter):
            global_k += 1
            z = model.evaluate(x, scen.samples)
            rho_x = type_risk_profile(z, ts)
            lin_star = anchor_val + float(np.dot(g_star, w - anchor_w))
            active = float(np.dot(w, rho_x)) - lin_star - eps > 0.0
            gx = prob.leader_loss.grad(x)
            gmu = gamma * wasserstein1_subgradient(w, mu0w, ts)
            if active:
                block_w = equivalent_spectrum(ts, w).block_weights(n)
                per_scenario = np.empty(n)
                per_scenario[np.argsort(z, kind="stable")] = block_w
                gx = gx + lam * (model.subgradient(x, scen.samples).T @ per_scenario)
                gmu = gmu + lam * (rho_x - g_star)
            decay = 1.0 / math.sqrt(global_k)
            nx = float(np.linalg.norm(gx))
            if nx > 0.0:
                x = box.clip(x - cfg.step_scale_x * box.diameter * decay * gx / nx)
            nmu = float(np.linalg.norm(gmu))
            if nmu > 0.0:
                w = simplex_project(w - cfg.step_scale_mu * decay * gmu / nmu).weights
        lam *= cfg.penalty_growth
    sol = solve_follower(w, ts, scen, model, cfg.follower)
    rho_x = type_risk_profile(model.evaluate(x, scen.samples), ts)
    viol = float(np.dot(w, rho_x) - sol.value - eps)
    if viol <= feas_tol:
        candidates.append((prob.leader_loss.value(x)
                           + gamma * wasserstein1(w, mu0w, ts),
                           w.copy(), x.copy(), viol))
    candidates.append((prob.leader_loss.value(sol.x_star)
                       + gamma * wasserstein1(w, mu0w, ts),
                       w.copy(), sol.x_star.copy(), -eps))
    return candidates, trace


def _refine_candidates(prob: StripeProblem, candidates, eps: float,
                       cfg: StripeConfig):
    """Optimistic grid responses at each visited weighting.

    For every distinct candidate weighting, picks the leader-cheapest grid
    decision inside the 0.9-epsilon value set.  The margin keeps the refined
    pair strictly inside the epsilon set that verification rebuilds on the
    same grid.  Skipped for multi-dimensional decisions without a grid.
    """
    if prob.loss_model.box.dim != 1:
        return []
    ts, scen, model = prob.type_space, prob.scenarios, prob.loss_model
    grid = _default_grid(model.box, cfg.verify_x_points)
    fg = FollowerGrid(ts, scen, model, grid)
    leader_vals = prob.leader_loss.values(fg.points)
    refined = []
    seen = set()
    for _, w, _, _ in candidates:
        key = tuple(np.round(w, 12))
        if key in seen:
            continue
        seen.add(key)
        solw = solve_follower(w, ts, scen, model, cfg.follower)
        vals = fg.values(w)
        u_low = min(solw.value, float(vals.min()))
        mask = vals <= u_low + 0.9 * eps
        if not np.any(mask):
            continue
        rows = np.nonzero(mask)[0]
        idx = int(rows[np.argmin(leader_vals[rows])])
        viol = float(vals[idx] - u_low - eps)
        refined.append((float(leader_vals[idx])
                        + prob.gamma * wasserstein1(w, prob.mu0, ts),
                        w.copy(), fg.points[idx].copy(), viol))
    return refined


def solve_stripe(prob: StripeProblem, cfg: StripeConfig | None = None) -> Equilibrium:
    """Penalty-method search for an approximate design equilibrium.

    Returns the best iterate that satisfies the relaxed value constraint,
    together with a certification against the verification grids when
    ``cfg.verify`` is set (the reported ``delta`` then upper-bounds the
    leader's compromise on those grids).
    """
    cfg = cfg or StripeConfig()
    ts = prob.type_space
    sol0 = solve_follower(prob.mu0, ts, prob.scenarios, prob.loss_model, cfg.follower)
    eps = cfg.epsilon
    if eps is None:
        eps = 1e-4 * max(1.0, abs(sol0.value))
    if eps <= 0.0:
        raise ValueError("relaxation epsilon must be positive")
    feas_tol = cfg.feas_tol if cfg.feas_tol is not None else eps / 10.0
    starts = [prob.mu0.weights.copy()]
    if cfg.multistart:
        for m in range(ts.m):
            v = np.zeros(ts.m)
            v[m] = 1.0
            if not np.array_equal(v, starts[0]):
                starts.append(v)
    all_candidates = []
    traces = []
    for s in starts:
        cands, trace = _penalty_descent(prob, s, eps, feas_tol, cfg)
        all_candidates.extend(cands)
        traces.extend(trace)
    all_candidates.extend(_refine_candidates(prob, all_candidates, eps, cfg))
    # certification needs the strict value condition, not the penalty slack;
    # the margin absorbs solver-versus-grid mismatch when verification
    # recomputes the optimal value
    feasible = [c for c in all_candidates if c[3] <= -0.05 * eps]
    if not feasible:
        feasible = [c for c in all_candidates if c[3] <= feas_tol]
    if not feasible:
        raise RuntimeError("penalty search found no feasible iterate")
    best = min(feasible, key=lambda c: c[0])
    mu_hat = TypeDistribution(best[1])
    x_hat = best[2]
    eq = Equilibrium(
        mu_hat=mu_hat,
        x_hat=x_hat,
        leader_value=float(best[0]),
        follower_value=follower_objective(x_hat, mu_hat, ts, prob.scenarios,
                                          prob.loss_model),
        epsilon=float(eps),
        delta=None,
        certified=False,
        diagnostics={"trace": np.asarray(traces, dtype=float),
                     "starts": len(starts),
                     "candidates": len(all_candidates)},
    )
    if cfg.verify:
        report = verify_equilibrium(
            eq, prob, eps, delta=None,
            x_grid=_default_grid(prob.loss_model.box, cfg.verify_x_points),
            resolution=cfg.verify_resolution, follower_cfg=cfg.follower)
        eq.delta = report.delta_needed + cfg.delta_margin
        eq.certified = bool(report.follower_ok)
        eq.diagnostics["verification"] = report
    return eq


def brute_force_stripe(prob: StripeProblem, resolution: int, x_grid,
                       epsilon: float = 0.0,
                       cap: int = 2_000_000) -> Equilibrium:
    """Exhaustive optimistic search over a simplex lattice and decision grid.

    For each lattice weighting the follower's grid optimum defines the
    ``epsilon``-feasible decisions, among which the leader-friendliest is
    taken.  Ties break on enumeration order.  Exact on its grids; intended as
    an oracle at desk scale.
    """
    if epsilon < 0.0:
        raise ValueError("epsilon must be nonnegative")
    ts = prob.type_space
    lattice = simplex_lattice(ts.m, resolution)
    fg = FollowerGrid(ts, prob.scenarios, prob.loss_model, x_grid)
    if lattice.shape[0] * fg.size > cap:
        raise ValueError(
            f"enumeration of {lattice.shape[0]} x {fg.size} points exceeds the cap")
    values = fg.values_many(lattice)
    u_stars = values.min(axis=0)
    leader_vals = prob.leader_loss.values(fg.points)
    transport = np.array([wasserstein1(row, prob.mu0, ts) for row in lattice])
    best = None
    for p in range(lattice.shape[0]):
        mask = values[:, p] <= u_stars[p] + epsilon
        idx = np.nonzero(mask)[0]
        row = idx[np.argmin(leader_vals[idx])]
        total = float(leader_vals[row] + prob.gamma * transport[p])
        if best is None or total < best[0]:
            best = (total, p, row)
    total, p, row = best
    return Equilibrium(
        mu_hat=TypeDistribution(lattice[p]),
        x_hat=fg.points[row].copy(),
        leader_value=total,
        follower_value=float(values[row, p]),
        epsilon=float(epsilon),
        delta=None,
        certified=False,
        diagnostics={"lattice_size": int(lattice.shape[0]),
                     "grid_size": int(fg.size),
                     "u_star": float(u_stars[p])},
    )


def verify_equilibrium(candidate: Equilibrium, prob: StripeProblem,
                       epsilon: float, delta: float | None = None,
                       x_grid=None, resolution: int = 50,
                       follower_cfg: SolverConfig | None = None) -> VerificationReport:
    """Check a candidate pair against the equilibrium definition on grids.

    The follower condition is checked directly (candidate decision within
    ``epsilon`` of the solved optimal value).  The leader condition compares
    the worst leader cost over the candidate's feasible set against the best
    worst-case over a lattice of weightings; ``delta_needed`` is the smallest
    compromise that would certify.
    """
    ts, model, scen = prob.type_space, prob.loss_model, prob.scenarios
    if x_grid is None:
        x_grid = _default_grid(model.box, 201)
    fg = FollowerGrid(ts, scen, model, x_grid)
    mu_hat = candidate.mu_hat
    x_hat = np.atleast_1d(np.asarray(candidate.x_hat, dtype=float))
    sol_hat = solve_follower(mu_hat, ts, scen, model, follower_cfg)
    grid_vals_hat = fg.values(mu_hat)
    u_hat = min(sol_hat.value, float(grid_vals_hat.min()))
    follower_gap = follower_objective(x_hat, mu_hat, ts, scen, model) - u_hat
    follower_ok = follower_gap <= epsilon + 1e-12
    leader_vals = prob.leader_loss.values(fg.points)
    mask = grid_vals_hat <= float(grid_vals_hat.min()) + epsilon
    lhs_loss = float(leader_vals[mask].max()) if np.any(mask) else -math.inf
    lhs_loss = max(lhs_loss, prob.leader_loss.value(x_hat))
    lhs = lhs_loss + prob.gamma * wasserstein1(mu_hat, prob.mu0, ts)
    lattice = simplex_lattice(ts.m, resolution)
    values = fg.values_many(lattice)
    u_stars = values.min(axis=0)
    sup_values = np.empty(lattice.shape[0])
    for p in range(lattice.shape[0]):
        m = values[:, p] <= u_stars[p] + epsilon
        sup_values[p] = leader_vals[m].max() + prob.gamma * wasserstein1(
            lattice[p], prob.mu0, ts)
    rhs = float(sup_values.min())
    delta_needed = max(0.0, lhs - rhs)
    certified = bool(follower_ok and (delta is None or lhs <= rhs + delta))
    return VerificationReport(
        follower_ok=bool(follower_ok),
        follower_gap=float(follower_gap),
        u_star_hat=float(u_hat),
        lhs=float(lhs),
        rhs=rhs,
        delta_needed=float(delta_needed),
        epsilon=float(epsilon),
        delta=delta,
        certified=certified,
        lattice=lattice,
        sup_values=sup_values,
    )
