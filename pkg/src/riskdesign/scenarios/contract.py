"""Wage design with relaxed incentive compatibility.

A risk-neutral principal picks a wage per outcome, a target weighting over
agent risk types, and (optimistically) an action for the agent.  The agent
evaluates wages through the population risk measure under an action-dependent
outcome distribution, so the search needs risk evaluations on weighted atoms
rather than equally likely samples.  Everything runs on finite grids, which
keeps the search exact and bit-reproducible.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from ..stackelberg import simplex_lattice
from ..typespace import TypeDistribution, TypeSpace, wasserstein1

_LEVEL_EPS = 1e-12


@dataclass(frozen=True)
class ContractInstance:
    """Finite outcome space, wage grid, and agent population for one design.

    ``outcomes`` are the principal's losses, ordered from best to worst.  The
    outcome distribution interpolates linearly between the zero-effort and
    full-effort rows as the action moves across [0, 1].  The agent's loss for
    outcome k is ``effort_cost * x - utility(wage_k)`` with a two-piece
    concave utility that flattens past ``utility_kink``.
    """

    outcomes: np.ndarray
    p_low: np.ndarray
    p_high: np.ndarray
    type_space: TypeSpace
    mu0: TypeDistribution
    gamma: float
    wage_levels: np.ndarray
    action_grid: np.ndarray
    effort_cost: float = 0.2
    utility_kink: float = 0.5
    utility_slope: float = 0.5
    reservation: float = np.inf

    def __post_init__(self):
        conv = {
            "outcomes": np.asarray(self.outcomes, dtype=float),
            "p_low": np.asarray(self.p_low, dtype=float),
            "p_high": np.asarray(self.p_high, dtype=float),
            "wage_levels": np.asarray(self.wage_levels, dtype=float),
            "action_grid": np.asarray(self.action_grid, dtype=float),
        }
        for name, arr in conv.items():
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        k = self.outcomes.size
        if k < 2:
            raise ValueError("need at least two outcomes")
        if np.any(np.diff(self.outcomes) <= 0.0):
            raise ValueError("outcomes must be strictly increasing")
        for name in ("p_low", "p_high"):
            row = getattr(self, name)
            if row.shape != (k,):
                raise ValueError(f"{name} must have one entry per outcome")
            if np.any(row < 0.0) or abs(row.sum() - 1.0) > 1e-12:
                raise ValueError(f"{name} must be a probability row")
        if self.wage_levels.size < 2 or np.any(np.diff(self.wage_levels) <= 0.0):
            raise ValueError("wage_levels must be strictly increasing")
        if self.action_grid.size < 2 or np.any(np.diff(self.action_grid) <= 0.0):
            raise ValueError("action_grid must be strictly increasing")
        if self.action_grid[0] < 0.0 or self.action_grid[-1] > 1.0:
            raise ValueError("actions must lie in [0, 1]")
        if self.effort_cost < 0.0:
            raise ValueError("effort_cost must be nonnegative")
        if not 0.0 < self.utility_slope <= 1.0:
            raise ValueError("utility_slope must lie in (0, 1]")
        if self.gamma <= 0.0:
            raise ValueError("gamma must be positive")
        if self.mu0.m != self.type_space.m:
            raise ValueError("mu0 size must match the type space")

    @property
    def n_outcomes(self) -> int:
        return self.outcomes.size

    def outcome_probs(self, x: float) -> np.ndarray:
        """Row-stochastic outcome distribution at action ``x``."""
        return (1.0 - x) * self.p_low + x * self.p_high

    def utility(self, w):
        w = np.asarray(w, dtype=float)
        return np.minimum(w, self.utility_kink
                          + self.utility_slope * (w - self.utility_kink))


@dataclass
class ContractRecord:
    """Best feasible tuple found by the grid search."""

    feasible: bool
    epsilon_ic: float
    wages: np.ndarray = field(repr=False)
    action: float = np.nan
    mu: TypeDistribution | None = None
    principal_value: float = np.inf
    expected_pay: float = np.nan
    design_cost: float = np.nan
    agent_value: float = np.nan

    def record(self) -> dict:
        return {
            "feasible": bool(self.feasible),
            "epsilon_ic": float(self.epsilon_ic),
            "wages": [float(v) for v in np.atleast_1d(self.wages)],
            "action": float(self.action),
            "mu": ([float(v) for v in self.mu.weights]
                   if self.mu is not None else None),
            "principal_value": float(self.principal_value),
            "expected_pay": float(self.expected_pay),
            "design_cost": float(self.design_cost),
            "agent_value": float(self.agent_value),
        }


def _wage_matrix(inst: ContractInstance, cap: int) -> np.ndarray:
    k = inst.n_outcomes
    total = inst.wage_levels.size ** k * inst.action_grid.size
    if total > cap:
        raise ValueError(f"contract grid has {total} cells, cap is {cap}")
    combos = itertools.product(inst.wage_levels.tolist(), repeat=k)
    return np.array(list(combos), dtype=float)


def _type_risk_tensor(inst: ContractInstance, wages: np.ndarray) -> np.ndarray:
    """Per-type agent risks, shape (wage combos, actions, types).

    The agent's loss atoms for a wage vector are minus the wage utilities;
    the effort cost is a deterministic shift, added at the end through
    translation equivariance.  Quantiles on weighted atoms follow the same
    upper-endpoint convention as the equally weighted sample path.
    """
    ts = inst.type_space
    levels = ts.union_breakpoints
    vals = -inst.utility(wages)
    order = np.argsort(vals, axis=1, kind="stable")
    vals_sorted = np.take_along_axis(vals, order, axis=1)
    n_w, k = vals.shape
    out = np.empty((n_w, inst.action_grid.size, ts.m))
    brackets = np.empty((n_w, levels.size))
    rows = np.arange(n_w)
    for a, x in enumerate(inst.action_grid):
        probs_sorted = inst.outcome_probs(float(x))[order]
        cums = np.cumsum(probs_sorted, axis=1)
        for i, tau in enumerate(levels):
            idx = np.minimum((cums <= tau + _LEVEL_EPS).sum(axis=1), k - 1)
            t = vals_sorted[rows, idx]
            tails = (probs_sorted
                     * np.clip(vals_sorted - t[:, None], 0.0, None)).sum(axis=1)
            brackets[:, i] = (1.0 - tau) * t + tails
        out[:, a, :] = brackets @ ts.jump_matrix.T + inst.effort_cost * float(x)
    return out


def solve_contract(inst: ContractInstance, epsilon_ic: float,
                   resolution: int = 10, cap: int = 500_000) -> ContractRecord:
    """Exhaustive search for the cheapest feasible contract.

    Feasibility of an action given wages and a weighting requires the agent's
    population risk to be within ``epsilon_ic`` of its best action on the
    grid and below the reservation level.  The principal pays the expected
    wage plus the expected outcome loss plus the design cost; ties keep the
    first tuple in (weighting, wages, action) grid order.
    """
    if epsilon_ic < 0.0:
        raise ValueError("epsilon_ic must be nonnegative")
    wages = _wage_matrix(inst, cap)
    risks = _type_risk_tensor(inst, wages)
    lattice = simplex_lattice(inst.type_space.m, resolution)
    pay = np.empty((wages.shape[0], inst.action_grid.size))
    for a, x in enumerate(inst.action_grid):
        pay[:, a] = (wages + inst.outcomes[None, :]) @ inst.outcome_probs(float(x))
    best = ContractRecord(feasible=False, epsilon_ic=float(epsilon_ic),
                          wages=np.full(inst.n_outcomes, np.nan))
    for row in lattice:
        agent = risks @ row
        ic_ok = agent <= agent.min(axis=1)[:, None] + epsilon_ic
        ok = ic_ok & (agent <= inst.reservation)
        if not ok.any():
            continue
        design = inst.gamma * wasserstein1(row, inst.mu0, inst.type_space)
        total = np.where(ok, pay + design, np.inf)
        flat = int(total.argmin())
        w_idx, a_idx = divmod(flat, total.shape[1])
        value = float(total[w_idx, a_idx])
        if value < best.principal_value:
            best = ContractRecord(
                feasible=True,
                epsilon_ic=float(epsilon_ic),
                wages=wages[w_idx].copy(),
                action=float(inst.action_grid[a_idx]),
                mu=TypeDistribution(row),
                principal_value=value,
                expected_pay=float(pay[w_idx, a_idx]),
                design_cost=float(design),
                agent_value=float(agent[w_idx, a_idx]),
            )
    return best


@dataclass
class ContractSweep:
    """Relaxation sweep: value and gap per tolerance, plus the fitted rate."""

    epsilons: np.ndarray
    values: np.ndarray
    gaps: np.ndarray
    exponent: float
    baseline: ContractRecord
    records: list[ContractRecord] = field(default_factory=list)

    def rows(self) -> np.ndarray:
        return np.column_stack([self.epsilons, self.values, self.gaps])


def sweep_epsilon_ic(inst: ContractInstance, eps_list,
                     resolution: int = 10, cap: int = 500_000) -> ContractSweep:
    """Solve across incentive tolerances and fit the gap growth rate.

    The gap at each tolerance is the principal's saving relative to exact
    incentive compatibility.  The exponent is the log-log regression slope
    over the strictly positive gaps; NaN when fewer than two are positive.
    """
    eps = np.unique(np.asarray(eps_list, dtype=float))
    if eps.size == 0:
        raise ValueError("need at least one tolerance")
    if eps[0] < 0.0:
        raise ValueError("tolerances must be nonnegative")
    baseline = solve_contract(inst, 0.0, resolution=resolution, cap=cap)
    if not baseline.feasible:
        raise ValueError("instance is infeasible at exact incentive compatibility")
    records = []
    values = np.empty(eps.size)
    for i, e in enumerate(eps):
        rec = (baseline if e == 0.0
               else solve_contract(inst, float(e), resolution=resolution, cap=cap))
        records.append(rec)
        values[i] = rec.principal_value
    gaps = baseline.principal_value - values
    positive = (eps > 0.0) & (gaps > 0.0)
    if positive.sum() >= 2:
        slope = np.polyfit(np.log(eps[positive]), np.log(gaps[positive]), 1)[0]
        exponent = float(slope)
    else:
        exponent = float("nan")
    return ContractSweep(epsilons=eps, values=values, gaps=gaps,
                         exponent=exponent, baseline=baseline, records=records)
