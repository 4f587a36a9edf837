"""Sampled follower problem: minimize population-weighted spectral risk.

The follower picks a decision inside a box, losses are evaluated on a frozen
scenario sample, and the objective is the spectral risk of those losses under
the population's equivalent spectrum.  The auxiliary quantile/overshoot
variables of the textbook reformulation are never materialized: quantiles are
read off the sorted losses and overshoots are positive parts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .risk import EmpiricalLoss, _avar_sorted, _quantile_index, spectral_risk
from .typespace import TypeSpace, _weights_of, equivalent_spectrum


@dataclass(frozen=True)
class Box:
    """Axis-aligned decision domain with componentwise clamping."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("bounds must be vectors of equal length")
        if np.any(hi <= lo):
            raise ValueError("upper bounds must exceed lower bounds")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return int(self.lower.size)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))

    def contains(self, x, tol: float = 1e-9) -> bool:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def clip(self, x) -> np.ndarray:
        return np.clip(np.atleast_1d(np.asarray(x, dtype=float)), self.lower, self.upper)


class ScenarioSet:
    """Frozen sample of scenario vectors, reproducible from its seed."""

    __slots__ = ("samples", "kind", "params", "n", "seed")

    def __init__(self, samples, kind: str = "explicit", params: dict | None = None,
                 seed: int | None = None) -> None:
        arr = np.array(samples, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2 or arr.shape[0] == 0:
            raise ValueError("scenario sample must be a nonempty 2-d array")
        if not np.all(np.isfinite(arr)):
            raise ValueError("scenario sample contains non-finite values")
        arr.flags.writeable = False
        self.samples = arr
        self.kind = kind
        self.params = dict(params or {})
        self.n = int(arr.shape[0])
        self.seed = seed

    @property
    def dim(self) -> int:
        return int(self.samples.shape[1])

    @classmethod
    def generate(cls, kind: str, n: int, seed: int, **params) -> "ScenarioSet":
        """Draw ``n`` scenarios of the named kind, bit-reproducible from ``seed``."""
        if n < 1:
            raise ValueError("need at least one scenario")
        rng = np.random.default_rng(seed)
        if kind == "normal":
            dim = int(params.get("dim", 1))
            mean = np.resize(np.asarray(params.get("mean", 0.0), dtype=float), dim)
            std = float(params.get("std", 1.0))
            samples = mean + std * rng.standard_normal((n, dim))
        elif kind == "uniform":
            dim = int(params.get("dim", 1))
            low = float(params.get("low", 0.0))
            high = float(params.get("high", 1.0))
            samples = rng.uniform(low, high, size=(n, dim))
        elif kind == "labeled-gaussians":
            # features in the first dim columns, +/-1 label in the last
            dim = int(params.get("dim", 2))
            separation = float(params.get("separation", 2.0))
            labels = rng.choice([-1.0, 1.0], size=n)
            center = separation * np.ones(dim) / math.sqrt(dim)
            feats = labels[:, None] * center + rng.standard_normal((n, dim))
            samples = np.column_stack([feats, labels])
        else:
            raise ValueError(f"unknown scenario kind {kind!r}")
        return cls(samples, kind=kind, params=params, seed=seed)

    def regenerate(self) -> "ScenarioSet":
        if self.seed is None:
            raise ValueError("scenario set was not generated from a seed")
        return ScenarioSet.generate(self.kind, self.n, self.seed, **self.params)

    def save_table(self, path) -> None:
        """Persist as a delimited text table, one scenario per row."""
        header = ",".join(f"xi_{j}" for j in range(self.dim))
        np.savetxt(path, self.samples, fmt="%.17g", delimiter=",",
                   header=header, comments="")

    @classmethod
    def load_table(cls, path) -> "ScenarioSet":
        arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(arr, kind="table")

    def __repr__(self) -> str:
        return f"ScenarioSet(kind={self.kind!r}, n={self.n}, dim={self.dim}, seed={self.seed})"


_MODEL_KINDS = ("linear", "quadratic", "newsvendor",
                "hinge-classification", "logistic-classification")


@dataclass(frozen=True)
class LossModel:
    """Convex per-scenario loss ``f(x, xi)`` with a box decision domain.

    ``kind`` selects the functional form; ``scale`` multiplies the loss.
    Classification kinds expect scenario vectors holding features followed by
    a +/-1 label, all other kinds expect scenario vectors matching the
    decision dimension.
    """

    kind: str
    box: Box
    scale: float = 1.0
    over_cost: float = 1.0
    under_cost: float = 1.0

    def __post_init__(self):
        if self.kind not in _MODEL_KINDS:
            raise ValueError(f"unknown loss model kind {self.kind!r}")
        if self.scale <= 0.0:
            raise ValueError("scale must be positive")
        if self.kind == "newsvendor" and (self.over_cost <= 0.0 or self.under_cost <= 0.0):
            raise ValueError("newsvendor costs must be positive")

    @property
    def dim_x(self) -> int:
        return self.box.dim

    def _check_scenarios(self, samples: np.ndarray) -> None:
        want = self.dim_x + 1 if self.kind.endswith("classification") else self.dim_x
        if samples.shape[1] != want:
            raise ValueError(
                f"{self.kind} model with {self.dim_x}-d decisions expects "
                f"{want}-d scenarios, got {samples.shape[1]}-d")

    def _split(self, samples: np.ndarray):
        return samples[:, :-1], samples[:, -1]

    def evaluate(self, x, samples: np.ndarray) -> np.ndarray:
        """Per-scenario losses at a single decision, shape ``(N,)``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        self._check_scenarios(samples)
        if self.kind == "linear":
            out = samples @ x
        elif self.kind == "quadratic":
            out = np.square(x[None, :] - samples).sum(axis=1)
        elif self.kind == "newsvendor":
            diff = x[None, :] - samples
            out = (self.over_cost * np.maximum(diff, 0.0)
                   + self.under_cost * np.maximum(-diff, 0.0)).sum(axis=1)
        else:
            feats, labels = self._split(samples)
            margin = labels * (feats @ x)
            if self.kind == "hinge-classification":
                out = np.maximum(0.0, 1.0 - margin)
            else:
                out = np.logaddexp(0.0, -margin)
        return self.scale * out

    def evaluate_grid(self, xs: np.ndarray, samples: np.ndarray) -> np.ndarray:
        """Loss matrix for many decisions at once, shape ``(G, N)``."""
        xs = np.asarray(xs, dtype=float)
        if xs.ndim == 1:
            xs = xs[:, None]
        self._check_scenarios(samples)
        if self.kind == "linear":
            out = xs @ samples.T
        elif self.kind == "quadratic":
            out = np.square(xs[:, None, :] - samples[None, :, :]).sum(axis=2)
        elif self.kind == "newsvendor":
            diff = xs[:, None, :] - samples[None, :, :]
            out = (self.over_cost * np.maximum(diff, 0.0)
                   + self.under_cost * np.maximum(-diff, 0.0)).sum(axis=2)
        else:
            feats, labels = self._split(samples)
            margin = labels[None, :] * (xs @ feats.T)
            if self.kind == "hinge-classification":
                out = np.maximum(0.0, 1.0 - margin)
            else:
                out = np.logaddexp(0.0, -margin)
        return self.scale * out

    def subgradient(self, x, samples: np.ndarray) -> np.ndarray:
        """One subgradient in ``x`` per scenario, shape ``(N, dim_x)``.

        At kinks the zero element of the subdifferential interval is chosen,
        so the output is deterministic.
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        self._check_scenarios(samples)
        if self.kind == "linear":
            out = samples.copy()
        elif self.kind == "quadratic":
            out = 2.0 * (x[None, :] - samples)
        elif self.kind == "newsvendor":
            diff = x[None, :] - samples
            out = np.where(diff > 0.0, self.over_cost, 0.0) \
                - np.where(diff < 0.0, self.under_cost, 0.0)
        else:
            feats, labels = self._split(samples)
            margin = labels * (feats @ x)
            if self.kind == "hinge-classification":
                active = (margin < 1.0).astype(float)
                out = -active[:, None] * labels[:, None] * feats
            else:
                slope = 1.0 / (1.0 + np.exp(margin))
                out = -slope[:, None] * labels[:, None] * feats
        return self.scale * out


def _mixed_sigma(ts: TypeSpace, weights: np.ndarray) -> np.ndarray:
    """Tail-average atom weights of the population spectrum on the union grid."""
    return (weights @ ts.jump_matrix) * (1.0 - ts.union_breakpoints)


def _sorted_mixture(srt: np.ndarray, levels: np.ndarray, sigma: np.ndarray) -> float:
    total = 0.0
    for tau, s in zip(levels, sigma):
        total += s * _avar_sorted(srt, tau)
    return float(total)


def follower_objective(x, mu, ts: TypeSpace, scenarios: ScenarioSet,
                       model: LossModel) -> float:
    """Spectral risk of the loss sample at ``x`` under the population spectrum."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if not model.box.contains(x):
        raise ValueError(f"decision {x} lies outside the model's box domain")
    losses = model.evaluate(x, scenarios.samples)
    return spectral_risk(EmpiricalLoss(losses), equivalent_spectrum(ts, mu))


def follower_subgradient(x, mu, ts: TypeSpace, scenarios: ScenarioSet,
                         model: LossModel) -> np.ndarray:
    """Subgradient of :func:`follower_objective` in the decision.

    Sorted-sample weights times per-scenario loss subgradients; ties in the
    loss sort are resolved by scenario order.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if not model.box.contains(x):
        raise ValueError(f"decision {x} lies outside the model's box domain")
    z = model.evaluate(x, scenarios.samples)
    w = equivalent_spectrum(ts, mu).block_weights(z.size)
    per_scenario = np.empty_like(z)
    per_scenario[np.argsort(z, kind="stable")] = w
    return model.subgradient(x, scenarios.samples).T @ per_scenario


@dataclass(frozen=True)
class SolverConfig:
    """Settings for the projected subgradient solver.

    ``step_scale`` multiplies the box diameter to give the base step of the
    diminishing ``c / sqrt(k)`` schedule.  After the subgradient phase a
    deterministic coordinate-wise ternary-search polish runs from the best
    iterate; set ``polish = False`` to disable it.
    """

    max_iter: int = 5000
    step_scale: float = 0.1
    tolerance: float = 1e-6
    check_every: int = 25
    patience: int = 3
    polish: bool = True
    polish_sweeps: int = 2
    polish_iters: int = 120


@dataclass
class FollowerSolution:
    """Result of :func:`solve_follower`.

    ``t_star`` holds the loss quantiles at the population spectrum's
    breakpoints (``levels``), which are exactly the auxiliary minimizers of
    the tail-average reformulation.
    """

    x_star: np.ndarray
    t_star: np.ndarray
    levels: np.ndarray
    value: float
    iterations: int
    final_step: float
    converged: bool
    trace: np.ndarray = field(repr=False, default=None)

    def record(self) -> dict:
        return {
            "x_star": [float(v) for v in self.x_star],
            "t_star": [float(v) for v in self.t_star],
            "levels": [float(v) for v in self.levels],
            "value": float(self.value),
            "iterations": int(self.iterations),
            "final_step": float(self.final_step),
            "converged": bool(self.converged),
        }


def _ternary_coordinate(value_of, x, v, j, lo, hi, iters):
    probe = x.copy()
    for _ in range(iters):
        if hi - lo <= 1e-13 * max(1.0, abs(lo) + abs(hi)):
            break
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        probe[j] = m1
        v1 = value_of(probe)
        probe[j] = m2
        v2 = value_of(probe)
        if v1 <= v2:
            hi = m2
        else:
            lo = m1
    probe[j] = 0.5 * (lo + hi)
    vm = value_of(probe)
    if vm < v:
        return probe.copy(), vm
    return x, v


def solve_follower(mu, ts: TypeSpace, scenarios: ScenarioSet, model: LossModel,
                   cfg: SolverConfig | None = None) -> FollowerSolution:
    """Minimize the follower objective over the box by projected subgradient.

    Diminishing steps with running-iterate averaging, best-iterate tracking,
    and an optional coordinate polish; deterministic given the inputs.
    """
    cfg = cfg or SolverConfig()
    weights = _weights_of(mu)
    samples = scenarios.samples
    n = samples.shape[0]
    levels = ts.union_breakpoints
    sigma = _mixed_sigma(ts, weights)
    box = model.box

    def value_of(x):
        return _sorted_mixture(np.sort(model.evaluate(x, samples)), levels, sigma)

    block_w = equivalent_spectrum(ts, mu).block_weights(n)
    x = box.center
    avg = x.copy()
    best_x = x.copy()
    best_val = value_of(x)
    step0 = cfg.step_scale * box.diameter
    step = step0
    trace = [(0, best_val)]
    converged = False
    prev_checkpoint = best_val
    stall = 0
    iterations = 0
    for k in range(1, cfg.max_iter + 1):
        iterations = k
        z = model.evaluate(x, samples)
        per_scenario = np.empty_like(z)
        per_scenario[np.argsort(z, kind="stable")] = block_w
        g = model.subgradient(x, samples).T @ per_scenario
        if not np.any(g):
            converged = True
            break
        step = step0 / math.sqrt(k)
        x = box.clip(x - step * g)
        avg += (x - avg) / (k + 1.0)
        if k % cfg.check_every == 0:
            for cand in (x, avg):
                v = value_of(cand)
                if v < best_val:
                    best_val = v
                    best_x = cand.copy()
            trace.append((k, best_val))
            if abs(prev_checkpoint - best_val) <= cfg.tolerance * max(1.0, abs(best_val)):
                stall += 1
                if stall >= cfg.patience:
                    converged = True
                    break
            else:
                stall = 0
            prev_checkpoint = best_val
    for cand in (x, avg):
        v = value_of(cand)
        if v < best_val:
            best_val = v
            best_x = cand.copy()
    if cfg.polish:
        for _ in range(cfg.polish_sweeps):
            for j in range(box.dim):
                best_x, best_val = _ternary_coordinate(
                    value_of, best_x, best_val, j,
                    float(box.lower[j]), float(box.upper[j]), cfg.polish_iters)
        trace.append((iterations, best_val))
    srt = np.sort(model.evaluate(best_x, samples))
    t_star = srt[[_quantile_index(n, float(t)) for t in levels]]
    value = follower_objective(best_x, mu, ts, scenarios, model)
    return FollowerSolution(
        x_star=best_x, t_star=t_star, levels=levels.copy(), value=value,
        iterations=iterations, final_step=step, converged=converged,
        trace=np.asarray(trace, dtype=float))


class FollowerGrid:
    """Vectorized follower objective over a fixed decision grid.

    Sorts the loss matrix once, precomputes per-level tail averages, and then
    evaluates any population weighting as a single matrix product.
    """

    def __init__(self, ts: TypeSpace, scenarios: ScenarioSet, model: LossModel,
                 x_grid) -> None:
        xs = np.asarray(x_grid, dtype=float)
        if xs.ndim == 1:
            xs = xs[:, None]
        if xs.shape[1] != model.dim_x:
            raise ValueError("grid dimension does not match the model")
        lo, hi = model.box.lower, model.box.upper
        if np.any(xs < lo - 1e-9) or np.any(xs > hi + 1e-9):
            raise ValueError("grid extends outside the model's box domain")
        self.ts = ts
        self.points = xs
        losses = model.evaluate_grid(xs, scenarios.samples)
        self.sorted_losses = np.sort(losses, axis=1)
        n = losses.shape[1]
        levels = ts.union_breakpoints
        idx = [_quantile_index(n, float(t)) for t in levels]
        t_mat = self.sorted_losses[:, idx]
        avar = np.empty_like(t_mat)
        for i, tau in enumerate(levels):
            tails = np.maximum(self.sorted_losses - t_mat[:, i, None], 0.0).sum(axis=1)
            avar[:, i] = t_mat[:, i] + tails / ((1.0 - tau) * n)
        self.tail_averages = avar

    @property
    def size(self) -> int:
        return int(self.points.shape[0])

    def values(self, mu) -> np.ndarray:
        """Follower objective at every grid point for one weighting."""
        return self.tail_averages @ _mixed_sigma(self.ts, _weights_of(mu))

    def values_many(self, weight_matrix: np.ndarray) -> np.ndarray:
        """Objective matrix ``(G, P)`` for ``P`` weightings stacked row-wise."""
        sig = (weight_matrix @ self.ts.jump_matrix) \
            * (1.0 - self.ts.union_breakpoints)[None, :]
        return self.tail_averages @ sig.T

    def u_star(self, mu) -> float:
        return float(self.values(mu).min())


def epsilon_optimal_set(mu, ts: TypeSpace, scenarios: ScenarioSet, model: LossModel,
                        epsilon: float, x_grid, cfg: SolverConfig | None = None,
                        u_star: float | None = None) -> np.ndarray:
    """Grid points whose objective is within ``epsilon`` of the optimal value.

    ``u_star`` may be supplied to reuse a previously solved optimal value;
    otherwise the solver runs first.  Returns the selected points as a
    ``(K, dim_x)`` array.
    """
    if epsilon < 0.0:
        raise ValueError("epsilon must be nonnegative")
    fg = FollowerGrid(ts, scenarios, model, x_grid)
    if u_star is None:
        u_star = solve_follower(mu, ts, scenarios, model, cfg).value
    mask = fg.values(mu) <= u_star + epsilon
    return fg.points[mask]


def type_risk_profile(losses, ts: TypeSpace) -> np.ndarray:
    """Spectral risk of one loss sample under every type's spectrum.

    The quantiles are shared across types, so all entries come from a single
    sort.  Dotting the profile with population weights gives the follower
    objective for those weights.
    """
    srt = np.sort(np.asarray(losses, dtype=float))
    n = srt.size
    levels = ts.union_breakpoints
    t = srt[[_quantile_index(n, float(tau)) for tau in levels]]
    overshoot = np.maximum(srt[None, :] - t[:, None], 0.0).mean(axis=1)
    bracket = (1.0 - levels) * t + overshoot
    return ts.jump_matrix @ bracket


def value_sensitivity(sol: FollowerSolution, mu, ts: TypeSpace,
                      scenarios: ScenarioSet, model: LossModel) -> np.ndarray:
    """Per-type derivative of the optimal follower value in the weights.

    Component ``m`` evaluates type ``m``'s spectrum on the optimal loss
    sample using the stored quantile levels, so the vector is both the
    envelope derivative at the solution and the per-type risk profile.
    """
    z = model.evaluate(sol.x_star, scenarios.samples)
    overshoot = np.maximum(z[None, :] - sol.t_star[:, None], 0.0).mean(axis=1)
    bracket = (1.0 - sol.levels) * sol.t_star + overshoot
    return ts.jump_matrix @ bracket


@dataclass(frozen=True)
class SampleSizeParams:
    """Inputs of the scenario-count bound for uniform value approximation.

    All moduli are caller-supplied: ``lipschitz_modulus`` bounds the loss in
    the decision, ``diameter`` is the domain size, ``mean_kappa`` the growth
    modulus average, ``n_steps`` the spectrum resolution, ``beta`` the failure
    probability, and ``eps_outer > eps_inner`` the two accuracy levels.
    ``constant`` stands in for the universal factor.
    """

    lipschitz_modulus: float
    diameter: float
    mean_kappa: float
    n_steps: int
    beta: float
    eps_outer: float
    eps_inner: float
    constant: float = 1.0

    def __post_init__(self):
        if min(self.lipschitz_modulus, self.diameter, self.mean_kappa,
               self.constant) <= 0.0:
            raise ValueError("moduli and constant must be positive")
        if self.n_steps < 1:
            raise ValueError("spectrum resolution must be at least 1")
        if not 0.0 < self.beta < 1.0:
            raise ValueError("failure probability must lie in (0, 1)")
        if self.eps_inner < 0.0 or self.eps_outer <= self.eps_inner:
            raise ValueError("need eps_outer > eps_inner >= 0")


def _sample_size_value(p: SampleSizeParams) -> float:
    gap = p.eps_outer - p.eps_inner
    lead = p.constant * (p.lipschitz_modulus * p.diameter / gap) ** 2
    log_arg = p.constant * p.mean_kappa * p.diameter / gap
    if log_arg <= 0.0:
        raise ValueError("logarithm argument must be positive")
    return lead * (p.n_steps * math.log(log_arg) + math.log(1.0 / p.beta))


def sample_size_bound(p: SampleSizeParams) -> int:
    """Smallest scenario count satisfying the uniform-approximation bound."""
    return max(1, int(math.ceil(_sample_size_value(p))))
