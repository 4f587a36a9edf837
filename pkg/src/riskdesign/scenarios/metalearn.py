"""Risk-sensitive one-shot adaptation with a guidance term.

Each task is a risk attitude over the same labeled sample: the task value at
a parameter is the task's spectral risk of the logistic losses after one
gradient step on that same risk.  Training descends the task-weighted value
plus a guidance loss that pulls the parameter toward a reference.  Gradients
freeze the sorted risk weights at the current ordering, a valid subgradient
selection that keeps everything analytic.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..follower import Box
from ..stackelberg import LeaderLoss
from ..typespace import TypeDistribution, TypeSpace


@dataclass(frozen=True)
class MetaInstance:
    features: np.ndarray
    labels: np.ndarray
    type_space: TypeSpace
    mu: TypeDistribution
    step: float
    box: Box
    guidance: LeaderLoss | None = None
    guidance_weight: float = 0.0

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=float)
        labels = np.asarray(self.labels, dtype=float)
        if feats.ndim != 2 or feats.shape[0] < 1:
            raise ValueError("features must be a nonempty 2-d array")
        if labels.shape != (feats.shape[0],):
            raise ValueError("labels must align with feature rows")
        if not np.all(np.isin(labels, (-1.0, 1.0))):
            raise ValueError("labels must be +1 or -1")
        if self.step < 0.0:
            raise ValueError("step size must be nonnegative")
        if self.guidance_weight < 0.0:
            raise ValueError("guidance weight must be nonnegative")
        if self.mu.m != self.type_space.m:
            raise ValueError("mu size must match the type space")
        if self.box.dim != feats.shape[1]:
            raise ValueError("box dimension must match the feature width")
        feats.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @classmethod
    def from_scenarios(cls, scenarios, **kwargs) -> "MetaInstance":
        """Split a labeled scenario table into features and labels."""
        data = scenarios.samples
        return cls(features=data[:, :-1], labels=data[:, -1], **kwargs)


def _losses_and_slopes(inst: MetaInstance, x: np.ndarray):
    margins = inst.labels * (inst.features @ x)
    losses = np.logaddexp(0.0, -margins)
    slopes = 1.0 / (1.0 + np.exp(margins))
    return losses, slopes


def _sorted_weights(spectrum, losses: np.ndarray) -> np.ndarray:
    """Spectral weights scattered back to sample order, sort frozen."""
    order = np.argsort(losses, kind="stable")
    w = np.empty_like(losses)
    w[order] = spectrum.block_weights(losses.size)
    return w


def _task_state(inst: MetaInstance, x: np.ndarray, m: int):
    """One task's adapted point plus the pieces its gradient needs."""
    spectrum = inst.type_space.spectra[m]
    losses0, slopes0 = _losses_and_slopes(inst, x)
    w0 = _sorted_weights(spectrum, losses0)
    signed = inst.labels[:, None] * inst.features
    inner_grad = -signed.T @ (w0 * slopes0)
    adapted = x - inst.step * inner_grad
    losses1, slopes1 = _losses_and_slopes(inst, adapted)
    w1 = _sorted_weights(spectrum, losses1)
    value = float(np.dot(w1, losses1))
    return adapted, value, (signed, w0, slopes0, w1, slopes1)


def per_task_values(x, inst: MetaInstance) -> np.ndarray:
    """Adapted risk of every task at the shared parameter."""
    x = np.asarray(x, dtype=float)
    return np.array([_task_state(inst, x, m)[1]
                     for m in range(inst.type_space.m)])


def meta_objective(x, inst: MetaInstance) -> float:
    """Task-weighted adapted risk; guidance not included."""
    return float(np.dot(inst.mu.weights, per_task_values(x, inst)))


def meta_gradient(x, inst: MetaInstance) -> np.ndarray:
    """Frozen-sort gradient of the task-weighted adapted risk.

    Differentiating through the one-shot update gives, per task, the adapted
    risk gradient pushed back through the Jacobian I - step * H with H the
    frozen-weight Hessian of the inner risk.
    """
    x = np.asarray(x, dtype=float)
    total = np.zeros(inst.dim)
    for m in range(inst.type_space.m):
        _, _, (signed, w0, slopes0, w1, slopes1) = _task_state(inst, x, m)
        u = -signed.T @ (w1 * slopes1)
        hess = signed.T @ (signed * (w0 * slopes0 * (1.0 - slopes0))[:, None])
        jac = np.eye(inst.dim) - inst.step * hess
        total += inst.mu.weights[m] * (jac.T @ u)
    return total


@dataclass(frozen=True)
class MetaConfig:
    max_iter: int = 400
    init_step: float = 1.0
    shrink: float = 0.5
    max_halvings: int = 30
    tolerance: float = 1e-10


@dataclass
class MetaSolution:
    x_star: np.ndarray
    value: float
    objective: float
    per_task: np.ndarray
    iterations: int
    converged: bool
    trace: np.ndarray = field(repr=False, default=None)

    def record(self) -> dict:
        return {
            "x_star": [float(v) for v in self.x_star],
            "value": float(self.value),
            "objective": float(self.objective),
            "per_task": [float(v) for v in self.per_task],
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
        }


def _total_objective(x, inst: MetaInstance) -> float:
    val = meta_objective(x, inst)
    if inst.guidance is not None and inst.guidance_weight > 0.0:
        val += inst.guidance_weight * inst.guidance.value(x)
    return val


def _total_gradient(x, inst: MetaInstance) -> np.ndarray:
    g = meta_gradient(x, inst)
    if inst.guidance is not None and inst.guidance_weight > 0.0:
        g = g + inst.guidance_weight * inst.guidance.grad(np.asarray(x, dtype=float))
    return g


def train_meta(inst: MetaInstance, cfg: MetaConfig | None = None,
               start=None) -> MetaSolution:
    """Monotone line-search descent on the guided meta objective.

    Deterministic: fixed start (box center unless given), halving line
    search, accepts only strict improvements.  Convergence means the last
    accepted improvement fell below the tolerance.
    """
    cfg = cfg or MetaConfig()
    x = inst.box.center if start is None else np.asarray(start, dtype=float)
    x = inst.box.clip(x)
    val = _total_objective(x, inst)
    trace = [(0, val)]
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        g = _total_gradient(x, inst)
        gnorm = float(np.linalg.norm(g))
        if gnorm == 0.0:
            converged = True
            break
        step = cfg.init_step / gnorm
        improved = False
        for _ in range(cfg.max_halvings):
            cand = inst.box.clip(x - step * g)
            cand_val = _total_objective(cand, inst)
            if cand_val < val:
                improved = True
                break
            step *= cfg.shrink
        if not improved:
            converged = True
            break
        if val - cand_val < cfg.tolerance:
            x, val = cand, cand_val
            converged = True
            break
        x, val = cand, cand_val
        trace.append((it, val))
    tasks = per_task_values(x, inst)
    return MetaSolution(
        x_star=x,
        value=val,
        objective=float(np.dot(inst.mu.weights, tasks)),
        per_task=tasks,
        iterations=it,
        converged=converged,
        trace=np.array(trace, dtype=float),
    )


def adaptation_estimate(sol, inst: MetaInstance, m: int) -> float:
    """Linear extrapolation of the trained value toward a single task.

    The value function is a minimum of weighted task values, so its task
    sensitivities at the trained parameter are the per-task adapted risks.
    The estimate never undershoots a dedicated re-solve of the task.
    """
    if not 0 <= m < inst.type_space.m:
        raise ValueError("task index out of range")
    x = sol.x_star if hasattr(sol, "x_star") else np.asarray(sol, dtype=float)
    grad_mu = per_task_values(x, inst)
    u_star = float(np.dot(inst.mu.weights, grad_mu))
    direction = -inst.mu.weights.copy()
    direction[m] += 1.0
    return u_star + float(np.dot(grad_mu, direction))


def resolve_task(inst: MetaInstance, m: int, start=None,
                 cfg: MetaConfig | None = None) -> MetaSolution:
    """Re-solve with all weight on one task, warm-started and guidance-free."""
    solo = MetaInstance(
        features=inst.features,
        labels=inst.labels,
        type_space=inst.type_space,
        mu=TypeDistribution.point_mass(inst.type_space.m, m),
        step=inst.step,
        box=inst.box,
    )
    return train_meta(solo, cfg, start=start)
