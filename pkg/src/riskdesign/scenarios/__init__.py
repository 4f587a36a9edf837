"""End-to-end applications built on the solver stack."""

from .contract import (
    ContractInstance,
    ContractRecord,
    ContractSweep,
    solve_contract,
    sweep_epsilon_ic,
)
from .metalearn import (
    MetaConfig,
    MetaInstance,
    MetaSolution,
    adaptation_estimate,
    meta_gradient,
    meta_objective,
    per_task_values,
    resolve_task,
    train_meta,
)

__all__ = [
    "ContractInstance",
    "ContractRecord",
    "ContractSweep",
    "solve_contract",
    "sweep_epsilon_ic",
    "MetaConfig",
    "MetaInstance",
    "MetaSolution",
    "adaptation_estimate",
    "meta_gradient",
    "meta_objective",
    "per_task_values",
    "resolve_task",
    "train_meta",
]
