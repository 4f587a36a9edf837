"""Risk preference design toolkit.

Coherent risk measures on empirical samples, a population of risk types with
transport geometry, the follower's risk-averse decision problem, the
leader's design problem over type weightings, and empirical checks of the
sensitivity bounds that connect them.
"""

from .bounds import (
    BoundReport,
    GrowthEstimate,
    RegularityEstimate,
    check_compromise_bound,
    check_deviation_bound,
    check_performance_reduction,
    estimate_growth_constant,
    estimate_lipschitz,
    estimate_regularity_constant,
    random_bound_instance,
    run_bound_family,
    set_deviation,
    write_counterexamples,
)
from .follower import (
    Box,
    FollowerGrid,
    FollowerSolution,
    LossModel,
    SampleSizeParams,
    ScenarioSet,
    SolverConfig,
    epsilon_optimal_set,
    follower_objective,
    follower_subgradient,
    sample_size_bound,
    solve_follower,
    type_risk_profile,
    value_sensitivity,
)
from .risk import (
    EmpiricalLoss,
    KusuokaMeasure,
    RiskSpectrum,
    approximate_spectrum,
    average_value_at_risk,
    dual_representation_check,
    kusuoka_risk,
    pseudo_metric_estimate,
    spectral_risk,
    spectrum_to_kusuoka,
    value_at_risk,
)
from .stackelberg import (
    Equilibrium,
    LeaderLoss,
    StripeConfig,
    StripeProblem,
    VerificationReport,
    brute_force_stripe,
    leader_objective,
    simplex_lattice,
    solve_stripe,
    verify_equilibrium,
)
from .typespace import (
    TypeDistribution,
    TypeSpace,
    equivalent_spectrum,
    simplex_project,
    wasserstein1,
    wasserstein1_subgradient,
)

__version__ = "0.1.0"

__all__ = [
    "BoundReport",
    "Box",
    "EmpiricalLoss",
    "Equilibrium",
    "FollowerGrid",
    "FollowerSolution",
    "GrowthEstimate",
    "KusuokaMeasure",
    "LeaderLoss",
    "LossModel",
    "RegularityEstimate",
    "RiskSpectrum",
    "SampleSizeParams",
    "ScenarioSet",
    "SolverConfig",
    "StripeConfig",
    "StripeProblem",
    "TypeDistribution",
    "TypeSpace",
    "VerificationReport",
    "approximate_spectrum",
    "average_value_at_risk",
    "brute_force_stripe",
    "check_compromise_bound",
    "check_deviation_bound",
    "check_performance_reduction",
    "dual_representation_check",
    "epsilon_optimal_set",
    "equivalent_spectrum",
    "estimate_growth_constant",
    "estimate_lipschitz",
    "estimate_regularity_constant",
    "follower_objective",
    "follower_subgradient",
    "kusuoka_risk",
    "leader_objective",
    "pseudo_metric_estimate",
    "random_bound_instance",
    "run_bound_family",
    "sample_size_bound",
    "set_deviation",
    "simplex_lattice",
    "simplex_project",
    "solve_follower",
    "solve_stripe",
    "spectral_risk",
    "spectrum_to_kusuoka",
    "type_risk_profile",
    "value_at_risk",
    "value_sensitivity",
    "verify_equilibrium",
    "wasserstein1",
    "wasserstein1_subgradient",
    "write_counterexamples",
]
