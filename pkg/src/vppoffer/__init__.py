"""Day-ahead offering toolkit for a PV + storage virtual power plant.

Pipeline: estimate a per-hour Markov price model from history, sample price
scenarios, fix each scenario's worst-case PV availability from a budgeted
uncertainty set, and optimize the monotone offer surface with a projected
subgradient method whose recourse evaluations run through an exact greedy
oracle.  Reference oracles (dense simplex, extensive-form LP, brute-force
enumeration) ship alongside for verification.
"""

from .errors import InfeasibleError, InputError, VppError
from .model import (
    DeviceParams,
    DispatchTrajectory,
    OfferSurface,
    Violation,
    build_dispatch,
    make_params,
    power_cap_excess,
    reconstruct_dispatch,
    rt_cost_direct,
    validate_offer,
)
from .price_markov import (
    PriceGrid,
    ScenarioSet,
    TransitionModel,
    build_grid,
    estimate_transitions,
    sample_trajectories,
)
from .psm import (
    PsmConfig,
    PsmResult,
    assemble_subgradient,
    bb_step,
    evaluate_objective,
    pava_project,
    solve,
)
from .pv_uncertainty import BudgetSet, check_decoupling_condition, worst_case_profile
from .recourse import (
    EffectivePrices,
    EnergyFeasibleSet,
    RecourseSolution,
    StagewiseCost,
    effective_prices,
    greedy_solve,
    hourly_cost,
    scenario_subgradient_piece,
    solve_scenario,
)

__all__ = [
    "BudgetSet",
    "DeviceParams",
    "DispatchTrajectory",
    "EffectivePrices",
    "EnergyFeasibleSet",
    "InfeasibleError",
    "InputError",
    "OfferSurface",
    "PriceGrid",
    "PsmConfig",
    "PsmResult",
    "RecourseSolution",
    "ScenarioSet",
    "StagewiseCost",
    "TransitionModel",
    "Violation",
    "VppError",
    "assemble_subgradient",
    "bb_step",
    "build_dispatch",
    "build_grid",
    "check_decoupling_condition",
    "effective_prices",
    "estimate_transitions",
    "evaluate_objective",
    "greedy_solve",
    "hourly_cost",
    "make_params",
    "pava_project",
    "power_cap_excess",
    "reconstruct_dispatch",
    "rt_cost_direct",
    "sample_trajectories",
    "scenario_subgradient_piece",
    "solve",
    "solve_scenario",
    "validate_offer",
    "worst_case_profile",
]

__version__ = "0.1.0"
