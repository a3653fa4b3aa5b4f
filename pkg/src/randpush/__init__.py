"""Push-sum, subgradient-push and their gated variants over random directed graphs."""

from .consensus import (
    NodeStates, PerturbationSchedule, RoundTrace, consensus_error, effective_graph,
    mpp_step, pushsum_step, run_mpp,
)
from .graphs import (
    DiGraph, GraphEnsemble, GraphSequenceSampler, is_strongly_connected, load_ensemble,
    union, validate_ensemble,
)
from .optimize import (
    ObjectiveFamily, abs_objective, averaged_iterate_update, huber_objective, msp_step,
    run_msp, solve_centralized, sp_step, step_size,
)
from .weights import (
    BoundConstants, RateBoundInputs, bound_constants, cut_flow, ergodicity_coefficient,
    gamma_factor, is_irreducible, product, step_sum_lower_bound, theorem2_bound, weight_matrix,
)

__version__ = "0.1.0"
