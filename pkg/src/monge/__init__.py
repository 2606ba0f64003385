"""Distance-cost optimal transport on convex domains with projective metrics."""
from .approximation import ApproxConfig, ApproxRun, c_eps_cost, eval_C_eps, minimize_C_eps, run_schedule
from .errors import *  # noqa: F401,F403
from .geometry import (
    Ball,
    Box,
    Euclidean,
    Hilbert,
    PNorm,
    PolyhedralNorm,
    Polytope,
    boundary_chord,
    contains_interior,
    distance,
    finsler_norm,
    interpolate,
)
from .measures import (
    DiscreteMeasure,
    estimate_doubling,
    grid_discretize,
    greedy_eps_net,
    load_measure,
    nearest_point_projection,
    pushforward,
    sample_uniform,
)
from .selection import brute_force_secondary, build_beta, check_restricted_monotonicity, select, solve_secondary
from .transport import (
    TransportPlan,
    build_cost,
    check_cyclical_monotonicity,
    extract_lipschitz_potential,
    solve_kantorovich,
    wasserstein,
)
from .verification import (
    check_interpolant_disjointness,
    convergence_report,
    splitting_index,
    transport_set,
)

__version__ = "0.1.0"
