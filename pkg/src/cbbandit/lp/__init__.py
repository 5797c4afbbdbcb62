from .occupancy import (
    OccupancyLP,
    OccupancySolution,
    add_fairness_constraints,
    build_occupancy_lp,
    coip_budget,
    flow_residuals,
    lp_fixed_budget,
    lp_region,
    occupancy_index,
    raw_budgets,
    soft_policy,
    solve_occupancy,
)
from .program import EQ, GE, LE, LinearProgram, LPResult, solve_lp

__all__ = [
    "EQ",
    "GE",
    "LE",
    "LinearProgram",
    "LPResult",
    "OccupancyLP",
    "OccupancySolution",
    "add_fairness_constraints",
    "build_occupancy_lp",
    "coip_budget",
    "flow_residuals",
    "lp_fixed_budget",
    "lp_region",
    "occupancy_index",
    "raw_budgets",
    "soft_policy",
    "solve_lp",
    "solve_occupancy",
]
