"""Contextual budget bandits: models, occupancy LPs, index policies, simulation and allocation search."""
from .model import BudgetAllocation, CbbInstance, load_instance, save_instance, validate_instance
from .generators import gen_appendixA_example2, gen_blended, gen_churner, gen_fivesix, gen_organic, gen_random, gen_theorem1
from .lp import coip_budget, lp_fixed_budget, lp_region, solve_lp, solve_occupancy
from .whittle import compute_whittle_table, whittle_index
from .policies import (
    COIPPolicy,
    FlexOccupancyPolicy,
    GreedyPolicy,
    RandomPolicy,
    SoftOccupancyPolicy,
    WhittlePolicy,
)
from .sim import Oracle, SimConfig, fairness_of, oracle, oracle_small, run_epoch
from .search import BranchAndBound, Mitosis, bnb, mitosis
from .asymptotic import stationary_distribution, verify_counterexamples

__version__ = "0.1.0"

__all__ = [
    "BudgetAllocation", "CbbInstance", "load_instance", "save_instance", "validate_instance",
    "gen_appendixA_example2", "gen_blended", "gen_churner", "gen_fivesix", "gen_organic", "gen_random",
    "gen_theorem1", "coip_budget", "lp_fixed_budget", "lp_region", "solve_lp", "solve_occupancy",
    "compute_whittle_table", "whittle_index", "COIPPolicy", "FlexOccupancyPolicy", "GreedyPolicy",
    "RandomPolicy", "SoftOccupancyPolicy", "WhittlePolicy", "Oracle", "SimConfig", "fairness_of",
    "oracle", "oracle_small", "run_epoch", "BranchAndBound", "Mitosis", "bnb", "mitosis",
    "stationary_distribution", "verify_counterexamples",
]
