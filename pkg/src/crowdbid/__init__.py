"""Budget-feasible reverse auctions for mobile crowdsensing.

Bidders offer to cover sensing tasks on a sector x timestep grid with
uncertain mobility.  :func:`tvm_run` picks winners greedily under a
proportional-share stopping rule and pays critical values, which keeps it
truthful, individually rational and within budget.  :func:`hvm_run`
searches inflated input budgets so that more of the real budget is used.
"""
from .baselines import greedy_bid_threshold, random_selection
from .coverage import (CoverageState, coverage_insert, direct_coverage, marginal_value,
                       marginal_value_batch, total_value)
from .experiments import ExperimentConfig, MetricsReport, run_experiment
from .hvm import SearchLog, binary_search_budget, find_bracket, hvm_run
from .model import (AuctionInstance, AuctionOutcome, Bid, GridSpec, InstanceError, MobilityProfile,
                    ValueMatrix, load_instance, make_instance, save_instance, validate_instance)
from .oracle import brute_force_optimal, property_battery, truthfulness_sweep
from .simulator import PopulationConfig, generate_population, population_instance, simulate_execution
from .tvm import tvm_allocate, tvm_pay, tvm_run

__version__ = "0.1.0"

__all__ = [
    "AuctionInstance",
    "AuctionOutcome",
    "Bid",
    "CoverageState",
    "ExperimentConfig",
    "GridSpec",
    "InstanceError",
    "MetricsReport",
    "MobilityProfile",
    "PopulationConfig",
    "SearchLog",
    "ValueMatrix",
    "binary_search_budget",
    "brute_force_optimal",
    "coverage_insert",
    "direct_coverage",
    "find_bracket",
    "generate_population",
    "greedy_bid_threshold",
    "hvm_run",
    "load_instance",
    "make_instance",
    "marginal_value",
    "marginal_value_batch",
    "population_instance",
    "property_battery",
    "random_selection",
    "run_experiment",
    "save_instance",
    "simulate_execution",
    "total_value",
    "truthfulness_sweep",
    "tvm_allocate",
    "tvm_pay",
    "tvm_run",
    "validate_instance",
]
