"""Unsplittable capacitated vehicle routing on trees.

Solver pipeline (decomposition, local simplification, height reduction, value
sets, dynamic program), exact oracles, heuristic baselines, generators, and a
CLI.  All arithmetic is exact rational.
"""

from .instance import (
    Instance,
    Solution,
    Tour,
    UcvrpError,
    ParseError,
    CapExceeded,
    check_bounded_distance,
    check_feasible,
    gen_binpacking_path,
    gen_binpacking_star,
    gen_random_instance,
    parse_instance,
    parse_solution,
    preprocess,
    solution_cost,
    tour_cost,
    write_instance,
    write_solution,
)
from .decompose import Params, Region, Hierarchy, build_hierarchy
from .assignment import BipartiteWeights, assign
from .structure import ReducedTree, ValueSets, adaptive_round, build_value_sets, height_reduce, map_back
from .dp import Caps, solve
from .baselines import OracleResult, binpacking_opt, exact_opt, itp_heuristic

__all__ = [
    "Instance",
    "Solution",
    "Tour",
    "UcvrpError",
    "ParseError",
    "CapExceeded",
    "Params",
    "Region",
    "Hierarchy",
    "BipartiteWeights",
    "ReducedTree",
    "ValueSets",
    "Caps",
    "OracleResult",
    "assign",
    "adaptive_round",
    "build_hierarchy",
    "build_value_sets",
    "check_bounded_distance",
    "check_feasible",
    "exact_opt",
    "binpacking_opt",
    "gen_binpacking_path",
    "gen_binpacking_star",
    "gen_random_instance",
    "height_reduce",
    "itp_heuristic",
    "map_back",
    "parse_instance",
    "parse_solution",
    "preprocess",
    "solution_cost",
    "solve",
    "tour_cost",
    "write_instance",
    "write_solution",
]
