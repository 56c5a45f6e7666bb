"""Graph edit distance solvers: exact A*, bipartite upper bounds and a learned heuristic."""

from .assignment import Assignment, lap_hungarian, lap_jv, solve_lap
from .bipartite import BipartiteGedResult, hungarian_ged, vj_ged
from .errors import BudgetExceeded, EmptyGraphError, GedError, GraphError, InfeasibleError, InvalidPathError
from .genn import (
    FeatureConfig,
    GennHeuristic,
    GennModel,
    build_cache,
    exact_dynamic_update,
    ged_to_similarity,
    masked_similarity,
    predict_ged,
    predict_similarity,
    similarity_to_h,
)
from .graph import EditCostModel, EditOp, EditPath, Graph, PartialMapping, load_graph, load_graphs, path_cost, validate_graph
from .heuristics import HungarianHeuristic, ZeroHeuristic, hungarian_heuristic, zero_heuristic
from .search import SearchLimits, SearchStats, SolveResult, astar_solve, beam_solve
from .training import TrainConfig, finetune_with_paths, generate_partial_labels, train_regression

__version__ = "0.1.0"

__all__ = [
    "Assignment",
    "BipartiteGedResult",
    "BudgetExceeded",
    "EditCostModel",
    "EditOp",
    "EditPath",
    "EmptyGraphError",
    "FeatureConfig",
    "GedError",
    "GennHeuristic",
    "GennModel",
    "Graph",
    "GraphError",
    "HungarianHeuristic",
    "InfeasibleError",
    "InvalidPathError",
    "PartialMapping",
    "SearchLimits",
    "SearchStats",
    "SolveResult",
    "TrainConfig",
    "ZeroHeuristic",
    "astar_solve",
    "beam_solve",
    "build_cache",
    "exact_dynamic_update",
    "finetune_with_paths",
    "ged_to_similarity",
    "generate_partial_labels",
    "hungarian_ged",
    "hungarian_heuristic",
    "lap_hungarian",
    "lap_jv",
    "load_graph",
    "load_graphs",
    "masked_similarity",
    "path_cost",
    "predict_ged",
    "predict_similarity",
    "similarity_to_h",
    "solve_lap",
    "train_regression",
    "validate_graph",
    "vj_ged",
    "zero_heuristic",
]
