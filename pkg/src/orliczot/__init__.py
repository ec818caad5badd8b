"""Orlicz-Sobolev transport and Orlicz-EPT distances between measures on a graph."""

from .errors import DomainError, InputError, NumericalError, OrliczError, ParameterError, StructuralError
from .graph import (
    Graph,
    ShortestPathTree,
    build_spt,
    distances_from,
    edge_path_to_root,
    generate_graph,
    graph_distance,
    read_graph,
    write_graph,
)
from .measure import (
    SHAT,
    AugmentedMeasure,
    DiscreteMeasure,
    active_edges,
    augment,
    difference_aggregates,
    edge_aggregates,
    read_measure,
    write_measure,
)
from .nfunc import Custom, ExpMinus, ExpSquare, Linear, NFunction, Power, RawPower, parse_phi
from .ost import OstParams, OstResult, WeightFunction, minimize_objective, ost_objective, solve_ost, theta
from .ept import AugmentedProblem, BisectionTrace, brackets, build_augmented, exact_ot, orlicz_ept, sinkhorn

__version__ = "0.1.0"

__all__ = [
    "DomainError", "InputError", "NumericalError", "OrliczError", "ParameterError", "StructuralError",
    "Graph", "ShortestPathTree", "build_spt", "distances_from", "edge_path_to_root", "generate_graph",
    "graph_distance", "read_graph", "write_graph",
    "SHAT", "AugmentedMeasure", "DiscreteMeasure", "active_edges", "augment", "difference_aggregates", "edge_aggregates",
    "read_measure", "write_measure",
    "Custom", "ExpMinus", "ExpSquare", "Linear", "NFunction", "Power", "RawPower", "parse_phi",
    "OstParams", "OstResult", "WeightFunction", "minimize_objective", "ost_objective", "solve_ost", "theta",
    "AugmentedProblem", "BisectionTrace", "brackets", "build_augmented", "exact_ot", "orlicz_ept", "sinkhorn",
]
