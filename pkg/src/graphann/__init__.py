"""Modular graph-based approximate nearest neighbor search."""

from .core import (
    GroundTruth,
    SyntheticSpec,
    VectorSet,
    brute_force_knn,
    euclidean_distance,
    generate_synthetic,
    load_vectors,
    save_vectors,
)
from .graph import Graph, GraphStats, build_exact_knng, connected_components, degree_stats, graph_quality
from .pipelines import Index, PipelineConfig, build_index, preset, query
from .search import SearchTrace, SeedStrategy
from .validation import ConfigError, ContractError, FormatError

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ContractError",
    "FormatError",
    "Graph",
    "GraphStats",
    "GroundTruth",
    "Index",
    "PipelineConfig",
    "SearchTrace",
    "SeedStrategy",
    "SyntheticSpec",
    "VectorSet",
    "brute_force_knn",
    "build_exact_knng",
    "build_index",
    "connected_components",
    "degree_stats",
    "euclidean_distance",
    "generate_synthetic",
    "graph_quality",
    "load_vectors",
    "preset",
    "query",
    "save_vectors",
]
