"""Spatially clustered piecewise-exponential survival models with a graph-weighted Chinese restaurant process."""

from .errors import ConvergenceError, DataError, EmptyPieceError, RankDeficiencyError
from .graph import SpatialGraph, WeightMatrix, graph_distances, lattice_graph, weight_matrix
from .pipeline import FitResult, auto_cutpoints, fit, select
from .posterior import PosteriorSummary, cpo_lpml, dahl_partition, hpd_interval, select_h, summarize
from .sampler import ChainTrace, GwcrpConfig, run_chain
from .simulation import SimulationDesign, generate_dataset, lattice_design, load_design, rand_index
from .survival import (
    HazardPartition,
    ParamVector,
    RegionSummary,
    SurvivalDataset,
    SurvivalRecord,
    exposure,
    fit_region_mle,
    log_likelihood,
)

__version__ = "0.1.0"

__all__ = [
    "ChainTrace", "ConvergenceError", "DataError", "EmptyPieceError", "FitResult", "GwcrpConfig",
    "HazardPartition", "ParamVector", "PosteriorSummary", "RankDeficiencyError", "RegionSummary",
    "SimulationDesign", "SpatialGraph", "SurvivalDataset", "SurvivalRecord", "WeightMatrix",
    "auto_cutpoints", "cpo_lpml", "dahl_partition", "exposure", "fit", "fit_region_mle", "generate_dataset",
    "graph_distances", "hpd_interval", "lattice_design", "lattice_graph", "load_design", "log_likelihood",
    "rand_index", "run_chain", "select", "select_h", "summarize", "weight_matrix",
]
