"""Study design for observational causal inference in assignment-control space."""

from .data import Dataset, RngSpec, latent_access, read_csv, write_csv
from .diagnose import ac_plot_data, effect_estimates, level_set_check, match_quality, overlap_histogram, smd
from .match import (
    DistanceSpec,
    Matching,
    NearfarSpec,
    design_spec,
    distance_matrix,
    nearfar_match,
    optimal_bipartite_match,
)
from .score import ScoredDataset, fit_prognostic, fit_propensity, score_dataset, split_pilot
from .simulate import SimConfig, SimTruth, generate, get_preset, scenario_presets

__all__ = [
    "Dataset", "RngSpec", "latent_access", "read_csv", "write_csv",
    "SimConfig", "SimTruth", "generate", "get_preset", "scenario_presets",
    "ScoredDataset", "fit_propensity", "fit_prognostic", "score_dataset", "split_pilot",
    "DistanceSpec", "NearfarSpec", "Matching", "design_spec", "distance_matrix", "optimal_bipartite_match", "nearfar_match",
    "smd", "overlap_histogram", "ac_plot_data", "effect_estimates", "level_set_check", "match_quality",
]
__version__ = "0.1.0"
