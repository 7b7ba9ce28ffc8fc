"""Noise sensitivity and stability of critical Erdos-Renyi random graphs."""

from .analytics import (ComponentDecomposition, SizeVector, components, distance_stats,
                        l2_distance, level_sizes, size_vector, susceptibility)
from .coalescent import (Blocks, check_aldous_conditions, check_bbsw_conditions, coalescent_params,
                         prune_excessive, sample_W, sample_WH)
from .experiments import (ExperimentConfig, Observable, TrialRecord, estimate_conditional_variance,
                          estimate_covariance, run_experiment, stability_diagnostics)
from .graphs import (Graph, NoiseParams, apply_noise, derive_noise_params, edge_index, edge_pair,
                     sample_gnp, sample_sprinkling_triple, sprinkle)
from .metric import MeasuredMetricSpace, extract_space, ghp_aggregate, ghp_exact, ghp_upper_embedded
from .oracles import ExcursionSequence, gw_height_bounds, sample_excursions, sample_gw_height
from .rng import Purpose, stream

__version__ = "0.1.0"
