"""Joint clustering of users and movies from partially observed, noisy binary ratings."""

from .model import ModelConfig, Instance, generate_instance, estimate_epsilon, estimate_r
from .metrics import EvalReport, evaluate, pair_error, exact_match, sign_accuracy
from .combinatorial import exhaustive_min_disagreement, greedy_zero_disagreement
from .convex import SvtConfig, solve_dual_svt, singular_value_shrink, conjecture_experiment
from .spectral import SpectralOptions, spectral_pipeline
from .baseline import nearest_neighbor_cluster, regime_classify, ambiguity_witness
from .experiments import GridSpec, recover, run_grid

__version__ = "0.1.0"
