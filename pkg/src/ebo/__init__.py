"""Ensemble Bayesian optimization with additive tile models.

Scales batched Bayesian optimization to high dimensions and large sample
counts by combining three ideas:

* an additive model whose groups, resolution and layouts are learned by
  Gibbs sampling over tile / random-grid features;
* an ensemble of local models on a random hierarchical partition of the
  domain, each proposing candidates from its own region;
* a diversity-aware greedy filter that reduces the pooled candidates to one
  batch, plus majority-vote synchronization of the learned structure.

The hot kernels run through a compiled extension when available and fall
back to a pure-NumPy implementation otherwise (``EBO_FORCE_PYTHON=1``
forces the fallback; ``ebo.backend_name()`` reports the active one).
"""

from ._backend import BACKEND_NAME as _backend_name
from .acquisition import (
    Candidate,
    allocate_budget,
    block_optimize,
    default_fstar,
    eta,
    eta_values,
    partition_batch,
)
from .core import (
    Box,
    Dataset,
    Decomposition,
    RngStream,
    TileParams,
    ValidationError,
    validate_dataset,
)
from .driver import (
    ConfigError,
    IterationRecord,
    RunConfig,
    RunRecord,
    execute,
    run,
    run_pbo,
    run_random,
)
from .features import (
    FeatureSpace,
    SparseFeatures,
    Tiling,
    block_labels,
    encode,
    kernel,
    kernel_matrix,
    sample_tiling,
)
from .gibbs import GibbsState, default_cut_cap
from .gp import (
    FeaturePosterior,
    TilePosterior,
    exact_gp_posterior,
    exact_log_likelihood,
    feature_log_likelihood,
    fit_features,
    predict_features,
)
from .partition import PartitionSet, assign, mondrian_partition
from .selection import greedy_filter, sync_k, sync_z

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "backend_name",
    # core types
    "Box",
    "Dataset",
    "Decomposition",
    "TileParams",
    "RngStream",
    "ValidationError",
    "validate_dataset",
    # features and models
    "Tiling",
    "sample_tiling",
    "block_labels",
    "encode",
    "kernel",
    "kernel_matrix",
    "SparseFeatures",
    "FeatureSpace",
    "FeaturePosterior",
    "TilePosterior",
    "fit_features",
    "predict_features",
    "feature_log_likelihood",
    "exact_gp_posterior",
    "exact_log_likelihood",
    "GibbsState",
    "default_cut_cap",
    # partitioning
    "PartitionSet",
    "mondrian_partition",
    "assign",
    # acquisition and selection
    "Candidate",
    "eta",
    "eta_values",
    "default_fstar",
    "block_optimize",
    "partition_batch",
    "allocate_budget",
    "greedy_filter",
    "sync_k",
    "sync_z",
    # driver
    "RunConfig",
    "RunRecord",
    "IterationRecord",
    "ConfigError",
    "run",
    "run_pbo",
    "run_random",
    "execute",
]


def backend_name() -> str:
    """Name of the active compute backend: ``"compiled"`` or ``"python"``."""
    return _backend_name
