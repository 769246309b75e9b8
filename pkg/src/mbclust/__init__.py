"""Gaussian mixture clustering started from model-based hierarchical agglomeration.

The merge-tree kernel has a compiled implementation and a numpy fallback with
bit-identical output; ``mbclust.mbhac.BACKEND`` tells which one is active.
Set ``MBCLUST_PURE_PYTHON=1`` before import to force the fallback.
"""

from .data import DataError, DataMatrix, load_csv, sample_covariance
from .gmm import (
    ComponentCollapse,
    FitError,
    FitResult,
    GaussianMixture,
    ModelName,
    Singularity,
    classify,
    e_step,
    em,
    m_step,
)
from .init_strategies import InitStrategy, init_emem, init_kmeans, init_mbhac, random_start
from .mbhac import BACKEND, MergeTree, Partition, cut_tree, mbhac_tree
from .selection import ALL_MODELS, SweepResult, ari, bic, count_params, sweep
from .transform import TransformedData, TransformKind, apply_transform

__version__ = "0.1.0"

__all__ = [
    "ALL_MODELS", "BACKEND", "ComponentCollapse", "DataError", "DataMatrix", "FitError",
    "FitResult", "GaussianMixture", "InitStrategy", "MergeTree", "ModelName", "Partition",
    "Singularity", "SweepResult", "TransformKind", "TransformedData", "apply_transform", "ari",
    "bic", "classify", "count_params", "cut_tree", "e_step", "em", "init_emem", "init_kmeans",
    "init_mbhac", "load_csv", "m_step", "mbhac_tree", "random_start", "sample_covariance", "sweep",
]
