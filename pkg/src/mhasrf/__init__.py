"""Gradient-trained soft tree ensembles aggregated by reliability-weighted
multi-head attention, with a full tabular pipeline for binary no-show
classification."""

from .attention import (
    AttentionParams,
    aggregate_predict,
    attention_trace,
    final_attention,
    head_attention,
    reliability,
)
from .config import TrainConfig
from .data import (
    AppointmentTable,
    FeatureFrame,
    SplitSpec,
    derive_features,
    encode,
    frame_from_arrays,
    load_table,
    split,
)
from .errors import DataError, MhasrfError, ModelFormatError, NumericalError
from .forest import SoftForest, compute_leaf_stats, fit_stage1, lookup_context
from .importance import attention_importance, combined_importance, tree_importance
from .model import MhasrfModel
from .model_io import load_model, save_model
from .synthetic import SignalConfig, generate_synthetic
from .training import TrainHistory, grad_check, loss, train
from .tree import SoftTree, hard_leaf, path_probabilities, routing_probability, soft_predict

__version__ = "0.1.0"
