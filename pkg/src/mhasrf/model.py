"""The assembled predictor: scaler + frozen forest + attention aggregator.

The model standardizes inputs with train-set statistics before they reach
the trees; leaf contexts, distances, and importance therefore all live in
the same standardized space.
"""

from dataclasses import dataclass, field

import numpy as np

from .attention import AttentionParams, delta_matrix, forward_batch
from .config import TrainConfig
from .forest import SoftForest, instance_context
from .tree import softmax

VARIANT_FULL = "MHASRF"
VARIANT_SINGLE_HEAD = "SHASRF"
VARIANT_NO_RELIABILITY = "MHASRF-without-delta"


@dataclass
class MhasrfModel:
    feature_names: list
    kinds: list
    encoders: dict
    fill_values: dict
    scaler_mean: np.ndarray    # (d,)
    scaler_scale: np.ndarray   # (d,) never zero
    forest: SoftForest
    attention: AttentionParams
    config: TrainConfig
    history_summary: dict = field(default_factory=dict)
    variant: str = VARIANT_FULL

    def standardize(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.scaler_mean) / self.scaler_scale

    def predict_proba(self, X: np.ndarray, chunk: int = 4096) -> np.ndarray:
        """(n, C) class distributions for raw (unstandardized) encoded rows."""
        Xs = self.standardize(X)
        out = np.empty((Xs.shape[0], self.attention.n_classes))
        for start in range(0, Xs.shape[0], chunk):
            part = Xs[start:start + chunk]
            dist2, targets, _ = instance_context(self.forest, part)
            probs, _, _ = forward_batch(self.attention, self.forest.errors, dist2, targets)
            out[start:start + chunk] = probs
        return out

    def predict(self, X: np.ndarray) -> np.ndarray:
        """(n,) predicted classes, argmax of the distribution (ties -> 0)."""
        return np.argmax(self.predict_proba(X), axis=1)

    def final_attention_batch(self, X: np.ndarray, chunk: int = 4096) -> np.ndarray:
        """(n, T, H) post-mixing attention weights for raw encoded rows."""
        Xs = self.standardize(X)
        T = self.forest.n_trees
        H = self.attention.n_heads
        out = np.empty((Xs.shape[0], T, H))
        for start in range(0, Xs.shape[0], chunk):
            part = Xs[start:start + chunk]
            dist2, _, _ = instance_context(self.forest, part)
            scores = delta_matrix(self.attention, self.forest.errors)[None] \
                - dist2[:, :, None] / (2.0 * self.attention.tau)
            alpha = softmax(scores, axis=1)
            out[start:start + chunk] = np.einsum("bth,gh->btg", alpha, self.attention.head_mix)
        return out
