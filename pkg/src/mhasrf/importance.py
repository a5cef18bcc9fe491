"""Dual-level feature importance.

Tree-level importance averages |w| per feature over a tree's inner nodes
and then over trees. Attention-level importance reweights each tree's
per-feature score by its average attention (final attention reduced by
head-mean per instance, then averaged over a dataset). The combined score
normalizes both to unit sum and averages them.
"""

import csv
import dataclasses
import json
from dataclasses import dataclass

import numpy as np

from .attention import AttentionParams, delta_matrix
from .forest import SoftForest, instance_context
from .tree import softmax


@dataclass
class ImportanceReport:
    feature_names: list
    tree: np.ndarray          # (d,) raw tree-level scores
    attention: np.ndarray     # (d,) raw attention-level scores
    combined: np.ndarray      # (d,) normalized, sums to 1
    tree_share: np.ndarray
    attention_share: np.ndarray

    def ranking(self):
        """Feature names ordered by combined importance, best first."""
        order = np.argsort(-self.combined, kind="stable")
        return [self.feature_names[i] for i in order]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["feature", "i_tree", "i_attention", "i_combined",
                             "tree_share", "attention_share"])
            for i, name in enumerate(self.feature_names):
                writer.writerow([name, repr(float(self.tree[i])),
                                 repr(float(self.attention[i])),
                                 repr(float(self.combined[i])),
                                 repr(float(self.tree_share[i])),
                                 repr(float(self.attention_share[i]))])

    def write_json(self, path) -> None:
        payload = [
            {"feature": name,
             "i_tree": float(self.tree[i]),
             "i_attention": float(self.attention[i]),
             "i_combined": float(self.combined[i]),
             "tree_share": float(self.tree_share[i]),
             "attention_share": float(self.attention_share[i])}
            for i, name in enumerate(self.feature_names)
        ]
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(payload, handle, indent=2)
            handle.write("\n")


def tree_importance_per_tree(forest: SoftForest) -> np.ndarray:
    """(T, d): mean absolute router weight per feature within each tree."""
    return np.stack([np.abs(t.weights).mean(axis=0) for t in forest.trees])


def tree_importance(forest: SoftForest) -> np.ndarray:
    """(d,): per-tree scores averaged over the forest."""
    return tree_importance_per_tree(forest).mean(axis=0)


def mean_final_attention(forest: SoftForest, params: AttentionParams, X,
                         chunk: int = 4096) -> np.ndarray:
    """(T,): final attention reduced by head-mean, averaged over rows of X."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] == 0:
        raise ValueError("attention importance needs a non-empty dataset")
    total = np.zeros(forest.n_trees)
    delta = delta_matrix(params, forest.errors)
    for start in range(0, X.shape[0], chunk):
        part = X[start:start + chunk]
        dist2, _, _ = instance_context(forest, part)
        scores = delta[None] - dist2[:, :, None] / (2.0 * params.tau)
        alpha = softmax(scores, axis=1)
        alpha_final = np.einsum("bth,gh->btg", alpha, params.head_mix)
        total += alpha_final.mean(axis=2).sum(axis=0)
    return total / X.shape[0]


def attention_importance(forest: SoftForest, params: AttentionParams, frame) -> np.ndarray:
    """(d,): attention-weighted per-tree importance, averaged over trees."""
    alpha_bar = mean_final_attention(forest, params, frame.X)
    per_tree = tree_importance_per_tree(forest)
    return (alpha_bar[:, None] * per_tree).mean(axis=0)


def combined_importance(tree_scores, attention_scores) -> np.ndarray:
    """Normalize both score vectors to unit sum and average them."""
    tree_scores = np.asarray(tree_scores, dtype=np.float64)
    attention_scores = np.asarray(attention_scores, dtype=np.float64)
    if tree_scores.shape != attention_scores.shape:
        raise ValueError("score vectors must have the same length")
    if np.any(tree_scores < 0) or np.any(attention_scores < 0):
        raise ValueError("importance scores must be non-negative")
    sums = (tree_scores.sum(), attention_scores.sum())
    if sums[0] == 0.0 and sums[1] == 0.0:
        raise ValueError("both importance vectors are all-zero")
    parts = [v / s for v, s in zip((tree_scores, attention_scores), sums) if s > 0.0]
    return sum(parts) / len(parts)


def compute_importance(forest: SoftForest, params: AttentionParams, frame,
                       feature_names=None) -> ImportanceReport:
    """Full report over a frame whose X lives in the forest's input space."""
    tree_scores = tree_importance(forest)
    attn_scores = attention_importance(forest, params, frame)
    combined = combined_importance(tree_scores, attn_scores)
    names = list(feature_names if feature_names is not None else frame.feature_names)

    def _share(v):
        s = v.sum()
        return v / s if s > 0 else np.zeros_like(v)

    return ImportanceReport(
        feature_names=names,
        tree=tree_scores,
        attention=attn_scores,
        combined=combined,
        tree_share=_share(tree_scores),
        attention_share=_share(attn_scores),
    )


def model_importance(model, frame) -> ImportanceReport:
    """Importance for a trained model on raw encoded rows (standardizes
    internally so scores live in the model's input space)."""
    scaled = dataclasses.replace(frame, X=model.standardize(frame.X))
    return compute_importance(model.forest, model.attention, scaled,
                              feature_names=model.feature_names)
