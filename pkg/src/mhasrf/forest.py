"""Bagged ensembles of soft trees plus the per-leaf context statistics.

Stage 1 fits each tree on its own bootstrap sample by minimizing that
tree's cross-entropy with Adam; the trees are then frozen. Afterwards every
training instance is hard-routed through every tree to collect, per leaf,
the mean input vector, the mean one-hot target, and the instance count, and
to compute each tree's misclassification rate. Those statistics feed the
attention layer.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError
from .optim import Adam
from .tree import (
    PROB_FLOOR,
    SoftTree,
    hard_leaf,
    hard_leaves,
    init_tree,
    stacked_forward,
    stacked_loss_and_grads,
)

log = logging.getLogger(__name__)

# SeedSequence stream tags, so the bootstrap/init/batch RNGs never collide
_STREAM_INIT = 1
_STREAM_BATCHES = 2


@dataclass
class LeafStats:
    """Per-(tree, leaf) context of the training instances hard-routed there.

    Empty leaves hold the global fallback (training mean input, global class
    frequency) so downstream lookups stay well-defined; `counts` records
    which leaves those are.
    """

    mean_inputs: np.ndarray   # (T, L, d)
    mean_targets: np.ndarray  # (T, L, C)
    counts: np.ndarray        # (T, L) ints
    global_mean: np.ndarray   # (d,)
    global_freq: np.ndarray   # (C,)

    def empty_leaves(self):
        """(tree, leaf) pairs that received no training instances."""
        trees, leaves = np.nonzero(self.counts == 0)
        return list(zip(trees.tolist(), leaves.tolist()))


@dataclass
class SoftForest:
    trees: list[SoftTree]
    bootstrap_seed: int
    stats: LeafStats | None = field(default=None)
    errors: np.ndarray | None = field(default=None)  # (T,) per-tree misclassification rate

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def stacked_params(self):
        """(weights (T,N,d), biases (T,N), leaf_logits (T,L,C)) views-by-copy."""
        return (
            np.stack([t.weights for t in self.trees]),
            np.stack([t.biases for t in self.trees]),
            np.stack([t.leaf_logits for t in self.trees]),
        )


def bootstrap_indices(seed: int, tree_index: int, n: int) -> np.ndarray:
    """Size-n with-replacement sample for one tree, seeded by seed + tree."""
    return np.random.default_rng(seed + tree_index).integers(0, n, size=n)


def fit_stage1(train, config, epoch_callback=None) -> SoftForest:
    """Fit T soft trees on bootstrap samples; returns the frozen forest.

    All trees advance together on stacked (T, ...) parameter arrays; their
    objectives are independent so this is exactly per-tree Adam. If given,
    `epoch_callback(epoch, (weights, biases, leaf_logits))` runs after each
    epoch (used by the trainer to record loss history).
    """
    config.validate()
    X = np.ascontiguousarray(train.X, dtype=np.float64)
    y = np.asarray(train.y, dtype=np.intp)
    n, d = X.shape
    if n == 0:
        raise ValueError("cannot fit on an empty frame")
    n_classes = max(2, int(y.max()) + 1)
    T = config.num_trees

    init_trees = [
        init_tree(
            config.depth, d, n_classes,
            np.random.default_rng(np.random.SeedSequence([config.seed, _STREAM_INIT, k])),
        )
        for k in range(T)
    ]
    weights = np.stack([t.weights for t in init_trees])
    biases = np.stack([t.biases for t in init_trees])
    leaf_logits = np.stack([t.leaf_logits for t in init_trees])

    bootstrap_seed = config.seed
    boot = np.stack([bootstrap_indices(bootstrap_seed, k, n) for k in range(T)])  # (T, n)

    params = [weights, biases, leaf_logits]
    adam = Adam(params, config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps)
    batch_rng = np.random.default_rng(np.random.SeedSequence([config.seed, _STREAM_BATCHES]))
    batch = config.batch_size

    for epoch in range(config.stage1_epochs):
        perm = batch_rng.permutation(n)
        for start in range(0, n, batch):
            positions = perm[start:start + batch]
            idx = boot[:, positions]
            losses, dw, db, dth = stacked_loss_and_grads(weights, biases, leaf_logits, X[idx], y[idx])
            if not np.all(np.isfinite(losses)):
                raise NumericalError(
                    f"non-finite tree loss at stage-1 epoch {epoch + 1}; learning rate likely too high"
                )
            adam.step(params, [dw, db, dth])
        if epoch_callback is not None:
            epoch_callback(epoch, (weights, biases, leaf_logits))

    trees = [
        SoftTree(config.depth, weights[k].copy(), biases[k].copy(), leaf_logits[k].copy())
        for k in range(T)
    ]
    return SoftForest(trees=trees, bootstrap_seed=bootstrap_seed)


def stacked_mean_ce(weights, biases, leaf_logits, X, y, chunk=2048) -> float:
    """Mean over trees and rows of per-tree cross-entropy on shared data."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.intp)
    T = weights.shape[0]
    total = 0.0
    for start in range(0, X.shape[0], chunk):
        Xc = X[start:start + chunk]
        Xb = np.broadcast_to(Xc[None], (T,) + Xc.shape)
        pred, _ = stacked_forward(weights, biases, leaf_logits, Xb)
        p_true = np.take_along_axis(
            pred, np.broadcast_to(y[start:start + chunk][None, :, None], (T, Xc.shape[0], 1)), axis=2
        )[..., 0]
        total += -np.log(np.maximum(p_true, PROB_FLOOR)).sum()
    return total / (T * X.shape[0])


def compute_leaf_stats(forest: SoftForest, train) -> SoftForest:
    """Hard-route the full training set through every frozen tree and fill
    per-leaf mean inputs / mean one-hot targets / counts plus per-tree error.

    The per-tree error is the fraction of training instances whose hard
    leaf's mean-target argmax disagrees with the label.
    """
    X = np.ascontiguousarray(train.X, dtype=np.float64)
    y = np.asarray(train.y, dtype=np.intp)
    n, d = X.shape
    T = forest.n_trees
    L = forest.trees[0].n_leaves
    n_classes = forest.trees[0].n_classes
    onehot = np.eye(n_classes)[y]

    mean_inputs = np.zeros((T, L, d))
    mean_targets = np.zeros((T, L, n_classes))
    counts = np.zeros((T, L), dtype=np.int64)
    errors = np.zeros(T)

    global_mean = X.mean(axis=0)
    global_freq = onehot.mean(axis=0)

    for k, tree in enumerate(forest.trees):
        leaves = hard_leaves(X, tree)
        membership = leaves[:, None] == np.arange(L)[None, :]  # (n, L)
        counts[k] = membership.sum(axis=0)
        occupied = counts[k] > 0
        sums_x = membership.T @ X
        sums_y = membership.T @ onehot
        mean_inputs[k][occupied] = sums_x[occupied] / counts[k][occupied, None]
        mean_targets[k][occupied] = sums_y[occupied] / counts[k][occupied, None]
        mean_inputs[k][~occupied] = global_mean
        mean_targets[k][~occupied] = global_freq
        predicted = np.argmax(mean_targets[k][leaves], axis=1)
        errors[k] = float(np.mean(predicted != y))

    forest.stats = LeafStats(mean_inputs, mean_targets, counts, global_mean, global_freq)
    forest.errors = errors
    return forest


def lookup_context(x, forest: SoftForest, k: int):
    """Leaf context (mean input A, mean target B) of x's hard leaf in tree k.

    Empty leaves fall back to the global training mean / class frequency.
    """
    if forest.stats is None:
        raise ValueError("leaf stats not computed; call compute_leaf_stats first")
    leaf = hard_leaf(x, forest.trees[k])
    stats = forest.stats
    if stats.counts[k, leaf] == 0:
        log.warning("tree %d leaf %d is empty; using global fallback context", k, leaf)
        return stats.global_mean.copy(), stats.global_freq.copy()
    return stats.mean_inputs[k, leaf].copy(), stats.mean_targets[k, leaf].copy()


def instance_context(forest: SoftForest, X):
    """Batched context for every (row, tree) pair.

    Returns (dist2 (n,T), targets (n,T,C), leaves (n,T)): squared distance
    from each row to its leaf's mean input, the leaf's mean target, and the
    leaf index. Uses the same empty-leaf fallback as lookup_context.
    """
    if forest.stats is None:
        raise ValueError("leaf stats not computed; call compute_leaf_stats first")
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    T = forest.n_trees
    n_classes = forest.stats.mean_targets.shape[2]
    dist2 = np.empty((n, T))
    targets = np.empty((n, T, n_classes))
    leaves = np.empty((n, T), dtype=np.intp)
    for k, tree in enumerate(forest.trees):
        leaf = hard_leaves(X, tree)
        leaves[:, k] = leaf
        diff = X - forest.stats.mean_inputs[k][leaf]
        dist2[:, k] = np.einsum("nd,nd->n", diff, diff)
        targets[:, k] = forest.stats.mean_targets[k][leaf]
    return dist2, targets, leaves
