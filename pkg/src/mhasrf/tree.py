"""Soft decision trees: complete binary trees with sigmoid routing.

Every inner node i holds a weight vector w_i and bias b_i and routes an
instance to its RIGHT child with probability sigmoid(x.w_i + b_i). Leaves
hold learnable class logits. The tree is differentiable end to end.

Nodes use heap indexing: level l occupies indices [2^l - 1, 2^(l+1) - 1),
and the children of the j-th node of a level sit at positions 2j / 2j+1 of
the next. Leaf order matches the bit string of left(0)/right(1) decisions.

Besides the single-instance operations, this module provides the stacked
batch forward/backward used by the trainer: parameters of T trees are kept
as (T, ...) arrays so one numpy call advances every tree at once.
"""

from dataclasses import dataclass

import numpy as np

PROB_FLOOR = 1e-12  # probabilities are clamped here before any log


def sigmoid(z):
    """Numerically stable logistic function, elementwise."""
    z = np.asarray(z, dtype=np.float64)
    ez = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + ez), ez / (1.0 + ez))


def softmax(z, axis=-1):
    """Shift-invariant softmax along `axis`."""
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


@dataclass
class SoftTree:
    """A complete binary soft decision tree of fixed depth.

    weights:     (2^depth - 1, d) router weight vectors
    biases:      (2^depth - 1,)   router biases
    leaf_logits: (2^depth, C)     class logits per leaf
    """

    depth: int
    weights: np.ndarray
    biases: np.ndarray
    leaf_logits: np.ndarray

    @property
    def n_inner(self) -> int:
        return (1 << self.depth) - 1

    @property
    def n_leaves(self) -> int:
        return 1 << self.depth

    @property
    def n_features(self) -> int:
        return self.weights.shape[1]

    @property
    def n_classes(self) -> int:
        return self.leaf_logits.shape[1]

    def validate(self) -> None:
        if self.depth < 1:
            raise ValueError("tree depth must be >= 1")
        if self.weights.shape[0] != self.n_inner or self.biases.shape != (self.n_inner,):
            raise ValueError("inner-node parameter count does not match 2^depth - 1")
        if self.leaf_logits.shape[0] != self.n_leaves:
            raise ValueError("leaf count does not match 2^depth")
        for arr in (self.weights, self.biases, self.leaf_logits):
            if not np.all(np.isfinite(arr)):
                raise ValueError("tree parameters must be finite")


def init_tree(depth: int, n_features: int, n_classes: int, rng: np.random.Generator) -> SoftTree:
    """Fresh tree: w ~ U(-1/sqrt(d), 1/sqrt(d)), b = 0, leaf logits ~ U(-0.01, 0.01)."""
    n_inner = (1 << depth) - 1
    n_leaves = 1 << depth
    scale = 1.0 / np.sqrt(n_features)
    return SoftTree(
        depth=depth,
        weights=rng.uniform(-scale, scale, size=(n_inner, n_features)),
        biases=np.zeros(n_inner),
        leaf_logits=rng.uniform(-0.01, 0.01, size=(n_leaves, n_classes)),
    )


# ---------------------------------------------------------------------------
# Single-instance operations
# ---------------------------------------------------------------------------

def routing_probability(x, weights, bias) -> float:
    """Probability of routing x to the RIGHT child of one inner node."""
    x = np.asarray(x, dtype=np.float64)
    z = float(x @ np.asarray(weights, dtype=np.float64) + bias)
    if not np.isfinite(z):
        raise ValueError("non-finite routing input")
    return float(sigmoid(z))


def path_probabilities(x, tree: SoftTree) -> np.ndarray:
    """Probability of x reaching each leaf; entries multiply branch choices
    down the root-to-leaf path and sum to 1."""
    x = np.asarray(x, dtype=np.float64)
    probs = np.ones(1)
    for level in range(tree.depth):
        lo = (1 << level) - 1
        hi = (1 << (level + 1)) - 1
        p_right = sigmoid(tree.weights[lo:hi] @ x + tree.biases[lo:hi])
        probs = np.stack((probs * (1.0 - p_right), probs * p_right), axis=-1).reshape(-1)
    return probs


def soft_predict(x, tree: SoftTree) -> np.ndarray:
    """Class distribution: path-probability-weighted mixture of leaf softmaxes."""
    return path_probabilities(x, tree) @ softmax(tree.leaf_logits, axis=-1)


def hard_leaf(x, tree: SoftTree) -> int:
    """Index of the leaf reached by always taking the more probable branch.

    A routing probability of exactly 0.5 goes right.
    """
    x = np.asarray(x, dtype=np.float64)
    pos = 0
    for level in range(tree.depth):
        node = (1 << level) - 1 + pos
        z = float(tree.weights[node] @ x + tree.biases[node])
        pos = 2 * pos + (1 if z >= 0.0 else 0)
    return pos


def hard_leaves(X: np.ndarray, tree_or_stack, biases=None) -> np.ndarray:
    """Vectorized hard routing of every row of X; returns (n,) leaf indices.

    Accepts either a SoftTree or raw (weights, biases) arrays.
    """
    if biases is None:
        weights, biases = tree_or_stack.weights, tree_or_stack.biases
    else:
        weights = tree_or_stack
    X = np.asarray(X, dtype=np.float64)
    depth = int(np.log2(weights.shape[0] + 1))
    pos = np.zeros(X.shape[0], dtype=np.intp)
    for level in range(depth):
        node = (1 << level) - 1 + pos
        z = np.einsum("nd,nd->n", X, weights[node]) + biases[node]
        pos = 2 * pos + (z >= 0.0)
    return pos


# ---------------------------------------------------------------------------
# Stacked batch engine (T trees at once)
# ---------------------------------------------------------------------------

def stacked_forward(weights, biases, leaf_logits, X):
    """Soft-predict a per-tree batch through T trees simultaneously.

    weights (T, N, d), biases (T, N), leaf_logits (T, L, C), X (T, B, d).
    Returns (pred, cache) with pred (T, B, C); cache feeds stacked_backward.
    """
    T, B, _ = X.shape
    depth = int(np.log2(biases.shape[1] + 1))
    z = np.einsum("tbd,tnd->tbn", X, weights) + biases[:, None, :]
    p = sigmoid(z)
    mu = np.ones((T, B, 1))
    level_mus = []
    for level in range(depth):
        lo = (1 << level) - 1
        hi = (1 << (level + 1)) - 1
        span = p[:, :, lo:hi]
        level_mus.append(mu)
        mu = np.stack((mu * (1.0 - span), mu * span), axis=-1).reshape(T, B, -1)
    leaf_probs = softmax(leaf_logits, axis=-1)
    pred = np.einsum("tbl,tlc->tbc", mu, leaf_probs)
    cache = (X, p, level_mus, mu, leaf_probs, depth)
    return pred, cache


def stacked_backward(dpred, cache):
    """Backpropagate dL/dpred through stacked_forward.

    Returns (dweights, dbiases, dleaf_logits) matching the parameter shapes.
    """
    X, p, level_mus, mu_leaf, leaf_probs, depth = cache
    T, B, _ = X.shape

    dleaf_probs = np.einsum("tbl,tbc->tlc", mu_leaf, dpred)
    inner = (dleaf_probs * leaf_probs).sum(axis=-1, keepdims=True)
    dlogits = leaf_probs * (dleaf_probs - inner)

    g = np.einsum("tbc,tlc->tbl", dpred, leaf_probs)
    dp = np.empty_like(p)
    for level in reversed(range(depth)):
        lo = (1 << level) - 1
        hi = (1 << (level + 1)) - 1
        span = p[:, :, lo:hi]
        g2 = g.reshape(T, B, -1, 2)
        dp[:, :, lo:hi] = level_mus[level] * (g2[..., 1] - g2[..., 0])
        g = g2[..., 0] * (1.0 - span) + g2[..., 1] * span

    dz = dp * p * (1.0 - p)
    dweights = np.einsum("tbn,tbd->tnd", dz, X)
    dbiases = dz.sum(axis=1)
    return dweights, dbiases, dlogits


def stacked_loss_and_grads(weights, biases, leaf_logits, X, y):
    """Per-tree cross-entropy and its gradients for T independent trees.

    X (T, B, d) and y (T, B) hold each tree's own mini-batch. Returns
    (loss_per_tree (T,), dweights, dbiases, dleaf_logits); gradients are of
    the sum of per-tree losses, which decouples into per-tree gradients.
    """
    pred, cache = stacked_forward(weights, biases, leaf_logits, X)
    T, B, C = pred.shape
    p_true = np.take_along_axis(pred, y[..., None], axis=2)[..., 0]
    clamped = np.maximum(p_true, PROB_FLOOR)
    loss_per_tree = -np.log(clamped).mean(axis=1)

    scale = np.where(p_true > PROB_FLOOR, -1.0 / (clamped * B), 0.0)
    dpred = np.zeros_like(pred)
    np.put_along_axis(dpred, y[..., None], scale[..., None], axis=2)
    dweights, dbiases, dlogits = stacked_backward(dpred, cache)
    return loss_per_tree, dweights, dbiases, dlogits
