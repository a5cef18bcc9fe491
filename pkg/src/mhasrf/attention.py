"""Reliability-weighted multi-head attention over the trees of a forest.

Per head h and tree k the attention score is

    score = lambda_h / (C_k + epsilon) - ||x - A_k(x)||^2 / (2 tau)

softmaxed over trees, so accurate trees (low error C_k) and trees whose
leaf context A_k(x) sits close to the instance get more weight. The H
per-head weights of each tree are mixed by a trainable H x H matrix, the
mixed weights aggregate the trees' leaf targets B_k(x) into an H x C
matrix, and a small MLP maps its flattening to class logits.
"""

from dataclasses import dataclass

import numpy as np

from .forest import SoftForest, instance_context
from .tree import softmax

MLP_HIDDEN = 16


@dataclass
class AttentionParams:
    lam: np.ndarray        # (H,) per-head reliability scalars
    head_mix: np.ndarray   # (H, H) trainable head-mixing matrix
    w1: np.ndarray         # (H*C, hidden) MLP input layer
    b1: np.ndarray         # (hidden,)
    w2: np.ndarray         # (hidden, C) MLP output layer
    b2: np.ndarray         # (C,)
    tau: float = 1.0       # fixed distance temperature, > 0
    epsilon: float = 1e-6  # error floor guarding C_k = 0
    use_reliability: bool = True  # False drops the lambda/C_k term (ablation)

    @property
    def n_heads(self) -> int:
        return self.lam.shape[0]

    @property
    def n_classes(self) -> int:
        return self.b2.shape[0]

    def trainable(self):
        """Live parameter arrays in the fixed optimizer order."""
        return [self.lam, self.head_mix, self.w1, self.b1, self.w2, self.b2]


@dataclass
class AttentionTrace:
    """Per-instance attention internals, exported for inspection plots."""

    alpha_concat: np.ndarray  # (T, H) pre-projection, each head column sums to 1
    alpha_final: np.ndarray   # (T, H) after head mixing
    delta: np.ndarray         # (T, H) reliability scores
    aggregated: np.ndarray    # (H, C) attention-weighted sum of tree targets


def init_attention(heads, n_classes, rng, tau=1.0, epsilon=1e-6, use_reliability=True):
    """Start near pass-through: lambda = 1, head mix = identity + small noise."""
    in_dim = heads * n_classes
    return AttentionParams(
        lam=np.ones(heads),
        head_mix=np.eye(heads) + rng.uniform(-0.01, 0.01, size=(heads, heads)),
        w1=rng.uniform(-1.0, 1.0, size=(in_dim, MLP_HIDDEN)) / np.sqrt(in_dim),
        b1=np.zeros(MLP_HIDDEN),
        w2=rng.uniform(-1.0, 1.0, size=(MLP_HIDDEN, n_classes)) / np.sqrt(MLP_HIDDEN),
        b2=np.zeros(n_classes),
        tau=tau,
        epsilon=epsilon,
        use_reliability=use_reliability,
    )


def reliability(lambda_h: float, c_k: float, epsilon: float = 1e-6) -> float:
    """Tree reliability lambda / (C_k + epsilon); decreasing in the error."""
    return lambda_h / (c_k + epsilon)


def delta_matrix(params: AttentionParams, errors: np.ndarray) -> np.ndarray:
    """(T, H) reliability scores; zero when the ablation drops the term."""
    if not params.use_reliability:
        return np.zeros((errors.shape[0], params.n_heads))
    return params.lam[None, :] / (errors[:, None] + params.epsilon)


# ---------------------------------------------------------------------------
# Single-instance operations
# ---------------------------------------------------------------------------

def _instance_inputs(x, forest: SoftForest):
    x = np.asarray(x, dtype=np.float64)
    dist2, targets, _ = instance_context(forest, x[None, :])
    return dist2[0], targets[0]


def head_attention(x, forest: SoftForest, params: AttentionParams, h: int) -> np.ndarray:
    """Length-T attention of head h (0-based): softmax over trees of
    reliability minus scaled squared distance. Sums to 1."""
    dist2, _ = _instance_inputs(x, forest)
    delta = delta_matrix(params, forest.errors)
    scores = delta[:, h] - dist2 / (2.0 * params.tau)
    return softmax(scores)


def final_attention(x, forest: SoftForest, params: AttentionParams) -> np.ndarray:
    """(T, H) mixed attention: per-tree head vectors projected by the
    head-mixing matrix."""
    dist2, _ = _instance_inputs(x, forest)
    delta = delta_matrix(params, forest.errors)
    scores = delta - dist2[:, None] / (2.0 * params.tau)
    alpha = softmax(scores, axis=0)
    return alpha @ params.head_mix.T


def attention_trace(x, forest: SoftForest, params: AttentionParams) -> AttentionTrace:
    dist2, targets = _instance_inputs(x, forest)
    delta = delta_matrix(params, forest.errors)
    scores = delta - dist2[:, None] / (2.0 * params.tau)
    alpha = softmax(scores, axis=0)
    alpha_final = alpha @ params.head_mix.T
    aggregated = alpha_final.T @ targets
    return AttentionTrace(alpha, alpha_final, delta, aggregated)


def aggregate_predict(x, forest: SoftForest, params: AttentionParams) -> np.ndarray:
    """Final class distribution for one instance."""
    trace = attention_trace(x, forest, params)
    hidden = np.maximum(trace.aggregated.reshape(-1) @ params.w1 + params.b1, 0.0)
    return softmax(hidden @ params.w2 + params.b2)


# ---------------------------------------------------------------------------
# Batched engine over precomputed (dist2, targets) context
# ---------------------------------------------------------------------------

def forward_batch(params: AttentionParams, errors, dist2, targets):
    """Forward pass for a batch given precomputed per-(row, tree) context.

    dist2 (B, T), targets (B, T, C). Returns (probs, logits, cache).
    """
    B = dist2.shape[0]
    delta = delta_matrix(params, errors)
    scores = delta[None, :, :] - dist2[:, :, None] / (2.0 * params.tau)
    alpha = softmax(scores, axis=1)                                   # over trees
    alpha_final = np.einsum("bth,gh->btg", alpha, params.head_mix)
    aggregated = np.einsum("btg,btc->bgc", alpha_final, targets)
    flat = aggregated.reshape(B, -1)
    pre1 = flat @ params.w1 + params.b1
    hidden = np.maximum(pre1, 0.0)
    logits = hidden @ params.w2 + params.b2
    probs = softmax(logits, axis=1)
    cache = (alpha, targets, flat, pre1, hidden)
    return probs, logits, cache


def backward_batch(dlogits, cache, params: AttentionParams, errors):
    """Gradients of the batch loss w.r.t. all trainable attention parameters.

    `dlogits` is dL/dlogits. Returns grads in AttentionParams.trainable()
    order: [lam, head_mix, w1, b1, w2, b2].
    """
    alpha, targets, flat, pre1, hidden = cache
    B = alpha.shape[0]

    db2 = dlogits.sum(axis=0)
    dw2 = hidden.T @ dlogits
    dpre1 = (dlogits @ params.w2.T) * (pre1 > 0.0)
    db1 = dpre1.sum(axis=0)
    dw1 = flat.T @ dpre1
    dagg = (dpre1 @ params.w1.T).reshape(B, params.n_heads, params.n_classes)

    dalpha_final = np.einsum("bgc,btc->btg", dagg, targets)
    dhead_mix = np.einsum("btg,bth->gh", dalpha_final, alpha)
    dalpha = np.einsum("btg,gh->bth", dalpha_final, params.head_mix)
    dscores = alpha * (dalpha - (dalpha * alpha).sum(axis=1, keepdims=True))
    ddelta = dscores.sum(axis=0)                                      # (T, H)
    if params.use_reliability:
        dlam = (ddelta / (errors[:, None] + params.epsilon)).sum(axis=0)
    else:
        dlam = np.zeros_like(params.lam)
    return [dlam, dhead_mix, dw1, db1, dw2, db2]
