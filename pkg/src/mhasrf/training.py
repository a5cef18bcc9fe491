"""Two-stage optimization: per-tree fitting, then attention + MLP fitting.

Both stages minimize cross-entropy with Adam. Stage 1 trains each tree on
its own bootstrap sample; the forest is then frozen and its leaf stats and
per-tree errors computed. Stage 2 trains the reliability scalars, the
head-mixing matrix, and the MLP on the aggregated prediction. A finite-
difference gradient checker validates both stages' analytic gradients.
"""

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import attention as attn
from . import forest as forest_mod
from .config import TrainConfig
from .errors import NumericalError
from .model import (
    MhasrfModel,
    VARIANT_FULL,
    VARIANT_NO_RELIABILITY,
    VARIANT_SINGLE_HEAD,
)
from .optim import Adam
from .tree import PROB_FLOOR, stacked_forward, stacked_loss_and_grads

_STREAM_STAGE2_INIT = 3
_STREAM_STAGE2_BATCHES = 4


@dataclass
class EpochRecord:
    epoch: int        # 1-based, continuous across both stages
    stage: int        # 1 or 2
    train_loss: float
    test_loss: float
    seconds: float    # wall clock; excluded from determinism comparisons


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write("epoch,train_loss,test_loss,seconds\n")
            for r in self.records:
                handle.write(f"{r.epoch},{r.train_loss!r},{r.test_loss!r},{r.seconds:.3f}\n")


def loss(predictions: np.ndarray, labels: np.ndarray) -> float:
    """Mean cross-entropy: -(1/n) sum log p(true class), clamped at 1e-12."""
    predictions = np.asarray(predictions, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.intp)
    if predictions.ndim != 2 or predictions.shape[0] != labels.shape[0]:
        raise ValueError("predictions must be (n, C) aligned with n labels")
    if labels.min() < 0 or labels.max() >= predictions.shape[1]:
        raise ValueError("labels out of range for the prediction columns")
    p_true = np.take_along_axis(predictions, labels[:, None], axis=1)[:, 0]
    return float(-np.log(np.clip(p_true, PROB_FLOOR, 1.0)).mean())


def _scaler_from(X: np.ndarray):
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0.0] = 1.0  # constant columns pass through centered
    return mean, scale


def _stage2_eval_loss(params, errors, dist2, targets, y, chunk=4096):
    total = 0.0
    for start in range(0, dist2.shape[0], chunk):
        probs, _, _ = attn.forward_batch(
            params, errors, dist2[start:start + chunk], targets[start:start + chunk]
        )
        p_true = np.take_along_axis(probs, y[start:start + chunk][:, None], axis=1)[:, 0]
        total += -np.log(np.clip(p_true, PROB_FLOOR, 1.0)).sum()
    return total / dist2.shape[0]


def train(train_frame, test_frame, config: TrainConfig,
          use_reliability: bool = True, variant: str | None = None):
    """Fit the full model; returns (MhasrfModel, TrainHistory).

    Deterministic for a fixed config seed. Loss history records one row per
    epoch across both stages (stage-1 rows carry the forest's mean per-tree
    cross-entropy, stage-2 rows the aggregated model's).
    """
    config.validate()
    if train_frame.n_rows == 0 or test_frame.n_rows == 0:
        raise ValueError("train and test frames must be non-empty")
    if train_frame.n_features != test_frame.n_features:
        raise ValueError("train/test feature dimensions differ")

    mean, scale = _scaler_from(train_frame.X)
    train_std = replace(train_frame, X=(train_frame.X - mean) / scale)
    test_std = replace(test_frame, X=(test_frame.X - mean) / scale)

    history = TrainHistory()
    started = time.perf_counter()

    def record_stage1(epoch, params):
        weights, biases, leaf_logits = params
        history.records.append(EpochRecord(
            epoch=epoch + 1,
            stage=1,
            train_loss=forest_mod.stacked_mean_ce(weights, biases, leaf_logits,
                                                  train_std.X, train_std.y),
            test_loss=forest_mod.stacked_mean_ce(weights, biases, leaf_logits,
                                                 test_std.X, test_std.y),
            seconds=time.perf_counter() - started,
        ))

    forest = forest_mod.fit_stage1(train_std, config, epoch_callback=record_stage1)
    forest_mod.compute_leaf_stats(forest, train_std)

    n_classes = forest.trees[0].n_classes
    dist2_tr, targets_tr, _ = forest_mod.instance_context(forest, train_std.X)
    dist2_te, targets_te, _ = forest_mod.instance_context(forest, test_std.X)

    rng = np.random.default_rng(np.random.SeedSequence([config.seed, _STREAM_STAGE2_INIT]))
    params = attn.init_attention(config.heads, n_classes, rng,
                                 tau=config.tau, epsilon=config.epsilon,
                                 use_reliability=use_reliability)
    trainable = params.trainable()
    adam = Adam(trainable, config.learning_rate,
                config.adam_beta1, config.adam_beta2, config.adam_eps)
    batch_rng = np.random.default_rng(np.random.SeedSequence([config.seed, _STREAM_STAGE2_BATCHES]))

    n = train_std.n_rows
    y = train_std.y
    onehot = np.eye(n_classes)
    for epoch in range(config.stage2_epochs):
        perm = batch_rng.permutation(n)
        for start in range(0, n, config.batch_size):
            rows = perm[start:start + config.batch_size]
            probs, _, cache = attn.forward_batch(params, forest.errors,
                                                 dist2_tr[rows], targets_tr[rows])
            if not np.all(np.isfinite(probs)):
                raise NumericalError(
                    f"non-finite prediction at stage-2 epoch {epoch + 1}; "
                    "learning rate likely too high"
                )
            dlogits = (probs - onehot[y[rows]]) / rows.shape[0]
            grads = attn.backward_batch(dlogits, cache, params, forest.errors)
            adam.step(trainable, grads)
        history.records.append(EpochRecord(
            epoch=config.stage1_epochs + epoch + 1,
            stage=2,
            train_loss=_stage2_eval_loss(params, forest.errors, dist2_tr, targets_tr, y),
            test_loss=_stage2_eval_loss(params, forest.errors, dist2_te, targets_te, test_std.y),
            seconds=time.perf_counter() - started,
        ))
        if not np.isfinite(history.records[-1].train_loss):
            raise NumericalError("training loss diverged to non-finite")

    if variant is None:
        if not use_reliability:
            variant = VARIANT_NO_RELIABILITY
        elif config.heads == 1:
            variant = VARIANT_SINGLE_HEAD
        else:
            variant = VARIANT_FULL

    summary = {
        "epochs": len(history.records),
        "final_train_loss": history.records[-1].train_loss if history.records else None,
        "final_test_loss": history.records[-1].test_loss if history.records else None,
    }
    model = MhasrfModel(
        feature_names=list(train_frame.feature_names),
        kinds=list(train_frame.kinds),
        encoders={k: dict(v) for k, v in train_frame.encoders.items()},
        fill_values=dict(train_frame.fill_values),
        scaler_mean=mean,
        scaler_scale=scale,
        forest=forest,
        attention=params,
        config=config,
        history_summary=summary,
        variant=variant,
    )
    return model, history


# ---------------------------------------------------------------------------
# Finite-difference gradient checking
# ---------------------------------------------------------------------------

@dataclass
class GradCheckReport:
    step: float
    max_errors: dict            # parameter group -> max relative error
    threshold: float = 1e-4

    @property
    def max_relative_error(self) -> float:
        return max(self.max_errors.values())

    @property
    def passed(self) -> bool:
        return self.max_relative_error <= self.threshold

    def lines(self) -> list[str]:
        out = [f"gradient check (central differences, step {self.step:g})"]
        for name in sorted(self.max_errors):
            out.append(f"  {name:<24} max rel. error {self.max_errors[name]:.3e}")
        out.append(f"  overall max {self.max_relative_error:.3e} "
                   f"-> {'PASS' if self.passed else 'FAIL'} (threshold {self.threshold:g})")
        return out


def _rel_err(a: float, f: float) -> float:
    return abs(a - f) / max(abs(a), abs(f), 1e-8)


def _fd_max_error(array, analytic, loss_fn, step):
    worst = 0.0
    flat = array.reshape(-1)
    grad = analytic.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + step
        up = loss_fn()
        flat[i] = keep - step
        down = loss_fn()
        flat[i] = keep
        worst = max(worst, _rel_err(grad[i], (up - down) / (2.0 * step)))
    return worst


def gradcheck_fixture(seed: int = 0):
    """Small trained model + 32-row batch for gradient validation
    (3 trees, depth 2, 2 heads, 4 features)."""
    from .data import frame_from_arrays

    rng = np.random.default_rng(seed)
    X = rng.normal(size=(160, 4))
    y = (X[:, 0] + 0.5 * X[:, 1] + rng.normal(scale=0.8, size=160) > 0).astype(np.intp)
    frame = frame_from_arrays(X, y)
    config = TrainConfig(num_trees=3, depth=2, heads=2, stage1_epochs=3,
                         stage2_epochs=3, batch_size=32, seed=seed)
    model, _ = train(frame, frame.subset(np.arange(32)), config)
    return model, frame.subset(np.arange(32))


def grad_check(model: MhasrfModel, batch_frame, step: float = 1e-5) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    Tree parameters are checked against the stage-1 objective (sum of
    per-tree cross-entropies on the batch); attention/MLP parameters
    against the stage-2 objective through the frozen forest.
    """
    if batch_frame.n_rows == 0:
        raise ValueError("gradient check needs a non-empty batch")
    if step <= 0:
        raise ValueError("step must be > 0")

    X = model.standardize(batch_frame.X)
    y = np.asarray(batch_frame.y, dtype=np.intp)
    forest = model.forest
    T = forest.n_trees
    weights, biases, leaf_logits = forest.stacked_params()
    Xb = np.broadcast_to(X[None], (T,) + X.shape)
    yb = np.broadcast_to(y[None], (T, y.shape[0]))

    def stage1_loss():
        pred, _ = stacked_forward(weights, biases, leaf_logits, Xb)
        p_true = np.take_along_axis(pred, yb[..., None], axis=2)[..., 0]
        return float(-np.log(np.maximum(p_true, PROB_FLOOR)).mean(axis=1).sum())

    _, dw, db, dth = stacked_loss_and_grads(weights, biases, leaf_logits, Xb, yb)
    max_errors = {
        "tree.weights": _fd_max_error(weights, dw, stage1_loss, step),
        "tree.biases": _fd_max_error(biases, db, stage1_loss, step),
        "tree.leaf_logits": _fd_max_error(leaf_logits, dth, stage1_loss, step),
    }

    params = model.attention
    dist2, targets, _ = forest_mod.instance_context(forest, X)

    def stage2_loss():
        probs, _, _ = attn.forward_batch(params, forest.errors, dist2, targets)
        return loss(probs, y)

    probs, _, cache = attn.forward_batch(params, forest.errors, dist2, targets)
    n_classes = probs.shape[1]
    dlogits = (probs - np.eye(n_classes)[y]) / y.shape[0]
    grads = attn.backward_batch(dlogits, cache, params, forest.errors)
    names = ["attention.lam", "attention.head_mix", "attention.mlp_w1",
             "attention.mlp_b1", "attention.mlp_w2", "attention.mlp_b2"]
    for name, array, grad in zip(names, params.trainable(), grads):
        max_errors[name] = _fd_max_error(array, grad, stage2_loss, step)

    return GradCheckReport(step=step, max_errors=max_errors)
