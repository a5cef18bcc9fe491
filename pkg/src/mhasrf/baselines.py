"""Reference classifiers for the comparison harness.

Hard decision tree (greedy CART, Gini), bagged random forest with
per-split feature subsampling, gradient-descent logistic regression with
internal standardization, and a mixed Gaussian/categorical naive Bayes.
All are seed-deterministic and implemented on numpy.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .tree import sigmoid

log = logging.getLogger(__name__)

KIND_DECISION_TREE = "decision_tree"
KIND_RANDOM_FOREST = "random_forest"
KIND_LOGISTIC_REGRESSION = "logistic_regression"
KIND_NAIVE_BAYES = "naive_bayes"
ALL_KINDS = (KIND_DECISION_TREE, KIND_RANDOM_FOREST,
             KIND_LOGISTIC_REGRESSION, KIND_NAIVE_BAYES)


@dataclass
class BaselineHyper:
    max_depth: int | None = 8     # decision tree / forest trees
    min_leaf: int = 5
    n_trees: int = 100            # random forest
    bootstrap: bool = True
    mtry: int | None = None       # per-split feature sample; None -> ceil(sqrt(d))
    iterations: int = 500         # logistic regression
    learning_rate: float = 0.1
    smoothing: float = 1.0        # naive Bayes add-one style smoothing


@dataclass
class BaselineModel:
    kind: str
    hyper: BaselineHyper
    n_features: int
    fitted: object = None
    constant_class: int | None = None  # set when training data had one class


# ---------------------------------------------------------------------------
# CART decision tree
# ---------------------------------------------------------------------------

class _Node:
    __slots__ = ("feature", "threshold", "left", "right", "klass")

    def __init__(self, klass=None):
        self.feature = None
        self.threshold = None
        self.left = None
        self.right = None
        self.klass = klass


def _best_split(X, y, n_classes, features, min_leaf):
    """Best (feature, threshold, weighted gini) over candidate features.

    Thresholds are midpoints between adjacent distinct sorted values; both
    sides must keep at least min_leaf rows. Returns None if no valid split.
    """
    n = y.shape[0]
    best = None
    for feature in features:
        order = np.argsort(X[:, feature], kind="stable")
        xs = X[order, feature]
        ys = y[order]
        onehot = np.zeros((n, n_classes))
        onehot[np.arange(n), ys] = 1.0
        left_counts = np.cumsum(onehot, axis=0)          # counts for split after row i
        total = left_counts[-1]

        cut = np.arange(1, n)                            # rows on the left side
        valid = (xs[1:] != xs[:-1]) & (cut >= min_leaf) & ((n - cut) >= min_leaf)
        if not np.any(valid):
            continue
        lc = left_counts[:-1][valid]
        rc = total[None, :] - lc
        nl = cut[valid].astype(np.float64)
        nr = n - nl
        gini_l = 1.0 - ((lc / nl[:, None]) ** 2).sum(axis=1)
        gini_r = 1.0 - ((rc / nr[:, None]) ** 2).sum(axis=1)
        weighted = (nl * gini_l + nr * gini_r) / n
        i = int(np.argmin(weighted))
        score = float(weighted[i])
        if best is None or score < best[2]:
            pos = cut[valid][i]
            threshold = 0.5 * (xs[pos - 1] + xs[pos])
            best = (feature, float(threshold), score)
    return best


def _majority(y, n_classes) -> int:
    return int(np.argmax(np.bincount(y, minlength=n_classes)))


def _grow(X, y, n_classes, depth, hyper, rng):
    node = _Node()
    if (hyper.max_depth is not None and depth >= hyper.max_depth) \
            or y.shape[0] < 2 * hyper.min_leaf or np.all(y == y[0]):
        node.klass = _majority(y, n_classes)
        return node

    d = X.shape[1]
    if hyper.mtry is not None and rng is not None and hyper.mtry < d:
        features = np.sort(rng.choice(d, size=hyper.mtry, replace=False))
    else:
        features = np.arange(d)
    best = _best_split(X, y, n_classes, features, hyper.min_leaf)
    if best is None:
        node.klass = _majority(y, n_classes)
        return node

    feature, threshold, _ = best
    mask = X[:, feature] <= threshold
    node.feature = feature
    node.threshold = threshold
    node.left = _grow(X[mask], y[mask], n_classes, depth + 1, hyper, rng)
    node.right = _grow(X[~mask], y[~mask], n_classes, depth + 1, hyper, rng)
    return node


def _tree_predict(node, X, out, rows):
    if node.klass is not None:
        out[rows] = node.klass
        return
    mask = X[rows, node.feature] <= node.threshold
    _tree_predict(node.left, X, out, rows[mask])
    _tree_predict(node.right, X, out, rows[~mask])


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------

def fit_baseline(kind, train, hyper: BaselineHyper | None = None, seed: int = 0) -> BaselineModel:
    """Fit one reference classifier on a FeatureFrame."""
    if kind not in ALL_KINDS:
        raise ValueError(f"unknown baseline kind {kind!r}")
    hyper = hyper or BaselineHyper()
    X = np.asarray(train.X, dtype=np.float64)
    y = np.asarray(train.y, dtype=np.intp)
    if X.shape[0] == 0:
        raise ValueError("cannot fit on an empty frame")
    n_classes = max(2, int(y.max()) + 1)
    model = BaselineModel(kind=kind, hyper=hyper, n_features=X.shape[1])

    if np.all(y == y[0]):
        log.warning("single-class training data; %s degenerates to a constant predictor", kind)
        model.constant_class = int(y[0])
        return model

    if kind == KIND_DECISION_TREE:
        model.fitted = _grow(X, y, n_classes, 0, hyper, rng=None)

    elif kind == KIND_RANDOM_FOREST:
        d = X.shape[1]
        per_split = hyper.mtry if hyper.mtry is not None else math.ceil(math.sqrt(d))
        tree_hyper = BaselineHyper(max_depth=hyper.max_depth, min_leaf=hyper.min_leaf,
                                   mtry=per_split)
        trees = []
        n = X.shape[0]
        for k in range(hyper.n_trees):
            rng = np.random.default_rng(np.random.SeedSequence([seed, k]))
            if hyper.bootstrap:
                idx = rng.integers(0, n, size=n)
                Xk, yk = X[idx], y[idx]
            else:
                Xk, yk = X, y
            if np.all(yk == yk[0]):  # degenerate bootstrap draw
                leaf = _Node(klass=int(yk[0]))
                trees.append(leaf)
                continue
            trees.append(_grow(Xk, yk, n_classes, 0, tree_hyper, rng))
        model.fitted = (trees, n_classes)

    elif kind == KIND_LOGISTIC_REGRESSION:
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale == 0.0] = 1.0
        Xs = np.column_stack([(X - mean) / scale, np.ones(X.shape[0])])
        w = np.zeros(Xs.shape[1])
        yf = y.astype(np.float64)
        for _ in range(hyper.iterations):
            p = sigmoid(Xs @ w)
            w -= hyper.learning_rate * (Xs.T @ (p - yf)) / Xs.shape[0]
        model.fitted = (w, mean, scale)

    elif kind == KIND_NAIVE_BAYES:
        kinds = list(train.kinds)
        priors = np.array([np.mean(y == c) for c in range(n_classes)])
        columns = []
        for j, col_kind in enumerate(kinds):
            if col_kind == "continuous":
                mus = np.array([X[y == c, j].mean() for c in range(n_classes)])
                vars_ = np.array([max(X[y == c, j].var(), 1e-9) for c in range(n_classes)])
                columns.append(("gaussian", mus, vars_))
            else:
                values = np.unique(X[:, j])
                cardinality = values.shape[0]
                table = {}
                for v in values:
                    counts = np.array([np.sum((y == c) & (X[:, j] == v))
                                       for c in range(n_classes)], dtype=np.float64)
                    table[float(v)] = counts
                class_totals = np.array([np.sum(y == c) for c in range(n_classes)],
                                        dtype=np.float64)
                columns.append(("categorical", table, (class_totals, cardinality)))
        model.fitted = (priors, columns, n_classes)

    return model


def predict_baseline(model: BaselineModel, X) -> np.ndarray:
    """Deterministic class per row; forest vote ties resolve toward class 0."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ValueError(f"expected (n, {model.n_features}) input, got {X.shape}")
    n = X.shape[0]
    if model.constant_class is not None:
        return np.full(n, model.constant_class, dtype=np.intp)

    if model.kind == KIND_DECISION_TREE:
        out = np.empty(n, dtype=np.intp)
        _tree_predict(model.fitted, X, out, np.arange(n))
        return out

    if model.kind == KIND_RANDOM_FOREST:
        trees, n_classes = model.fitted
        votes = np.zeros((n, n_classes))
        out = np.empty(n, dtype=np.intp)
        for tree in trees:
            _tree_predict(tree, X, out, np.arange(n))
            votes[np.arange(n), out] += 1.0
        return np.argmax(votes, axis=1)  # argmax picks the lowest class on ties

    if model.kind == KIND_LOGISTIC_REGRESSION:
        w, mean, scale = model.fitted
        Xs = np.column_stack([(X - mean) / scale, np.ones(n)])
        p = sigmoid(Xs @ w)
        return (p > 0.5).astype(np.intp)

    priors, columns, n_classes = model.fitted
    smoothing = model.hyper.smoothing
    logp = np.tile(np.log(priors), (n, 1))
    for j, (kind, a, b) in enumerate(columns):
        if kind == "gaussian":
            mus, vars_ = a, b
            diff = X[:, j][:, None] - mus[None, :]
            logp += -0.5 * (np.log(2.0 * np.pi * vars_)[None, :] + diff * diff / vars_[None, :])
        else:
            table, (class_totals, cardinality) = a, b
            denom = class_totals + smoothing * cardinality
            zero = np.full(n_classes, smoothing)  # unseen value at predict time
            for i in range(n):
                counts = table.get(float(X[i, j]), zero)
                logp[i] += np.log((counts + smoothing) / denom)
    return np.argmax(logp, axis=1)
