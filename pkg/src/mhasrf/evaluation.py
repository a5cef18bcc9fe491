"""Confusion-matrix metrics, the baseline comparison, the ablation harness,
and attention-weight export.

The positive class is no-show (label 1). Single-number table metrics are
support-weighted averages across both classes, the convention under which
weighted recall coincides with accuracy; per-class values are kept too.
"""

import csv
import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import baselines
from .config import TrainConfig
from .model import VARIANT_FULL, VARIANT_NO_RELIABILITY, VARIANT_SINGLE_HEAD
from .training import train

COMPARISON_ORDER = ["MHASRF", "Decision Tree", "Random Forest",
                    "Logistic Regression", "Naive Bayes"]
ABLATION_ORDER = [VARIANT_FULL, VARIANT_SINGLE_HEAD, VARIANT_NO_RELIABILITY]


@dataclass
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass
class MetricsRow:
    model: str
    confusion: ConfusionMatrix
    accuracy: float
    # positive class (no-show)
    precision: float
    recall: float
    specificity: float
    f1: float
    # negative class (show)
    precision_neg: float
    recall_neg: float
    specificity_neg: float
    f1_neg: float
    # support-weighted across both classes
    weighted_precision: float
    weighted_recall: float
    weighted_specificity: float
    weighted_f1: float
    zero_division_flags: list = field(default_factory=list)


def _ratio(num, den, flags, name):
    if den == 0:
        flags.append(name)
        return 0.0
    return num / den


def metrics(preds, labels, model: str = "") -> MetricsRow:
    """All confusion-matrix metrics for binary predictions.

    0/0 denominators yield 0 and are listed in zero_division_flags.
    """
    preds = np.asarray(preds, dtype=np.intp)
    labels = np.asarray(labels, dtype=np.intp)
    if preds.shape != labels.shape:
        raise ValueError("predictions and labels must have equal length")
    tp = int(np.sum((preds == 1) & (labels == 1)))
    fp = int(np.sum((preds == 1) & (labels == 0)))
    fn = int(np.sum((preds == 0) & (labels == 1)))
    tn = int(np.sum((preds == 0) & (labels == 0)))
    n = tp + fp + fn + tn
    flags = []

    accuracy = _ratio(tp + tn, n, flags, "accuracy")
    precision = _ratio(tp, tp + fp, flags, "precision")
    recall = _ratio(tp, tp + fn, flags, "recall")
    specificity = _ratio(tn, tn + fp, flags, "specificity")
    f1 = _ratio(2.0 * precision * recall, precision + recall, flags, "f1")

    precision_neg = _ratio(tn, tn + fn, flags, "precision_neg")
    recall_neg = _ratio(tn, tn + fp, flags, "recall_neg")
    specificity_neg = _ratio(tp, tp + fn, flags, "specificity_neg")
    f1_neg = _ratio(2.0 * precision_neg * recall_neg, precision_neg + recall_neg,
                    flags, "f1_neg")

    support_pos = tp + fn
    support_neg = tn + fp
    def _weighted(pos, neg):
        return (support_pos * pos + support_neg * neg) / n if n else 0.0

    return MetricsRow(
        model=model,
        confusion=ConfusionMatrix(tp, fp, fn, tn),
        accuracy=accuracy,
        precision=precision, recall=recall, specificity=specificity, f1=f1,
        precision_neg=precision_neg, recall_neg=recall_neg,
        specificity_neg=specificity_neg, f1_neg=f1_neg,
        weighted_precision=_weighted(precision, precision_neg),
        weighted_recall=_weighted(recall, recall_neg),
        weighted_specificity=_weighted(specificity, specificity_neg),
        weighted_f1=_weighted(f1, f1_neg),
        zero_division_flags=flags,
    )


# ---------------------------------------------------------------------------
# Harnesses
# ---------------------------------------------------------------------------

_BASELINE_KINDS = {
    "Decision Tree": baselines.KIND_DECISION_TREE,
    "Random Forest": baselines.KIND_RANDOM_FOREST,
    "Logistic Regression": baselines.KIND_LOGISTIC_REGRESSION,
    "Naive Bayes": baselines.KIND_NAIVE_BAYES,
}


def compare_models(train_frame, test_frame, config: TrainConfig,
                   hyper: baselines.BaselineHyper | None = None):
    """Fit MHASRF plus the four reference models on identical train data and
    evaluate all on identical test data; rows come back in the fixed order."""
    rows = []
    model, _ = train(train_frame, test_frame, config)
    rows.append(metrics(model.predict(test_frame.X), test_frame.y, model="MHASRF"))
    for name in COMPARISON_ORDER[1:]:
        fitted = baselines.fit_baseline(_BASELINE_KINDS[name], train_frame,
                                        hyper, seed=config.seed)
        rows.append(metrics(baselines.predict_baseline(fitted, test_frame.X),
                            test_frame.y, model=name))
    return rows


def ablation_models(train_frame, test_frame, config: TrainConfig) -> dict:
    """The three ablation variants trained on identical data and seed."""
    single = dataclasses.replace(config, heads=1)
    return {
        VARIANT_FULL: train(train_frame, test_frame, config)[0],
        VARIANT_SINGLE_HEAD: train(train_frame, test_frame, single,
                                   variant=VARIANT_SINGLE_HEAD)[0],
        VARIANT_NO_RELIABILITY: train(train_frame, test_frame, config,
                                      use_reliability=False)[0],
    }


def ablation_run(train_frame, test_frame, config: TrainConfig):
    """Three-variant ablation report rows in the fixed order."""
    models = ablation_models(train_frame, test_frame, config)
    return [
        metrics(models[name].predict(test_frame.X), test_frame.y, model=name)
        for name in ABLATION_ORDER
    ]


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

_REPORT_COLUMNS = [
    ("Accuracy", "accuracy"),
    ("Specificity", "weighted_specificity"),
    ("Precision", "weighted_precision"),
    ("Recall", "weighted_recall"),
    ("F1 score", "weighted_f1"),
]


def render_report(rows, title: str) -> str:
    """Aligned-column text table with percentages, plus a per-class appendix."""
    width = max(len(r.model) for r in rows) + 2
    lines = [title, ""]
    header = "Model".ljust(width) + "".join(h.rjust(13) for h, _ in _REPORT_COLUMNS)
    lines.append(header)
    lines.append("-" * len(header))
    for r in rows:
        cells = "".join(f"{getattr(r, attr) * 100.0:12.2f}%" for _, attr in _REPORT_COLUMNS)
        lines.append(r.model.ljust(width) + cells)
    lines.append("")
    lines.append("Per-class (positive = no-show):")
    for r in rows:
        c = r.confusion
        lines.append(
            f"  {r.model}: TP={c.tp} FP={c.fp} FN={c.fn} TN={c.tn}"
            f" | precision={r.precision:.4f} recall={r.recall:.4f}"
            f" specificity={r.specificity:.4f} f1={r.f1:.4f}"
        )
        if r.zero_division_flags:
            lines.append(f"    0/0 flagged: {', '.join(r.zero_division_flags)}")
    return "\n".join(lines) + "\n"


def write_report_csv(rows, path) -> None:
    fields = ["model", "accuracy",
              "weighted_specificity", "weighted_precision", "weighted_recall", "weighted_f1",
              "precision", "recall", "specificity", "f1",
              "precision_neg", "recall_neg", "specificity_neg", "f1_neg",
              "tp", "fp", "fn", "tn", "zero_division_flags"]
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(fields)
        for r in rows:
            writer.writerow([
                r.model, repr(r.accuracy),
                repr(r.weighted_specificity), repr(r.weighted_precision),
                repr(r.weighted_recall), repr(r.weighted_f1),
                repr(r.precision), repr(r.recall), repr(r.specificity), repr(r.f1),
                repr(r.precision_neg), repr(r.recall_neg),
                repr(r.specificity_neg), repr(r.f1_neg),
                r.confusion.tp, r.confusion.fp, r.confusion.fn, r.confusion.tn,
                ";".join(r.zero_division_flags),
            ])


def export_attention(model, batch_frame, path) -> None:
    """Write the n x T matrix of head-averaged final attention weights."""
    if batch_frame.n_rows == 0:
        raise ValueError("cannot export attention for an empty batch")
    alpha_final = model.final_attention_batch(batch_frame.X)   # (n, T, H)
    head_avg = alpha_final.mean(axis=2)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow([f"tree_{k:03d}" for k in range(head_avg.shape[1])])
        for i in range(head_avg.shape[0]):
            writer.writerow([repr(v) for v in head_avg[i]])
