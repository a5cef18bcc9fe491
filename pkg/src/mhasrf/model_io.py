"""Versioned, checksummed model persistence.

Layout: one header line

    mhasrf-model format_version=1 checksum=sha256:<hex>

followed by a JSON payload (UTF-8, sorted keys, floats via repr so values
round-trip bit-exactly). The checksum covers the payload bytes, so any
single-byte payload corruption is rejected before parsing.
"""

import dataclasses
import hashlib
import json
import re

import numpy as np

from .attention import AttentionParams
from .config import TrainConfig
from .errors import DataError, ModelFormatError
from .forest import LeafStats, SoftForest
from .model import MhasrfModel
from .tree import SoftTree

FORMAT_VERSION = 1
_MAGIC = "mhasrf-model"
_HEADER_RE = re.compile(r"^mhasrf-model format_version=(\d+) checksum=sha256:([0-9a-f]{64})$")


def _payload_from(model: MhasrfModel) -> dict:
    forest = model.forest
    stats = forest.stats
    return {
        "variant": model.variant,
        "feature_names": list(model.feature_names),
        "kinds": list(model.kinds),
        "encoders": {k: dict(v) for k, v in model.encoders.items()},
        "fill_values": dict(model.fill_values),
        "scaler_mean": model.scaler_mean.tolist(),
        "scaler_scale": model.scaler_scale.tolist(),
        "config": dataclasses.asdict(model.config),
        "history_summary": dict(model.history_summary),
        "attention": {
            "lam": model.attention.lam.tolist(),
            "head_mix": model.attention.head_mix.tolist(),
            "w1": model.attention.w1.tolist(),
            "b1": model.attention.b1.tolist(),
            "w2": model.attention.w2.tolist(),
            "b2": model.attention.b2.tolist(),
            "tau": model.attention.tau,
            "epsilon": model.attention.epsilon,
            "use_reliability": model.attention.use_reliability,
        },
        "forest": {
            "bootstrap_seed": forest.bootstrap_seed,
            "errors": forest.errors.tolist() if forest.errors is not None else None,
            "trees": [
                {
                    "depth": t.depth,
                    "weights": t.weights.tolist(),
                    "biases": t.biases.tolist(),
                    "leaf_logits": t.leaf_logits.tolist(),
                }
                for t in forest.trees
            ],
            "stats": None if stats is None else {
                "mean_inputs": stats.mean_inputs.tolist(),
                "mean_targets": stats.mean_targets.tolist(),
                "counts": stats.counts.tolist(),
                "global_mean": stats.global_mean.tolist(),
                "global_freq": stats.global_freq.tolist(),
            },
        },
    }


def save_model(model: MhasrfModel, path) -> None:
    """Write the model file; reruns with identical models are byte-identical."""
    text = json.dumps(_payload_from(model), sort_keys=True, indent=1)
    checksum = hashlib.sha256(text.encode("utf-8")).hexdigest()
    header = f"{_MAGIC} format_version={FORMAT_VERSION} checksum=sha256:{checksum}\n"
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(header)
            handle.write(text)
    except OSError as exc:
        raise DataError(f"cannot write model file {path}: {exc}") from exc


def load_model(path) -> MhasrfModel:
    """Read a model file, verifying version and checksum before parsing."""
    try:
        with open(path, "r", encoding="utf-8", newline="") as handle:
            raw = handle.read()
    except (OSError, UnicodeDecodeError) as exc:
        raise ModelFormatError(f"cannot read model file {path}: {exc}") from exc

    header, sep, payload_text = raw.partition("\n")
    match = _HEADER_RE.match(header.strip())
    if not sep or match is None:
        raise ModelFormatError(f"{path}: not a recognized model file")
    version = int(match.group(1))
    if version != FORMAT_VERSION:
        raise ModelFormatError(
            f"{path}: unsupported format_version {version} (this reader supports {FORMAT_VERSION})"
        )
    actual = hashlib.sha256(payload_text.encode("utf-8")).hexdigest()
    if actual != match.group(2):
        raise ModelFormatError(f"{path}: checksum mismatch, file is corrupted")

    payload = json.loads(payload_text)
    attention = AttentionParams(
        lam=np.array(payload["attention"]["lam"], dtype=np.float64),
        head_mix=np.array(payload["attention"]["head_mix"], dtype=np.float64),
        w1=np.array(payload["attention"]["w1"], dtype=np.float64),
        b1=np.array(payload["attention"]["b1"], dtype=np.float64),
        w2=np.array(payload["attention"]["w2"], dtype=np.float64),
        b2=np.array(payload["attention"]["b2"], dtype=np.float64),
        tau=float(payload["attention"]["tau"]),
        epsilon=float(payload["attention"]["epsilon"]),
        use_reliability=bool(payload["attention"]["use_reliability"]),
    )
    trees = [
        SoftTree(
            depth=int(t["depth"]),
            weights=np.array(t["weights"], dtype=np.float64),
            biases=np.array(t["biases"], dtype=np.float64),
            leaf_logits=np.array(t["leaf_logits"], dtype=np.float64),
        )
        for t in payload["forest"]["trees"]
    ]
    stats_p = payload["forest"]["stats"]
    stats = None if stats_p is None else LeafStats(
        mean_inputs=np.array(stats_p["mean_inputs"], dtype=np.float64),
        mean_targets=np.array(stats_p["mean_targets"], dtype=np.float64),
        counts=np.array(stats_p["counts"], dtype=np.int64),
        global_mean=np.array(stats_p["global_mean"], dtype=np.float64),
        global_freq=np.array(stats_p["global_freq"], dtype=np.float64),
    )
    errors_p = payload["forest"]["errors"]
    forest = SoftForest(
        trees=trees,
        bootstrap_seed=int(payload["forest"]["bootstrap_seed"]),
        stats=stats,
        errors=None if errors_p is None else np.array(errors_p, dtype=np.float64),
    )
    return MhasrfModel(
        feature_names=list(payload["feature_names"]),
        kinds=list(payload["kinds"]),
        encoders={k: {vk: int(vv) for vk, vv in v.items()}
                  for k, v in payload["encoders"].items()},
        fill_values={k: float(v) for k, v in payload["fill_values"].items()},
        scaler_mean=np.array(payload["scaler_mean"], dtype=np.float64),
        scaler_scale=np.array(payload["scaler_scale"], dtype=np.float64),
        forest=forest,
        attention=attention,
        config=TrainConfig(**payload["config"]),
        history_summary=dict(payload["history_summary"]),
        variant=payload["variant"],
    )


def model_checksum(path) -> str:
    """The checksum recorded in a model file's header (no payload verify)."""
    with open(path, "r", encoding="utf-8") as handle:
        header = handle.readline().strip()
    match = _HEADER_RE.match(header)
    if match is None:
        raise ModelFormatError(f"{path}: not a recognized model file")
    return match.group(2)
