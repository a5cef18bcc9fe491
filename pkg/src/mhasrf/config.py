"""Training configuration and the flat key=value config-file format."""

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .errors import DataError


@dataclass
class TrainConfig:
    """Hyperparameters for the two-stage fit.

    Defaults follow the reference setup: 100 trees of depth 3, 3 attention
    heads, learning rate 0.01, batches of 32.
    """

    num_trees: int = 100
    depth: int = 3
    heads: int = 3
    learning_rate: float = 0.01
    stage1_epochs: int = 100
    stage2_epochs: int = 100
    batch_size: int = 32
    seed: int = 0
    tau: float = 1.0
    epsilon: float = 1e-6
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def validate(self) -> None:
        if self.num_trees < 1:
            raise ValueError("num_trees must be >= 1")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.heads < 1:
            raise ValueError("heads must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.stage1_epochs < 0 or self.stage2_epochs < 0:
            raise ValueError("epoch counts must be >= 0")
        if self.tau <= 0:
            raise ValueError("tau must be > 0")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(TrainConfig)}


def parse_config_file(path) -> dict:
    """Read a flat `key = value` file into a dict of typed TrainConfig fields.

    Blank lines and lines starting with '#' are ignored. Unknown keys and
    unparseable values raise DataError.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"config file not found: {path}")
    values = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _FIELD_TYPES:
            raise DataError(f"{path}:{lineno}: unknown config key {key!r}")
        caster = int if _FIELD_TYPES[key] in (int, "int") else float
        try:
            values[key] = caster(value)
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: bad value for {key!r}: {value!r}") from exc
    return values


def make_config(file_values: dict | None = None, **overrides) -> TrainConfig:
    """Build a TrainConfig from defaults, then a config file, then overrides."""
    merged = dict(file_values or {})
    merged.update({k: v for k, v in overrides.items() if v is not None})
    config = TrainConfig(**merged)
    config.validate()
    return config
