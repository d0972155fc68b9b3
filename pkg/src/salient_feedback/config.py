"""Engine configuration: one flat set of keys shared by the CLI and service.

The on-disk format is a plain key = value text file (# comments allowed),
versioned with format_version. Unknown keys are rejected so typos fail loudly
instead of silently running defaults.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .gbt import TrainConfig

CONFIG_FORMAT_VERSION = 1


@dataclass(frozen=True)
class EngineConfig:
    """Everything the pipelines, CLI, and service need, in one place."""

    data_dir: str = "./data"
    seed: int = 7
    # Informativeness model hyperparameters.
    n_trees: int = 200
    max_depth: int = 4
    learning_rate: float = 0.1
    reg_lambda: float = 1.0
    min_split_gain: float = 0.0
    min_child_weight: float = 1.0
    subsample: float = 1.0
    # Saliency policy.
    top_k: int = 3
    show_threshold: float = 0.5
    alpha_manual: float = 1.0
    alpha_auto: float = 1.2
    mode_selection: str = "per_feature"
    # Anchor search.
    tau: float = 0.95
    delta: float = 0.05
    # Training pipeline.
    min_labels_per_mode: int = 50
    feature_selection: str = "default"
    cv_folds: int = 5
    background_cap: int = 256
    # Service.
    host: str = "127.0.0.1"
    port: int = 8000

    def __post_init__(self) -> None:
        if self.mode_selection not in ("per_feature", "per_event"):
            raise ValueError(f"unknown mode_selection {self.mode_selection!r}")
        if self.feature_selection not in ("default", "rfe", "mi"):
            raise ValueError(f"unknown feature_selection {self.feature_selection!r}")
        if self.top_k < 0:
            raise ValueError("top_k must be non-negative")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must be in [0, 1]")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must be in (0, 1)")
        if self.min_labels_per_mode < 1:
            raise ValueError("min_labels_per_mode must be positive")
        if self.cv_folds < 2:
            raise ValueError("cv_folds must be at least 2")
        if self.background_cap < 1:
            raise ValueError("background_cap must be positive")

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            n_trees=self.n_trees,
            max_depth=self.max_depth,
            learning_rate=self.learning_rate,
            reg_lambda=self.reg_lambda,
            min_split_gain=self.min_split_gain,
            min_child_weight=self.min_child_weight,
            subsample=self.subsample,
            seed=self.seed,
        )

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"format_version": CONFIG_FORMAT_VERSION}
        out.update(dataclasses.asdict(self))
        return out


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(EngineConfig)}


def _parse_value(key: str, raw: str) -> Any:
    kind = _FIELD_TYPES[key]
    raw = raw.strip()
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    return raw


def parse_config_text(text: str, source: str = "<config>") -> EngineConfig:
    """Parse key = value lines into an EngineConfig.

    Blank lines and # comments are skipped. Unknown keys, repeated keys, and
    unparseable values raise ValueError naming the offending line.
    """
    values: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValueError(f"{source}:{lineno}: expected key = value, got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key == "format_version":
            if raw.strip() != str(CONFIG_FORMAT_VERSION):
                raise ValueError(
                    f"{source}:{lineno}: unsupported config format_version {raw.strip()!r}"
                )
            continue
        if key not in _FIELD_TYPES:
            raise ValueError(f"{source}:{lineno}: unknown config key {key!r}")
        if key in values:
            raise ValueError(f"{source}:{lineno}: repeated config key {key!r}")
        try:
            values[key] = _parse_value(key, raw)
        except ValueError as exc:
            raise ValueError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
    return EngineConfig(**values)


def load_config(path: str | Path) -> EngineConfig:
    p = Path(path)
    return parse_config_text(p.read_text(encoding="utf-8"), source=str(p))


def dump_config(config: EngineConfig) -> str:
    """Serialize a config to the key = value file format (round-trips)."""
    lines = [f"format_version = {CONFIG_FORMAT_VERSION}"]
    for f in dataclasses.fields(EngineConfig):
        lines.append(f"{f.name} = {getattr(config, f.name)}")
    return "\n".join(lines) + "\n"
