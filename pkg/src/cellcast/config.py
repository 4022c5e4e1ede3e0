"""Run configuration: one JSON file describing a full experiment.

A RunConfig names the data source (a CDR file or the synthetic
generator), the chronological split, the architecture, the two training
phases (base fit and preference tuning), the power model, and where
artifacts land.  ``load_config``/``save_config`` round-trip it through
JSON so every CLI invocation and service instance is reproducible from
one file.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from cellcast.data import SynthConfig
from cellcast.energysim import PowerParams
from cellcast.losses import LossSpec
from cellcast.model import ModelConfig
from cellcast.prompting import Orientation
from cellcast.training import TrainConfig


@dataclass(frozen=True)
class ModelShape:
    """Architecture knobs; the vocabulary size is supplied when the model is built."""

    layers: int = 4
    hidden: int = 256
    heads: int = 4
    ffn_dim: int = 1024
    max_len: int = 96
    head_dims: tuple[int, ...] = (512, 64, 1)


@dataclass(frozen=True)
class RunConfig:
    output_dir: str = "out"
    cdr_path: str | None = None
    synth: SynthConfig = field(default_factory=lambda: SynthConfig(num_cells=20, days=14))
    train_days: int = 11
    test_days: int = 3
    normalize_percentile: float = 99.5
    pair_efficiency: float = 1.0
    model: ModelShape = field(default_factory=ModelShape)
    train: TrainConfig = field(default_factory=TrainConfig)
    finetune: TrainConfig = field(
        default_factory=lambda: TrainConfig(loss=LossSpec.blf(1.0))
    )
    power: PowerParams = field(default_factory=PowerParams)
    orientation: Orientation = Orientation.TABLE_CONSISTENT
    model_seed: int = 0

    def __post_init__(self) -> None:
        if self.train_days < 1 or self.test_days < 1:
            raise ValueError("need at least one train day and one test day")

    def model_config(self, vocab_size: int) -> ModelConfig:
        return ModelConfig(
            vocab_size=vocab_size,
            layers=self.model.layers,
            hidden=self.model.hidden,
            heads=self.model.heads,
            ffn_dim=self.model.ffn_dim,
            max_len=self.model.max_len,
            head_dims=tuple(self.model.head_dims),
        )

    def out_path(self, name: str) -> Path:
        return Path(self.output_dir) / name


def config_to_dict(cfg: RunConfig) -> dict:
    out = asdict(cfg)
    out["orientation"] = cfg.orientation.value
    return out


def config_from_dict(raw: dict) -> RunConfig:
    raw = dict(raw)

    def build(key, cls):
        if key in raw and raw[key] is not None and not isinstance(raw[key], cls):
            raw[key] = cls(**raw[key])

    if "model" in raw and isinstance(raw["model"], dict):
        raw["model"]["head_dims"] = tuple(raw["model"].get("head_dims", (512, 64, 1)))
    build("synth", SynthConfig)
    build("model", ModelShape)
    build("power", PowerParams)
    for phase in ("train", "finetune"):
        if phase in raw and isinstance(raw[phase], dict):
            spec = raw[phase].get("loss")
            if isinstance(spec, dict):
                raw[phase]["loss"] = LossSpec(**spec)
            raw[phase] = TrainConfig(**raw[phase])
    if isinstance(raw.get("orientation"), str):
        raw["orientation"] = Orientation(raw["orientation"])
    return RunConfig(**raw)


def save_config(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n")


def load_config(path: str | Path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise FileNotFoundError(f"config file not found: {path}") from None
    except json.JSONDecodeError as err:
        raise ValueError(f"config file {path} is not valid JSON: {err}") from None
    return config_from_dict(raw)


def with_updates(cfg: RunConfig, **updates) -> RunConfig:
    """Replace top-level fields, accepting dicts for nested sections."""
    return config_from_dict({**config_to_dict(cfg), **updates})
