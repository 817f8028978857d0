"""Experiment configuration and the single-run pipeline shared by the CLI and tests."""
from __future__ import annotations

import dataclasses
import functools
import json
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .data import RawDataset, default_aux_fraction, load_dataset
from .errors import ConfigError
from .models import (HapNet, HapNetConfig, HapNetPU, HapNetPUConfig, HedgeConfig, HedgeMLP,
                     WeightedResidual)
from .perf import tune_allocator
from .prequential import RunResult, run_prequential
from .streams import MODES, StreamConfig, default_split, make_stream

MODEL_CONFIGS = {
    "hapnet": HapNetConfig,
    "hapnetpu": HapNetPUConfig,
    "hedge": HedgeConfig,
    "weighted_residual": HedgeConfig,
}


@dataclass
class ExperimentConfig:
    dataset: str
    model: str = "hapnet"
    mode: str = "haphazard"
    p: float = 1.0
    aux_fraction: float | None = None
    trapezoid_chunks: int = 10
    model_config: dict = field(default_factory=dict)
    n_runs: int = 20
    base_seed: int = 0
    max_steps: int | None = None
    scale: bool = True

    def __post_init__(self):
        if self.model not in MODEL_CONFIGS:
            raise ConfigError(f"model: unknown {self.model!r}; choose from {sorted(MODEL_CONFIGS)}")
        if self.mode not in MODES:
            raise ConfigError(f"mode: unknown {self.mode!r}; choose from {MODES}")
        if self.mode == "variable_window" and self.model != "hapnetpu":
            raise ConfigError("mode: variable_window streams can only be consumed by hapnetpu")
        if not 0.0 < self.p <= 1.0:
            raise ConfigError(f"p: must lie in (0, 1], got {self.p}")
        if self.aux_fraction is not None and not 0.0 < self.aux_fraction <= 1.0:
            raise ConfigError(f"aux_fraction: must lie in (0, 1], got {self.aux_fraction}")
        if self.n_runs < 1:
            raise ConfigError("n_runs: must be >= 1")
        self.model_settings()  # validates overrides

    def model_settings(self):
        cls = MODEL_CONFIGS[self.model]
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(self.model_config) - names
        if unknown:
            raise ConfigError(f"model_config: unknown keys {sorted(unknown)} for {self.model}")
        try:
            return cls(**self.model_config)
        except ConfigError as exc:
            raise ConfigError(f"model_config: {exc}") from None

    def resolved_aux_fraction(self) -> float:
        if self.aux_fraction is not None:
            return self.aux_fraction
        if self.mode == "trapezoid":
            return 1.0
        return default_aux_fraction(self.dataset)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> ExperimentConfig:
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "dataset" not in doc:
            raise ConfigError("dataset: required")
        return cls(**doc)

    def replace(self, **changes) -> ExperimentConfig:
        return dataclasses.replace(self, **changes)


@functools.lru_cache(maxsize=8)
def _cached_dataset(name: str) -> RawDataset:
    return load_dataset(name)


def build_model(config: ExperimentConfig, dataset: RawDataset, aux_indices, seed: int):
    settings = config.model_settings()
    d, c = dataset.num_features, dataset.num_classes
    if config.model == "hapnet":
        return HapNet(d, c, settings, seed=seed, aux_indices=aux_indices)
    if config.model == "hapnetpu":
        return HapNetPU(d, c, settings, seed=seed, aux_indices=aux_indices)
    if config.model == "hedge":
        return HedgeMLP(d, c, settings, seed=seed)
    return WeightedResidual(d, c, settings, seed=seed)


def build_run(config: ExperimentConfig, seed: int, dataset: RawDataset | None = None):
    """(model, stream, dataset) for one seeded repetition."""
    dataset = dataset if dataset is not None else _cached_dataset(config.dataset)
    split = default_split(dataset.num_features, config.resolved_aux_fraction())
    stream_cfg = StreamConfig(config.mode, config.p, seed, config.trapezoid_chunks)
    stream = make_stream(dataset, split, stream_cfg, scale=config.scale)
    model = build_model(config, dataset, split.aux_indices, seed)
    return model, stream, dataset


def run_single(config: ExperimentConfig, seed: int) -> RunResult:
    tune_allocator()
    model, stream, dataset = build_run(config, seed)
    return run_prequential(model, stream, dataset=config.dataset, mode=config.mode,
                           model_name=config.model, p=config.p, seed=seed,
                           max_steps=config.max_steps, num_classes=dataset.num_classes)


def runner(config: ExperimentConfig):
    """Picklable seed -> RunResult callable for ``prequential.repeat``."""
    return functools.partial(run_single, config)


def manifest(configs: list[ExperimentConfig], command: str, extra: dict | None = None) -> dict:
    doc = {
        "hapstream_version": __version__,
        "command": command,
        "experiments": [
            {"config": c.to_dict(),
             "seeds": list(range(c.base_seed, c.base_seed + c.n_runs)),
             "aux_fraction": c.resolved_aux_fraction(),
             "feature_scaling": "online min-max to [0, 1]" if c.scale else "none"}
            for c in configs
        ],
    }
    if extra:
        doc.update(extra)
    return doc


def write_manifest(doc: dict, path):
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
