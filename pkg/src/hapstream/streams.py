"""Stream synthesis: haphazard, trapezoidal and positionally uncorrelated regimes.

A stream is an iterator of samples in dataset row order.  Unavailable
coordinates are zero-filled and flagged in ``mask``; base features are
always available.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from . import seeding
from .data import RawDataset
from .errors import ConfigError

MODES = ("haphazard", "trapezoid", "variable_window")


@dataclass(frozen=True)
class FeatureSplit:
    base_indices: tuple[int, ...]
    aux_indices: tuple[int, ...]

    def __post_init__(self):
        base, aux = set(self.base_indices), set(self.aux_indices)
        if base & aux:
            raise ConfigError(f"base and auxiliary sets overlap: {sorted(base & aux)}")
        if sorted(base | aux) != list(range(len(base) + len(aux))):
            raise ConfigError("base and auxiliary indices must cover 0..d-1 exactly")

    @property
    def num_features(self) -> int:
        return len(self.base_indices) + len(self.aux_indices)

    def aux_mask(self) -> np.ndarray:
        m = np.zeros(self.num_features, dtype=bool)
        m[list(self.aux_indices)] = True
        return m


def default_split(num_features: int, aux_fraction: float) -> FeatureSplit:
    """The last ceil(aux_fraction * d) features are auxiliary, the rest base."""
    if not 0.0 < aux_fraction <= 1.0:
        raise ConfigError(f"aux_fraction must lie in (0, 1], got {aux_fraction}")
    n_aux = math.ceil(aux_fraction * num_features - 1e-9)
    cut = num_features - n_aux
    return FeatureSplit(tuple(range(cut)), tuple(range(cut, num_features)))


@dataclass(frozen=True)
class StreamConfig:
    mode: str = "haphazard"
    p: float = 1.0
    seed: int = 0
    trapezoid_chunks: int = 10

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown stream mode {self.mode!r}; choose from {MODES}")
        if not 0.0 < self.p <= 1.0:
            raise ConfigError(f"availability probability p must lie in (0, 1], got {self.p}")
        if self.trapezoid_chunks < 1:
            raise ConfigError("trapezoid_chunks must be >= 1")


@dataclass
class StreamSample:
    t: int
    values: np.ndarray  # f_t, zero where unavailable
    mask: np.ndarray  # bool, True = available
    label: int

    def to_json(self) -> str:
        return json.dumps({"t": self.t, "values": self.values.tolist(),
                           "mask": self.mask.astype(int).tolist(), "label": self.label})

    @classmethod
    def from_json(cls, line: str) -> StreamSample:
        obj = json.loads(line)
        return cls(obj["t"], np.asarray(obj["values"], dtype=np.float64),
                   np.asarray(obj["mask"], dtype=bool), int(obj["label"]))


@dataclass
class CompressedSample:
    """Available (index, value) pairs only, in ascending original index."""
    t: int
    indices: np.ndarray  # int, strictly increasing
    values: np.ndarray
    label: int

    @property
    def entries(self) -> list[tuple[int, float]]:
        return list(zip(self.indices.tolist(), self.values.tolist()))

    def __len__(self):
        return len(self.indices)


@dataclass
class MaskedCopy:
    values: np.ndarray
    mask: np.ndarray


def _check_split(dataset: RawDataset, split: FeatureSplit):
    if split.num_features != dataset.num_features:
        raise ConfigError(f"split covers {split.num_features} features, "
                          f"dataset {dataset.name} has {dataset.num_features}")


def haphazard_mask(key: np.ndarray, t: int, aux: np.ndarray, p: float) -> np.ndarray:
    u = seeding.counter_uniforms(key, t, aux.shape[0])
    return ~aux | (u < p)


def make_haphazard(dataset: RawDataset, split: FeatureSplit, p: float, seed: int
                   ) -> Iterator[StreamSample]:
    """Each auxiliary coordinate is independently available with probability ``p``."""
    if not 0.0 < p <= 1.0:
        raise ConfigError(f"availability probability p must lie in (0, 1], got {p}")
    _check_split(dataset, split)
    if not split.aux_indices:
        raise ConfigError("haphazard mode needs a nonempty auxiliary set")
    key = seeding.philox_key(seed, "stream")
    aux = split.aux_mask()
    for t in range(len(dataset)):
        mask = haphazard_mask(key, t, aux, p)
        yield StreamSample(t, np.where(mask, dataset.X[t], 0.0), mask, int(dataset.y[t]))


def trapezoid_segment_bounds(n: int, chunks: int) -> list[tuple[int, int]]:
    edges = [(k * n) // chunks for k in range(chunks + 1)]
    return list(zip(edges[:-1], edges[1:]))


def make_trapezoid(dataset: RawDataset, split: FeatureSplit, chunks: int = 10
                   ) -> Iterator[StreamSample]:
    """In segment k (1-based) the first ceil(k*d/chunks) features are available.

    Base features stay available in every segment.
    """
    if chunks < 1:
        raise ConfigError("chunks must be >= 1")
    _check_split(dataset, split)
    d = dataset.num_features
    base = ~split.aux_mask()
    for k, (lo, hi) in enumerate(trapezoid_segment_bounds(len(dataset), chunks), start=1):
        mask = base.copy()
        mask[:math.ceil(k * d / chunks)] = True
        for t in range(lo, hi):
            yield StreamSample(t, np.where(mask, dataset.X[t], 0.0), mask.copy(),
                               int(dataset.y[t]))


def compress(sample: StreamSample) -> CompressedSample:
    idx = np.flatnonzero(sample.mask)
    return CompressedSample(sample.t, idx, sample.values[idx].copy(), sample.label)


def scatter(sample: CompressedSample, num_features: int) -> np.ndarray:
    out = np.zeros(num_features)
    out[sample.indices] = sample.values
    return out


def bootstrap_masks(values: np.ndarray, mask: np.ndarray, aux: np.ndarray, K: int, q: float,
                    rng: np.random.Generator) -> list[MaskedCopy]:
    """K training views: copy 0 untouched, the rest drop available aux coords w.p. ``q``."""
    if K < 1:
        raise ConfigError("K must be >= 1")
    if not 0.0 <= q < 1.0:
        raise ConfigError(f"bootstrap drop probability must lie in [0, 1), got {q}")
    copies = [MaskedCopy(values.copy(), mask.copy())]
    droppable = mask & aux
    for _ in range(K - 1):
        m = mask & ~(droppable & (rng.random(mask.shape[0]) < q))
        copies.append(MaskedCopy(np.where(m, values, 0.0), m))
    return copies


class OnlineMinMax:
    """Per-feature min-max scaling to [0, 1] from values observed so far.

    The statistics include the current sample (it is visible before the
    prediction is made) and never anything later.  Constant-so-far features
    map to 0.
    """

    def __init__(self, num_features: int):
        self.lo = np.full(num_features, np.inf)
        self.hi = np.full(num_features, -np.inf)

    def __call__(self, sample: StreamSample) -> StreamSample:
        m = sample.mask
        self.lo[m] = np.minimum(self.lo[m], sample.values[m])
        self.hi[m] = np.maximum(self.hi[m], sample.values[m])
        span = self.hi - self.lo
        scaled = np.zeros_like(sample.values)
        ok = m & (span > 0)
        scaled[ok] = (sample.values[ok] - self.lo[ok]) / span[ok]
        return StreamSample(sample.t, scaled, sample.mask, sample.label)


def scale_online(stream: Iterable[StreamSample], num_features: int) -> Iterator[StreamSample]:
    scaler = OnlineMinMax(num_features)
    for s in stream:
        yield scaler(s)


def make_stream(dataset: RawDataset, split: FeatureSplit, config: StreamConfig, scale=True):
    """Build the stream for ``config.mode``; variable_window yields CompressedSample."""
    if config.mode == "trapezoid":
        stream = make_trapezoid(dataset, split, config.trapezoid_chunks)
    else:
        stream = make_haphazard(dataset, split, config.p, config.seed)
    if scale:
        stream = scale_online(stream, dataset.num_features)
    if config.mode == "variable_window":
        stream = (compress(s) for s in stream)
    return stream


def dump_jsonl(stream: Iterable[StreamSample], path):
    with open(path, "w") as fh:
        for s in stream:
            fh.write(s.to_json() + "\n")


def load_jsonl(path) -> Iterator[StreamSample]:
    with open(path) as fh:
        for line in fh:
            if line.strip():
                yield StreamSample.from_json(line)
