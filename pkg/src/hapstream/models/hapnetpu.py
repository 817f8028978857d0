"""HapNetPU: recurrent feedback over compressed (index, value) sequences.

The cell reads the surviving features in ascending original-index order,
starting from the context carried over from the previous time step, so the
input length may change arbitrarily between steps.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from .. import seeding
from ..autodiff import Tensor
from ..errors import ConfigError
from ..streams import CompressedSample, StreamSample, compress
from .base import OnlineModel, ReplayBuffer
from .layers import GRUCell, Params, linear, sinusoidal_encoding


@dataclass
class HapNetPUConfig:
    d_model: int = 32
    dropout: float = 0.15
    K: int = 4
    q: float = 0.5
    lr: float = 1e-4
    batch_size: int = 64
    buffer_size: int = 256

    def __post_init__(self):
        if self.K < 1 or self.batch_size < 1 or self.buffer_size < 0:
            raise ConfigError("K and batch_size must be >= 1, buffer_size >= 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")


class HapNetPU(OnlineModel):
    def __init__(self, num_features: int, num_classes: int,
                 config: HapNetPUConfig | None = None, seed: int = 0, aux_indices=None):
        super().__init__()
        self.config = cfg = config or HapNetPUConfig()
        self.num_features = num_features
        self.num_classes = num_classes
        self.aux = np.ones(num_features, dtype=bool)
        if aux_indices is not None:
            self.aux[:] = False
            self.aux[list(aux_indices)] = True
        self.pe = sinusoidal_encoding(np.arange(num_features), cfg.d_model)
        self.params = p = Params(seeding.generator(seed, "init"))
        self.cell = GRUCell(p, "cell", cfg.d_model, cfg.d_model)
        self.head1 = p.linear("head1", cfg.d_model, cfg.d_model)
        self.head2 = p.linear("head2", cfg.d_model, num_classes)
        self.opt = ad.Adam(p.values(), lr=cfg.lr)
        self.buffer = ReplayBuffer(cfg.buffer_size)
        self.dropout_rng = seeding.generator(seed, "dropout")
        self.bootstrap_rng = seeding.generator(seed, "bootstrap")
        self.replay_rng = seeding.generator(seed, "replay")
        self.context = np.zeros(cfg.d_model)
        self._step_context = self.context

    def tokens(self, seqs: list[tuple[np.ndarray, np.ndarray]]) -> tuple[np.ndarray, np.ndarray]:
        """Pad (indices, values) sequences to (B, L, d_model) tokens plus a step mask."""
        L = max((len(idx) for idx, _ in seqs), default=0)
        toks = np.zeros((len(seqs), L, self.config.d_model))
        steps = np.zeros((len(seqs), L), dtype=bool)
        for b, (idx, vals) in enumerate(seqs):
            n = len(idx)
            toks[b, :n] = vals[:, None] + self.pe[idx]
            steps[b, :n] = True
        return toks, steps

    def forward(self, seqs, contexts: np.ndarray, training=False, rng=None) -> tuple[Tensor, Tensor]:
        """Returns (logits, final hidden) for a batch of sequences and start contexts."""
        rng = rng if rng is not None else self.dropout_rng
        toks, steps = self.tokens(seqs)
        h = self.cell.run(toks, steps, np.atleast_2d(contexts))
        z = ad.dropout(ad.relu(linear(h, self.head1)), self.config.dropout, training, rng)
        return linear(z, self.head2), h

    def step(self, sample: CompressedSample, training=False) -> tuple[np.ndarray, np.ndarray]:
        """One inference step from the current context; does not commit the new context."""
        with ad.no_grad():
            logits, h = self.forward([(sample.indices, sample.values)], self.context, training)
        return logits.data[0], h.data[0].copy()

    def _as_compressed(self, sample) -> CompressedSample:
        return compress(sample) if isinstance(sample, StreamSample) else sample

    def _predict(self, sample) -> np.ndarray:
        sample = self._as_compressed(sample)
        logits, new_context = self.step(sample)
        self._step_context = self.context
        self.context = new_context
        return logits

    def _bootstrap(self, sample: CompressedSample) -> list[tuple[np.ndarray, np.ndarray]]:
        cfg = self.config
        copies = [(sample.indices, sample.values)]
        droppable = self.aux[sample.indices]
        for _ in range(cfg.K - 1):
            keep = ~(droppable & (self.bootstrap_rng.random(len(sample)) < cfg.q))
            copies.append((sample.indices[keep], sample.values[keep]))
        return copies

    def training_batch(self, sample: CompressedSample):
        cfg = self.config
        start = self._step_context
        self.buffer.push((sample.indices, sample.values, sample.label, start))
        items = [(idx, vals, sample.label, start) for idx, vals in self._bootstrap(sample)]
        items += self.buffer.sample(cfg.batch_size - len(items), self.replay_rng)
        seqs = [(it[0], it[1]) for it in items]
        labels = np.array([it[2] for it in items])
        contexts = np.stack([it[3] for it in items])
        return seqs, labels, contexts

    def _update(self, sample) -> float:
        seqs, labels, contexts = self.training_batch(self._as_compressed(sample))
        logits, _ = self.forward(seqs, contexts, training=True)
        loss = ad.cross_entropy(logits, labels)
        loss.backward()
        for p in self.params.values():
            # an all-empty batch never touches the cell
            if p.grad is None:
                p.grad = np.zeros_like(p.data)
        self.opt.step()
        return loss.item()
