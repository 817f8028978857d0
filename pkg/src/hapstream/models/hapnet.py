"""HapNet: self-attention over value-as-embedding tokens with bootstrap masking."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from .. import seeding
from ..autodiff import Tensor
from ..errors import ConfigError, DimensionError
from ..streams import bootstrap_masks
from .base import OnlineModel, ReplayBuffer
from .layers import EncoderBlock, Params, linear, sinusoidal_encoding


@dataclass
class HapNetConfig:
    d_model: int = 32
    blocks: int = 6
    heads: int = 4
    ff_width: int = 64
    dropout: float = 0.15
    K: int = 4
    q: float = 0.5
    lr: float = 1e-4
    batch_size: int = 64
    buffer_size: int = 256
    norm_first: bool = False

    def __post_init__(self):
        if self.d_model % self.heads:
            raise ConfigError(f"d_model={self.d_model} is not divisible by heads={self.heads}")
        if self.K < 1:
            raise ConfigError("K must be >= 1")
        if self.blocks < 0 or self.batch_size < 1 or self.buffer_size < 0:
            raise ConfigError("blocks, batch_size and buffer_size must be non-negative")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")


class HapNet(OnlineModel):
    """Encoder over d tokens; token i = value_i * 1 + PE(i) + mask_i * a.

    The feature value is its own embedding (broadcast over all channels);
    ``a`` is one learned availability offset shared by every position.
    """

    def __init__(self, num_features: int, num_classes: int, config: HapNetConfig | None = None,
                 seed: int = 0, aux_indices=None):
        super().__init__()
        self.config = cfg = config or HapNetConfig()
        self.num_features = num_features
        self.num_classes = num_classes
        self.aux = np.ones(num_features, dtype=bool)
        if aux_indices is not None:
            self.aux[:] = False
            self.aux[list(aux_indices)] = True
        self.params = p = Params(seeding.generator(seed, "init"))
        self.avail = p.add("embed.availability", np.zeros(cfg.d_model))
        self.pe = sinusoidal_encoding(np.arange(num_features), cfg.d_model)
        self.blocks = [EncoderBlock(p, f"block{i}", cfg.d_model, cfg.heads, cfg.ff_width,
                                    cfg.dropout, cfg.norm_first) for i in range(cfg.blocks)]
        # post-norm blocks already end in a layer norm
        self.ln_out = p.norm("ln_out", cfg.d_model) if cfg.norm_first else None
        self.head1 = p.linear("head1", cfg.d_model, cfg.d_model)
        self.head2 = p.linear("head2", cfg.d_model, num_classes)
        self.opt = ad.Adam(p.values(), lr=cfg.lr)
        self.buffer = ReplayBuffer(cfg.buffer_size)
        self.dropout_rng = seeding.generator(seed, "dropout")
        self.bootstrap_rng = seeding.generator(seed, "bootstrap")
        self.replay_rng = seeding.generator(seed, "replay")

    def embed(self, values: np.ndarray, mask: np.ndarray) -> Tensor:
        """(B, d) values and masks -> (B, d, d_model) tokens."""
        values = np.atleast_2d(values)
        mask = np.atleast_2d(mask).astype(np.float64)
        if values.shape[-1] != self.num_features:
            raise DimensionError(f"expected {self.num_features} features, got {values.shape[-1]}")
        values = values * mask
        fixed = values[..., None] + self.pe[None]
        return Tensor(fixed) + Tensor(mask[..., None]) * self.avail

    def forward(self, values, mask, training=False, rng=None) -> Tensor:
        cfg = self.config
        rng = rng if rng is not None else self.dropout_rng
        x = self.embed(values, mask)
        for block in self.blocks:
            x = block(x, training, rng)
        if self.ln_out is not None:
            x = ad.layer_norm(x, *self.ln_out)
        pooled = x.mean(axis=1)
        h = ad.dropout(ad.relu(linear(pooled, self.head1)), cfg.dropout, training, rng)
        return linear(h, self.head2)

    def _predict(self, sample) -> np.ndarray:
        return self.forward(sample.values, sample.mask, training=False).data[0]

    def training_batch(self, sample) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        cfg = self.config
        self.buffer.push((sample.values, sample.mask, sample.label))
        copies = bootstrap_masks(sample.values, sample.mask, self.aux, cfg.K, cfg.q,
                                 self.bootstrap_rng)
        items = [(c.values, c.mask, sample.label) for c in copies]
        items += self.buffer.sample(cfg.batch_size - len(items), self.replay_rng)
        values = np.stack([it[0] for it in items])
        masks = np.stack([it[1] for it in items])
        labels = np.array([it[2] for it in items])
        return values, masks, labels

    def _update(self, sample) -> float:
        values, masks, labels = self.training_batch(sample)
        loss = ad.cross_entropy(self.forward(values, masks, training=True), labels)
        loss.backward()
        self.opt.step()
        return loss.item()
