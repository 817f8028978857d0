"""Parameter containers and building blocks shared by the models."""
from __future__ import annotations

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor


class Params(dict):
    """Ordered name -> Tensor mapping; names are stable checkpoint keys."""

    def __init__(self, rng: np.random.Generator):
        super().__init__()
        self.rng = rng

    def add(self, name: str, value: np.ndarray) -> Tensor:
        t = Tensor(value, requires_grad=True, name=name)
        self[name] = t
        return t

    def linear(self, name: str, fan_in: int, fan_out: int) -> tuple[Tensor, Tensor]:
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w = self.add(f"{name}.weight", self.rng.uniform(-bound, bound, (fan_in, fan_out)))
        b = self.add(f"{name}.bias", np.zeros(fan_out))
        return w, b

    def norm(self, name: str, width: int) -> tuple[Tensor, Tensor]:
        return self.add(f"{name}.gain", np.ones(width)), self.add(f"{name}.bias", np.zeros(width))


def sinusoidal_encoding(positions, width: int) -> np.ndarray:
    """Standard sin/cos encoding of scalar positions over ``width`` channels."""
    pos = np.asarray(positions, dtype=np.float64)[..., None]
    k = np.arange(width)
    freq = 1.0 / (10000.0 ** ((k - k % 2) / width))
    angle = pos * freq
    return np.where(k % 2 == 0, np.sin(angle), np.cos(angle))


def linear(x: Tensor, wb: tuple[Tensor, Tensor]) -> Tensor:
    return ad.linear(x, *wb)


class EncoderBlock:
    """Transformer encoder block.

    Post-norm by default: ``LN(x + MHA(x))`` then ``LN(x + FF(x))``. With
    ``norm_first`` it becomes ``x + MHA(LN(x))`` then ``x + FF(LN(x))``. Note the
    pre-norm layout cannot see a component of ``x`` that is constant across
    channels, since layer norm subtracts it before attention.
    """

    def __init__(self, params: Params, prefix: str, d_model: int, heads: int, ff_width: int,
                 dropout: float, norm_first: bool = False):
        self.norm_first = norm_first
        self.heads = heads
        self.d_model = d_model
        self.dropout = dropout
        self.ln1 = params.norm(f"{prefix}.ln1", d_model)
        self.qkv = params.linear(f"{prefix}.qkv", d_model, 3 * d_model)
        self.proj = params.linear(f"{prefix}.proj", d_model, d_model)
        self.ln2 = params.norm(f"{prefix}.ln2", d_model)
        self.ff1 = params.linear(f"{prefix}.ff1", d_model, ff_width)
        self.ff2 = params.linear(f"{prefix}.ff2", ff_width, d_model)

    def attention(self, x: Tensor) -> Tensor:
        return linear(ad.multi_head_attention(linear(x, self.qkv), self.heads), self.proj)

    def feed_forward(self, x: Tensor, training: bool, rng) -> Tensor:
        h = ad.dropout(ad.relu(linear(x, self.ff1)), self.dropout, training, rng)
        return ad.dropout(linear(h, self.ff2), self.dropout, training, rng)

    def __call__(self, x: Tensor, training: bool, rng) -> Tensor:
        if self.norm_first:
            x = x + ad.dropout(self.attention(ad.layer_norm(x, *self.ln1)), self.dropout,
                               training, rng)
            return x + self.feed_forward(ad.layer_norm(x, *self.ln2), training, rng)
        x = ad.layer_norm(x + ad.dropout(self.attention(x), self.dropout, training, rng), *self.ln1)
        return ad.layer_norm(x + self.feed_forward(x, training, rng), *self.ln2)


class GRUCell:
    """Single-layer gated recurrent cell (update/reset gates)."""

    def __init__(self, params: Params, prefix: str, input_size: int, hidden: int):
        self.hidden = hidden
        self.wx = params.linear(f"{prefix}.input", input_size, 3 * hidden)
        self.wh = params.linear(f"{prefix}.hidden", hidden, 3 * hidden)

    def run(self, tokens: np.ndarray, step_mask: np.ndarray, h0: np.ndarray) -> Tensor:
        """Consume constant (B, L, D) tokens; rows whose ``step_mask[:, l]`` is False keep their state."""
        Hd = self.hidden
        h = Tensor(h0)
        for l in range(tokens.shape[1]):
            m = step_mask[:, l:l + 1].astype(np.float64)
            if not m.any():
                continue
            gx = linear(Tensor(tokens[:, l]), self.wx)
            gh = linear(h, self.wh)
            z = ad.sigmoid(gx[:, :Hd] + gh[:, :Hd])
            r = ad.sigmoid(gx[:, Hd:2 * Hd] + gh[:, Hd:2 * Hd])
            n = ad.tanh(gx[:, 2 * Hd:] + r * gh[:, 2 * Hd:])
            h_new = n + z * (h - n)
            h = h_new if m.all() else h + m * (h_new - h)
        return h
