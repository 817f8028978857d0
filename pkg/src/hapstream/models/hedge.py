"""Hedging ensemble of per-depth classifiers, and its weighted-residual analogue.

HedgeMLP: classifier i reads hidden layer i of a shared ReLU trunk and emits
class probabilities softmax(Theta_i h_i); the ensemble is sum_i alpha_i p_i
with alpha on the simplex, updated multiplicatively from each classifier's
loss.  WeightedResidual drops the per-classifier losses and learns the
branch weights alpha' by backprop, with no simplex constraint.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from .. import seeding
from ..autodiff import Tensor
from ..errors import ConfigError, DimensionError
from .base import OnlineModel
from .layers import Params, linear


@dataclass
class HedgeConfig:
    layers: int = 4
    hidden_width: int = 32
    beta: float = 0.99
    s: float = 0.2
    lr: float = 1e-3

    def __post_init__(self):
        if self.layers < 2:
            raise ConfigError("hedging needs at least 2 layers")
        if not 0.0 < self.beta < 1.0 or not 0.0 < self.s < 1.0:
            raise ConfigError("beta and s must lie in the open unit interval")


def model_input(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Zero-filled values with the availability bits appended."""
    values = np.atleast_2d(values)
    mask = np.atleast_2d(mask).astype(np.float64)
    return np.concatenate([values * mask, mask], axis=-1)


def project_floor_simplex(alpha: np.ndarray, floor: float) -> np.ndarray:
    """Renormalise to sum 1 while keeping every weight >= ``floor``.

    Weights that would fall below the floor are pinned to it and the
    remaining mass is shared by the others in proportion.
    """
    a = alpha / alpha.sum()
    pinned = np.zeros(a.shape, dtype=bool)
    while True:
        low = (a < floor) & ~pinned
        if not low.any():
            break
        pinned |= low
        free = ~pinned
        a[pinned] = floor
        a[free] *= (1.0 - floor * pinned.sum()) / a[free].sum()
    return a


class HedgeMLP(OnlineModel):
    def __init__(self, num_features: int, num_classes: int, config: HedgeConfig | None = None,
                 seed: int = 0):
        super().__init__()
        self.config = cfg = config or HedgeConfig()
        self.num_features = num_features
        self.num_classes = num_classes
        self.params = p = Params(seeding.generator(seed, "init"))
        width = 2 * num_features
        self.hidden, self.heads = [], []
        for i in range(cfg.layers):
            self.hidden.append(p.linear(f"layer{i}", width, cfg.hidden_width))
            self.heads.append(p.linear(f"classifier{i}", cfg.hidden_width, num_classes))
            width = cfg.hidden_width
        self.alpha = np.full(cfg.layers, 1.0 / cfg.layers)
        self.opt = ad.Adam(p.values(), lr=cfg.lr)

    def classifier_probs(self, x: np.ndarray) -> list[Tensor]:
        if x.shape[-1] != 2 * self.num_features:
            raise DimensionError(f"expected input width {2 * self.num_features}, got {x.shape[-1]}")
        h = Tensor(x)
        probs = []
        for layer, head in zip(self.hidden, self.heads):
            h = ad.relu(linear(h, layer))
            probs.append(ad.softmax(linear(h, head), axis=-1))
        return probs

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Ensemble and per-classifier outputs as log-probabilities (valid logits)."""
        with ad.no_grad():
            probs = [pr.data for pr in self.classifier_probs(np.atleast_2d(x))]
        ensemble = sum(a * pr for a, pr in zip(self.alpha, probs))
        return np.log(ensemble), [np.log(pr) for pr in probs]

    def _predict(self, sample) -> np.ndarray:
        return self.forward(model_input(sample.values, sample.mask))[0][0]

    def hedge_update(self, x: np.ndarray, label: int) -> float:
        cfg = self.config
        probs = self.classifier_probs(np.atleast_2d(x))
        labels = [label]
        ensemble = probs[0] * float(self.alpha[0])
        for a, pr in zip(self.alpha[1:], probs[1:]):
            ensemble = ensemble + pr * float(a)
        per_loss = [ad.nll(pr, labels) for pr in probs]
        total = ad.nll(ensemble, labels)
        for l in per_loss:
            total = total + l
        total.backward()
        self.opt.step()
        losses = np.array([l.item() for l in per_loss])
        self.alpha = project_floor_simplex(self.alpha * cfg.beta ** losses, cfg.s / cfg.layers)
        return total.item()

    def _update(self, sample) -> float:
        return self.hedge_update(model_input(sample.values, sample.mask), sample.label)


class WeightedResidual(OnlineModel):
    """Logits = sum_i alpha'_i relu(W''_i h'_{i-1}) with h'_0 = x, one loss on the sum."""

    def __init__(self, num_features: int, num_classes: int, config: HedgeConfig | None = None,
                 seed: int = 0):
        super().__init__()
        self.config = cfg = config or HedgeConfig()
        self.num_features = num_features
        self.num_classes = num_classes
        self.params = p = Params(seeding.generator(seed, "init"))
        width = 2 * num_features
        self.trunk, self.branches = [], []
        for i in range(cfg.layers):
            self.branches.append(p.linear(f"branch{i}", width, num_classes))
            if i < cfg.layers - 1:
                self.trunk.append(p.linear(f"layer{i}", width, cfg.hidden_width))
                width = cfg.hidden_width
        self.alpha = p.add("alpha", np.full(cfg.layers, 1.0 / cfg.layers))
        self.opt = ad.Adam(p.values(), lr=cfg.lr)

    def branch_outputs(self, x: np.ndarray) -> list[Tensor]:
        if x.shape[-1] != 2 * self.num_features:
            raise DimensionError(f"expected input width {2 * self.num_features}, got {x.shape[-1]}")
        h = Tensor(x)
        outs = []
        for i, branch in enumerate(self.branches):
            outs.append(ad.relu(linear(h, branch)))
            if i < len(self.trunk):
                h = ad.relu(linear(h, self.trunk[i]))
        return outs

    def forward(self, x: np.ndarray) -> Tensor:
        outs = self.branch_outputs(np.atleast_2d(x))
        logits = outs[0] * self.alpha[0]
        for i, o in enumerate(outs[1:], start=1):
            logits = logits + o * self.alpha[i]
        return logits

    def _predict(self, sample) -> np.ndarray:
        return self.forward(model_input(sample.values, sample.mask)).data[0]

    def _update(self, sample) -> float:
        loss = ad.cross_entropy(self.forward(model_input(sample.values, sample.mask)),
                                [sample.label])
        loss.backward()
        self.opt.step()
        return loss.item()
