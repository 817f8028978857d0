"""Common online-model protocol: ``predict(sample)`` then ``update(sample)``."""
from __future__ import annotations

import numpy as np

from .. import autodiff as ad
from ..errors import ProtocolError


class OnlineModel:
    """Enforces strict predict(t) / update(t) alternation.

    Subclasses implement ``_predict`` (returns a logits vector) and
    ``_update`` (returns the training loss).
    """

    params: dict

    def __init__(self):
        self._pending_t = None

    def predict(self, sample) -> np.ndarray:
        if self._pending_t is not None:
            raise ProtocolError(f"predict at t={sample.t} before update of t={self._pending_t}")
        with ad.no_grad():
            logits = self._predict(sample)
        self._pending_t = sample.t
        return logits

    def update(self, sample) -> float:
        if self._pending_t != sample.t:
            raise ProtocolError(f"update at t={sample.t} without a prediction for it")
        self._pending_t = None
        return self._update(sample)

    def _predict(self, sample) -> np.ndarray:
        raise NotImplementedError

    def _update(self, sample) -> float:
        raise NotImplementedError

    def parameters(self) -> dict:
        return self.params

    def save(self, path):
        ad.save_params(self.params, path)

    def load(self, path):
        ad.load_params(self.params, path)


class ReplayBuffer:
    """Fixed-capacity ring of past training items, sampled uniformly with replacement."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.items: list = []
        self._next = 0

    def push(self, item):
        if self.capacity <= 0:
            return
        if len(self.items) < self.capacity:
            self.items.append(item)
        else:
            self.items[self._next] = item
        self._next = (self._next + 1) % self.capacity

    def sample(self, n: int, rng: np.random.Generator) -> list:
        if n <= 0 or not self.items:
            return []
        return [self.items[i] for i in rng.integers(0, len(self.items), size=n)]

    def __len__(self):
        return len(self.items)
