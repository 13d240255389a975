"""Ring replay buffer and mixed agent/demo minibatches."""

from __future__ import annotations

import math

import numpy as np

from ..errors import EmptyBuffer


class ReplayBuffer:
    """Fixed-capacity FIFO of transitions with uniform sampling.

    Storage grows on demand up to ``capacity`` so a 1e6 buffer costs nothing
    until it fills.
    """

    def __init__(self, capacity: int, state_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.state_dim = state_dim
        self._alloc = 0
        self._s = self._s2 = self._a = self._r = self._d = None
        self._grow(min(1024, self.capacity))
        self.size = 0
        self.pos = 0

    def _grow(self, n):
        def extend(arr, shape):
            new = np.zeros((n, *shape))
            if arr is not None:
                new[: len(arr)] = arr
            return new

        self._s = extend(self._s, (self.state_dim,))
        self._s2 = extend(self._s2, (self.state_dim,))
        self._a = extend(self._a, ())
        self._r = extend(self._r, ())
        self._d = extend(self._d, ())
        self._alloc = n

    def __len__(self):
        return self.size

    def add(self, s, a, r, s2, done) -> None:
        if self.pos >= self._alloc:
            self._grow(min(self.capacity, 2 * self._alloc))
        i = self.pos
        self._s[i] = s
        self._a[i] = a
        self._r[i] = r
        self._s2[i] = s2
        self._d[i] = float(done)
        self.pos = (self.pos + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def add_episode(self, episode) -> None:
        dones = episode.dones
        for k in range(len(episode.actions)):
            self.add(episode.states[k], episode.actions[k], episode.rewards[k], episode.states[k + 1], dones[k])

    def get(self, idx) -> dict:
        return {"s": self._s[idx], "a": self._a[idx], "r": self._r[idx], "s2": self._s2[idx], "done": self._d[idx]}

    def sample(self, rng: np.random.Generator, n: int) -> dict:
        if self.size == 0:
            raise EmptyBuffer("cannot sample from an empty buffer")
        return self.get(rng.integers(self.size, size=n))

    def states(self) -> np.ndarray:
        return self._s[: self.size]


def demo_count(batch: int, dur: float) -> int:
    """Number of demo transitions in a minibatch: ``round(batch * dur)``, halves up."""
    if not 0.0 <= dur <= 1.0:
        raise ValueError("dur must be within [0, 1]")
    return int(math.floor(batch * dur + 0.5))


def sample_mixed_batch(agent: ReplayBuffer, demo: ReplayBuffer | None, batch: int, dur: float, rng) -> dict:
    """``round(batch * dur)`` transitions from ``demo``, the rest from ``agent``."""
    n_demo = demo_count(batch, dur)
    n_agent = batch - n_demo
    parts = []
    if n_demo:
        if demo is None or len(demo) == 0:
            raise EmptyBuffer("demo buffer is empty")
        parts.append(demo.sample(rng, n_demo))
    if n_agent:
        if len(agent) == 0:
            raise EmptyBuffer("agent buffer is empty")
        parts.append(agent.sample(rng, n_agent))
    out = {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}
    out["n_demo"] = n_demo
    return out
