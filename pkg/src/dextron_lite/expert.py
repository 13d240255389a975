"""Two-phase proportional closure controller and its parameter family.

Far from the object (``d_hat >= d_c``) the hand is driven toward ``h_open``;
inside the critical distance it is driven toward ``h_closed``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import DextronEnv, normalized_distance

K_RANGE = (1.0, 1.5)
DC_RANGE = (0.01, 0.90)
H_OPEN = 0.0
H_CLOSED = 0.8


@dataclass(frozen=True)
class ExpertParams:
    K: float
    d_c: float
    h_open: float = H_OPEN
    h_closed: float = H_CLOSED

    def __post_init__(self):
        if not 0.0 <= self.h_open < self.h_closed <= 1.0:
            raise ValueError(f"need 0 <= h_open < h_closed <= 1, got {self.h_open}, {self.h_closed}")
        if not self.K > 0.0:
            raise ValueError("K must be positive")
        if not self.d_c >= 0.0:
            raise ValueError("d_c must be non-negative")

    def in_family(self, k_range=K_RANGE, dc_range=DC_RANGE) -> bool:
        return k_range[0] <= self.K <= k_range[1] and dc_range[0] <= self.d_c <= dc_range[1]


def expert_action(h: float, d_hat: float, p: ExpertParams) -> float:
    """Eq.-style two-phase p-control, clamped to the action range [-1, 1]."""
    target = p.h_open if d_hat >= p.d_c else p.h_closed
    raw = p.K * (target - h)
    return min(max(raw, -1.0), 1.0)


def sample_params(rng: np.random.Generator, k_range=K_RANGE, dc_range=DC_RANGE) -> ExpertParams:
    K = rng.uniform(*k_range)
    d_c = rng.uniform(*dc_range)
    return ExpertParams(K=float(K), d_c=float(d_c))


class ExpertPolicy:
    """Expert bound to a live environment; reads closure and ``d_hat`` from its state."""

    def __init__(self, env: DextronEnv, params: ExpertParams):
        self.env = env
        self.params = params

    def __call__(self, obs=None) -> float:
        s = self.env.state
        return expert_action(s.h, normalized_distance(s), self.params)
