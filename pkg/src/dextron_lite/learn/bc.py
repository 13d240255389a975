"""Behavior cloning of expert closure commands.

The cloned policy uses the same trunk as the SAC policy (state -> 256 -> 256 ->
(mean, log-std)); only the mean is trained, and the deterministic action is
``tanh(mean)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..env import STATE_DIM, DextronEnv, PhysicsConstants
from ..errors import EmptyDataset
from .nn import Adam, Normalizer
from .sac import GaussianPolicy


@dataclass(frozen=True)
class BcConfig:
    lr: float = 1e-3
    lr_decay: float = 0.5
    decay_every: int = 100  # epochs
    batch: int = 512
    epochs: int = 500
    hidden: tuple = (256, 256)
    normalize: bool = True
    seed: int = 0
    state_dim: int = STATE_DIM
    dtype: str = "float64"

    def __post_init__(self):
        if not (self.lr > 0 and self.batch > 0 and self.epochs > 0 and self.decay_every > 0):
            raise ValueError("lr, batch, epochs and decay_every must be positive")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ValueError("lr_decay must be within (0, 1]")


def lr_at(epoch: int, cfg: BcConfig) -> float:
    """Step schedule: ``lr * decay ** (epoch // decay_every)`` (epochs counted from 0)."""
    return cfg.lr * cfg.lr_decay ** (epoch // cfg.decay_every)


@dataclass
class BcResult:
    policy: GaussianPolicy
    losses: list = field(default_factory=list)  # mean training MSE per epoch
    lrs: list = field(default_factory=list)


def build_bc_dataset(records, env: DextronEnv, physics: PhysicsConstants = PhysicsConstants(),
                     max_transitions: int | None = None):
    """Roll out G_s records with their experts; returns stacked ``(states, actions)``."""
    from ..mcsearch import replay

    states, actions = [], []
    n = 0
    for rec in records:
        ep = replay(rec, env, physics)
        states.append(ep.states[:-1])
        actions.append(ep.actions)
        n += len(ep.actions)
        if max_transitions is not None and n >= max_transitions:
            break
    if not states:
        raise EmptyDataset("no G_s records to roll out")
    s, a = np.vstack(states), np.concatenate(actions)
    if max_transitions is not None:
        s, a = s[:max_transitions], a[:max_transitions]
    return s, a


def bc_loss(policy: GaussianPolicy, s_norm, a):
    """MSE between ``tanh(mean)`` and the target action, with its gradient."""
    out, cache = policy.net.forward(s_norm, cache=True)
    pred = np.tanh(out[:, 0])
    err = pred - a
    loss = float(np.mean(err**2))
    g = np.zeros_like(out)
    g[:, 0] = 2.0 * err * (1.0 - pred**2) / len(a)
    grads, _ = policy.net.backward(cache, g)
    return loss, grads


def train_bc(states, actions, cfg: BcConfig = BcConfig(), log=None) -> BcResult:
    """Minibatch Adam on the MSE; one epoch is a shuffled pass over the data."""
    states = np.asarray(states, dtype=float)
    actions = np.asarray(actions, dtype=float)
    if len(states) == 0:
        raise EmptyDataset("behavior cloning needs at least one transition")
    if len(states) != len(actions):
        raise ValueError("states and actions differ in length")
    rng = np.random.default_rng(cfg.seed)
    norm = Normalizer(states.shape[1])
    if cfg.normalize:
        norm.fit(states)
    policy = GaussianPolicy(states.shape[1], cfg.hidden, rng, norm, cfg.dtype)
    opt = Adam([policy.net.flat], cfg.lr)
    s_norm = norm(states)
    result = BcResult(policy)
    n = len(states)
    for epoch in range(cfg.epochs):
        opt.lr = lr_at(epoch, cfg)
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch):
            idx = order[start:start + cfg.batch]
            loss, _ = bc_loss(policy, s_norm[idx], actions[idx])
            opt.step([policy.net.grad_flat])
            total += loss * len(idx)
        result.losses.append(total / n)
        result.lrs.append(opt.lr)
        if log is not None and (epoch + 1) % 50 == 0:
            log(f"epoch {epoch + 1}: mse {total / n:.3e} lr {opt.lr:.2e}")
    return result


def evaluate_mse(policy: GaussianPolicy, states, actions) -> float:
    mu, _ = policy.head(policy.normalizer(states))
    return float(np.mean((np.tanh(mu) - np.asarray(actions)) ** 2))
