"""Soft actor-critic with an explicit state-value network, plus demonstrations.

Networks: a tanh-squashed Gaussian policy, twin Q functions, V and a Polyak
averaged V target. Demonstrations live in their own buffer; every minibatch
takes ``round(batch * dur)`` transitions from it (``dur = 0`` is pure RL).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..env import STATE_DIM, DextronEnv, EnvSettings, rollout
from .buffer import ReplayBuffer, sample_mixed_batch
from .nn import Adam, Mlp, Normalizer

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
LOG_2PI = math.log(2.0 * math.pi)
LOG_2 = math.log(2.0)
ACTION_BOUND = 1.0 - 1e-6  # emitted actions stay strictly inside (-1, 1)


@dataclass(frozen=True)
class SacConfig:
    lr: float = 3e-4
    batch: int = 32
    tau: float = 0.01
    gamma: float = 0.99
    warm_start: int = 10_000
    epoch: int = 1000
    alpha: float = 0.2
    auto_alpha: bool = False
    target_entropy: float = -1.0
    dur: float = 0.1
    hidden: tuple = (256, 256)
    agent_capacity: int = 1_000_000
    demo_capacity: int = 1_000_000
    total_frames: int = 100_000
    demo_episodes: int = 0  # 0 = one rollout per demo record
    normalize: bool = True
    seed: int = 0
    obs_clip: float = 10.0  # clip normalized inputs to +-obs_clip; 0 disables
    eval_every: int = 10  # epochs between deterministic evaluations
    state_dim: int = STATE_DIM
    dtype: str = "float32"  # network precision; float64 for gradient checks

    def __post_init__(self):
        if not 0.0 <= self.dur <= 1.0:
            raise ValueError("dur must be within [0, 1]")
        for name in ("lr", "batch", "tau", "gamma", "epoch", "total_frames"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


def _softplus(x):
    return np.logaddexp(0.0, x)


def squash_log_correction(u):
    """``log(1 - tanh(u)^2)`` computed without cancellation."""
    return 2.0 * (LOG_2 - u - _softplus(-2.0 * u))


class GaussianPolicy:
    """Tanh-squashed 1-d Gaussian whose mean and log-std come from one MLP."""

    def __init__(self, state_dim, hidden, rng, normalizer: Normalizer | None = None, dtype="float64"):
        self.net = Mlp((state_dim, *hidden, 2), rng, dtype=dtype)
        self.normalizer = normalizer or Normalizer(state_dim)

    @classmethod
    def from_net(cls, net: Mlp, normalizer: Normalizer) -> "GaussianPolicy":
        pol = cls.__new__(cls)
        pol.net, pol.normalizer = net, normalizer
        return pol

    def head(self, s_norm, cache=False):
        out, c = self.net.forward(s_norm, cache=True)
        raw = out[..., 1]
        log_std = np.clip(raw, LOG_STD_MIN, LOG_STD_MAX)
        return (out[..., 0], log_std, raw, c) if cache else (out[..., 0], log_std)

    def sample(self, s_norm, eps):
        """Reparameterized sample ``tanh(mu + std * eps)`` and its log-density."""
        mu, log_std = self.head(s_norm)
        u = mu + np.exp(log_std) * eps
        logp = -0.5 * eps**2 - log_std - 0.5 * LOG_2PI - squash_log_correction(u)
        return np.tanh(u), logp

    def act(self, obs, rng: np.random.Generator | None = None, deterministic=False) -> float:
        """One action in the open interval (-1, 1)."""
        mu, log_std = self.head(self.normalizer(obs))
        u = mu if deterministic else mu + np.exp(log_std) * rng.standard_normal()
        return float(np.clip(np.tanh(u), -ACTION_BOUND, ACTION_BOUND))


class SacAgent:
    def __init__(self, cfg: SacConfig, rng: np.random.Generator):
        d, hid = cfg.state_dim, cfg.hidden
        self.cfg = cfg
        self.normalizer = Normalizer(d, cfg.obs_clip or None)
        dt = cfg.dtype
        self.policy = GaussianPolicy(d, hid, rng, self.normalizer, dt)
        self.q1 = Mlp((d + 1, *hid, 1), rng, dtype=dt)
        self.q2 = Mlp((d + 1, *hid, 1), rng, dtype=dt)
        self.v = Mlp((d, *hid, 1), rng, dtype=dt)
        self.v_target = self.v.copy()
        self.log_alpha = np.array([math.log(cfg.alpha)])
        self.nets = {"policy": self.policy.net, "q1": self.q1, "q2": self.q2, "v": self.v}
        self.opt = {name: Adam([net.flat], cfg.lr) for name, net in self.nets.items()}
        self.opt["alpha"] = Adam([self.log_alpha], cfg.lr)

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha[0])) if self.cfg.auto_alpha else self.cfg.alpha

    def set_normalizer(self, states) -> None:
        if self.cfg.normalize:
            fitted = Normalizer(self.cfg.state_dim).fit(states)
            self.normalizer.mean, self.normalizer.std = fitted.mean, fitted.std


def sac_losses(agent: SacAgent, batch: dict, eps: np.ndarray):
    """All SAC losses and their parameter gradients for one minibatch.

    ``eps`` is the standard-normal noise used for the reparameterized actions.
    Returns ``(losses, grads)`` dicts keyed by network name.
    """
    cfg = agent.cfg
    alpha = agent.alpha
    s = agent.normalizer(batch["s"])
    s2 = agent.normalizer(batch["s2"])
    a = np.asarray(batch["a"], dtype=float)[:, None]
    r = np.asarray(batch["r"], dtype=float)
    done = np.asarray(batch["done"], dtype=float)
    n = len(s)

    mu, log_std, raw, pcache = agent.policy.head(s, cache=True)
    std = np.exp(log_std)
    u = mu + std * eps
    a_new = np.tanh(u)
    logp = -0.5 * eps**2 - log_std - 0.5 * LOG_2PI - squash_log_correction(u)

    x_new = np.hstack([s, a_new[:, None]])
    q1n, c1n = agent.q1.forward(x_new, cache=True)
    q2n, c2n = agent.q2.forward(x_new, cache=True)
    q1n, q2n = q1n[:, 0], q2n[:, 0]
    qmin = np.minimum(q1n, q2n)

    v, cv = agent.v.forward(s, cache=True)
    dv = v[:, 0] - (qmin - alpha * logp)
    loss_v = float(np.mean(dv**2))
    grads_v, _ = agent.v.backward(cv, (2.0 * dv / n)[:, None])

    q_target = r + cfg.gamma * (1.0 - done) * agent.v_target.forward(s2)[:, 0]
    x_old = np.hstack([s, a])
    losses = {"v": loss_v}
    grads = {"v": grads_v}
    for name, net in (("q1", agent.q1), ("q2", agent.q2)):
        q, c = net.forward(x_old, cache=True)
        dq = q[:, 0] - q_target
        losses[name] = float(np.mean(dq**2))
        grads[name], _ = net.backward(c, (2.0 * dq / n)[:, None])

    losses["policy"] = float(np.mean(alpha * logp - qmin))
    use1 = q1n <= q2n
    _, gx1 = agent.q1.backward(c1n, np.where(use1, -1.0 / n, 0.0)[:, None], param_grads=False)
    _, gx2 = agent.q2.backward(c2n, np.where(use1, 0.0, -1.0 / n)[:, None], param_grads=False)
    g_a = gx1[:, -1] + gx2[:, -1]
    g_u = g_a * (1.0 - a_new**2) + (alpha / n) * 2.0 * a_new
    g_log_std = g_u * std * eps - alpha / n
    g_log_std = g_log_std * ((raw > LOG_STD_MIN) & (raw < LOG_STD_MAX))
    grads["policy"], _ = agent.policy.net.backward(pcache, np.stack([g_u, g_log_std], axis=1))

    if cfg.auto_alpha:
        slack = logp + cfg.target_entropy
        losses["alpha"] = float(-np.mean(agent.log_alpha[0] * slack))
        grads["alpha"] = [np.array([-np.mean(slack)])]
    return losses, grads


def sac_update(agent: SacAgent, batch: dict, rng: np.random.Generator) -> dict:
    eps = rng.standard_normal(len(batch["a"]))
    losses, grads = sac_losses(agent, batch, eps)
    for name, net in agent.nets.items():
        agent.opt[name].step([net.grad_flat])
    if "alpha" in grads:
        agent.opt["alpha"].step(grads["alpha"])
    agent.v_target.polyak_from(agent.v, agent.cfg.tau)
    return losses


@dataclass
class TrainResult:
    agent: SacAgent
    curve: list = field(default_factory=list)  # (epoch, mean, std, n_episodes)
    episode_returns: list = field(default_factory=list)
    eval_curve: list = field(default_factory=list)  # (epoch, mean, std) of deterministic evaluations
    n_demo_transitions: int = 0

    def final_eval(self, fraction: float = 0.25) -> float:
        """Mean of the deterministic evaluations in the last ``fraction`` of training."""
        if not self.eval_curve:
            return float("nan")
        k = max(1, int(round(len(self.eval_curve) * fraction)))
        return float(np.mean([m for _, m, _ in self.eval_curve[-k:]]))


def fill_demo_buffer(buf: ReplayBuffer, env: DextronEnv, demos, physics, limit: int = 0) -> int:
    """Roll out each demo record's expert in its own settings and store the transitions."""
    from ..mcsearch import replay

    chosen = demos if limit <= 0 else demos[:limit]
    for rec in chosen:
        buf.add_episode(replay(rec, env, physics))
    return len(buf)


def train_rlil(
    env: DextronEnv,
    sample_settings: Callable[[np.random.Generator], EnvSettings],
    demos,
    cfg: SacConfig,
    physics=None,
    log: Callable[[str], None] | None = None,
    eval_settings=None,
) -> TrainResult:
    """SAC with a demonstration buffer; ``cfg.dur = 0`` gives the pure-RL baseline.

    Acts uniformly at random for ``warm_start`` frames, then samples the
    policy; one gradient update per frame after warm start. With
    ``eval_settings`` the deterministic policy is evaluated on them every
    ``cfg.eval_every`` epochs (in a separate environment instance).
    """
    from ..env import PhysicsConstants

    physics = physics or PhysicsConstants()
    init_rng, env_rng, act_rng, batch_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(4))
    agent = SacAgent(cfg, init_rng)
    agent_buf = ReplayBuffer(cfg.agent_capacity, cfg.state_dim)
    demo_buf = None
    if cfg.dur > 0.0:
        if not demos:
            raise ValueError("dur > 0 needs a non-empty demo set")
        demo_buf = ReplayBuffer(cfg.demo_capacity, cfg.state_dim)
        fill_demo_buffer(demo_buf, env, list(demos), physics, cfg.demo_episodes)
    result = TrainResult(agent, n_demo_transitions=len(demo_buf) if demo_buf else 0)
    eval_env = DextronEnv(env.trajectories, env.time_scale) if eval_settings else None

    obs = env.reset(sample_settings(env_rng))
    ep_ret = 0.0
    epoch_returns = []
    for frame in range(1, cfg.total_frames + 1):
        if frame <= cfg.warm_start:
            a = float(act_rng.uniform(-1.0, 1.0))
        else:
            a = agent.policy.act(obs, act_rng)
        obs2, r, done = env.step(a)
        agent_buf.add(obs, a, r, obs2, done)
        ep_ret += r
        obs = obs2
        if done:
            result.episode_returns.append(ep_ret)
            epoch_returns.append(ep_ret)
            ep_ret = 0.0
            obs = env.reset(sample_settings(env_rng))

        if frame == cfg.warm_start or (frame == 1 and cfg.warm_start == 0):
            states = agent_buf.states()
            if demo_buf is not None:
                states = np.vstack([states, demo_buf.states()])
            agent.set_normalizer(states)
        if frame > cfg.warm_start:
            batch = sample_mixed_batch(agent_buf, demo_buf, cfg.batch, cfg.dur, batch_rng)
            sac_update(agent, batch, batch_rng)

        if frame % cfg.epoch == 0:
            epoch = frame // cfg.epoch
            arr = np.array(epoch_returns)
            mean = float(arr.mean()) if len(arr) else float("nan")
            std = float(arr.std()) if len(arr) else float("nan")
            result.curve.append((epoch, mean, std, len(arr)))
            epoch_returns = []
            if eval_env is not None and epoch % cfg.eval_every == 0:
                r = evaluate(deterministic_policy(agent.policy), eval_env, eval_settings)
                result.eval_curve.append((epoch, float(r.mean()), float(r.std())))
            if log is not None:
                log(f"epoch {epoch}: mean return {mean:.2f} over {len(arr)} episodes, alpha {agent.alpha:.3f}")
    return result


def evaluate(policy_fn, env: DextronEnv, settings_list) -> np.ndarray:
    """Returns of ``policy_fn`` over the given settings; no learning."""
    return np.array([rollout(env, s, policy_fn, keep_states=False).total_return for s in settings_list], dtype=float)


def deterministic_policy(policy: GaussianPolicy):
    return lambda obs: policy.act(obs, deterministic=True)


def random_policy(rng: np.random.Generator):
    return lambda obs: float(rng.uniform(-1.0, 1.0))
