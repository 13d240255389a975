"""Central finite-difference checks for the hand-written gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class GradReport:
    max_rel_error: float
    n_checked: int
    n_kinks: int  # entries skipped because the perturbation crossed a ReLU kink


def compare(loss_fn, params, grads, eps=1e-5, floor=1e-8, skip_below=1e-9, kink_tol=1e-3) -> GradReport:
    """Compare ``grads`` with central differences of ``loss_fn``.

    ``params`` are arrays perturbed in place (and restored); ``loss_fn()`` reads
    them. Entries where both gradients are below ``skip_below`` are ignored,
    since their ratio is pure round-off. An entry whose forward and backward
    one-sided slopes disagree by more than ``kink_tol`` (relative) straddles a
    non-differentiable point; it is counted in ``n_kinks`` instead of checked.
    """
    worst, n_checked, n_kinks = 0.0, 0, 0
    for p, g in zip(params, grads):
        g = np.asarray(g, dtype=float)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            l0 = loss_fn()
            p[idx] = old + eps
            lp = loss_fn()
            p[idx] = old - eps
            lm = loss_fn()
            p[idx] = old
            fwd, bwd = (lp - l0) / eps, (l0 - lm) / eps
            fd = (lp - lm) / (2.0 * eps)
            scale = max(abs(fd), abs(g[idx]))
            if scale <= skip_below:
                continue
            if abs(fwd - bwd) > kink_tol * max(abs(fwd), abs(bwd), floor):
                n_kinks += 1
                continue
            n_checked += 1
            worst = max(worst, abs(fd - g[idx]) / max(scale, floor))
    return GradReport(worst, n_checked, n_kinks)


def max_rel_error(loss_fn, params, grads, eps=1e-5) -> float:
    return compare(loss_fn, params, grads, eps).max_rel_error


def _randomize(net, rng, scale=0.1):
    # the default init keeps output layers tiny; larger values make the check meaningful
    net.weights[-1][...] = rng.normal(size=net.weights[-1].shape)
    for b in net.biases:
        b[...] = rng.normal(size=b.shape) * scale


def check_sac(hidden=8, state_dim=5, n=16, seed=0, eps=1e-5) -> dict:
    """``GradReport`` for the V, Q1, Q2, policy and temperature losses on a random batch."""
    from .sac import SacAgent, SacConfig, sac_losses

    rng = np.random.default_rng(seed)
    cfg = SacConfig(hidden=(hidden, hidden), auto_alpha=True, state_dim=state_dim, dtype="float64")
    agent = SacAgent(cfg, rng)
    for net in (agent.q1, agent.q2, agent.v, agent.v_target, agent.policy.net):
        _randomize(net, rng)
    batch = {
        "s": rng.normal(size=(n, state_dim)),
        "a": rng.uniform(-1, 1, n),
        "r": rng.integers(0, 2, n).astype(float),
        "s2": rng.normal(size=(n, state_dim)),
        "done": (rng.random(n) < 0.3).astype(float),
    }
    noise = rng.normal(size=n)
    _, grads = sac_losses(agent, batch, noise)
    grads = {k: [np.array(g) for g in v] for k, v in grads.items()}  # backward reuses its buffers
    params = {"v": agent.v.params, "q1": agent.q1.params, "q2": agent.q2.params,
              "policy": agent.policy.net.params, "alpha": [agent.log_alpha]}
    return {name: compare(lambda name=name: sac_losses(agent, batch, noise)[0][name], ps, grads[name], eps)
            for name, ps in params.items()}


def check_classifier(hidden=8, in_dim=6, n=32, seed=0, eps=1e-5) -> GradReport:
    """``GradReport`` for the cross-entropy loss of a two-logit classifier."""
    from .nn import Mlp, cross_entropy

    rng = np.random.default_rng(seed)
    net = Mlp((in_dim, hidden, hidden, 2), rng)
    _randomize(net, rng)
    x = rng.normal(size=(n, in_dim))
    y = rng.integers(0, 2, n)

    def loss():
        return cross_entropy(net.forward(x), y)[0]

    out, cache = net.forward(x, cache=True)
    grads, _ = net.backward(cache, cross_entropy(out, y)[1])
    return compare(loss, net.params, [np.array(g) for g in grads], eps)
