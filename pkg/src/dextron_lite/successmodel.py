"""Success model: predict an episode's final outcome from one (state, action) pair.

The outcome dataset mixes expert episodes (half of them oversampled from the
successful G_s stratum, half from the general sampling distribution) with
roll-outs of a trained policy on G_s settings. Every transition inherits the
outcome of its episode (1 iff the return is the maximum, 20).

The classifier is a 3-layer ReLU MLP on ``[normalized state, action]`` with two
logits and a cross-entropy loss. Explanations sweep the action over a 51-point
grid on [-1, 1] at each visited state.
"""

from __future__ import annotations

import csv
import json
import multiprocessing as mp
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .env import MAX_RETURN, STATE_DIM, DextronEnv, EpisodeRecord, rollout
from .errors import EmptyDataset, SingleClassDataset
from .expert import ExpertPolicy, sample_params
from .learn.nn import Adam, Mlp, Normalizer, cross_entropy, softmax
from .mcsearch import McConfig, sample_settings, select

SOURCES = ("EX", "RL")


@dataclass(frozen=True)
class OutcomeSample:
    s: np.ndarray
    a: float
    o: int
    source: str


@dataclass(frozen=True)
class SmConfig:
    hidden: tuple = (256, 256)
    lr: float = 1e-3
    lr_decay: float = 0.5
    decay_every: int = 100  # epochs
    batch: int = 1024
    epochs: int = 20
    train_frac: float = 0.8
    test_frac: float = 0.2
    grid_step: float = 0.04
    threshold: float = 0.5
    normalize: bool = True
    seed: int = 0

    def __post_init__(self):
        if abs(self.train_frac + self.test_frac - 1.0) > 1e-12:
            raise ValueError("train_frac + test_frac must equal 1")
        if not 0.0 < self.test_frac < 1.0:
            raise ValueError("test_frac must be within (0, 1)")
        if not (self.lr > 0 and self.batch > 0 and self.epochs > 0 and self.grid_step > 0):
            raise ValueError("lr, batch, epochs and grid_step must be positive")


class OutcomeDataset:
    """Column store of outcome samples plus the episode each sample came from."""

    def __init__(self, states, actions, outcomes, sources, episodes, meta: dict | None = None):
        self.states = np.asarray(states, dtype=float).reshape(-1, STATE_DIM if len(states) == 0 else np.shape(states)[-1])
        self.actions = np.asarray(actions, dtype=float)
        self.outcomes = np.asarray(outcomes, dtype=np.int8)
        self.sources = np.asarray(sources, dtype=np.int8)  # index into SOURCES
        self.episodes = np.asarray(episodes, dtype=np.int64)
        n = len(self.actions)
        if not all(len(x) == n for x in (self.states, self.outcomes, self.sources, self.episodes)):
            raise ValueError("dataset columns differ in length")
        self.meta = dict(meta or {})
        self.meta.update(self.counts())

    def __len__(self):
        return len(self.actions)

    def __getitem__(self, i) -> OutcomeSample:
        return OutcomeSample(self.states[i], float(self.actions[i]), int(self.outcomes[i]), SOURCES[self.sources[i]])

    def counts(self) -> dict:
        return {
            "state_dim": int(self.states.shape[1]),
            "n_samples": len(self),
            "n_episodes": int(len(np.unique(self.episodes))),
            "per_class": {str(c): int(np.sum(self.outcomes == c)) for c in (0, 1)},
            "per_source": {src: int(np.sum(self.sources == k)) for k, src in enumerate(SOURCES)},
        }

    @property
    def success_fraction(self) -> float:
        return float(np.mean(self.outcomes)) if len(self) else float("nan")

    def subset(self, mask) -> "OutcomeDataset":
        return OutcomeDataset(self.states[mask], self.actions[mask], self.outcomes[mask],
                              self.sources[mask], self.episodes[mask], self.meta)

    @classmethod
    def concat(cls, parts, meta: dict | None = None) -> "OutcomeDataset":
        parts = list(parts)
        # keep episode ids unique across parts
        offsets = np.cumsum([0] + [int(p.episodes.max()) + 1 if len(p) else 0 for p in parts[:-1]])
        return cls(np.vstack([p.states for p in parts]), np.concatenate([p.actions for p in parts]),
                   np.concatenate([p.outcomes for p in parts]), np.concatenate([p.sources for p in parts]),
                   np.concatenate([p.episodes + off for p, off in zip(parts, offsets)]), meta)

    def save(self, path) -> None:
        """``.npz`` with a JSON metadata header."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as fh:
            np.savez(fh, states=self.states, actions=self.actions, outcomes=self.outcomes,
                     sources=self.sources, episodes=self.episodes, header=np.array(json.dumps(self.meta)))

    @classmethod
    def load(cls, path) -> "OutcomeDataset":
        with np.load(path) as d:
            return cls(d["states"], d["actions"], d["outcomes"], d["sources"], d["episodes"], json.loads(str(d["header"])))


def _episode_columns(ep: EpisodeRecord, episode: int, source: int):
    n = len(ep.actions)
    o = ep.outcome
    return ep.states[:-1], ep.actions, np.full(n, o, dtype=np.int8), np.full(n, source, dtype=np.int8), np.full(n, episode)


# Per-episode generation; module-level so forked workers can run it.
_ctx: dict = {}


def _episode_rng(seed: int, i: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(i)]))


def _ex_episode(i: int):
    c = _ctx
    rng = _episode_rng(c["seed"], i)
    env, mc = c["env"], c["mc"]
    if c["gs"] and rng.random() < c["p_gs"]:
        rec = c["gs"][int(rng.integers(len(c["gs"])))]
        settings, params = rec.settings(mc.physics), rec.params()
    else:
        settings = sample_settings(rng, mc, env.trajectories)
        params = sample_params(rng, mc.k_range, mc.dc_range)
    return _episode_columns(rollout(env, settings, ExpertPolicy(env, params)), i, 0)


def _rl_episode(i: int):
    c = _ctx
    rng = _episode_rng(c["seed"], i)
    rec = c["gs"][int(rng.integers(len(c["gs"])))]
    return _episode_columns(rollout(c["env"], rec.settings(c["mc"].physics), c["policy"]), i, 1)


def _run_range(bounds):
    fn = _ex_episode if _ctx["kind"] == "EX" else _rl_episode
    return [fn(i) for i in range(*bounds)]


def _generate(kind, n_episodes, workers, ctx, chunk=50):
    _ctx.clear()
    _ctx.update(ctx, kind=kind)
    chunks = [(s, min(s + chunk, n_episodes)) for s in range(0, n_episodes, chunk)]
    if workers <= 1:
        results = [_run_range(c) for c in chunks]
    else:
        with mp.get_context("fork").Pool(workers) as pool:
            results = pool.map(_run_range, chunks)
    cols = [col for part in results for col in part]
    if not cols:
        raise EmptyDataset("no episodes generated")
    return [np.concatenate([c[k] for c in cols]) if k else np.vstack([c[0] for c in cols]) for k in range(5)]


def build_dataset_ex(gs_records, env: DextronEnv, n_episodes: int, mc: McConfig = McConfig(),
                     p_gs: float = 0.5, seed: int = 0, workers: int = 1, stratum: str = "success") -> OutcomeDataset:
    """Expert episodes; each comes from a G_s record with probability ``p_gs``, else from general sampling.

    ``p_gs = 0`` gives the raw, un-oversampled outcome distribution.
    """
    gs = select(gs_records, stratum)
    if p_gs > 0 and not gs:
        raise EmptyDataset(f"no G_s records in stratum {stratum!r}")
    cols = _generate("EX", n_episodes, workers, {"env": env, "mc": mc, "gs": gs, "p_gs": p_gs, "seed": seed})
    meta = {"kind": "EX", "p_gs": p_gs, "seed": seed, "stratum": stratum, "n_ex_episodes": n_episodes, "n_rl_episodes": 0}
    return OutcomeDataset(*cols, meta=meta)


def build_dataset_rl(policy: Callable[[np.ndarray], float], gs_records, env: DextronEnv, n_episodes: int,
                     mc: McConfig = McConfig(), seed: int = 0, workers: int = 1, stratum: str = "success") -> OutcomeDataset:
    """Roll-outs of ``policy`` in environment settings drawn uniformly from G_s."""
    gs = select(gs_records, stratum)
    if not gs:
        raise EmptyDataset(f"no G_s records in stratum {stratum!r}")
    cols = _generate("RL", n_episodes, workers, {"env": env, "mc": mc, "gs": gs, "policy": policy, "seed": seed})
    meta = {"kind": "RL", "seed": seed, "stratum": stratum, "n_ex_episodes": 0, "n_rl_episodes": n_episodes}
    return OutcomeDataset(*cols, meta=meta)


def build_dataset(gs_records, env: DextronEnv, n_episodes: int, policy=None, rl_fraction: float = 0.5,
                  mc: McConfig = McConfig(), p_gs: float = 0.5, seed: int = 0, workers: int = 1) -> OutcomeDataset:
    """Union of expert and policy episodes; ``rl_fraction`` of the episodes use ``policy``."""
    n_rl = int(round(n_episodes * rl_fraction)) if policy is not None else 0
    n_ex = n_episodes - n_rl
    ss = np.random.SeedSequence(seed).generate_state(2)
    parts = [build_dataset_ex(gs_records, env, n_ex, mc, p_gs, int(ss[0]), workers)]
    if n_rl:
        parts.append(build_dataset_rl(policy, gs_records, env, n_rl, mc, int(ss[1]), workers))
    meta = {"kind": "EX+RL" if n_rl else "EX", "seed": seed, "p_gs": p_gs, "rl_fraction": rl_fraction,
            "n_ex_episodes": n_ex, "n_rl_episodes": n_rl, "mix_rl_to_ex": f"{n_rl}:{n_ex}"}
    return OutcomeDataset.concat(parts, meta)


def split_episodes(ds: OutcomeDataset, test_frac: float, rng: np.random.Generator):
    """Boolean test mask; whole episodes go to one side, stratified by outcome."""
    ep_ids, first = np.unique(ds.episodes, return_index=True)
    ep_outcome = ds.outcomes[first]
    test_eps = []
    for c in (0, 1):
        ids = ep_ids[ep_outcome == c]
        ids = ids[rng.permutation(len(ids))]
        test_eps.append(ids[: int(round(len(ids) * test_frac))])
    return np.isin(ds.episodes, np.concatenate(test_eps))


class SuccessModel:
    """Classifier ``Omega(s, a)`` -> P(success)."""

    def __init__(self, net: Mlp, normalizer: Normalizer, grid_step: float = 0.04, threshold: float = 0.5):
        self.net = net
        self.normalizer = normalizer
        self.grid_step = grid_step
        self.threshold = threshold

    def inputs(self, states, actions):
        s = self.normalizer(np.atleast_2d(states))
        a = np.asarray(actions, dtype=float).reshape(-1, 1)
        if len(s) == 1 and len(a) > 1:
            s = np.repeat(s, len(a), axis=0)
        return np.hstack([s, a])

    def logits(self, states, actions):
        return self.net.forward(self.inputs(states, actions))

    def predict_proba(self, states, actions) -> np.ndarray:
        """P(success) per (state, action) row."""
        return softmax(self.logits(states, actions))[:, 1]

    def action_grid(self) -> np.ndarray:
        n = int(round(2.0 / self.grid_step)) + 1
        return np.linspace(-1.0, 1.0, n)

    def save(self, path, meta: dict | None = None):
        from .learn.checkpoint import save_checkpoint

        meta = dict(meta or {}, grid_step=self.grid_step, threshold=self.threshold)
        return save_checkpoint(path, "success_model", {"omega": self.net}, self.normalizer, meta=meta)

    @classmethod
    def load(cls, path) -> "SuccessModel":
        from .learn.checkpoint import load_checkpoint

        ck = load_checkpoint(path)
        if ck.kind != "success_model":
            raise ValueError(f"{path} holds a {ck.kind!r} checkpoint, not a success model")
        net = ck.nets["omega"]
        return cls(net, ck.normalizer(), ck.meta.get("grid_step", 0.04), ck.meta.get("threshold", 0.5))


@dataclass
class SmMetrics:
    accuracy: float
    majority_baseline: float
    precision: dict
    recall: dict
    n_train: int
    n_test: int
    test_success_fraction: float
    train_success_fraction: float
    losses: list = field(default_factory=list)

    def to_json(self) -> dict:
        return asdict(self)


def classification_metrics(pred, truth) -> tuple[float, dict, dict]:
    pred, truth = np.asarray(pred), np.asarray(truth)
    acc = float(np.mean(pred == truth)) if len(truth) else float("nan")
    precision, recall = {}, {}
    for c in (0, 1):
        tp = np.sum((pred == c) & (truth == c))
        p_den, r_den = np.sum(pred == c), np.sum(truth == c)
        precision[str(c)] = float(tp / p_den) if p_den else float("nan")
        recall[str(c)] = float(tp / r_den) if r_den else float("nan")
    return acc, precision, recall


def train(ds: OutcomeDataset, cfg: SmConfig = SmConfig(), log=None) -> tuple[SuccessModel, SmMetrics]:
    """Fit the classifier on an episode-grouped 80/20 split and report held-out metrics.

    Raises:
        SingleClassDataset: if every sample has the same outcome.
    """
    if len(ds) == 0:
        raise EmptyDataset("empty outcome dataset")
    if len(np.unique(ds.outcomes)) < 2:
        raise SingleClassDataset(f"all {len(ds)} samples have outcome {int(ds.outcomes[0])}")
    rng = np.random.default_rng(cfg.seed)
    test = split_episodes(ds, cfg.test_frac, rng)
    train_idx, test_idx = np.flatnonzero(~test), np.flatnonzero(test)

    norm = Normalizer(ds.states.shape[1])
    if cfg.normalize:
        norm.fit(ds.states[train_idx])
    net = Mlp((ds.states.shape[1] + 1, *cfg.hidden, 2), rng)
    model = SuccessModel(net, norm, cfg.grid_step, cfg.threshold)
    x = model.inputs(ds.states, ds.actions)
    y = ds.outcomes.astype(int)
    opt = Adam([net.flat], cfg.lr)
    losses = []
    for epoch in range(cfg.epochs):
        opt.lr = cfg.lr * cfg.lr_decay ** (epoch // cfg.decay_every)
        order = train_idx[rng.permutation(len(train_idx))]
        total = 0.0
        for start in range(0, len(order), cfg.batch):
            idx = order[start:start + cfg.batch]
            out, cache = net.forward(x[idx], cache=True)
            loss, g = cross_entropy(out, y[idx])
            net.backward(cache, g)
            opt.step([net.grad_flat])
            total += loss * len(idx)
        losses.append(total / len(order))
        if log is not None:
            log(f"epoch {epoch + 1}: train loss {losses[-1]:.4f}")

    eval_idx = test_idx if len(test_idx) else train_idx
    p = softmax(net.forward(x[eval_idx]))[:, 1]
    pred = (p > cfg.threshold).astype(int)
    acc, prec, rec = classification_metrics(pred, y[eval_idx])
    frac = float(np.mean(y[eval_idx]))
    metrics = SmMetrics(acc, max(frac, 1.0 - frac), prec, rec, len(train_idx), len(test_idx),
                        frac, float(np.mean(y[train_idx])), losses)
    return model, metrics


def success_curve(model: SuccessModel, s) -> tuple[np.ndarray, np.ndarray]:
    """``(actions, probabilities)`` over the 51-point grid ``-1, -0.96, ..., 1``."""
    grid = model.action_grid()
    return grid, model.predict_proba(np.asarray(s, dtype=float)[None, :], grid)


@dataclass
class Explanation:
    t_norm: np.ndarray  # (n,) step index / time-of-reach step
    grid: np.ndarray  # (51,)
    probabilities: np.ndarray  # (n, 51)
    executed: np.ndarray  # (n,) executed actions
    p_executed: np.ndarray  # (n,) P(success) at the executed action
    flags: np.ndarray  # (n,) thresholded prediction == true outcome
    outcome: int

    def rows(self):
        for k in range(len(self.t_norm)):
            for a, p in zip(self.grid, self.probabilities[k]):
                yield (float(self.t_norm[k]), float(a), float(p), float(self.executed[k]), int(self.flags[k]))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["t_norm", "action", "probability", "executed", "flag"])
            w.writerows(self.rows())


def explain_episode(model: SuccessModel, episode: EpisodeRecord) -> Explanation:
    """Action-sweep curves along a recorded episode.

    Each step is flagged true when ``P(success | s, executed a) > threshold``
    agrees with the episode's actual outcome.
    """
    if len(episode.states) != len(episode.actions) + 1:
        raise ValueError("episode must carry its states (roll out with keep_states=True)")
    n = len(episode.actions)
    grid = model.action_grid()
    states = episode.states[:n]
    probs = np.empty((n, len(grid)))
    for k in range(n):
        probs[k] = model.predict_proba(states[k][None, :], grid)
    p_exec = model.predict_proba(states, episode.actions) if n else np.empty(0)
    outcome = int(episode.total_return == MAX_RETURN)
    flags = (p_exec > model.threshold).astype(int) == outcome
    reach = max(int(episode.reach_step), 1)
    return Explanation(np.arange(n) / reach, grid, probs, np.asarray(episode.actions, dtype=float), p_exec, flags, outcome)
