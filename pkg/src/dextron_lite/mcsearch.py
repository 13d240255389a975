"""Monte Carlo search over environment settings x expert parameters.

Each sample index ``i`` gets its own generator seeded from ``(master_seed, i)``,
so the stored database does not depend on how samples are spread over workers.
A sample is accepted when the expert's return exceeds the threshold (1).
"""

from __future__ import annotations

import json
import multiprocessing as mp
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .env import MAX_RETURN, DextronEnv, EnvSettings, EpisodeRecord, PhysicsConstants, rollout
from .errors import ReplayMismatch, SearchError
from .expert import DC_RANGE, K_RANGE, ExpertParams, ExpertPolicy, sample_params
from .traj import TrajectorySet, warped_duration


@dataclass(frozen=True)
class McConfig:
    n_samples: int = 100_000
    workers: int = 1
    master_seed: int = 0
    dx_range: tuple = (-0.06, 0.06)
    dy_range: tuple = (-0.06, 0.06)
    mu_t: float = 0.5
    sigma_t: float = 0.8
    time_scale: float = 2.5
    accept_threshold: float = 1.0
    k_range: tuple = K_RANGE
    dc_range: tuple = DC_RANGE
    chunk_size: int = 500
    physics: PhysicsConstants = field(default_factory=PhysicsConstants)

    def __post_init__(self):
        if self.n_samples <= 0:
            raise ValueError("n_samples must be positive")
        if not self.sigma_t > 0:
            raise ValueError("sigma_t must be positive")
        if self.workers < 1 or self.chunk_size < 1:
            raise ValueError("workers and chunk_size must be >= 1")


@dataclass(frozen=True)
class GsRecord:
    traj_id: int
    dx: float
    dy: float
    tn: float
    K: float
    dc: float
    seed: int
    ret: int

    @property
    def success(self) -> bool:
        return self.ret == MAX_RETURN

    def settings(self, physics: PhysicsConstants = PhysicsConstants()) -> EnvSettings:
        return EnvSettings(self.traj_id, self.dx, self.dy, self.tn, physics, self.seed)

    def params(self) -> ExpertParams:
        return ExpertParams(K=self.K, d_c=self.dc)

    def to_json(self) -> dict:
        return {"traj_id": self.traj_id, "dx": self.dx, "dy": self.dy, "tn": self.tn,
                "K": self.K, "dc": self.dc, "seed": self.seed, "return": self.ret}

    @classmethod
    def from_json(cls, d: dict) -> "GsRecord":
        return cls(int(d["traj_id"]), float(d["dx"]), float(d["dy"]), float(d["tn"]),
                   float(d["K"]), float(d["dc"]), int(d["seed"]), int(d["return"]))


@dataclass
class SearchStats:
    n_samples: int
    n_accepted: int
    n_success: int
    per_traj_counts: list
    per_traj_samples: list

    @property
    def rate(self) -> float:
        return self.n_accepted / self.n_samples

    def to_json(self) -> dict:
        return {"n_samples": self.n_samples, "n_accepted": self.n_accepted, "rate": self.rate,
                "n_success": self.n_success, "per_traj_counts": self.per_traj_counts,
                "per_traj_samples": self.per_traj_samples}


def sample_seed(master_seed: int, index: int) -> int:
    """64-bit per-sample seed derived from the master seed and sample index only."""
    ss = np.random.SeedSequence([int(master_seed), int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


def sample_settings(rng: np.random.Generator, cfg: McConfig, trajectories: TrajectorySet, seed: int = 0) -> EnvSettings:
    """Draw ``(traj, dx, dy, tn)``; ``tn`` is redrawn while the warped duration is not positive."""
    tid = int(rng.integers(len(trajectories)))
    dx = float(rng.uniform(*cfg.dx_range))
    dy = float(rng.uniform(*cfg.dy_range))
    duration = trajectories[tid].duration
    while True:
        tn = float(rng.normal(cfg.mu_t, cfg.sigma_t))
        if warped_duration(duration, cfg.time_scale, tn) > 0.0:
            break
    return EnvSettings(tid, dx, dy, tn, cfg.physics, seed)


def draw_sample(index: int, cfg: McConfig, trajectories: TrajectorySet):
    seed = sample_seed(cfg.master_seed, index)
    rng = np.random.default_rng(seed)
    settings = sample_settings(rng, cfg, trajectories, seed)
    params = sample_params(rng, cfg.k_range, cfg.dc_range)
    return settings, params


def evaluate_sample(index: int, cfg: McConfig, env: DextronEnv):
    settings, params = draw_sample(index, cfg, env.trajectories)
    ep = rollout(env, settings, ExpertPolicy(env, params), keep_states=False)
    rec = GsRecord(settings.trajectory_id, settings.dx, settings.dy, settings.tn,
                   params.K, params.d_c, settings.seed, ep.total_return)
    return rec


_worker = {}


def _init_worker(cfg, trajectories):
    _worker["cfg"] = cfg
    _worker["env"] = DextronEnv(trajectories, cfg.time_scale)


def _run_chunk(bounds):
    start, stop = bounds
    cfg, env = _worker["cfg"], _worker["env"]
    out, failures = [], {}
    for i in range(start, stop):
        try:
            out.append((i, evaluate_sample(i, cfg, env)))
        except Exception as exc:  # reported with the sample index after the sweep
            failures[i] = f"{type(exc).__name__}: {exc}"
    return out, failures


def run_search(cfg: McConfig, trajectories: TrajectorySet, out_dir=None):
    """Sample, roll out and keep every sample whose return exceeds the threshold.

    Returns ``(records, stats)``. Records are ordered by sample index. With
    ``out_dir`` the database is appended to ``gs.jsonl`` chunk by chunk and
    ``gs.index.json`` / ``stats.json`` are written at the end.

    Raises:
        SearchError: if any sample raised; lists the failing sample indices.
    """
    chunks = [(s, min(s + cfg.chunk_size, cfg.n_samples)) for s in range(0, cfg.n_samples, cfg.chunk_size)]
    n_traj = len(trajectories)
    counts = [0] * n_traj
    attempts = [0] * n_traj
    records: list[GsRecord] = []
    failures: dict = {}
    sink = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        sink = open(out_dir / "gs.jsonl", "w", encoding="utf-8")

    def consume(result):
        out, fails = result
        failures.update(fails)
        lines = []
        for _, rec in out:
            attempts[rec.traj_id] += 1
            if rec.ret > cfg.accept_threshold:
                records.append(rec)
                counts[rec.traj_id] += 1
                lines.append(json.dumps(rec.to_json()))
        if sink is not None and lines:
            sink.write("\n".join(lines) + "\n")
            sink.flush()

    try:
        if cfg.workers == 1:
            _init_worker(cfg, trajectories)
            for c in chunks:
                consume(_run_chunk(c))
        else:
            ctx = mp.get_context("fork")
            with ctx.Pool(cfg.workers, initializer=_init_worker, initargs=(cfg, trajectories)) as pool:
                for result in pool.imap(_run_chunk, chunks):
                    consume(result)
    finally:
        if sink is not None:
            sink.close()

    stats = SearchStats(cfg.n_samples, len(records), sum(r.success for r in records), counts, attempts)
    if out_dir is not None:
        write_index(out_dir / "gs.index.json", records)
        (out_dir / "stats.json").write_text(json.dumps(stats.to_json(), indent=2) + "\n", encoding="utf-8")
    if failures:
        raise SearchError(failures)
    return records, stats


def write_index(path, records) -> None:
    index = {
        "n_records": len(records),
        "n_success": sum(r.success for r in records),
        "success_rows": [i for i, r in enumerate(records) if r.success],
    }
    Path(path).write_text(json.dumps(index) + "\n", encoding="utf-8")


def save_gs(path, records) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_json()) + "\n")
    write_index(path.with_name(path.stem + ".index.json"), records)


def load_gs(path) -> list[GsRecord]:
    path = Path(path)
    if path.is_dir():
        path = path / "gs.jsonl"
    with open(path, encoding="utf-8") as fh:
        return [GsRecord.from_json(json.loads(line)) for line in fh if line.strip()]


def select(records, stratum: str = "success") -> list[GsRecord]:
    """``"success"`` keeps only full-return records, ``"all"`` keeps everything."""
    if stratum == "all":
        return list(records)
    if stratum == "success":
        return [r for r in records if r.success]
    raise ValueError(f"unknown stratum {stratum!r}")


def replay(record: GsRecord, env: DextronEnv, physics: PhysicsConstants = PhysicsConstants(), keep_states=True) -> EpisodeRecord:
    settings = record.settings(physics)
    return rollout(env, settings, ExpertPolicy(env, record.params()), keep_states=keep_states)


def verify_replay(record: GsRecord, env: DextronEnv, physics: PhysicsConstants = PhysicsConstants()) -> EpisodeRecord:
    """Replay and raise ``ReplayMismatch`` unless the stored return is reproduced exactly."""
    ep = replay(record, env, physics, keep_states=False)
    if ep.total_return != record.ret:
        raise ReplayMismatch(f"record seed={record.seed} stored return {record.ret}, replay gave {ep.total_return}")
    return ep


def replay_all(records, env: DextronEnv, physics: PhysicsConstants = PhysicsConstants()) -> dict:
    mismatches = []
    for i, r in enumerate(records):
        ep = replay(r, env, physics, keep_states=False)
        if ep.total_return != r.ret:
            mismatches.append({"row": i, "stored": r.ret, "replayed": ep.total_return})
    return {"n": len(records), "matched": len(records) - len(mismatches), "mismatches": mismatches}
