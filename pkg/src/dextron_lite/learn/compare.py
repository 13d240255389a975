"""RLIL against pure RL on shared evaluation settings, over several seeds."""

from __future__ import annotations

import time
from pathlib import Path

import numpy as np

from ..env import DextronEnv
from . import checkpoint, sac


def compare(gs_success, trajectories, frames=100_000, seeds=(0, 1, 2), n_eval=50, dur=0.1, eval_seed=12345,
            log=None, out=None) -> dict:
    """Train RLIL (``dur``) and RL (``dur = 0``) per seed and score both on the same settings.

    Training and evaluation settings are drawn from ``gs_success``. The
    summary holds, per seed and variant, the mean deterministic evaluation
    return over the last quarter of training (``final_eval``), the evaluation
    curve and the mean return of the random warm-start episodes, plus the
    return of a uniform random policy on the evaluation settings.
    """
    env = DextronEnv(trajectories)
    eval_rng = np.random.default_rng(eval_seed)
    eval_settings = [gs_success[i].settings() for i in eval_rng.integers(len(gs_success), size=n_eval)]

    def sample_settings(rng):
        return gs_success[int(rng.integers(len(gs_success)))].settings()

    runs = []
    for seed in seeds:
        row = {"seed": int(seed)}
        for name, d in (("rlil", dur), ("rl", 0.0)):
            t0 = time.time()
            cfg = sac.SacConfig(dur=d, total_frames=frames, seed=int(seed))
            res = sac.train_rlil(env, sample_settings, gs_success, cfg, eval_settings=eval_settings)
            warm = [m for e, m, _, n in res.curve if e * cfg.epoch <= cfg.warm_start and n]
            row[name] = {
                "final_eval": res.final_eval(),
                "eval_curve": res.eval_curve,
                "warm_start_mean": float(np.mean(warm)) if warm else float("nan"),
                "seconds": round(time.time() - t0, 1),
            }
            if out is not None:
                Path(out).mkdir(parents=True, exist_ok=True)
                checkpoint.write_curve(Path(out) / f"curve_{name}_seed{seed}.csv", res.curve)
            if log is not None:
                r = row[name]
                log(f"seed {seed} {name}: final eval {r['final_eval']:.2f} "
                    f"(warm start {r['warm_start_mean']:.2f}) in {r['seconds']} s")
        runs.append(row)
    random_eval = float(sac.evaluate(sac.random_policy(np.random.default_rng(0)), env, eval_settings).mean())
    return {"frames": frames, "dur": dur, "n_eval": n_eval, "random_eval": random_eval, "runs": runs}


def verdict(summary: dict) -> dict:
    """RLIL-vs-RL wins and the improvement of each variant over the random policy."""
    runs = summary["runs"]
    wins = sum(r["rlil"]["final_eval"] >= r["rl"]["final_eval"] for r in runs)
    means = {k: float(np.mean([r[k]["final_eval"] for r in runs])) for k in ("rlil", "rl")}
    return {"rlil_wins": wins, "n_seeds": len(runs), "mean_final_eval": means,
            "random_eval": summary["random_eval"],
            "both_improve": all(m > summary["random_eval"] for m in means.values())}
