"""``dextron``: command-line driver for the whole pipeline.

    dextron gen      --out runs/traj
    dextron mc       --traj runs/traj --out runs/mc --workers 4
    dextron train    rlil --traj runs/traj --gs runs/mc --out runs/rlil
    dextron eval     --checkpoint runs/rlil/policy.npz --traj runs/traj --gs runs/mc
    dextron sm-data  --traj runs/traj --gs runs/mc --policy runs/rlil/policy.npz --out runs/sm
    dextron sm-train --data runs/sm/dataset.npz --out runs/sm_model
    dextron explain  --model runs/sm_model/model.npz --traj runs/traj --gs runs/mc --out runs/explain

Every command accepts ``--config FILE`` (``key = value`` lines) and repeated
``--set key=value`` overrides, and writes ``config.resolved`` into its output
directory. Errors print one JSON line on stderr and exit non-zero.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import mcsearch, successmodel, traj
from .env import DextronEnv, PhysicsConstants, rollout, write_episode_log
from .errors import ConfigError, DextronError, EmptyDataset, MissingCheckpoint
from .expert import ExpertPolicy
from .learn import bc, checkpoint, sac


@dataclass(frozen=True)
class GenConfig:
    radii: tuple = (0.20, 0.25, 0.30, 0.35)
    angles: tuple = ()  # degrees; empty = four sector centres of the half plane y < 0
    lift_height: float = 0.20
    duration: float = 1.0
    dt: float = 0.02
    grasp_gap: float = 0.09
    lift_start: float = 0.35
    reach_fraction: float = 0.6


@dataclass(frozen=True)
class TrainConfig:
    sac: sac.SacConfig = field(default_factory=sac.SacConfig)
    bc: bc.BcConfig = field(default_factory=bc.BcConfig)
    physics: PhysicsConstants = field(default_factory=PhysicsConstants)
    time_scale: float = 2.5
    bc_records: int = 200  # G_s records rolled out for the BC dataset; 0 = all
    eval_episodes: int = 100
    stratum: str = "success"


@dataclass(frozen=True)
class EvalConfig:
    episodes: int = 100
    seed: int = 0
    settings: str = "gs"  # gs | general
    stratum: str = "success"
    time_scale: float = 2.5
    physics: PhysicsConstants = field(default_factory=PhysicsConstants)


@dataclass(frozen=True)
class SmDataConfig:
    n_episodes: int = 2000
    rl_fraction: float = 0.5
    p_gs: float = 0.5
    seed: int = 0
    workers: int = 1
    time_scale: float = 2.5
    physics: PhysicsConstants = field(default_factory=PhysicsConstants)


@dataclass(frozen=True)
class ExplainConfig:
    episodes: int = 5
    seed: int = 0
    stratum: str = "success"
    time_scale: float = 2.5
    physics: PhysicsConstants = field(default_factory=PhysicsConstants)


def _resolve(default, args, extra: dict | None = None):
    cfg = cfgmod.load(default, args.config, cfgmod.parse_assignments(args.set))
    if extra:
        cfg = cfgmod.apply_overrides(cfg, {k: v for k, v in extra.items() if v is not None})
    return cfg


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _load_policy(path):
    ck = checkpoint.load_checkpoint(path)
    if "policy" not in ck.nets:
        raise MissingCheckpoint(f"{path} holds no policy network")
    return sac.GaussianPolicy.from_net(ck.nets["policy"], ck.normalizer()), ck


def _gs_settings(records, physics, rng, n):
    idx = rng.integers(len(records), size=n)
    return [records[i].settings(physics) for i in idx]


# -- subcommands ---------------------------------------------------------------


def cmd_gen(args) -> dict:
    out = _out_dir(args)
    if args.import_dir:
        tset = traj.load_set(args.import_dir)
        paths = traj.save_set(tset, out)
        cfgmod.write_kv(out / "config.resolved", {"import_dir": args.import_dir})
    else:
        cfg = _resolve(GenConfig(), args)
        angles = np.deg2rad(cfg.angles) if cfg.angles else None
        tset = traj.synthetic_set(cfg.radii, angles, cfg.lift_height, cfg.duration, cfg.dt,
                                  cfg.grasp_gap, cfg.lift_start, cfg.reach_fraction)
        paths = traj.save_set(tset, out)
        cfgmod.write_kv(out / "config.resolved", cfg)
    # round-trip validation
    back = traj.load_set(out, source=tset.source)
    if len(back) != len(tset) or not all(a.allclose(b, atol=1e-12) for a, b in zip(tset, back)):
        raise DextronError(f"round-trip validation failed in {out}")
    return {"n_trajectories": len(paths), "out": str(out)}


def cmd_mc(args) -> dict:
    out = _out_dir(args)
    cfg = _resolve(mcsearch.McConfig(), args, {"workers": args.workers, "master_seed": args.seed})
    cfgmod.write_kv(out / "config.resolved", cfg)
    tset = traj.load_set(args.traj)
    t0 = time.time()
    records, stats = mcsearch.run_search(cfg, tset, out)
    return {"n_samples": stats.n_samples, "n_accepted": stats.n_accepted, "rate": stats.rate,
            "n_success": stats.n_success, "seconds": round(time.time() - t0, 2), "out": str(out)}


def cmd_train(args) -> dict:
    out = _out_dir(args)
    extra = {}
    if args.seed is not None:
        extra.update({"sac.seed": args.seed, "bc.seed": args.seed})
    if args.mode == "rl":
        extra["sac.dur"] = 0.0
    cfg = _resolve(TrainConfig(), args, extra)
    if args.mode == "rl" and cfg.sac.dur != 0.0:
        raise ConfigError("mode rl requires sac.dur = 0")
    cfgmod.write_kv(out / "config.resolved", cfg)
    tset = traj.load_set(args.traj)
    env = DextronEnv(tset, cfg.time_scale)
    gs = mcsearch.select(mcsearch.load_gs(args.gs), cfg.stratum)
    if not gs:
        raise EmptyDataset(f"no G_s records in stratum {cfg.stratum!r}")
    seed = cfg.bc.seed if args.mode == "bc" else cfg.sac.seed
    eval_rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    eval_settings = _gs_settings(gs, cfg.physics, eval_rng, cfg.eval_episodes)

    if args.mode == "bc":
        records = gs if cfg.bc_records <= 0 else gs[: cfg.bc_records]
        s, a = bc.build_bc_dataset(records, env, cfg.physics)
        res = bc.train_bc(s, a, cfg.bc, log=_log)
        policy = res.policy
        checkpoint.save_checkpoint(out / "policy.npz", "bc", {"policy": policy.net}, policy.normalizer,
                                   meta={"mode": "bc", "seed": seed, "n_transitions": len(s)})
        with open(out / "loss.csv", "w", encoding="utf-8") as fh:
            fh.write("epoch,mse,lr\n")
            for i, (loss, lr) in enumerate(zip(res.losses, res.lrs), 1):
                fh.write(f"{i},{loss!r},{lr!r}\n")
        summary = {"final_mse": res.losses[-1], "n_transitions": len(s)}
    else:
        def sample_settings(rng):
            return gs[int(rng.integers(len(gs)))].settings(cfg.physics)

        res = sac.train_rlil(env, sample_settings, gs, cfg.sac, cfg.physics, log=_log)
        agent = res.agent
        checkpoint.save_checkpoint(
            out / "policy.npz", "sac",
            {"policy": agent.policy.net, "q1": agent.q1, "q2": agent.q2, "v": agent.v, "v_target": agent.v_target},
            agent.normalizer, agent.opt,
            meta={"mode": args.mode, "dur": cfg.sac.dur, "seed": seed, "log_alpha": float(agent.log_alpha[0])},
        )
        checkpoint.write_curve(out / "curve.csv", res.curve)
        policy = agent.policy
        summary = {"epochs": len(res.curve), "n_demo_transitions": res.n_demo_transitions}
    returns = sac.evaluate(sac.deterministic_policy(policy), env, eval_settings)
    ev = {"mode": args.mode, "seed": seed, "episodes": len(returns), "mean_return": float(returns.mean()),
          "std_return": float(returns.std()), "returns": returns.astype(int).tolist()}
    _write_json(out / "eval.json", ev)
    return {**summary, "mean_return": ev["mean_return"], "out": str(out)}


def cmd_eval(args) -> dict:
    cfg = _resolve(EvalConfig(), args, {"episodes": args.episodes, "seed": args.seed})
    if cfg.episodes <= 0:
        raise ConfigError("episodes must be positive")
    if not args.expert and not args.checkpoint:
        raise ConfigError("give --checkpoint or --expert")
    policy = None
    if not args.expert:
        policy, _ = _load_policy(args.checkpoint)
    tset = traj.load_set(args.traj)
    env = DextronEnv(tset, cfg.time_scale)
    records = mcsearch.load_gs(args.gs)
    rng = np.random.default_rng(cfg.seed)
    if args.expert:
        # replay the stored experts on their own settings
        chosen = mcsearch.select(records, cfg.stratum)[: cfg.episodes]
        if not chosen:
            raise EmptyDataset("no G_s records to evaluate")
        returns = np.array([mcsearch.replay(r, env, cfg.physics, keep_states=False).total_return for r in chosen], float)
        stored = float(np.mean([r.ret for r in chosen]))
    else:
        if cfg.settings == "gs":
            pool = mcsearch.select(records, cfg.stratum)
            if not pool:
                raise EmptyDataset("no G_s records for evaluation settings")
            settings = _gs_settings(pool, cfg.physics, rng, cfg.episodes)
        elif cfg.settings == "general":
            mc = mcsearch.McConfig(time_scale=cfg.time_scale, physics=cfg.physics)
            settings = [mcsearch.sample_settings(rng, mc, tset) for _ in range(cfg.episodes)]
        else:
            raise ConfigError(f"settings must be gs or general, got {cfg.settings!r}")
        returns = sac.evaluate(sac.deterministic_policy(policy), env, settings)
        stored = None
    result = {"checkpoint": None if args.expert else str(args.checkpoint), "expert": bool(args.expert),
              "seed": cfg.seed, "episodes": len(returns), "mean_return": float(returns.mean()),
              "std_return": float(returns.std()), "returns": returns.astype(int).tolist(),
              "histogram": np.bincount(returns.astype(int), minlength=21).tolist()}
    if stored is not None:
        result["stored_mean_return"] = stored
    if args.out:
        out = _out_dir(args)
        cfgmod.write_kv(out / "config.resolved", cfg)
        _write_json(out / "eval.json", result)
    return {k: v for k, v in result.items() if k not in ("returns",)}


def cmd_sm_data(args) -> dict:
    out = _out_dir(args)
    cfg = _resolve(SmDataConfig(), args, {"seed": args.seed, "workers": args.workers})
    cfgmod.write_kv(out / "config.resolved", cfg)
    tset = traj.load_set(args.traj)
    env = DextronEnv(tset, cfg.time_scale)
    records = mcsearch.load_gs(args.gs)
    policy = None
    if args.policy:
        pol, _ = _load_policy(args.policy)
        policy = sac.deterministic_policy(pol)
    mc = mcsearch.McConfig(time_scale=cfg.time_scale, physics=cfg.physics)
    ds = successmodel.build_dataset(records, env, cfg.n_episodes, policy, cfg.rl_fraction, mc, cfg.p_gs,
                                    cfg.seed, cfg.workers)
    ds.save(out / "dataset.npz")
    _write_json(out / "dataset.meta.json", ds.meta)
    return {"n_samples": len(ds), "success_fraction": ds.success_fraction, "out": str(out)}


def cmd_sm_train(args) -> dict:
    out = _out_dir(args)
    cfg = _resolve(successmodel.SmConfig(), args, {"seed": args.seed})
    cfgmod.write_kv(out / "config.resolved", cfg)
    ds = successmodel.OutcomeDataset.load(args.data)
    model, metrics = successmodel.train(ds, cfg, log=_log)
    model.save(out / "model.npz", meta={"seed": cfg.seed, "dataset": str(args.data)})
    _write_json(out / "metrics.json", metrics.to_json())
    return {"accuracy": metrics.accuracy, "majority_baseline": metrics.majority_baseline, "out": str(out)}


def cmd_explain(args) -> dict:
    out = _out_dir(args)
    cfg = _resolve(ExplainConfig(), args, {"seed": args.seed, "episodes": args.episodes})
    cfgmod.write_kv(out / "config.resolved", cfg)
    model = successmodel.SuccessModel.load(args.model)
    tset = traj.load_set(args.traj)
    env = DextronEnv(tset, cfg.time_scale)
    records = mcsearch.select(mcsearch.load_gs(args.gs), cfg.stratum)
    if not records:
        raise EmptyDataset("no G_s records to draw settings from")
    rng = np.random.default_rng(cfg.seed)
    policy_fn = None
    if args.policy:
        pol, _ = _load_policy(args.policy)
        policy_fn = sac.deterministic_policy(pol)
    summary, episodes = [], []
    for k in range(cfg.episodes):
        rec = records[int(rng.integers(len(records)))]
        settings = rec.settings(cfg.physics)
        fn = policy_fn if policy_fn is not None else ExpertPolicy(env, rec.params())
        ep = rollout(env, settings, fn)
        episodes.append(ep)
        ex = successmodel.explain_episode(model, ep)
        path = out / f"episode_{k:02d}.csv"
        ex.write_csv(path)
        summary.append({"file": path.name, "return": ep.total_return, "outcome": ex.outcome,
                        "reach_step": ep.reach_step, "steps": len(ep), "flag_rate": float(np.mean(ex.flags))})
    write_episode_log(out / "episodes.jsonl", episodes)
    _write_json(out / "summary.json", summary)
    return {"episodes": len(summary), "out": str(out)}


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dextron", description="DEXTRON-lite grasp-learning pipeline")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_, out_default=None, seed=True, workers=False):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="key = value config file")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")
        sp.add_argument("--out", default=out_default, help="output directory")
        if seed:
            sp.add_argument("--seed", type=int, help="master seed")
        if workers:
            sp.add_argument("--workers", type=int, help="parallel worker processes")
        sp.set_defaults(func=fn)
        return sp

    sp = add("gen", cmd_gen, "write the synthetic trajectory set (or validate imported CSVs)", "runs/traj", seed=False)
    sp.add_argument("--import", dest="import_dir", help="directory of CSV trajectories to validate and copy")

    sp = add("mc", cmd_mc, "Monte Carlo search for successful expert settings", "runs/mc", workers=True)
    sp.add_argument("--traj", default="runs/traj")

    sp = add("train", cmd_train, "train a policy (rlil, rl or bc)", None)
    sp.add_argument("mode", choices=("rlil", "rl", "bc"))
    sp.add_argument("--traj", default="runs/traj")
    sp.add_argument("--gs", default="runs/mc")

    sp = add("eval", cmd_eval, "evaluate a checkpoint (or the stored experts)", None)
    sp.add_argument("--checkpoint")
    sp.add_argument("--expert", action="store_true", help="replay G_s experts instead of a checkpoint")
    sp.add_argument("--episodes", type=int)
    sp.add_argument("--traj", default="runs/traj")
    sp.add_argument("--gs", default="runs/mc")

    sp = add("sm-data", cmd_sm_data, "build the success-model dataset", "runs/sm", workers=True)
    sp.add_argument("--traj", default="runs/traj")
    sp.add_argument("--gs", default="runs/mc")
    sp.add_argument("--policy", help="policy checkpoint for the RL part of the dataset")

    sp = add("sm-train", cmd_sm_train, "train the success model", "runs/sm_model")
    sp.add_argument("--data", default="runs/sm/dataset.npz")

    sp = add("explain", cmd_explain, "write action-sweep curves along sample episodes", "runs/explain")
    sp.add_argument("--model", default="runs/sm_model/model.npz")
    sp.add_argument("--traj", default="runs/traj")
    sp.add_argument("--gs", default="runs/mc")
    sp.add_argument("--policy", help="policy checkpoint to explain (default: the G_s experts)")
    sp.add_argument("--episodes", type=int)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "train" and args.out is None:
        args.out = f"runs/{args.mode}"
    try:
        result = args.func(args)
    except (DextronError, OSError, ValueError, KeyError) as exc:
        print(json.dumps({"error": type(exc).__name__, "command": args.command, "message": str(exc)}), file=sys.stderr)
        return 1
    print(json.dumps(result))
    return 0


if __name__ == "__main__":
    sys.exit(main())
