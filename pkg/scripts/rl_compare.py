"""RLIL (DUR=0.1) against pure RL over several seeds on the surrogate.

Builds G_s with a Monte Carlo search (or loads one), trains both variants per
seed, and writes a JSON summary plus per-run learning curves.

    python3 scripts/rl_compare.py --out runs/rl_compare --frames 100000 --seeds 0 1 2
"""

import argparse
import json
from pathlib import Path

from dextron_lite import mcsearch, traj
from dextron_lite.learn.compare import compare, verdict


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/rl_compare")
    ap.add_argument("--gs", help="existing G_s directory; otherwise a search is run")
    ap.add_argument("--mc-samples", type=int, default=100_000)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--frames", type=int, default=100_000)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tset = traj.synthetic_set()
    if args.gs:
        records = mcsearch.load_gs(args.gs)
    else:
        records, _ = mcsearch.run_search(mcsearch.McConfig(n_samples=args.mc_samples, workers=args.workers), tset, out / "gs")
    summary = compare(mcsearch.select(records), tset, args.frames, args.seeds, out=out,
                      log=lambda m: print(m, flush=True))
    summary["verdict"] = verdict(summary)
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    v = summary["verdict"]
    print(f"RLIL >= RL in {v['rlil_wins']}/{v['n_seeds']} seeds; mean final eval {v['mean_final_eval']}; "
          f"random policy {v['random_eval']:.2f}")


if __name__ == "__main__":
    main()
