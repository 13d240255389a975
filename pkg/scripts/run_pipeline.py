"""Run the full command-line pipeline with default settings and time each stage.

    python3 scripts/run_pipeline.py --root runs/pipeline --workers 4
"""

import argparse
import json
import time
from pathlib import Path

from dextron_lite import cli


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--root", default="runs/pipeline")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    root = Path(args.root)
    w = ["--workers", str(args.workers)]
    steps = [
        ["gen", "--out", root / "traj"],
        ["mc", "--traj", root / "traj", "--out", root / "mc", *w],
        ["train", "rlil", "--traj", root / "traj", "--gs", root / "mc", "--out", root / "rlil"],
        ["eval", "--checkpoint", root / "rlil" / "policy.npz", "--traj", root / "traj", "--gs", root / "mc",
         "--out", root / "eval"],
        ["sm-data", "--traj", root / "traj", "--gs", root / "mc", "--policy", root / "rlil" / "policy.npz",
         "--out", root / "sm", *w],
        ["sm-train", "--data", root / "sm" / "dataset.npz", "--out", root / "sm_model"],
        ["explain", "--model", root / "sm_model" / "model.npz", "--traj", root / "traj", "--gs", root / "mc",
         "--out", root / "explain"],
    ]
    timings = {}
    for argv in steps:
        t0 = time.time()
        code = cli.main([str(a) for a in argv])
        timings[argv[0] if argv[0] != "train" else "train " + argv[1]] = round(time.time() - t0, 1)
        if code != 0:
            raise SystemExit(f"stage {argv[0]} failed")
    (root / "timings.json").write_text(json.dumps(timings, indent=2) + "\n")
    print(json.dumps(timings))


if __name__ == "__main__":
    main()
