"""Behavior-cloning overfit study on a 1k-transition G_s roll-out dataset.

Trains with the default configuration, then with smaller batches and longer
schedules, and reports the final MSE plus the share of the error carried by
the expert's phase-switch steps (open hand, action jumping to the closing
command).

    python3 scripts/bc_overfit.py --gs runs/mc
"""

import argparse
import json

import numpy as np

from dextron_lite import mcsearch, traj
from dextron_lite.env import CLOSURE, DextronEnv
from dextron_lite.learn import bc

VARIANTS = {
    "default": {},
    "batch64": {"batch": 64},
    "no_decay_3000_epochs": {"epochs": 3000, "lr_decay": 1.0},
}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--gs", required=True, help="G_s directory or jsonl file")
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--variants", nargs="+", default=list(VARIANTS))
    args = ap.parse_args()
    records = mcsearch.select(mcsearch.load_gs(args.gs))
    env = DextronEnv(traj.synthetic_set())
    s, a = bc.build_bc_dataset(records, env, max_transitions=args.n)
    switch = (s[:, CLOSURE] == 0.0) & (a > 0.0)
    out = {}
    for name in args.variants:
        res = bc.train_bc(s, a, bc.BcConfig(seed=args.seed, **VARIANTS[name]))
        mu, _ = res.policy.head(res.policy.normalizer(s))
        err = (np.tanh(mu) - a) ** 2
        out[name] = {"mse": float(err.mean()), "switch_steps": int(switch.sum()),
                     "switch_error_share": float(err[switch].sum() / err.sum())}
        print(name, json.dumps(out[name]), flush=True)


if __name__ == "__main__":
    main()
