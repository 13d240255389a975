"""Versioned ``.npz`` checkpoints and learning-curve CSVs.

A checkpoint stores named networks (layer sizes + parameters), optional Adam
states, the input normalizer and a JSON ``meta`` blob.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from ..errors import MissingCheckpoint
from .nn import Mlp, Normalizer

FORMAT_VERSION = 1


def save_checkpoint(path, kind: str, nets: dict, normalizer: Normalizer | None = None,
                    optimizers: dict | None = None, meta: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {}
    for name, net in nets.items():
        arrays.update(net.state_arrays(f"net/{name}"))
        arrays[f"sizes/{name}"] = np.array(net.sizes)
    for name, opt in (optimizers or {}).items():
        arrays.update(opt.state_arrays(f"opt/{name}"))
    if normalizer is not None:
        arrays["norm/mean"] = normalizer.mean
        arrays["norm/std"] = normalizer.std
        arrays["norm/clip"] = np.array(normalizer.clip or 0.0)
    header = {"version": FORMAT_VERSION, "kind": kind, "nets": sorted(nets), "meta": meta or {}}
    arrays["header"] = np.array(json.dumps(header))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


class Checkpoint:
    def __init__(self, header: dict, arrays: dict):
        self.kind = header["kind"]
        self.version = header["version"]
        self.meta = header["meta"]
        self.arrays = arrays
        self.nets = {name: Mlp.from_arrays(tuple(arrays[f"sizes/{name}"]), arrays, f"net/{name}")
                     for name in header["nets"]}

    def normalizer(self) -> Normalizer:
        sizes = next(iter(self.nets.values())).sizes
        norm = Normalizer(sizes[0])
        if "norm/mean" in self.arrays:
            norm.mean, norm.std = self.arrays["norm/mean"], self.arrays["norm/std"]
            norm.clip = float(self.arrays.get("norm/clip", 0.0)) or None
        return norm


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise MissingCheckpoint(f"no checkpoint at {path}")
    with np.load(path) as data:
        arrays = {k: data[k] for k in data.files}
    header = json.loads(str(arrays.pop("header")))
    if header.get("version") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {header.get('version')}")
    return Checkpoint(header, arrays)


def write_curve(path, curve) -> None:
    """``epoch,mean_return,std_return,n_episodes`` rows."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "mean_return", "std_return", "n_episodes"])
        for row in curve:
            w.writerow(row)


def read_curve(path) -> list[tuple]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [(int(r["epoch"]), float(r["mean_return"]), float(r["std_return"]), int(r["n_episodes"])) for r in rows]
