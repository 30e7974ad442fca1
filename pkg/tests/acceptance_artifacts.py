"""Builds (or reuses) the trained models the acceptance suite needs.

Everything is produced through the CLI so the suite exercises the same path
a user would. Artifacts live under ``<cache>/<key>/`` where the key hashes the
run config and the source files that influence the result, so stale models
are never reused after a code change.

Run directly to prebuild: ``python tests/acceptance_artifacts.py [cache_dir]``.
"""
import hashlib
import os
import sys
from pathlib import Path

import yaml

from gnnse import cli

SOURCES = ["gnn/model.py", "gnn/autodiff.py", "gnn/kernels.py", "gnn/train.py",
           "gnn/checkpoint.py", "pipeline/dataset.py", "pipeline/config.py", "measurements.py",
           "powerflow.py", "wls.py", "factor_graph.py", "grid.py", "placement.py",
           "data/ieee30cdf.txt", "data/ieee30_pmu.txt"]

# Table I hyperparameters, 1000 training samples, 1000 epochs
RUN = {"s": 64, "K": 4, "lr": 4e-4, "batch": 32, "clip": 0.5, "epochs": 1000,
       "normalization": "mean_batch", "dtype": "float32", "sigma": 1e-3,
       "load_lo": 0.9, "load_hi": 1.1, "seed": 0}
COUNTS = {"train": (1000, 11), "val": (100, 12), "test": (100, 13)}

DEFAULT_CACHE = Path(__file__).resolve().parent.parent / ".acceptance-cache"


def run_key(run=RUN):
    root = Path(cli.__file__).parent
    h = hashlib.sha256(yaml.safe_dump(run, sort_keys=True).encode())
    h.update(repr(sorted(COUNTS.items())).encode())
    for rel in SOURCES:
        h.update(rel.encode())
        h.update((root / rel).read_bytes())
    return h.hexdigest()[:16]


def _call(argv):
    code = cli.main(argv)
    if code:
        raise RuntimeError(f"gnnse {' '.join(argv)} failed with {code}")


def ensure(cache=None, run=RUN, verbose=False):
    """Return a dict of artifact paths, building what is missing."""
    cache = Path(cache or os.environ.get("GNNSE_ACCEPTANCE_CACHE") or DEFAULT_CACHE)
    out = cache / run_key(run)
    out.mkdir(parents=True, exist_ok=True)
    cfg = out / "config.yaml"
    cfg.write_text(yaml.safe_dump(run, sort_keys=True))
    paths = {"dir": out, "config": cfg}
    flag = ["-v"] if verbose else []
    for split, (count, seed) in COUNTS.items():
        p = out / f"{split}.txt"
        if not p.exists():
            tmp = p.with_suffix(".part")
            _call(flag + ["generate", "--config", str(cfg), "--count", str(count),
                          "--seed", str(seed), "--out", str(tmp)])
            tmp.rename(p)
        paths[split] = p
    for graph in ("augmented", "plain"):
        ck = out / f"model_{graph}.ckpt"
        if not ck.exists():
            tmp = ck.with_suffix(".part")
            _call(flag + ["train", "--dataset", str(paths["train"]), "--val", str(paths["val"]),
                          "--config", str(cfg), "--graph", graph, "--checkpoint-out", str(tmp),
                          "--history-out", str(out / f"history_{graph}.csv")])
            tmp.rename(ck)
        paths[graph] = ck
    return paths


if __name__ == "__main__":
    print(ensure(sys.argv[1] if len(sys.argv) > 1 else None, verbose=True))
