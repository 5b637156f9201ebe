"""Compare the numpy and compiled training kernels.

Times one training epoch (the study's hot loop) and a full pre-training run
per backend, and checks that both backends produce the same numbers.

    python benchmarks/bench_kernels.py [--repeat 7] [--json out.json]
"""
from __future__ import annotations

import argparse
import json
import platform
import timeit

import numpy as np

from xferbench import kernels, scorer, synthgen


def problem(n=3600, seed=0):
    rng = np.random.default_rng(seed)
    params = scorer.init_params(rng, (5, 32, 32, 5))
    X = np.ascontiguousarray(rng.normal(size=(n, 5)))
    y = rng.integers(0, 5, n).astype(np.int64)
    order = rng.permutation(n).astype(np.int64)
    return params, X, y, order


def bench_epoch(k, repeat):
    params, X, y, order = problem()

    def run():
        p = [a.copy() for a in params]
        v = [np.zeros_like(a) for a in p]
        k.train_epoch(p, v, X, y, order, 0.01, 0.9, 0.0, 64)
    return min(timeit.repeat(run, number=5, repeat=repeat)) / 5


def bench_pretrain(name, repeat):
    d = synthgen.DatasetDescriptor("D", "E", "Healthy", "C4", 100)
    c = synthgen.generate(d, synthgen.GenParams(n_subjects=12, epochs_per_subject=400, seed=1))
    sp = synthgen.split_subjects(c, 1)
    tr, va = c.epoch_set(sp.train_subjects), c.epoch_set(sp.val_subjects)
    cfg = scorer.TrainConfig(max_epochs=20)
    saved = kernels.impl
    kernels.impl = kernels.get(name)
    try:
        t = min(timeit.repeat(lambda: scorer.pretrain(tr, va, cfg), number=1, repeat=repeat))
        digest = scorer.pretrain(tr, va, cfg).digest()
    finally:
        kernels.impl = saved
    return t, digest


def parity():
    params, X, y, order = problem(n=1000, seed=3)
    out = {}
    for name in kernels.BACKENDS:
        p = [a.copy() for a in params]
        v = [np.zeros_like(a) for a in p]
        loss = kernels.get(name).train_epoch(p, v, X, y, order, 0.01, 0.9, 0.0, 64)
        out[name] = (loss, p)
    if len(out) < 2:
        return None
    (l1, p1), (l2, p2) = out["python"], out["cython"]
    return {"loss_abs_diff": abs(l1 - l2),
            "param_max_abs_diff": max(float(np.max(np.abs(a - b))) for a, b in zip(p1, p2))}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=7)
    ap.add_argument("--json")
    args = ap.parse_args(argv)

    rows = {}
    for name in sorted(kernels.BACKENDS):
        ep = bench_epoch(kernels.get(name), args.repeat)
        pt, digest = bench_pretrain(name, max(1, args.repeat // 2))
        rows[name] = {"epoch_ms": ep * 1e3, "pretrain_s": pt, "checkpoint": digest[:16]}
    print(f"{'backend':8s} {'epoch (ms)':>11s} {'pretrain 20 ep (s)':>19s}  checkpoint")
    for name, r in rows.items():
        print(f"{name:8s} {r['epoch_ms']:11.2f} {r['pretrain_s']:19.3f}  {r['checkpoint']}")
    if "cython" in rows:
        sp = rows["python"]["epoch_ms"] / rows["cython"]["epoch_ms"]
        print(f"compiled/numpy epoch speedup: {sp:.2f}x")
    par = parity()
    if par:
        print(f"parity after one epoch: loss diff {par['loss_abs_diff']:.3g}, "
              f"max param diff {par['param_max_abs_diff']:.3g}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"machine": platform.machine(), "python": platform.python_version(),
                       "backends": rows, "parity": par}, fh, indent=1)


if __name__ == "__main__":
    main()
