"""Time the GRU forward/backward kernels: numba-compiled vs. interpreted numpy.

    python3 benchmarks/bench_kernels.py [--hidden 64] [--batch 8] [--steps 25] [--repeat 20]

Also times one training epoch of the desk configuration under each backend
(the epoch bench re-imports the package in a subprocess per backend, since
the backend is fixed at import time).
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from ovlm.nlm import kernels


def _inputs(T, B, D, H, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(T, B, D))
    h0 = rng.normal(size=(B, H)) * 0.1
    w = [rng.uniform(-0.1, 0.1, size=s) for s in [(D, H), (H, H), (H,)] * 3]
    return x, h0, w


def _best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def bench_kernels(T, B, D, H, repeat):
    x, h0, w = _inputs(T, B, D, H)
    Wz, Uz, bz, Wr, Ur, br, Wh, Uh, bh = w
    dhs = np.random.default_rng(1).normal(size=(T, B, H))
    rows = []
    backends = [("numpy", kernels.gru_forward_py, kernels.gru_backward_py)]
    if kernels.NUMBA_AVAILABLE:
        backends.append(("numba", kernels.gru_forward_jit, kernels.gru_backward_jit))
    results = {}
    for name, fwd, bwd in backends:
        hs, zs, rs, cs = fwd(x, h0, *w)  # warm-up / compile
        grads = bwd(x, hs, zs, rs, cs, dhs, Wz, Uz, Wr, Ur, Wh, Uh)
        results[name] = (hs, grads)
        t_f = _best_of(lambda: fwd(x, h0, *w), repeat)
        t_b = _best_of(lambda: bwd(x, hs, zs, rs, cs, dhs, Wz, Uz, Wr, Ur, Wh, Uh), repeat)
        rows.append((name, t_f, t_b))
    if len(results) == 2:
        diff = max(np.abs(a - b).max() for a, b in
                   zip([results["numpy"][0], *results["numpy"][1]],
                       [results["numba"][0], *results["numba"][1]]))
        print(f"max |numpy - numba| over outputs: {diff:.3e}")
    base = rows[0]
    print(f"{'backend':8} {'forward ms':>11} {'backward ms':>12} {'speedup f/b':>12}")
    for name, t_f, t_b in rows:
        print(f"{name:8} {t_f * 1e3:11.3f} {t_b * 1e3:12.3f} {base[1] / t_f:6.2f}/{base[2] / t_b:<5.2f}")


_EPOCH_SNIPPET = """
import time, numpy as np
from ovlm.nlm import NlmConfig, init_model, run_epoch
from ovlm.nlm import kernels
cfg = NlmConfig(vocab_size=267, embed_dim=64, hidden_dim=64, dropout_rate=0.0,
                learning_rate=1.0, batch_size=8, unroll_len=25)
ids = np.random.default_rng(0).integers(0, 267, size=20000)
p = init_model(cfg).astype(np.float64)
run_epoch(p, ids[:2000], cfg, 1.0, None)
t = time.perf_counter()
run_epoch(p, ids, cfg, 1.0, None)
print(kernels.BACKEND, time.perf_counter() - t)
"""


def bench_epoch():
    print("one epoch, 20k units, dims 64, batch 8, unroll 25:")
    for backend in ("numpy", "numba"):
        env = dict(os.environ, OVLM_KERNELS=backend)
        out = subprocess.run([sys.executable, "-c", _EPOCH_SNIPPET], env=env,
                             capture_output=True, text=True, check=True).stdout.split()
        print(f"  {out[0]:8} {float(out[1]):7.2f} s")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=25)
    ap.add_argument("--batch", type=int, default=8)
    ap.add_argument("--embed", type=int, default=64)
    ap.add_argument("--hidden", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--no-epoch", action="store_true", help="skip the end-to-end epoch timing")
    args = ap.parse_args()
    print(f"T={args.steps} B={args.batch} D={args.embed} H={args.hidden}")
    bench_kernels(args.steps, args.batch, args.embed, args.hidden, args.repeat)
    if not args.no_epoch:
        bench_epoch()


if __name__ == "__main__":
    main()
