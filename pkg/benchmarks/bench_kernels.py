"""Compare the numba kernels with the numpy fallback.

Part 1 times each kernel in-process on shapes that occur in a tiny-config
training step.  Part 2 times whole training steps in two subprocesses, one
with ``GLKF_NUMBA=0``, so the fallback is measured exactly as users get it.

    python benchmarks/bench_kernels.py [--repeat 20] [--steps 20]
"""
import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from glickformer import kernels

SHAPES = {
    "mish_forward": (64 * 64 * 3, 128),        # FFN hidden, batch 64, 3 boards
    "layer_norm_forward": (64 * 64 * 3, 32),
    "softmax_forward": (64 * 2 * 64 * 3, 64),  # attention rows
}

STEP_SCRIPT = r"""
import json, sys, time
import numpy as np
from glickformer import kernels
from glickformer.gradsuite import random_batch
from glickformer.model import ModelConfig, build_model
from glickformer.training import mse_loss
variant, steps = sys.argv[1], int(sys.argv[2])
cfg = ModelConfig.tiny(variant=variant)
rng = np.random.default_rng(0)
model = build_model(cfg, 0)
boards, mask = random_batch(rng, 64, cfg.n_max)
y = rng.normal(size=64)
def step():
    model.zero_grad()
    p, c = model.forward(boards, mask)
    _, d = mse_loss(p, y)
    model.backward(d, c)
step()  # compile / warm caches
t = time.perf_counter()
for _ in range(steps):
    step()
print(json.dumps({"backend": kernels.backend(), "sec_per_step": (time.perf_counter() - t) / steps}))
"""


def _args_for(name, rng):
    rows, cols = SHAPES[name.replace("backward", "forward")]
    x = rng.normal(size=(rows, cols))
    if name == "mish_forward":
        return (x,)
    if name == "mish_backward":
        return (x, rng.normal(size=x.shape))
    g, b = rng.normal(size=cols), rng.normal(size=cols)
    if name == "layer_norm_forward":
        return (x, g, b, 1e-5)
    if name == "layer_norm_backward":
        _, xhat, inv = kernels.layer_norm_forward_np(x, g, b, 1e-5)
        return (rng.normal(size=x.shape), xhat, inv, g)
    y = kernels.softmax_forward_np(x)
    if name == "softmax_forward":
        return (x,)
    return (y, rng.normal(size=x.shape))


def bench_kernels(repeat):
    rng = np.random.default_rng(0)
    rows = []
    for name in kernels.NUMPY_KERNELS:
        args = _args_for(name, rng)
        fast, ref = kernels.NUMBA_KERNELS[name], kernels.NUMPY_KERNELS[name]
        fast(*args)  # compile
        t_nb = min(timeit.repeat(lambda: fast(*args), number=1, repeat=repeat))
        t_np = min(timeit.repeat(lambda: ref(*args), number=1, repeat=repeat))
        rows.append((name, t_np * 1e3, t_nb * 1e3, t_np / t_nb))
    return rows


def bench_steps(steps):
    out = {}
    for variant in ("fe", "fsa", "baseline"):
        for flag in ("1", "0"):
            env = dict(os.environ, GLKF_NUMBA=flag)
            res = subprocess.run([sys.executable, "-c", STEP_SCRIPT, variant, str(steps)],
                                 env=env, capture_output=True, text=True, check=True)
            rec = json.loads(res.stdout.strip().splitlines()[-1])
            out[(variant, rec["backend"])] = rec["sec_per_step"]
    return out


def main():
    ap = argparse.ArgumentParser(description="numba vs numpy kernel benchmark")
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--steps", type=int, default=20)
    args = ap.parse_args()

    print(f"{'kernel':<22s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for name, t_np, t_nb, ratio in bench_kernels(args.repeat):
        print(f"{name:<22s} {t_np:10.2f} {t_nb:10.2f} {ratio:8.2f}")

    print()
    print(f"{'variant':<10s} {'numpy s/step':>13s} {'numba s/step':>13s} {'speedup':>8s}")
    steps = bench_steps(args.steps)
    for variant in ("fe", "fsa", "baseline"):
        t_np, t_nb = steps[(variant, "numpy")], steps[(variant, "numba")]
        print(f"{variant:<10s} {t_np:13.4f} {t_nb:13.4f} {t_np / t_nb:8.2f}")


if __name__ == "__main__":
    main()
