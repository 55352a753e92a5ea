#!/usr/bin/env python3
"""Compare the numba kernels against the pure-numpy (tape) backend on the
attack workload: per-call gradient kernels plus full PGD/CW attack runs.

    python benchmarks/bench_backends.py [--items 100]
"""

import argparse
import time

import numpy as np

from advlab.accel import get_backend
from advlab.attacks import CwConfig, PgdConfig, cw_attack, pgd_attack
from advlab.models import ModelSpec, predict, train
from advlab.synthdata import hierarchical_gaussian


def bench(fn, repeat=3):
    best = np.inf
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - start)
    return best, out


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--items", type=int, default=100)
    args = parser.parse_args()

    train_ds = hierarchical_gaussian(50, seed=7, stream=1)
    model = train(ModelSpec("bench", 8, (24, 12), 8, seed=202), train_ds,
                  epochs=80, lr=0.3, batch_size=32)
    sources = [it for it in hierarchical_gaussian(args.items // 8 + 1, seed=7, stream=2).items
               if predict(model, it.x, 1).top_class == it.true_class][:args.items]
    print(f"model (24, 12), {len(sources)} source items, train acc {model.final_train_accuracy:.3f}")

    backends = [get_backend("numpy"), get_backend("numba")]
    x0 = sources[0].x
    for b in backends:  # warm up jit outside the timed region
        b.ce_loss_grad(model, x0, sources[0].true_class)
        b.margin_loss_grad(model, x0, sources[0].true_class, 20.0, False)

    print(f"\n{'workload':<34}{'numpy':>12}{'numba':>12}{'speedup':>10}")
    rows = [
        ("ce_loss_grad x 2000",
         lambda b: [b.ce_loss_grad(model, it.x, it.true_class) for it in sources * (2000 // len(sources))]),
        ("margin_loss_grad x 2000",
         lambda b: [b.margin_loss_grad(model, it.x, it.true_class, 20.0, False)
                    for it in sources * (2000 // len(sources))]),
        ("pgd eps=38/255, 50 iters",
         lambda b: [pgd_attack(model, it.x, it.true_class,
                               PgdConfig(epsilon=38 / 255, max_iters=50), backend=b)
                    for it in sources]),
        ("cw kappa=20, <=200 iters",
         lambda b: [cw_attack(model, it.x, it.true_class,
                              CwConfig(kappa=20.0, max_iters=200), backend=b)
                    for it in sources]),
    ]
    outputs = {}
    for name, make in rows:
        times = {}
        for b in backends:
            times[b.name], outputs[(name, b.name)] = bench(lambda: make(b))
        print(f"{name:<34}{times['numpy'] * 1e3:>10.1f}ms{times['numba'] * 1e3:>10.1f}ms"
              f"{times['numpy'] / times['numba']:>9.1f}x")

    agree = True
    for name in ("pgd eps=38/255, 50 iters", "cw kappa=20, <=200 iters"):
        a = outputs[(name, "numpy")]
        b = outputs[(name, "numba")]
        same = all(x.success == y.success and x.final_predicted_class == y.final_predicted_class
                   for x, y in zip(a, b))
        agree = agree and same
        print(f"outcome agreement ({name.split()[0]}): {'yes' if same else 'NO'}")
    raise SystemExit(0 if agree else 1)


if __name__ == "__main__":
    main()
