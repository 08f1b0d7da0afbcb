"""Time the LSTM recurrence kernels: compiled extension vs numpy fallback.

    python benchmarks/bench_lstm.py [--steps 40] [--batch 50] [--hidden 50]
"""

import argparse
import timeit

import numpy as np

from kgpool import kernels


def make_inputs(steps, batch, hidden, seed=0):
    rng = np.random.default_rng(seed)
    xw = rng.normal(size=(steps, batch, 4 * hidden))
    u = rng.normal(scale=1 / np.sqrt(hidden), size=(hidden, 4 * hidden))
    lengths = rng.integers(1, steps + 1, size=batch).astype(np.intp)
    lengths[0] = steps
    return xw, u, lengths


def bench(backend, xw, u, lengths, repeat):
    mod = kernels.get_backend(backend)
    hs, cs, gates = mod.lstm_forward(xw, u, lengths)
    dh = np.ones_like(hs[-1])
    fwd = min(timeit.repeat(lambda: mod.lstm_forward(xw, u, lengths), number=1, repeat=repeat))
    bwd = min(timeit.repeat(lambda: mod.lstm_backward(dh, hs, cs, gates, u, lengths),
                            number=1, repeat=repeat))
    return fwd, bwd


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=40)
    ap.add_argument("--batch", type=int, default=50)
    ap.add_argument("--hidden", type=int, default=50)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    xw, u, lengths = make_inputs(args.steps, args.batch, args.hidden)
    print(f"T={args.steps} B={args.batch} H={args.hidden}, best of {args.repeat}")
    results = {}
    for name in kernels.available_backends():
        results[name] = bench(name, xw, u, lengths, args.repeat)
        fwd, bwd = results[name]
        print(f"{name:>7}: forward {fwd * 1e3:8.3f} ms  backward {bwd * 1e3:8.3f} ms")
    if "cython" in results and "python" in results:
        py, cy = results["python"], results["cython"]
        print(f"speedup: forward {py[0] / cy[0]:.1f}x  backward {py[1] / cy[1]:.1f}x")
    else:
        print("compiled extension not built; only the fallback was timed")


if __name__ == "__main__":
    main()
