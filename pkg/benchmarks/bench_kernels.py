"""Compare the numba kernels with their numpy twins.

Run with ``python benchmarks/bench_kernels.py [--repeat N]``. The first
numba call (compilation or cache load) is excluded from the timings.
"""
import argparse
import time

import numpy as np

from cabinfront import kernels


def _best(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def cases(rng):
    # a second-order-17 shoebox has a few thousand images per microphone
    n_img = 6000
    delays = rng.uniform(10.0, 7900.0, n_img)
    amps = rng.normal(size=n_img) / (1.0 + delays / 100.0)
    yield "rir_accumulate (6000 images, 81 taps)", (
        lambda: kernels.rir_accumulate_numba(delays, amps, 8000, 40, 0),
        lambda: kernels.rir_accumulate_numpy(delays, amps, 8000, 40, 0),
    )
    x = rng.normal(size=16000 * 5)
    factor = 1.0 / 1.1
    out_len = int(len(x) / factor)
    yield "sinc_resample (5 s, speed 1.1, 64 taps)", (
        lambda: kernels.sinc_resample_numba(x, factor, out_len, 32),
        lambda: kernels.sinc_resample_numpy(x, factor, out_len, 32),
    )
    active = rng.random(360000) < 0.05
    yield "hangover (1 h at 10 ms, 30 frames)", (
        lambda: kernels.hangover_numba(active, 30),
        lambda: kernels.hangover_numpy(active, 30),
    )


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':44s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s} {'max diff':>10s}")
    for name, (fast, slow) in cases(rng):
        fast()  # compile / load cache
        t_fast, a = _best(fast, args.repeat)
        t_slow, b = _best(slow, args.repeat)
        diff = float(np.max(np.abs(np.asarray(a, float) - np.asarray(b, float))))
        print(f"{name:44s} {1e3 * t_fast:10.2f} {1e3 * t_slow:10.2f} {t_slow / t_fast:8.1f} {diff:10.1e}")


if __name__ == "__main__":
    main()
