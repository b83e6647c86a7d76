"""Benchmark the compiled kernels against the pure-numpy reference.

Run:  python benchmarks/bench_kernels.py

Shapes mirror the two real workloads: a 300 s window at mmWave scale
(1 antenna x 46 subcarriers x 2800 samples) and at LTE scale
(3 x 100 x 5600), each swept onto a 257-bin Doppler grid and a
bandwidth-matched delay grid.
"""

import time

import numpy as np

from hydrocsi import kernels


def _time(fn, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_case(name, n_ant, n_sub, n_samples, doppler_bins=257, oversample=4):
    rng = np.random.default_rng(0)
    streams = n_ant * n_sub
    values = rng.standard_normal((streams, n_samples))
    t = np.sort(rng.uniform(0, 300, n_samples))
    w = rng.uniform(0.08, 1.0, n_samples)
    freqs = np.linspace(-0.5, 0.5, doppler_bins)
    slices = rng.standard_normal((doppler_bins, n_sub, n_ant)) + 1j * rng.standard_normal(
        (doppler_bins, n_sub, n_ant)
    )
    delays = np.arange(1, 2 * n_sub + 1) / (oversample * n_sub * 2e6)
    steering = np.exp(-2j * np.pi * 2e6 * np.outer(np.arange(n_sub), delays))

    rows = []
    for label, force in (("native", False), ("python", True)):
        if not force and kernels.backend() != "native":
            continue
        nudft_s = _time(lambda: kernels.nudft(values, t, w, freqs, force_reference=force))
        mvdr_s = _time(lambda: kernels.mvdr_rows(slices, steering, 0.01, force_reference=force))
        rows.append((label, nudft_s, mvdr_s))
    print(f"\n{name}: {n_ant} x {n_sub} x {n_samples}, {doppler_bins} Doppler bins, "
          f"{len(delays)} delay bins")
    print(f"  {'backend':<8} {'nudft':>10} {'mvdr sweep':>12}")
    for label, nudft_s, mvdr_s in rows:
        print(f"  {label:<8} {nudft_s * 1e3:>8.1f} ms {mvdr_s * 1e3:>10.1f} ms")
    if len(rows) == 2:
        print(f"  {'speedup':<8} {rows[1][1] / rows[0][1]:>9.2f}x {rows[1][2] / rows[0][2]:>11.2f}x")


def main():
    print(f"active backend: {kernels.backend()}")
    bench_case("mmWave-scale window", n_ant=1, n_sub=46, n_samples=2800)
    bench_case("LTE-scale window", n_ant=3, n_sub=100, n_samples=5600)


if __name__ == "__main__":
    main()
