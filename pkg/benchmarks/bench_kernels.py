"""Benchmark the numba kernels against the pure-numpy fallback.

Imports both backend modules directly so one process can time the two paths
side by side (the package-level dispatch in ggc.kernels picks one at import
time via GGC_DISABLE_NUMBA). Each case is checked for agreement between the
backends before timing, the numba functions get a warmup call so JIT
compilation stays out of the measurement, and the median of several repeats
is reported.

Run:  python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from ggc.kernels import BACKEND, _numpy

try:
    from ggc.kernels import _numba
except ImportError:
    _numba = None

REPEATS = 7


def _median_time(fn, repeats=REPEATS):
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return sorted(samples)[len(samples) // 2]


def _ring_state(n, seed):
    rng = np.random.default_rng(seed)
    amps = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    amps /= np.linalg.norm(amps)
    return amps


def _circuit_pass(impl, amps, n, thetas):
    """One layered pass: H + RX on every qubit, RZZ around a ring, one <Z>."""
    for q in range(n):
        impl.h_gate(amps, n, q)
        impl.rx_gate(amps, n, q, thetas[q])
    for q in range(n):
        impl.rzz_gate(amps, n, q, (q + 1) % n, thetas[q])
    return impl.z_expectation(amps, n, 0)


def bench_circuit(impl, n, seed=3):
    thetas = np.linspace(0.1, 1.3, n)
    base = _ring_state(n, seed)

    def once():
        amps = base.copy()
        return _circuit_pass(impl, amps, n, thetas)

    once()  # warmup (JIT compile on the numba path)
    return once(), _median_time(once)


def bench_scatter(impl, nodes, edges, dim, seed=5):
    rng = np.random.default_rng(seed)
    feat = rng.normal(size=(nodes, dim))
    src = rng.integers(0, nodes, size=edges)
    dst = rng.integers(0, nodes, size=edges)
    w = rng.normal(size=edges)

    def once():
        out = np.zeros((nodes, dim))
        impl.edge_scatter(feat, src, dst, w, out)
        return out

    once()
    return once(), _median_time(once)


def main():
    print(f"active package backend: {BACKEND}")
    if _numba is None:
        print("numba backend unavailable; nothing to compare")
        return

    rows = []
    for n in (8, 10, 12):
        val_np, t_np = bench_circuit(_numpy, n)
        val_nb, t_nb = bench_circuit(_numba, n)
        assert abs(val_np - val_nb) < 1e-12, f"circuit n={n} backends disagree"
        rows.append((f"circuit pass, {n} qubits", t_np, t_nb))
    for nodes, edges, dim in ((2000, 20000, 16), (20000, 200000, 16)):
        out_np, t_np = bench_scatter(_numpy, nodes, edges, dim)
        out_nb, t_nb = bench_scatter(_numba, nodes, edges, dim)
        assert np.max(np.abs(out_np - out_nb)) < 1e-9, "edge_scatter backends disagree"
        rows.append((f"edge_scatter, {edges} edges x {dim} dims", t_np, t_nb))

    width = max(len(name) for name, _, _ in rows)
    print(f"{'case':<{width}}  {'numpy':>10}  {'numba':>10}  {'speedup':>8}")
    for name, t_np, t_nb in rows:
        print(f"{name:<{width}}  {t_np * 1e3:>8.3f}ms  {t_nb * 1e3:>8.3f}ms  {t_np / t_nb:>7.2f}x")


if __name__ == "__main__":
    main()
