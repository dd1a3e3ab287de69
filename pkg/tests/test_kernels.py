"""Numba and numpy kernel backends: mutual agreement, the env-var escape
hatch, and correctness of each kernel against dense oracles."""

import math
import os
import subprocess
import sys

import numpy as np
import pytest

from ggc.kernels import _numpy
from oracles import dense_gate_matrix, dense_z_expectation

try:
    from ggc.kernels import _numba

    BACKENDS = [_numpy, _numba]
except ImportError:
    _numba = None
    BACKENDS = [_numpy]


def random_state(n, seed):
    rng = np.random.default_rng(seed)
    amps = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return amps / np.linalg.norm(amps)


# --------------------------------------------------------------------------
# single-backend correctness against dense oracles


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
def test_gates_match_dense_oracle(impl):
    rng = np.random.default_rng(10)
    for _ in range(25):
        n = int(rng.integers(1, 6))
        state = random_state(n, int(rng.integers(1 << 30)))
        q = int(rng.integers(n))
        theta = float(rng.uniform(-2 * math.pi, 2 * math.pi))

        got = state.copy()
        impl.h_gate(got, n, q)
        want = dense_gate_matrix("H", n, (q,)) @ state
        assert np.allclose(got, want, atol=1e-12)

        got = state.copy()
        impl.rx_gate(got, n, q, theta)
        want = dense_gate_matrix("RX", n, (q,), theta) @ state
        assert np.allclose(got, want, atol=1e-12)

        if n >= 2:
            q2 = int((q + 1 + rng.integers(n - 1)) % n)
            got = state.copy()
            impl.rzz_gate(got, n, q, q2, theta)
            want = dense_gate_matrix("RZZ", n, (q, q2), theta) @ state
            assert np.allclose(got, want, atol=1e-12)


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
def test_derivative_gates_are_angle_derivatives(impl):
    # d/dtheta of the gate action, checked by central differences on the gate
    h = 1e-6
    rng = np.random.default_rng(11)
    for _ in range(10):
        n = int(rng.integers(2, 5))
        state = random_state(n, int(rng.integers(1 << 30)))
        q1 = int(rng.integers(n))
        q2 = int((q1 + 1) % n)
        theta = float(rng.uniform(-3.0, 3.0))

        for apply_gate, apply_deriv, targets in (
            (impl.rx_gate, impl.rx_deriv_gate, (q1,)),
            (impl.rzz_gate, impl.rzz_deriv_gate, (q1, q2)),
        ):
            got = state.copy()
            apply_deriv(got, n, *targets, theta)
            plus, minus = state.copy(), state.copy()
            apply_gate(plus, n, *targets, theta + h)
            apply_gate(minus, n, *targets, theta - h)
            assert np.allclose(got, (plus - minus) / (2 * h), atol=1e-8)


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
def test_z_expectation_matches_dense(impl):
    rng = np.random.default_rng(12)
    for _ in range(20):
        n = int(rng.integers(1, 6))
        state = random_state(n, int(rng.integers(1 << 30)))
        q = int(rng.integers(n))
        got = impl.z_expectation(state, n, q)
        assert abs(got - dense_z_expectation(state, n, q)) < 1e-12


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
def test_edge_scatter_matches_loop(impl):
    rng = np.random.default_rng(13)
    for _ in range(15):
        nodes = int(rng.integers(1, 20))
        edges = int(rng.integers(0, 50))
        dim = int(rng.integers(1, 6))
        feat = rng.normal(size=(nodes, dim))
        src = rng.integers(0, nodes, size=edges)
        dst = rng.integers(0, nodes, size=edges)
        w = rng.normal(size=edges)
        out = np.zeros((nodes, dim))
        impl.edge_scatter(feat, src, dst, w, out)
        want = np.zeros((nodes, dim))
        for e in range(edges):
            want[dst[e]] += w[e] * feat[src[e]]
        assert np.allclose(out, want, atol=1e-12)


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
def test_gates_preserve_norm(impl):
    state = random_state(4, 3)
    impl.h_gate(state, 4, 0)
    impl.rx_gate(state, 4, 2, 0.7)
    impl.rzz_gate(state, 4, 1, 3, -1.2)
    assert abs(np.linalg.norm(state) - 1.0) < 1e-12


# --------------------------------------------------------------------------
# backend parity and selection


@pytest.mark.skipif(_numba is None, reason="numba backend unavailable")
def test_backends_agree_on_random_programs():
    rng = np.random.default_rng(14)
    for _ in range(10):
        n = int(rng.integers(1, 7))
        base = random_state(n, int(rng.integers(1 << 30)))
        a, b = base.copy(), base.copy()
        for _ in range(int(rng.integers(1, 12))):
            q = int(rng.integers(n))
            kind = rng.integers(3)
            if kind == 0:
                _numpy.h_gate(a, n, q)
                _numba.h_gate(b, n, q)
            elif kind == 1 or n < 2:
                t = float(rng.uniform(-3, 3))
                _numpy.rx_gate(a, n, q, t)
                _numba.rx_gate(b, n, q, t)
            else:
                q2 = int((q + 1 + rng.integers(n - 1)) % n)
                t = float(rng.uniform(-3, 3))
                _numpy.rzz_gate(a, n, q, q2, t)
                _numba.rzz_gate(b, n, q, q2, t)
        assert np.allclose(a, b, atol=1e-13)
        assert abs(_numpy.z_expectation(a, n, 0) - _numba.z_expectation(b, n, 0)) < 1e-13


def _backend_in_subprocess(env_value):
    env = dict(os.environ)
    env.pop("GGC_DISABLE_NUMBA", None)
    if env_value is not None:
        env["GGC_DISABLE_NUMBA"] = env_value
    out = subprocess.run(
        [sys.executable, "-c", "from ggc.kernels import BACKEND; print(BACKEND)"],
        capture_output=True,
        text=True,
        env=env,
        check=True,
    )
    return out.stdout.strip()


def test_env_flag_selects_backend():
    assert _backend_in_subprocess("1") == "numpy"
    assert _backend_in_subprocess("true") == "numpy"
    if _numba is not None:
        assert _backend_in_subprocess(None) == "numba"
        assert _backend_in_subprocess("0") == "numba"
