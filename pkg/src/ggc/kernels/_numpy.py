"""Pure-numpy reference implementations of the hot kernels.

Statevector convention: qubit 0 is the most significant bit of the basis
index, so qubit q sits at bit position (n - 1 - q).
"""

import math

import numpy as np

_SQRT_HALF = math.sqrt(0.5)


def _axis_view(amps, n, q):
    """View amps as (high bits, target bit, low bits)."""
    t = n - 1 - q
    return amps.reshape((-1, 2, 1 << t))


def h_gate(amps, n, q):
    a = _axis_view(amps, n, q)
    x = a[:, 0, :].copy()
    y = a[:, 1, :]
    a[:, 0, :] = _SQRT_HALF * (x + y)
    a[:, 1, :] = _SQRT_HALF * (x - y)


def rx_gate(amps, n, q, theta):
    c = math.cos(0.5 * theta)
    s = math.sin(0.5 * theta)
    a = _axis_view(amps, n, q)
    x = a[:, 0, :].copy()
    y = a[:, 1, :]
    a[:, 0, :] = c * x - 1j * (s * y)
    a[:, 1, :] = c * y - 1j * (s * x)


def rx_deriv_gate(amps, n, q, theta):
    # dRX/dtheta = [[-s/2, -i c/2], [-i c/2, -s/2]] with c = cos(theta/2), s = sin(theta/2)
    c = 0.5 * math.cos(0.5 * theta)
    s = 0.5 * math.sin(0.5 * theta)
    a = _axis_view(amps, n, q)
    x = a[:, 0, :].copy()
    y = a[:, 1, :]
    a[:, 0, :] = -s * x - 1j * (c * y)
    a[:, 1, :] = -s * y - 1j * (c * x)


def _zz_parity(n, q1, q2):
    idx = np.arange(1 << n)
    b1 = (idx >> (n - 1 - q1)) & 1
    b2 = (idx >> (n - 1 - q2)) & 1
    return b1 ^ b2


def rzz_gate(amps, n, q1, q2, theta):
    # diagonal: exp(-i theta/2) on equal bits, exp(+i theta/2) on unequal
    same = np.exp(-0.5j * theta)
    diff = np.exp(0.5j * theta)
    amps *= np.where(_zz_parity(n, q1, q2) == 0, same, diff)


def rzz_deriv_gate(amps, n, q1, q2, theta):
    same = -0.5j * np.exp(-0.5j * theta)
    diff = 0.5j * np.exp(0.5j * theta)
    amps *= np.where(_zz_parity(n, q1, q2) == 0, same, diff)


def z_expectation(amps, n, q):
    idx = np.arange(1 << n)
    sign = 1.0 - 2.0 * ((idx >> (n - 1 - q)) & 1)
    return float(np.sum(sign * (amps.real * amps.real + amps.imag * amps.imag)))


def edge_scatter(feat, src, dst, w, out):
    """out[dst[e]] += w[e] * feat[src[e]] for every edge e."""
    if src.shape[0]:
        np.add.at(out, dst, w[:, None] * feat[src])
