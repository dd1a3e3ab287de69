"""Numba-compiled twins of the kernels in _numpy.

Same signatures and qubit convention; loops use bit masks to enumerate
amplitude pairs instead of reshaped views.
"""

import math

from numba import njit

_SQRT_HALF = math.sqrt(0.5)


@njit(cache=True)
def _pair_index(i, t):
    # spread index i over bit position t: high bits shifted up, low bits kept
    return ((i >> t) << (t + 1)) | (i & ((1 << t) - 1))


@njit(cache=True)
def h_gate(amps, n, q):
    t = n - 1 - q
    bit = 1 << t
    for i in range(1 << (n - 1)):
        i0 = _pair_index(i, t)
        i1 = i0 | bit
        x = amps[i0]
        y = amps[i1]
        amps[i0] = _SQRT_HALF * (x + y)
        amps[i1] = _SQRT_HALF * (x - y)


@njit(cache=True)
def rx_gate(amps, n, q, theta):
    t = n - 1 - q
    bit = 1 << t
    c = math.cos(0.5 * theta)
    s = math.sin(0.5 * theta)
    for i in range(1 << (n - 1)):
        i0 = _pair_index(i, t)
        i1 = i0 | bit
        x = amps[i0]
        y = amps[i1]
        amps[i0] = c * x - 1j * (s * y)
        amps[i1] = c * y - 1j * (s * x)


@njit(cache=True)
def rx_deriv_gate(amps, n, q, theta):
    t = n - 1 - q
    bit = 1 << t
    c = 0.5 * math.cos(0.5 * theta)
    s = 0.5 * math.sin(0.5 * theta)
    for i in range(1 << (n - 1)):
        i0 = _pair_index(i, t)
        i1 = i0 | bit
        x = amps[i0]
        y = amps[i1]
        amps[i0] = -s * x - 1j * (c * y)
        amps[i1] = -s * y - 1j * (c * x)


@njit(cache=True)
def rzz_gate(amps, n, q1, q2, theta):
    t1 = n - 1 - q1
    t2 = n - 1 - q2
    same = complex(math.cos(0.5 * theta), -math.sin(0.5 * theta))
    diff = complex(math.cos(0.5 * theta), math.sin(0.5 * theta))
    for i in range(1 << n):
        if ((i >> t1) ^ (i >> t2)) & 1:
            amps[i] *= diff
        else:
            amps[i] *= same


@njit(cache=True)
def rzz_deriv_gate(amps, n, q1, q2, theta):
    t1 = n - 1 - q1
    t2 = n - 1 - q2
    same = -0.5j * complex(math.cos(0.5 * theta), -math.sin(0.5 * theta))
    diff = 0.5j * complex(math.cos(0.5 * theta), math.sin(0.5 * theta))
    for i in range(1 << n):
        if ((i >> t1) ^ (i >> t2)) & 1:
            amps[i] *= diff
        else:
            amps[i] *= same


@njit(cache=True)
def z_expectation(amps, n, q):
    t = n - 1 - q
    acc = 0.0
    for i in range(1 << n):
        p = amps[i].real * amps[i].real + amps[i].imag * amps[i].imag
        if (i >> t) & 1:
            acc -= p
        else:
            acc += p
    return acc


@njit(cache=True)
def edge_scatter(feat, src, dst, w, out):
    for e in range(src.shape[0]):
        s = src[e]
        d = dst[e]
        we = w[e]
        for k in range(feat.shape[1]):
            out[d, k] += we * feat[s, k]
