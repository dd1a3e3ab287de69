"""Reverse-mode automatic differentiation over dense float64 arrays.

A forward pass runs inside a `Tape` context; every operation whose inputs
require gradients appends its output to the tape. `backward(loss)` sweeps
the records in reverse creation order, which is a valid reverse topological
order, visiting each node exactly once. A tape can be swept once; build a
fresh tape per optimization step.
"""

from __future__ import annotations

import io
import math
import struct
import threading

import numpy as np

from . import kernels
from .errors import GradientError, ShapeError

_STACK = threading.local()


def _tape_stack():
    stack = getattr(_STACK, "tapes", None)
    if stack is None:
        stack = _STACK.tapes = []
    return stack


def _active_tape():
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tape:
    """Append-only record of one forward pass."""

    def __init__(self):
        self.records = []
        self._swept = False

    def __enter__(self):
        stack = _tape_stack()
        if stack:
            raise GradientError("a tape is already recording; tapes do not nest")
        stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _tape_stack().pop()
        return False


class Value:
    """A float64 array plus the bookkeeping for reverse-mode gradients."""

    __slots__ = ("data", "grad", "requires_grad", "tape", "_vjp")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.tape = None
        self._vjp = None

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        if self.data.size != 1:
            raise ShapeError(f"item() needs a size-1 value, got shape {self.data.shape}")
        return float(self.data.reshape(-1)[0])

    def accumulate(self, g):
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __repr__(self):
        return f"Value(shape={self.data.shape}, requires_grad={self.requires_grad})"


def constant(data):
    return Value(data)


def parameter(data):
    return Value(data, requires_grad=True)


def uniform_init(shape, fan_in, rng):
    """Uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _record(data, parents, vjp):
    out = Value(data)
    tape = _active_tape()
    if tape is None:
        return out
    needs = False
    for p in parents:
        if p.requires_grad:
            needs = True
            if p.tape is not None and p.tape is not tape:
                raise GradientError("value recorded on a different tape")
    if needs:
        out.requires_grad = True
        out.tape = tape
        out._vjp = vjp
        tape.records.append(out)
    return out


def backward(loss: Value):
    """Sweep the loss's tape in reverse, populating .grad on reachable values."""
    if loss.data.size != 1:
        raise GradientError(f"loss must be scalar, got shape {loss.data.shape}")
    tape = loss.tape
    if tape is None:
        raise GradientError("loss was not recorded on a tape")
    if tape._swept:
        raise GradientError("backward already ran on this tape; record a new forward pass")
    tape._swept = True
    loss.grad = np.ones_like(loss.data)
    for v in reversed(tape.records):
        if v.grad is not None:
            v._vjp(v.grad)
    return tape


def zero_grad(params):
    for p in params.values() if isinstance(params, dict) else params:
        p.grad = None


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a: Value, b: Value):
    def vjp(g):
        a.accumulate(_unbroadcast(g, a.data.shape))
        b.accumulate(_unbroadcast(g, b.data.shape))

    return _record(a.data + b.data, (a, b), vjp)


def sub(a: Value, b: Value):
    def vjp(g):
        a.accumulate(_unbroadcast(g, a.data.shape))
        b.accumulate(-_unbroadcast(g, b.data.shape))

    return _record(a.data - b.data, (a, b), vjp)


def mul(a: Value, b: Value):
    def vjp(g):
        a.accumulate(_unbroadcast(g * b.data, a.data.shape))
        b.accumulate(_unbroadcast(g * a.data, b.data.shape))

    return _record(a.data * b.data, (a, b), vjp)


def scalar_mul(a: Value, c: float):
    c = float(c)

    def vjp(g):
        a.accumulate(c * g)

    return _record(c * a.data, (a,), vjp)


def matmul(a: Value, b: Value):
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(
            f"matmul shapes {a.data.shape} and {b.data.shape} are incompatible"
        )

    def vjp(g):
        a.accumulate(g @ b.data.T)
        b.accumulate(a.data.T @ g)

    return _record(a.data @ b.data, (a, b), vjp)


def relu(a: Value):
    mask = a.data > 0

    def vjp(g):
        a.accumulate(g * mask)

    return _record(a.data * mask, (a,), vjp)


def tanh(a: Value):
    out = np.tanh(a.data)

    def vjp(g):
        a.accumulate(g * (1.0 - out * out))

    return _record(out, (a,), vjp)


def sigmoid(a: Value):
    x = a.data
    out = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def vjp(g):
        a.accumulate(g * out * (1.0 - out))

    return _record(out, (a,), vjp)


def log(a: Value):
    def vjp(g):
        a.accumulate(g / a.data)

    return _record(np.log(a.data), (a,), vjp)


def clip(a: Value, lo: float, hi: float):
    """Clamp to [lo, hi]; gradient passes only strictly inside the interval."""
    mask = (a.data > lo) & (a.data < hi)

    def vjp(g):
        a.accumulate(g * mask)

    return _record(np.clip(a.data, lo, hi), (a,), vjp)


def mean_rows(a: Value):
    """Mean over rows, keeping a [1, d] shape."""
    n = a.data.shape[0]

    def vjp(g):
        a.accumulate(np.broadcast_to(g / n, a.data.shape))

    return _record(a.data.mean(axis=0, keepdims=True), (a,), vjp)


def sum_rows(a: Value):
    def vjp(g):
        a.accumulate(np.broadcast_to(g, a.data.shape))

    return _record(a.data.sum(axis=0, keepdims=True), (a,), vjp)


def sum_cols(a: Value):
    """Sum along each row, keeping an [n, 1] shape."""

    def vjp(g):
        a.accumulate(np.broadcast_to(g, a.data.shape))

    return _record(a.data.sum(axis=1, keepdims=True), (a,), vjp)


def mean_all(a: Value):
    n = a.data.size

    def vjp(g):
        a.accumulate(np.full(a.data.shape, float(g) / n))

    return _record(np.asarray(a.data.mean()), (a,), vjp)


def sum_all(a: Value):
    def vjp(g):
        a.accumulate(np.full(a.data.shape, float(g)))

    return _record(np.asarray(a.data.sum()), (a,), vjp)


def select_rows(a: Value, idx):
    idx = np.asarray(idx, dtype=np.int64)

    def vjp(g):
        if a.requires_grad:
            buf = np.zeros_like(a.data)
            np.add.at(buf, idx, g)
            a.accumulate(buf)

    return _record(a.data[idx], (a,), vjp)


def scatter_rows(a: Value, idx, n: int):
    """Place rows of a at positions idx in an [n, d] zero matrix."""
    idx = np.asarray(idx, dtype=np.int64)
    out = np.zeros((n, a.data.shape[1]))
    out[idx] = a.data

    def vjp(g):
        a.accumulate(g[idx])

    return _record(out, (a,), vjp)


def stack_scalars(values):
    """Stack size-1 values into an [m, 1] column."""
    values = list(values)
    for v in values:
        if v.data.size != 1:
            raise ShapeError(f"stack_scalars needs size-1 values, got shape {v.data.shape}")
    data = np.array([[v.item()] for v in values])

    def vjp(g):
        for i, v in enumerate(values):
            v.accumulate(g[i, 0].reshape(v.data.shape))

    return _record(data, tuple(values), vjp)


def _in_degree(dst, n, weights=None):
    deg = np.zeros(n)
    np.add.at(deg, dst, 1.0 if weights is None else weights)
    return deg


def neighborhood_mean(x: Value, src, dst):
    """Row i becomes the mean of x over i's neighbors; no neighbors gives zeros."""
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    n = x.data.shape[0]
    deg = _in_degree(dst, n)
    w = 1.0 / deg[dst] if src.size else np.zeros(0)
    out = np.zeros_like(x.data)
    kernels.edge_scatter(x.data, src, dst, w, out)

    def vjp(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            kernels.edge_scatter(np.ascontiguousarray(g), dst, src, w, gx)
            x.accumulate(gx)

    return _record(out, (x,), vjp)


def neighborhood_sum(x: Value, src, dst):
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    w = np.ones(src.size)
    out = np.zeros_like(x.data)
    kernels.edge_scatter(x.data, src, dst, w, out)

    def vjp(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            kernels.edge_scatter(np.ascontiguousarray(g), dst, src, w, gx)
            x.accumulate(gx)

    return _record(out, (x,), vjp)


def degree_normalized_aggregate(x: Value, src, dst, weight):
    """Apply D^-1/2 (A + I) D^-1/2 with weighted adjacency A and row-sum degrees."""
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    weight = np.asarray(weight, dtype=np.float64)
    n = x.data.shape[0]
    deg = 1.0 + _in_degree(dst, n, weight)
    inv_sqrt = 1.0 / np.sqrt(deg)
    coeff = weight * inv_sqrt[src] * inv_sqrt[dst] if src.size else weight
    diag = inv_sqrt * inv_sqrt

    def apply(mat, a, b):
        out = mat * diag[:, None]
        kernels.edge_scatter(np.ascontiguousarray(mat), a, b, coeff, out)
        return out

    def vjp(g):
        # transpose of the forward map: read from dst, accumulate into src
        if x.requires_grad:
            x.accumulate(apply(g, dst, src))

    return _record(apply(x.data, src, dst), (x,), vjp)


class AdamState:
    """First/second moment estimates plus the step counter."""

    def __init__(self, params):
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.t = 0


def adam_step(params, state: AdamState, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One Adam update in place; gradients must be finite."""
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if not np.all(np.isfinite(g)):
            raise GradientError(f"non-finite gradient for parameter {name}")
        m = state.m[name] = beta1 * state.m[name] + (1.0 - beta1) * g
        v = state.v[name] = beta2 * state.v[name] + (1.0 - beta2) * (g * g)
        p.data = p.data - lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return state


class Adam:
    """Convenience wrapper binding parameters, state, and a learning rate."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = dict(params)
        self.lr = float(lr)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.state = AdamState(self.params)

    def step(self):
        adam_step(self.params, self.state, self.lr, self.beta1, self.beta2, self.eps)

    def zero_grad(self):
        zero_grad(self.params)


_CKPT_MAGIC = b"GGCCKPT1"
_CKPT_VERSION = 1


def _write_tensor(buf, name, arr):
    raw = name.encode("utf-8")
    buf.write(struct.pack("<H", len(raw)))
    buf.write(raw)
    arr = np.asarray(arr, dtype=np.float64)
    buf.write(struct.pack("<B", arr.ndim))
    for s in arr.shape:
        buf.write(struct.pack("<Q", s))
    buf.write(arr.astype("<f8").tobytes())


def save_checkpoint(path, params, opt_state: AdamState | None = None):
    """Named float64 tensors, little-endian, with optional Adam state.

    Layout: magic "GGCCKPT1", u32 version, u64 tensor count; per tensor a
    u16 name length, utf-8 name, u8 ndim, u64 dims, raw float64 data.
    Optimizer tensors use the reserved prefixes "opt.m.", "opt.v." and the
    scalar "opt.t".
    """
    tensors = [(k, p.data) for k, p in params.items()]
    if opt_state is not None:
        tensors += [(f"opt.m.{k}", v) for k, v in opt_state.m.items()]
        tensors += [(f"opt.v.{k}", v) for k, v in opt_state.v.items()]
        tensors.append(("opt.t", np.array(float(opt_state.t))))
    buf = io.BytesIO()
    buf.write(_CKPT_MAGIC)
    buf.write(struct.pack("<IQ", _CKPT_VERSION, len(tensors)))
    for name, arr in tensors:
        _write_tensor(buf, name, arr)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_checkpoint(path):
    """Return (param arrays, AdamState or None)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != _CKPT_MAGIC:
        raise ShapeError(f"bad checkpoint magic in {path}")
    version, count = struct.unpack_from("<IQ", raw, 8)
    if version != _CKPT_VERSION:
        raise ShapeError(f"unsupported checkpoint version {version}")
    off = 8 + struct.calcsize("<IQ")
    tensors = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", raw, off)
        off += 2
        name = raw[off : off + nlen].decode("utf-8")
        off += nlen
        (ndim,) = struct.unpack_from("<B", raw, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}Q", raw, off) if ndim else ()
        off += 8 * ndim
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(raw, dtype="<f8", count=size, offset=off).reshape(shape)
        off += 8 * size
        tensors[name] = arr.astype(np.float64)
    plain = {k: v for k, v in tensors.items() if not k.startswith("opt.")}
    opt = None
    if "opt.t" in tensors:
        opt = AdamState({k: Value(v) for k, v in plain.items()})
        opt.t = int(tensors["opt.t"])
        for k in plain:
            opt.m[k] = tensors.get(f"opt.m.{k}", np.zeros_like(plain[k]))
            opt.v[k] = tensors.get(f"opt.v.{k}", np.zeros_like(plain[k]))
    return plain, opt


def load_into(params, arrays):
    """Copy checkpoint arrays into existing parameters, checking shapes."""
    for name, p in params.items():
        if name not in arrays:
            raise ShapeError(f"checkpoint missing tensor {name}")
        arr = arrays[name]
        if arr.shape != p.data.shape:
            raise ShapeError(
                f"tensor {name} has shape {arr.shape}, expected {p.data.shape}"
            )
        p.data = arr.copy()
