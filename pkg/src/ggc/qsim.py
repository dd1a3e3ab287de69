"""Statevector simulator for the H/RX/RZZ gate set, capped at 12 qubits.

Convention: qubit 0 is the most significant bit of the basis index, so
|q0 q1 ... q_{n-1}> maps to index sum(q_i << (n-1-i)). RX(t) = exp(-i t X/2),
RZZ(t) = exp(-i t Z(x)Z/2). Gradients of <Z_q> come either from adjoint
differentiation (one forward pass plus a reverse sweep) or from the
parameter-shift rule, which serves as an independent cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .errors import CircuitError

MAX_QUBITS = 12

_PARAMETRIC = ("RX", "RZZ")
_ARITY = {"H": 1, "RX": 1, "RZZ": 2}


@dataclass(frozen=True)
class ParamSource:
    """One term of d(angle)/d(input): `angle` varies by `coeff` per unit of
    the named input entry (e.g. kind="alpha", index into the flat array)."""

    kind: str
    index: int
    coeff: float


@dataclass(frozen=True)
class GateOp:
    kind: str
    targets: tuple
    angle: float = 0.0
    sources: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        object.__setattr__(self, "angle", float(self.angle))
        object.__setattr__(self, "sources", tuple(self.sources))
        if self.kind not in _ARITY:
            raise CircuitError(f"unknown gate kind {self.kind!r}")
        if len(self.targets) != _ARITY[self.kind]:
            raise CircuitError(
                f"{self.kind} takes {_ARITY[self.kind]} target(s), got {self.targets}"
            )
        if len(set(self.targets)) != len(self.targets):
            raise CircuitError(f"gate targets must be distinct, got {self.targets}")

    @property
    def parametric(self):
        return self.kind in _PARAMETRIC


@dataclass(frozen=True)
class Circuit:
    n_qubits: int
    gates: tuple

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        n = int(self.n_qubits)
        if n < 1 or n > MAX_QUBITS:
            raise CircuitError(f"qubit count must be in [1, {MAX_QUBITS}], got {n}")
        for g in self.gates:
            if any(t < 0 or t >= n for t in g.targets):
                raise CircuitError(f"gate target out of range for {n} qubits: {g}")

    def parametric_gates(self):
        return [g for g in self.gates if g.parametric]


def zero_state(n):
    if n < 1 or n > MAX_QUBITS:
        raise CircuitError(f"qubit count must be in [1, {MAX_QUBITS}], got {n}")
    amps = np.zeros(1 << n, dtype=np.complex128)
    amps[0] = 1.0
    return amps


def plus_state(n):
    if n < 1 or n > MAX_QUBITS:
        raise CircuitError(f"qubit count must be in [1, {MAX_QUBITS}], got {n}")
    return np.full(1 << n, 2.0 ** (-0.5 * n), dtype=np.complex128)


def _num_qubits(amps):
    n = int(amps.shape[0]).bit_length() - 1
    if (1 << n) != amps.shape[0]:
        raise CircuitError(f"state length {amps.shape[0]} is not a power of two")
    return n


def _apply_inplace(amps, n, gate: GateOp, sign=1.0):
    if gate.kind == "H":
        kernels.h_gate(amps, n, gate.targets[0])
    elif gate.kind == "RX":
        kernels.rx_gate(amps, n, gate.targets[0], sign * gate.angle)
    else:
        kernels.rzz_gate(amps, n, gate.targets[0], gate.targets[1], sign * gate.angle)


def _apply_deriv_inplace(amps, n, gate: GateOp):
    if gate.kind == "RX":
        kernels.rx_deriv_gate(amps, n, gate.targets[0], gate.angle)
    elif gate.kind == "RZZ":
        kernels.rzz_deriv_gate(amps, n, gate.targets[0], gate.targets[1], gate.angle)
    else:
        raise CircuitError(f"{gate.kind} has no angle to differentiate")


def apply_gate(state, gate: GateOp):
    """Apply one gate to a copy of state and return it."""
    amps = np.array(state, dtype=np.complex128)
    _apply_inplace(amps, _num_qubits(amps), gate)
    return amps


def run_circuit(circuit: Circuit, state0=None):
    amps = zero_state(circuit.n_qubits) if state0 is None else np.array(state0, dtype=np.complex128)
    n = _num_qubits(amps)
    if n != circuit.n_qubits:
        raise CircuitError(
            f"state has {n} qubits but circuit expects {circuit.n_qubits}"
        )
    for gate in circuit.gates:
        _apply_inplace(amps, n, gate)
    return amps


def norm_error(state):
    return abs(float(np.sum(state.real * state.real + state.imag * state.imag)) - 1.0)


def expect_z(state, qubit):
    """<Z_qubit> = sum over basis states of (+-1) |amplitude|^2."""
    n = _num_qubits(state)
    if qubit < 0 or qubit >= n:
        raise CircuitError(f"qubit {qubit} out of range for {n}-qubit state")
    return kernels.z_expectation(np.ascontiguousarray(state, dtype=np.complex128), n, qubit)


def _apply_z(amps, n, qubit):
    idx = np.arange(1 << n)
    sign = 1.0 - 2.0 * ((idx >> (n - 1 - qubit)) & 1)
    amps *= sign


def adjoint_gradients(circuit: Circuit, obs_qubit=0, state0=None):
    """d<Z_obs>/d(angle) for every parametric gate, in circuit order.

    One forward pass builds |psi>; the sweep walks gates in reverse keeping
    ket = state before the gate and bra = U^dag ... Z |psi>, reading off
    2 Re <bra| dU |ket> per parametric gate.
    """
    n = circuit.n_qubits
    ket = run_circuit(circuit, state0)
    bra = ket.copy()
    _apply_z(bra, n, obs_qubit)
    grads = []
    for gate in reversed(circuit.gates):
        _apply_inplace(ket, n, gate, sign=-1.0)
        if gate.parametric:
            tmp = ket.copy()
            _apply_deriv_inplace(tmp, n, gate)
            grads.append(2.0 * float(np.real(np.vdot(bra, tmp))))
        _apply_inplace(bra, n, gate, sign=-1.0)
    return np.array(grads[::-1])


def parameter_shift_gradients(circuit: Circuit, obs_qubit=0, state0=None):
    """[f(angle + pi/2) - f(angle - pi/2)] / 2 per parametric gate; every
    evaluation is an independent full circuit run."""
    gates = list(circuit.gates)
    grads = []
    for k, gate in enumerate(gates):
        if not gate.parametric:
            continue
        vals = []
        for shift in (0.5 * math.pi, -0.5 * math.pi):
            shifted = gates.copy()
            shifted[k] = replace(gate, angle=gate.angle + shift)
            state = run_circuit(Circuit(circuit.n_qubits, tuple(shifted)), state0)
            vals.append(expect_z(state, obs_qubit))
        grads.append(0.5 * (vals[0] - vals[1]))
    return np.array(grads)


def _format_sources(sources):
    if not sources:
        return "-"
    return ",".join(f"{s.kind}[{s.index}]*{s.coeff!r}" for s in sources)


def _parse_sources(text):
    if text == "-":
        return ()
    out = []
    for tok in text.split(","):
        head, coeff = tok.rsplit("*", 1)
        kind, idx = head[:-1].split("[")
        out.append(ParamSource(kind, int(idx), float(coeff)))
    return tuple(out)


def dump_circuit(circuit: Circuit):
    """Text dump, one gate per line: KIND targets angle provenance."""
    lines = [f"circuit qubits={circuit.n_qubits}"]
    for g in circuit.gates:
        targets = ",".join(str(t) for t in g.targets)
        lines.append(f"{g.kind} {targets} {g.angle!r} {_format_sources(g.sources)}")
    return "\n".join(lines) + "\n"


def parse_circuit(text):
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines or not lines[0].startswith("circuit qubits="):
        raise CircuitError("circuit dump must start with 'circuit qubits=N'")
    n = int(lines[0].split("=", 1)[1])
    gates = []
    for ln in lines[1:]:
        kind, targets, angle, sources = ln.split(" ", 3)
        gates.append(
            GateOp(
                kind,
                tuple(int(t) for t in targets.split(",")),
                float(angle),
                _parse_sources(sources),
            )
        )
    return Circuit(n, tuple(gates))
