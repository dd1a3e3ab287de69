"""Quantum graph classifiers simulated on the statevector backend.

One qubit per latent node. Both ansatz families re-upload the data at every
layer and read out <Z> on qubit 0, mapped to a probability via (f + 1) / 2.

kind "qgnn1": qubits start in |+> (an H on each), then per layer l an RZZ
with angle beta[l] * e_ij on every edge followed by an RX with angle
alpha[l] * mean_k(x_mk) on every qubit; 2L trainable parameters.

A structural caveat for kind "qgnn1": every gate in the family commutes with
the global bit flip X x ... x X and the |+> start state is invariant under
it, while Z anticommutes with X, so <Z_q> = -<Z_q> = 0 identically for every
qubit, every graph, and every parameter value. Scores, probabilities (0.5),
and parameter gradients are therefore constant, and training cannot move this
ansatz off chance level. It is kept faithful to its published construction
and doubles as a structural baseline; kind "qgnn2" (a |0> start breaks the
symmetry) is the ansatz with actual capacity.

kind "qgnn2": qubits start in |0>, then per layer l an RX with angle
sum_k alpha[l, k] * x_mk on every qubit (the per-feature rotations compose
additively) followed by an RZZ with angle e_ij + beta[l] on every edge;
L * (d + 1) trainable parameters.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .errors import CircuitError
from .qsim import Circuit, GateOp, ParamSource, adjoint_gradients, expect_z, run_circuit

KINDS = ("qgnn1", "qgnn2")


def _undirected(src, dst, weight):
    mask = src < dst
    return src[mask], dst[mask], weight[mask]


def build_qgnn1(features, src, dst, weight, alpha, beta):
    """Circuit for kind qgnn1; alpha and beta are [L] arrays."""
    features = np.asarray(features, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    n, d = features.shape
    xbar = features.mean(axis=1)
    ei, ej, ew = _undirected(np.asarray(src), np.asarray(dst), np.asarray(weight))
    gates = [GateOp("H", (q,)) for q in range(n)]
    for layer in range(alpha.shape[0]):
        for i, j, w in zip(ei.tolist(), ej.tolist(), ew.tolist()):
            gates.append(
                GateOp(
                    "RZZ",
                    (i, j),
                    beta[layer] * w,
                    (ParamSource("beta", layer, w),),
                )
            )
        for m in range(n):
            sources = [ParamSource("alpha", layer, xbar[m])]
            sources += [
                ParamSource("x", m * d + k, alpha[layer] / d) for k in range(d)
            ]
            gates.append(GateOp("RX", (m,), alpha[layer] * xbar[m], tuple(sources)))
    return Circuit(n, tuple(gates))


def build_qgnn2(features, src, dst, weight, alpha, beta):
    """Circuit for kind qgnn2; alpha is [L, d], beta is [L]."""
    features = np.asarray(features, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    n, d = features.shape
    if alpha.ndim != 2 or alpha.shape[1] != d:
        raise CircuitError(
            f"alpha must be [layers, {d}] for {d}-dim features, got {alpha.shape}"
        )
    ei, ej, ew = _undirected(np.asarray(src), np.asarray(dst), np.asarray(weight))
    gates = []
    for layer in range(alpha.shape[0]):
        for m in range(n):
            angle = float(alpha[layer] @ features[m])
            sources = [
                ParamSource("alpha", layer * d + k, features[m, k]) for k in range(d)
            ]
            sources += [
                ParamSource("x", m * d + k, alpha[layer, k]) for k in range(d)
            ]
            gates.append(GateOp("RX", (m,), angle, tuple(sources)))
        for i, j, w in zip(ei.tolist(), ej.tolist(), ew.tolist()):
            gates.append(
                GateOp("RZZ", (i, j), w + beta[layer], (ParamSource("beta", layer, 1.0),))
            )
    return Circuit(n, tuple(gates))


def build_circuit(kind, features, src, dst, weight, alpha, beta):
    if kind == "qgnn1":
        return build_qgnn1(features, src, dst, weight, alpha, beta)
    if kind == "qgnn2":
        return build_qgnn2(features, src, dst, weight, alpha, beta)
    raise CircuitError(f"unknown ansatz kind {kind!r}")


def circuit_expectation(kind, x: ad.Value, src, dst, weight, alpha: ad.Value, beta: ad.Value, obs_qubit=0):
    """<Z_obs> of the ansatz circuit as a tape value.

    The backward pass runs adjoint differentiation once and chains each gate
    angle's gradient into alpha, beta, and the node features through the
    gate provenance records.
    """
    circuit = build_circuit(kind, x.data, src, dst, weight, alpha.data, beta.data)
    f = expect_z(run_circuit(circuit), obs_qubit)

    def vjp(g):
        scale = float(g)
        dangles = adjoint_gradients(circuit, obs_qubit=obs_qubit)
        grads = {
            "alpha": np.zeros(alpha.data.size),
            "beta": np.zeros(beta.data.size),
            "x": np.zeros(x.data.size),
        }
        for dtheta, gate in zip(dangles, circuit.parametric_gates()):
            for s in gate.sources:
                grads[s.kind][s.index] += dtheta * s.coeff
        alpha.accumulate(scale * grads["alpha"].reshape(alpha.data.shape))
        beta.accumulate(scale * grads["beta"].reshape(beta.data.shape))
        x.accumulate(scale * grads["x"].reshape(x.data.shape))

    return ad._record(np.asarray(f), (x, alpha, beta), vjp)


def hard_label(f):
    """(sign(f) + 1) / 2 with sign(0) counted as +1."""
    return 1 if f >= 0 else 0


class QgnnClassifier:
    """Trainable ansatz parameters plus the forward pass over latent graphs."""

    def __init__(self, kind, layers, feature_dim, rng):
        if kind not in KINDS:
            raise CircuitError(f"unknown ansatz kind {kind!r}")
        self.kind = kind
        self.layers = int(layers)
        self.feature_dim = int(feature_dim)
        if kind == "qgnn1":
            alpha = ad.uniform_init((self.layers,), feature_dim, rng)
        else:
            alpha = ad.uniform_init((self.layers, feature_dim), feature_dim, rng)
        beta = ad.uniform_init((self.layers,), 1, rng)
        self.alpha = ad.parameter(alpha)
        self.beta = ad.parameter(beta)

    def params(self):
        return {"clf.alpha": self.alpha, "clf.beta": self.beta}

    def expectation(self, x: ad.Value, src, dst, weight, obs_qubit=0):
        return circuit_expectation(
            self.kind, x, src, dst, weight, self.alpha, self.beta, obs_qubit
        )

    def prob(self, x: ad.Value, src, dst, weight):
        f = self.expectation(x, src, dst, weight)
        half = ad.scalar_mul(ad.add(f, ad.constant(np.asarray(1.0))), 0.5)
        return ad.clip(half, 1e-7, 1.0 - 1e-7)

    def score_graph(self, g):
        """Continuous ROC score: the raw <Z_0> expectation."""
        circuit = build_circuit(
            self.kind, g.features, g.edge_src, g.edge_dst, g.edge_weight,
            self.alpha.data, self.beta.data,
        )
        return expect_z(run_circuit(circuit), 0)
