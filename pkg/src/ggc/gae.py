"""Graph autoencoders that compress node count and feature dimensionality.

The encoder alternates multi-kernel neighborhood convolutions with top-p
pooling; the decoder restores dropped nodes as zero rows at their original
indices, restores cached edges, and applies convolutions through the
reversed shape sequence. Two pooling mechanisms share the architecture:

- "miagae": nodes scored by relational content similarity, the sum of dot
  products with their neighbors; kept features pass through unchanged.
- "sag": nodes scored by tanh of a degree-normalized attention convolution;
  kept features are gated by their scores.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, GraphError
from .graphs import CompressedGraph, EdgeCache, Graph, filter_edges, restore_edges

KINDS = ("miagae", "sag")


@dataclass(frozen=True)
class EncoderConfig:
    input_dim: int = 13
    shapes: tuple = (13, 13, 2)
    compression_rate: float = 0.4
    kernels: int = 1

    def __post_init__(self):
        object.__setattr__(self, "shapes", tuple(int(s) for s in self.shapes))
        problems = self.validate()
        if problems:
            raise ConfigError("; ".join(problems))

    @property
    def depth(self):
        return len(self.shapes)

    def validate(self):
        problems = []
        if self.input_dim < 1:
            problems.append(f"input_dim must be >= 1, got {self.input_dim}")
        if not self.shapes or any(s < 1 for s in self.shapes):
            problems.append(f"shapes must be positive dims, got {self.shapes}")
        if not 0.0 < self.compression_rate <= 1.0:
            problems.append(
                f"compression_rate must be in (0, 1], got {self.compression_rate}"
            )
        if self.kernels < 1:
            problems.append(f"kernels must be >= 1, got {self.kernels}")
        return problems


class MiConvLayer:
    """Multi-kernel neighborhood convolution.

    Each kernel maps f_i to relu(W1 f_i + W2 mean_{j in N(i)} f_j); kernel
    outputs are summed. Isolated nodes see a zero neighborhood mean.
    """

    def __init__(self, d_in, d_out, kernels, rng, identity=False):
        self.d_in, self.d_out = int(d_in), int(d_out)
        self.w1, self.w2 = [], []
        for _ in range(kernels):
            if identity:
                if d_in != d_out:
                    raise ConfigError(
                        f"identity init needs square weights, got {d_in}x{d_out}"
                    )
                self.w1.append(ad.parameter(np.eye(d_in)))
                self.w2.append(ad.parameter(np.zeros((d_in, d_out))))
            else:
                self.w1.append(ad.parameter(ad.uniform_init((d_in, d_out), d_in, rng)))
                self.w2.append(ad.parameter(ad.uniform_init((d_in, d_out), d_in, rng)))

    def forward(self, x: ad.Value, src, dst):
        nm = ad.neighborhood_mean(x, src, dst)
        out = None
        for w1, w2 in zip(self.w1, self.w2):
            y = ad.relu(ad.add(ad.matmul(x, w1), ad.matmul(nm, w2)))
            out = y if out is None else ad.add(out, y)
        return out

    def params(self, prefix):
        out = {}
        for k, (w1, w2) in enumerate(zip(self.w1, self.w2)):
            out[f"{prefix}.k{k}.w1"] = w1
            out[f"{prefix}.k{k}.w2"] = w2
        return out


def rcs_scores(x: ad.Value, src, dst):
    """Relational content similarity: score_i = sum_{j in N(i)} f_i . f_j.

    Isolated nodes score exactly zero.
    """
    ns = ad.neighborhood_sum(x, src, dst)
    return ad.sum_cols(ad.mul(x, ns))


def sag_scores(x: ad.Value, theta: ad.Value, src, dst, weight):
    """Attention scores tanh(D^-1/2 (A + I) D^-1/2 X theta), one per node."""
    return ad.tanh(ad.matmul(ad.degree_normalized_aggregate(x, src, dst, weight), theta))


def pool_size(n, rate):
    """ceil(rate * n) with a minimum of 1; the epsilon guards float products
    like 0.4 * 155 that land a hair above the exact integer."""
    return max(1, math.ceil(rate * n - 1e-9))


def top_p_indices(scores, rate):
    """Indices of the ceil(rate*N) highest scores, ties resolved toward the
    lower node index, returned sorted ascending."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    k = pool_size(scores.shape[0], rate)
    order = np.argsort(-scores, kind="stable")
    return np.sort(order[:k])


@dataclass(frozen=True)
class PoolStep:
    """Provenance of one pooling layer."""

    kept: np.ndarray
    cache: EdgeCache
    n_before: int


def top_p_pool(g: Graph, scores, rate):
    """Keep the top ceil(rate*N) nodes of g by score."""
    keep = top_p_indices(scores, rate)
    src, dst, w, cache = filter_edges(
        g.edge_src, g.edge_dst, g.edge_weight, keep, g.num_nodes
    )
    sub = Graph(g.features[keep], src, dst, w, g.label)
    return sub, PoolStep(keep, cache, g.num_nodes)


class Encoder:
    def __init__(self, config: EncoderConfig, kind, rng, identity=False):
        if kind not in KINDS:
            raise ConfigError(f"unknown autoencoder kind {kind!r}")
        self.config = config
        self.kind = kind
        dims = [config.input_dim, *config.shapes]
        self.convs = [
            MiConvLayer(dims[k], dims[k + 1], config.kernels, rng, identity)
            for k in range(config.depth)
        ]
        self.attention = []
        if kind == "sag":
            for k in range(config.depth):
                self.attention.append(
                    ad.parameter(ad.uniform_init((dims[k + 1], 1), dims[k + 1], rng))
                )

    def params(self, prefix="enc"):
        out = {}
        for k, conv in enumerate(self.convs):
            out.update(conv.params(f"{prefix}.conv{k}"))
        for k, theta in enumerate(self.attention):
            out[f"{prefix}.attn{k}"] = theta
        return out

    def forward(self, g: Graph):
        """Compress g; returns the latent features as a tape value plus the
        CompressedGraph carrying the provenance needed for unpooling."""
        x = ad.constant(g.features)
        src, dst, w = g.edge_src, g.edge_dst, g.edge_weight
        n = g.num_nodes
        rate = self.config.compression_rate
        kept_list, caches, counts = [], [], []
        for k, conv in enumerate(self.convs):
            x = conv.forward(x, src, dst)
            if self.kind == "miagae":
                scores = rcs_scores(x, src, dst)
            else:
                scores = sag_scores(x, self.attention[k], src, dst, w)
            keep = top_p_indices(scores.data[:, 0], rate)
            x = ad.select_rows(x, keep)
            if self.kind == "sag":
                x = ad.mul(x, ad.select_rows(scores, keep))
            src, dst, w, cache = filter_edges(src, dst, w, keep, n)
            kept_list.append(keep)
            caches.append(cache)
            counts.append(n)
            n = keep.size
        z = CompressedGraph(
            x.data, src, dst, w, g.label,
            kept_node_indices=tuple(kept_list),
            removed_edge_cache=tuple(caches),
            layer_node_counts=tuple(counts),
        )
        return x, z

    def encode(self, g: Graph) -> CompressedGraph:
        """Compression without gradient recording."""
        _, z = self.forward(g)
        return z


class Decoder:
    """Mirror of the encoder: unpool, restore edges, convolve, repeat."""

    def __init__(self, config: EncoderConfig, rng, identity=False):
        self.config = config
        rev = list(reversed(config.shapes))
        outs = rev[1:] + [config.input_dim]
        self.convs = [
            MiConvLayer(rev[k], outs[k], config.kernels, rng, identity)
            for k in range(config.depth)
        ]

    def params(self, prefix="dec"):
        out = {}
        for k, conv in enumerate(self.convs):
            out.update(conv.params(f"{prefix}.conv{k}"))
        return out

    def forward(self, x: ad.Value, z: CompressedGraph):
        if z.depth != self.config.depth:
            raise GraphError(
                f"latent graph has {z.depth} pooling steps, decoder expects {self.config.depth}"
            )
        src, dst, w = z.edge_src, z.edge_dst, z.edge_weight
        for k in reversed(range(z.depth)):
            keep = z.kept_node_indices[k]
            x = ad.scatter_rows(x, keep, z.layer_node_counts[k])
            src, dst, w = restore_edges(src, dst, w, keep, z.removed_edge_cache[k])
            x = self.convs[z.depth - 1 - k].forward(x, src, dst)
        return x


class Autoencoder:
    def __init__(self, config: EncoderConfig, kind, rng, identity=False):
        self.config = config
        self.kind = kind
        self.encoder = Encoder(config, kind, rng, identity)
        self.decoder = Decoder(config, rng, identity)

    def params(self, prefix="ae"):
        out = self.encoder.params(f"{prefix}.enc")
        out.update(self.decoder.params(f"{prefix}.dec"))
        return out

    def forward(self, g: Graph):
        """Returns (latent value, compressed graph, reconstruction value)."""
        x, z = self.encoder.forward(g)
        recon = self.decoder.forward(x, z)
        return x, z, recon


def graph_reconstruction_error(g: Graph, recon: ad.Value):
    """Mean squared entrywise difference for one graph."""
    if recon.data.shape != g.features.shape:
        raise GraphError(
            f"reconstruction shape {recon.data.shape} != original {g.features.shape}"
        )
    diff = ad.sub(ad.constant(g.features), recon)
    return ad.mean_all(ad.mul(diff, diff))


def reconstruction_loss(graphs, recons):
    """Batch loss: per-graph mean squared error, averaged over the batch."""
    if len(graphs) != len(recons):
        raise GraphError("batch and reconstruction counts differ")
    per_graph = [graph_reconstruction_error(g, r) for g, r in zip(graphs, recons)]
    return ad.mean_all(ad.stack_scalars(per_graph))
