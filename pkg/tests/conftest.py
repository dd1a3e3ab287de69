"""Shared deterministic builders for randomized property tests."""

import numpy as np

from ggc.graphs import Dataset, Graph


def random_graph(rng, n_nodes=None, dim=None, label=None, edge_prob=0.6):
    """A random undirected weighted graph with positive edge weights."""
    n = int(n_nodes if n_nodes is not None else rng.integers(2, 9))
    d = int(dim if dim is not None else rng.integers(1, 6))
    feats = rng.normal(size=(n, d))
    pairs = []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < edge_prob:
                pairs.append((i, j, float(rng.uniform(0.1, 2.0))))
    lbl = int(label if label is not None else rng.integers(0, 2))
    return Graph.from_undirected(feats, pairs, lbl)


def random_dataset(rng, count, **kwargs):
    return Dataset([random_graph(rng, **kwargs) for _ in range(count)])


def permute_graph(g: Graph, perm):
    """Relabel node i as perm[i]; same topology, permuted feature rows."""
    perm = np.asarray(perm, dtype=np.int64)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size)
    return Graph(
        g.features[inv],
        perm[g.edge_src],
        perm[g.edge_dst],
        g.edge_weight,
        g.label,
    )
