"""Graph containers and structural operations.

Undirected graphs are stored as symmetric directed edge pairs sorted by
(src, dst); node features are float64 [N, d]. Graphs are immutable after
construction. The binary dataset container keeps features and weights as
little-endian float32; see `write_dataset` for the byte layout.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, GraphError

_MAGIC = b"GGCDATA1"
_VERSION = 1
_FLAG_NORMALIZED = 1


def _frozen_array(a, dtype):
    out = np.ascontiguousarray(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Graph:
    """Immutable undirected graph with weighted symmetric edge pairs."""

    features: np.ndarray
    edge_src: np.ndarray
    edge_dst: np.ndarray
    edge_weight: np.ndarray
    label: int = 0

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2:
            raise GraphError(f"features must be 2-D, got shape {feats.shape}")
        if feats.shape[0] == 0:
            raise GraphError("graph has no nodes")
        src = np.asarray(self.edge_src, dtype=np.int64).ravel()
        dst = np.asarray(self.edge_dst, dtype=np.int64).ravel()
        w = np.asarray(self.edge_weight, dtype=np.float64).ravel()
        if not (src.shape == dst.shape == w.shape):
            raise GraphError("edge arrays must have equal length")
        order = np.lexsort((dst, src))
        object.__setattr__(self, "features", _frozen_array(feats, np.float64))
        object.__setattr__(self, "edge_src", _frozen_array(src[order], np.int64))
        object.__setattr__(self, "edge_dst", _frozen_array(dst[order], np.int64))
        object.__setattr__(self, "edge_weight", _frozen_array(w[order], np.float64))
        object.__setattr__(self, "label", int(self.label))

    @property
    def num_nodes(self):
        return self.features.shape[0]

    @property
    def feature_dim(self):
        return self.features.shape[1]

    @property
    def num_edges(self):
        """Directed edge count (twice the undirected count)."""
        return self.edge_src.shape[0]

    @classmethod
    def from_undirected(cls, features, pairs, label=0):
        """Build from (i, j, w) triples listing each undirected edge once."""
        pairs = list(pairs)
        if pairs:
            i = np.array([p[0] for p in pairs], dtype=np.int64)
            j = np.array([p[1] for p in pairs], dtype=np.int64)
            w = np.array([p[2] for p in pairs], dtype=np.float64)
            src = np.concatenate([i, j])
            dst = np.concatenate([j, i])
            weight = np.concatenate([w, w])
        else:
            src = dst = np.zeros(0, dtype=np.int64)
            weight = np.zeros(0, dtype=np.float64)
        return cls(np.asarray(features, dtype=np.float64), src, dst, weight, label)

    def undirected_pairs(self):
        """(src, dst, weight) arrays with src < dst, one entry per edge."""
        mask = self.edge_src < self.edge_dst
        return self.edge_src[mask], self.edge_dst[mask], self.edge_weight[mask]


@dataclass(frozen=True)
class EdgeCache:
    """Edges dropped by one pooling step, in pre-pool node indices."""

    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "src", _frozen_array(self.src, np.int64))
        object.__setattr__(self, "dst", _frozen_array(self.dst, np.int64))
        object.__setattr__(self, "weight", _frozen_array(self.weight, np.float64))

    @property
    def num_edges(self):
        return self.src.shape[0]


@dataclass(frozen=True)
class CompressedGraph(Graph):
    """Latent graph plus the provenance needed to undo each pooling step.

    Entry k of the provenance tuples describes pooling layer k:
    `layer_node_counts[k]` nodes existed before the step and the nodes at
    `kept_node_indices[k]` survived it; `removed_edge_cache[k]` holds every
    dropped edge in the pre-step indexing.
    """

    kept_node_indices: tuple = field(default=())
    removed_edge_cache: tuple = field(default=())
    layer_node_counts: tuple = field(default=())

    def __post_init__(self):
        super().__post_init__()
        kept = tuple(_frozen_array(k, np.int64) for k in self.kept_node_indices)
        object.__setattr__(self, "kept_node_indices", kept)
        object.__setattr__(self, "removed_edge_cache", tuple(self.removed_edge_cache))
        object.__setattr__(
            self, "layer_node_counts", tuple(int(n) for n in self.layer_node_counts)
        )
        if not (
            len(kept) == len(self.removed_edge_cache) == len(self.layer_node_counts)
        ):
            raise GraphError("provenance tuples must have equal length")

    @property
    def depth(self):
        return len(self.kept_node_indices)


@dataclass(frozen=True)
class GraphBatch:
    """A sequence of graphs with offsets for flattened node indexing."""

    graphs: tuple
    offsets: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "graphs", tuple(self.graphs))
        object.__setattr__(self, "offsets", _frozen_array(self.offsets, np.int64))
        if self.offsets.shape[0] != len(self.graphs) + 1 or self.offsets[0] != 0:
            raise GraphError("offsets must start at 0 with one entry per graph plus one")
        if np.any(np.diff(self.offsets) <= 0):
            raise GraphError("offsets must be strictly increasing")
        total = sum(g.num_nodes for g in self.graphs)
        if int(self.offsets[-1]) != total:
            raise GraphError("offsets must end at the total node count")

    @classmethod
    def from_graphs(cls, graphs):
        graphs = tuple(graphs)
        offsets = np.zeros(len(graphs) + 1, dtype=np.int64)
        np.cumsum([g.num_nodes for g in graphs], out=offsets[1:])
        return cls(graphs, offsets)

    def __len__(self):
        return len(self.graphs)

    def __iter__(self):
        return iter(self.graphs)

    @property
    def total_nodes(self):
        return int(self.offsets[-1])

    def flat_features(self):
        return np.concatenate([g.features for g in self.graphs], axis=0)


def validate(g: Graph):
    """Return a list of violation strings; an empty list means the graph is valid."""
    violations = []
    if not np.all(np.isfinite(g.features)):
        violations.append("non-finite feature value")
    n = g.num_nodes
    src, dst, w = g.edge_src, g.edge_dst, g.edge_weight
    if src.size:
        if src.min() < 0 or dst.min() < 0 or src.max() >= n or dst.max() >= n:
            violations.append("edge endpoint out of range")
            return violations
    if np.any(src == dst):
        violations.append("explicit self-loop")
    if not np.all(np.isfinite(w)):
        violations.append("non-finite edge weight")
    elif np.any(w < 0):
        violations.append("negative edge weight")
    pairs = {}
    dup = False
    for i, j, wt in zip(src.tolist(), dst.tolist(), w.tolist()):
        if (i, j) in pairs:
            dup = True
        pairs[(i, j)] = wt
    if dup:
        violations.append("duplicate edge")
    for (i, j), wt in pairs.items():
        back = pairs.get((j, i))
        if back is None:
            violations.append("missing reverse edge")
            break
        if back != wt:
            violations.append("asymmetric edge weight")
            break
    return violations


def filter_edges(src, dst, weight, keep, num_nodes):
    """Array-level core of induced_subgraph.

    Returns reindexed (src, dst, weight) for edges whose endpoints are both
    kept, plus an EdgeCache of the dropped edges in original indices. keep
    must be sorted unique indices into range(num_nodes).
    """
    keep = np.asarray(keep, dtype=np.int64).ravel()
    if keep.size == 0:
        raise GraphError("empty pooling selection")
    if np.any(np.diff(keep) <= 0):
        raise GraphError("keep indices must be sorted and unique")
    if keep[0] < 0 or keep[-1] >= num_nodes:
        raise GraphError(f"keep index out of range: graph has {num_nodes} nodes")
    pos = np.full(num_nodes, -1, dtype=np.int64)
    pos[keep] = np.arange(keep.size, dtype=np.int64)
    kept_mask = (pos[src] >= 0) & (pos[dst] >= 0)
    dropped = ~kept_mask
    cache = EdgeCache(src[dropped], dst[dropped], weight[dropped])
    return pos[src[kept_mask]], pos[dst[kept_mask]], weight[kept_mask], cache


def induced_subgraph(g: Graph, keep):
    """Restrict g to the nodes in keep (sorted unique indices).

    Returns the reindexed subgraph and an EdgeCache holding every dropped
    edge with its original endpoints. Reindexing preserves the relative
    order of kept nodes.
    """
    keep = np.asarray(keep, dtype=np.int64).ravel()
    src, dst, w, cache = filter_edges(
        g.edge_src, g.edge_dst, g.edge_weight, keep, g.num_nodes
    )
    sub = Graph(g.features[keep], src, dst, w, g.label)
    return sub, cache


def restore_edges(latent_src, latent_dst, latent_w, keep, cache: EdgeCache):
    """Undo one pooling step's reindexing: kept edges mapped back plus cache."""
    keep = np.asarray(keep, dtype=np.int64)
    src = np.concatenate([keep[latent_src], cache.src])
    dst = np.concatenate([keep[latent_dst], cache.dst])
    w = np.concatenate([latent_w, cache.weight])
    return src, dst, w


@dataclass
class Dataset:
    """A list of graphs plus the flag recording whether features were normalized."""

    graphs: list
    normalized: bool = False

    def __len__(self):
        return len(self.graphs)

    def __iter__(self):
        return iter(self.graphs)

    @property
    def feature_dim(self):
        return self.graphs[0].feature_dim if self.graphs else 0

    @property
    def labels(self):
        return np.array([g.label for g in self.graphs], dtype=np.int64)


def write_dataset(path, ds: Dataset):
    """Write the binary container.

    Layout (little-endian): magic "GGCDATA1", u32 version, u32 feature dim,
    u32 flags (bit 0 = normalized), u64 graph count; then per graph u32 node
    count, u32 undirected edge count, u8 label, N*d float32 features
    row-major, and per edge u32 src, u32 dst, float32 weight with src < dst.
    """
    dims = {g.feature_dim for g in ds.graphs}
    if len(dims) > 1:
        raise DataError(f"mixed feature dims in dataset: {sorted(dims)}")
    d = dims.pop() if dims else 0
    flags = _FLAG_NORMALIZED if ds.normalized else 0
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<III Q", _VERSION, d, flags, len(ds.graphs)))
    for g in ds.graphs:
        src, dst, w = g.undirected_pairs()
        buf.write(struct.pack("<IIB", g.num_nodes, src.size, g.label & 0xFF))
        buf.write(g.features.astype("<f4").tobytes())
        edge_rec = np.empty(src.size, dtype=[("i", "<u4"), ("j", "<u4"), ("w", "<f4")])
        edge_rec["i"] = src
        edge_rec["j"] = dst
        edge_rec["w"] = w
        buf.write(edge_rec.tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def read_dataset(path) -> Dataset:
    """Read a container written by `write_dataset`."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != _MAGIC:
        raise DataError(f"bad magic in {path}")
    version, d, flags, count = struct.unpack_from("<III Q", raw, 8)
    if version != _VERSION:
        raise DataError(f"unsupported container version {version}")
    off = 8 + struct.calcsize("<III Q")
    graphs = []
    try:
        for _ in range(count):
            n, ne, label = struct.unpack_from("<IIB", raw, off)
            off += struct.calcsize("<IIB")
            feats = np.frombuffer(raw, dtype="<f4", count=n * d, offset=off)
            off += 4 * n * d
            edge_rec = np.frombuffer(
                raw, dtype=[("i", "<u4"), ("j", "<u4"), ("w", "<f4")], count=ne, offset=off
            )
            off += 12 * ne
            graphs.append(
                Graph.from_undirected(
                    feats.astype(np.float64).reshape(n, d),
                    zip(
                        edge_rec["i"].astype(np.int64).tolist(),
                        edge_rec["j"].astype(np.int64).tolist(),
                        edge_rec["w"].astype(np.float64).tolist(),
                    ),
                    label,
                )
            )
    except ValueError as exc:
        raise DataError(f"truncated container {path}: {exc}") from exc
    if off != len(raw):
        raise DataError(f"trailing bytes in container {path}")
    return Dataset(graphs, normalized=bool(flags & _FLAG_NORMALIZED))


def write_debug_text(path, ds: Dataset):
    """Plain-text dump, one graph per block, full float precision."""
    with open(path, "w") as fh:
        fh.write(f"# graphs={len(ds.graphs)} normalized={int(ds.normalized)}\n")
        for g in ds.graphs:
            fh.write(f"graph nodes={g.num_nodes} label={g.label}\n")
            for row in g.features:
                fh.write("node " + " ".join(repr(v) for v in row.tolist()) + "\n")
            src, dst, w = g.undirected_pairs()
            for i, j, wt in zip(src.tolist(), dst.tolist(), w.tolist()):
                fh.write(f"edge {i} {j} {wt!r}\n")
            fh.write("\n")


def read_debug_text(path) -> Dataset:
    with open(path) as fh:
        lines = fh.read().splitlines()
    normalized = False
    graphs = []
    feats, pairs, label = [], [], 0
    header = None

    def flush():
        if header is not None:
            if len(feats) != header:
                raise DataError(f"graph block expected {header} nodes, got {len(feats)}")
            graphs.append(Graph.from_undirected(np.array(feats), pairs, label))

    for line in lines:
        line = line.strip()
        if line.startswith("#"):
            normalized = "normalized=1" in line
        elif line.startswith("graph "):
            flush()
            fields = dict(tok.split("=") for tok in line.split()[1:])
            header, label = int(fields["nodes"]), int(fields["label"])
            feats, pairs = [], []
        elif line.startswith("node "):
            feats.append([float(v) for v in line.split()[1:]])
        elif line.startswith("edge "):
            _, i, j, w = line.split()
            pairs.append((int(i), int(j), float(w)))
        elif line:
            raise DataError(f"unrecognized line in debug text: {line!r}")
    flush()
    return Dataset(graphs, normalized=normalized)
