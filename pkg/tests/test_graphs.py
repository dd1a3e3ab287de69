"""Graph containers, structural validation, pooling plumbing, and the
binary/text dataset containers."""

import numpy as np
import pytest

from conftest import random_dataset, random_graph
from ggc.errors import DataError, GraphError
from ggc.graphs import (
    Dataset,
    EdgeCache,
    Graph,
    GraphBatch,
    filter_edges,
    induced_subgraph,
    read_dataset,
    read_debug_text,
    restore_edges,
    validate,
    write_dataset,
    write_debug_text,
)


def triangle():
    feats = [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]
    return Graph.from_undirected(feats, [(0, 1, 0.5), (1, 2, 0.25), (0, 2, 1.0)])


# --------------------------------------------------------------------------
# construction


def test_edges_sorted_and_symmetric():
    g = triangle()
    assert g.num_nodes == 3 and g.feature_dim == 2
    assert g.num_edges == 6  # both directions of 3 undirected edges
    order = np.lexsort((g.edge_dst, g.edge_src))
    assert np.array_equal(order, np.arange(6))
    src, dst, w = g.undirected_pairs()
    assert np.array_equal(src, [0, 0, 1])
    assert np.array_equal(dst, [1, 2, 2])
    assert np.array_equal(w, [0.5, 1.0, 0.25])


def test_arrays_immutable():
    g = triangle()
    for arr in (g.features, g.edge_src, g.edge_dst, g.edge_weight):
        with pytest.raises(ValueError):
            arr[0] = 0


def test_label_coerced_to_int():
    g = Graph.from_undirected([[1.0]], [], label=np.int64(3))
    assert g.label == 3 and isinstance(g.label, int)


def test_construction_errors():
    with pytest.raises(GraphError):
        Graph(np.ones(3), [], [], [])  # 1-D features
    with pytest.raises(GraphError):
        Graph(np.ones((0, 2)), [], [], [])  # no nodes
    with pytest.raises(GraphError):
        Graph(np.ones((2, 2)), [0], [1, 0], [1.0, 1.0])  # ragged edge arrays


def test_from_undirected_empty_edges():
    g = Graph.from_undirected([[1.0], [2.0]], [])
    assert g.num_edges == 0
    assert validate(g) == []


# --------------------------------------------------------------------------
# validation


def test_validate_accepts_well_formed():
    assert validate(triangle()) == []


def test_validate_flags_self_loop():
    g = Graph(np.ones((2, 1)), [0], [0], [1.0])
    assert "explicit self-loop" in validate(g)


def test_validate_flags_negative_weight():
    g = Graph(np.ones((2, 1)), [0, 1], [1, 0], [-1.0, -1.0])
    assert "negative edge weight" in validate(g)


def test_validate_flags_missing_reverse_edge():
    g = Graph(np.ones((2, 1)), [0], [1], [1.0])
    assert "missing reverse edge" in validate(g)


def test_validate_flags_asymmetric_weight():
    g = Graph(np.ones((2, 1)), [0, 1], [1, 0], [1.0, 2.0])
    assert "asymmetric edge weight" in validate(g)


def test_validate_flags_duplicate_edge():
    g = Graph(np.ones((2, 1)), [0, 0, 1, 1], [1, 1, 0, 0], [1.0, 1.0, 1.0, 1.0])
    assert "duplicate edge" in validate(g)


def test_validate_flags_out_of_range():
    g = Graph(np.ones((2, 1)), [0], [5], [1.0])
    assert validate(g) == ["edge endpoint out of range"]


def test_validate_flags_non_finite():
    g = Graph([[np.nan]], [], [], [])
    assert "non-finite feature value" in validate(g)
    g = Graph(np.ones((2, 1)), [0, 1], [1, 0], [np.inf, np.inf])
    assert "non-finite edge weight" in validate(g)


# --------------------------------------------------------------------------
# subgraph restriction and edge restoration


def test_filter_edges_path_oracle():
    # path 0-1-2-3, keep {0, 1, 3}: only edge 0-1 survives, reindexed as-is;
    # both directions of 1-2 and 2-3 land in the cache with original indices.
    g = Graph.from_undirected(np.eye(4), [(0, 1, 1.0), (1, 2, 2.0), (2, 3, 3.0)])
    src, dst, w, cache = filter_edges(
        g.edge_src, g.edge_dst, g.edge_weight, [0, 1, 3], g.num_nodes
    )
    kept = sorted(zip(src.tolist(), dst.tolist(), w.tolist()))
    assert kept == [(0, 1, 1.0), (1, 0, 1.0)]
    dropped = sorted(zip(cache.src.tolist(), cache.dst.tolist(), cache.weight.tolist()))
    assert dropped == [(1, 2, 2.0), (2, 1, 2.0), (2, 3, 3.0), (3, 2, 3.0)]


def test_filter_edges_rejects_bad_selections():
    g = triangle()
    args = (g.edge_src, g.edge_dst, g.edge_weight)
    with pytest.raises(GraphError):
        filter_edges(*args, [], g.num_nodes)
    with pytest.raises(GraphError):
        filter_edges(*args, [1, 0], g.num_nodes)
    with pytest.raises(GraphError):
        filter_edges(*args, [0, 0], g.num_nodes)
    with pytest.raises(GraphError):
        filter_edges(*args, [0, 7], g.num_nodes)


def test_induced_subgraph_property():
    rng = np.random.default_rng(1234)
    for _ in range(40):
        g = random_graph(rng)
        k = int(rng.integers(1, g.num_nodes + 1))
        keep = np.sort(rng.choice(g.num_nodes, size=k, replace=False))
        sub, cache = induced_subgraph(g, keep)
        assert np.array_equal(sub.features, g.features[keep])
        assert validate(sub) == []
        keep_set = set(keep.tolist())
        for s, d in zip(cache.src.tolist(), cache.dst.tolist()):
            assert s not in keep_set or d not in keep_set
        assert sub.num_edges + cache.num_edges == g.num_edges


def test_restore_edges_roundtrip_property():
    rng = np.random.default_rng(99)
    for _ in range(40):
        g = random_graph(rng)
        k = int(rng.integers(1, g.num_nodes + 1))
        keep = np.sort(rng.choice(g.num_nodes, size=k, replace=False))
        sub, cache = induced_subgraph(g, keep)
        src, dst, w = restore_edges(sub.edge_src, sub.edge_dst, sub.edge_weight, keep, cache)
        got = sorted(zip(src.tolist(), dst.tolist(), w.tolist()))
        want = sorted(zip(g.edge_src.tolist(), g.edge_dst.tolist(), g.edge_weight.tolist()))
        assert got == want


# --------------------------------------------------------------------------
# batches


def test_graph_batch_offsets():
    rng = np.random.default_rng(7)
    graphs = [random_graph(rng, n_nodes=n, dim=3) for n in (2, 3, 4)]
    batch = GraphBatch.from_graphs(graphs)
    assert np.array_equal(batch.offsets, [0, 2, 5, 9])
    assert batch.total_nodes == 9
    assert len(batch) == 3
    assert np.array_equal(batch.flat_features(), np.concatenate([g.features for g in graphs]))


def test_graph_batch_rejects_bad_offsets():
    rng = np.random.default_rng(8)
    graphs = (random_graph(rng, n_nodes=2, dim=2),)
    with pytest.raises(GraphError):
        GraphBatch(graphs, np.array([0, 3]))
    with pytest.raises(GraphError):
        GraphBatch(graphs, np.array([1, 3]))
    with pytest.raises(GraphError):
        GraphBatch(graphs, np.array([0, 2, 2]))


# --------------------------------------------------------------------------
# binary container


def test_dataset_roundtrip_binary(tmp_path):
    rng = np.random.default_rng(4321)
    for round_ in range(10):
        ds = random_dataset(rng, int(rng.integers(1, 6)), dim=int(rng.integers(1, 5)))
        ds.normalized = bool(round_ % 2)
        path = tmp_path / f"ds{round_}.ggd"
        write_dataset(path, ds)
        back = read_dataset(path)
        assert len(back) == len(ds)
        assert back.normalized == ds.normalized
        for g, h in zip(ds.graphs, back.graphs):
            assert h.label == g.label
            assert h.num_nodes == g.num_nodes
            # container stores float32; the round trip is exact at that width
            assert np.array_equal(h.features, g.features.astype(np.float32).astype(np.float64))
            gs, gd, gw = g.undirected_pairs()
            hs, hd, hw = h.undirected_pairs()
            assert np.array_equal(hs, gs) and np.array_equal(hd, gd)
            assert np.array_equal(hw, gw.astype(np.float32).astype(np.float64))


def test_dataset_rejects_mixed_dims(tmp_path):
    ds = Dataset([
        Graph.from_undirected([[1.0]], []),
        Graph.from_undirected([[1.0, 2.0]], []),
    ])
    with pytest.raises(DataError):
        write_dataset(tmp_path / "bad.ggd", ds)


def test_dataset_read_rejects_corruption(tmp_path):
    rng = np.random.default_rng(5)
    ds = random_dataset(rng, 3, dim=2)
    path = tmp_path / "ok.ggd"
    write_dataset(path, ds)
    raw = path.read_bytes()

    bad_magic = tmp_path / "magic.ggd"
    bad_magic.write_bytes(b"NOTMAGIC" + raw[8:])
    with pytest.raises(DataError):
        read_dataset(bad_magic)

    truncated = tmp_path / "trunc.ggd"
    truncated.write_bytes(raw[:-7])
    with pytest.raises(DataError):
        read_dataset(truncated)

    trailing = tmp_path / "trail.ggd"
    trailing.write_bytes(raw + b"\x00")
    with pytest.raises(DataError):
        read_dataset(trailing)


# --------------------------------------------------------------------------
# text container


def test_debug_text_roundtrip(tmp_path):
    rng = np.random.default_rng(77)
    ds = random_dataset(rng, 4)
    ds.normalized = True
    path = tmp_path / "dump.txt"
    write_debug_text(path, ds)
    back = read_debug_text(path)
    assert back.normalized is True
    assert len(back) == len(ds)
    for g, h in zip(ds.graphs, back.graphs):
        assert h.label == g.label
        assert np.array_equal(h.features, g.features)  # repr round-trips exactly
        assert np.array_equal(h.edge_weight, g.edge_weight)
        assert np.array_equal(h.edge_src, g.edge_src)
        assert np.array_equal(h.edge_dst, g.edge_dst)


def test_debug_text_rejects_garbage(tmp_path):
    path = tmp_path / "garbage.txt"
    path.write_text("# graphs=1 normalized=0\ngraph nodes=1 label=0\nnode 1.0\nwhat 3 4\n")
    with pytest.raises(DataError):
        read_debug_text(path)


def test_edge_cache_counts():
    cache = EdgeCache(np.array([0, 1]), np.array([1, 0]), np.array([1.0, 1.0]))
    assert cache.num_edges == 2
