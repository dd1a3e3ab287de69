"""Reverse-mode engine: per-op gradient checks against central differences,
tape discipline, the Adam update rule, and checkpoint serialization."""

import numpy as np
import pytest

import ggc.autodiff as ad
from ggc.errors import GradientError, ShapeError
from oracles import fd_gradient, rel_err

TOL = 1e-6


def check_gradients(build, seed=0, tol=TOL):
    """build(rng) returns (params dict, forward); forward() re-reads each
    param's .data so finite differences can perturb them in place."""
    rng = np.random.default_rng(seed)
    params, forward = build(rng)
    with ad.Tape():
        loss = forward()
        ad.backward(loss)
    assert loss.data.size == 1
    for name, p in params.items():
        assert p.grad is not None, f"no gradient for {name}"
        fd = fd_gradient(lambda: forward().item(), p.data)
        err = rel_err(p.grad, fd)
        assert err < tol, f"{name}: rel err {err:.2e}"


def _weighted_sum(value, rng):
    """Project an array value to a scalar with fixed random weights so every
    entry's gradient is exercised."""
    w = ad.constant(rng.normal(size=value.data.shape))
    return ad.sum_all(ad.mul(value, w))


# --------------------------------------------------------------------------
# elementwise and matrix ops


def _binary_case(op, broadcast=False):
    def build(rng):
        a = ad.parameter(rng.normal(size=(4, 3)))
        b = ad.parameter(rng.normal(size=(1, 3) if broadcast else (4, 3)))
        return {"a": a, "b": b}, lambda: _weighted_sum(op(a, b), np.random.default_rng(5))

    return build


@pytest.mark.parametrize("op", [ad.add, ad.sub, ad.mul])
def test_binary_ops_gradcheck(op):
    check_gradients(_binary_case(op), seed=11)
    check_gradients(_binary_case(op, broadcast=True), seed=12)


def test_scalar_mul_gradcheck():
    def build(rng):
        a = ad.parameter(rng.normal(size=(3, 2)))
        return {"a": a}, lambda: ad.sum_all(ad.scalar_mul(a, -2.5))

    check_gradients(build, seed=13)


def test_matmul_gradcheck():
    def build(rng):
        a = ad.parameter(rng.normal(size=(4, 3)))
        b = ad.parameter(rng.normal(size=(3, 5)))
        return {"a": a, "b": b}, lambda: _weighted_sum(
            ad.matmul(a, b), np.random.default_rng(6)
        )

    check_gradients(build, seed=14)


@pytest.mark.parametrize(
    "op, transform",
    [
        (ad.tanh, lambda z: z),
        (ad.sigmoid, lambda z: z),
        (ad.relu, lambda z: z + np.sign(z) * 0.2),  # keep clear of the kink
        (ad.log, lambda z: np.abs(z) + 0.5),
    ],
)
def test_unary_ops_gradcheck(op, transform):
    def build(rng):
        a = ad.parameter(transform(rng.normal(size=(4, 3))))
        return {"a": a}, lambda: _weighted_sum(op(a), np.random.default_rng(7))

    check_gradients(build, seed=15)


def test_clip_gradcheck_and_flat_regions():
    def build(rng):
        # values well inside and well outside the clip window, away from edges
        data = np.array([[0.3, 0.7, 1.9], [-1.4, 0.05, 0.95]])
        a = ad.parameter(data)
        return {"a": a}, lambda: _weighted_sum(
            ad.clip(a, 0.0, 1.0), np.random.default_rng(8)
        )

    check_gradients(build, seed=16)
    # clipped entries must receive exactly zero gradient
    a = ad.parameter(np.array([[2.0, -3.0, 0.5]]))
    with ad.Tape():
        ad.backward(ad.sum_all(ad.clip(a, 0.0, 1.0)))
    assert np.array_equal(a.grad, [[0.0, 0.0, 1.0]])


@pytest.mark.parametrize("op", [ad.mean_rows, ad.sum_rows, ad.sum_cols, ad.mean_all, ad.sum_all])
def test_reductions_gradcheck(op):
    def build(rng):
        a = ad.parameter(rng.normal(size=(5, 3)))
        return {"a": a}, lambda: _weighted_sum(op(a), np.random.default_rng(9))

    check_gradients(build, seed=17)


def test_select_and_scatter_rows_gradcheck():
    idx = np.array([0, 2, 3])

    def build_select(rng):
        a = ad.parameter(rng.normal(size=(5, 2)))
        return {"a": a}, lambda: _weighted_sum(
            ad.select_rows(a, idx), np.random.default_rng(10)
        )

    def build_scatter(rng):
        a = ad.parameter(rng.normal(size=(3, 2)))
        return {"a": a}, lambda: _weighted_sum(
            ad.scatter_rows(a, idx, 6), np.random.default_rng(11)
        )

    check_gradients(build_select, seed=18)
    check_gradients(build_scatter, seed=19)


def test_scatter_rows_places_zeros():
    a = ad.constant(np.array([[1.0], [2.0]]))
    out = ad.scatter_rows(a, np.array([1, 3]), 4)
    assert np.array_equal(out.data, [[0.0], [1.0], [0.0], [2.0]])


def test_stack_scalars_gradcheck():
    def build(rng):
        a = ad.parameter(rng.normal(size=(2, 2)))
        b = ad.parameter(rng.normal(size=(2, 2)))

        def forward():
            stacked = ad.stack_scalars([ad.mean_all(a), ad.sum_all(b), ad.mean_all(b)])
            return _weighted_sum(stacked, np.random.default_rng(12))

        return {"a": a, "b": b}, forward

    check_gradients(build, seed=20)


# --------------------------------------------------------------------------
# graph aggregation ops


_SRC = np.array([0, 1, 1, 2, 2, 3])
_DST = np.array([1, 0, 2, 1, 3, 2])
_W = np.array([0.5, 0.5, 1.5, 1.5, 0.75, 0.75])


@pytest.mark.parametrize(
    "agg",
    [
        lambda x: ad.neighborhood_mean(x, _SRC, _DST),
        lambda x: ad.neighborhood_sum(x, _SRC, _DST),
        lambda x: ad.degree_normalized_aggregate(x, _SRC, _DST, _W),
    ],
)
def test_graph_aggregation_gradcheck(agg):
    def build(rng):
        x = ad.parameter(rng.normal(size=(5, 3)))  # node 4 is isolated
        return {"x": x}, lambda: _weighted_sum(agg(x), np.random.default_rng(13))

    check_gradients(build, seed=21)


def test_neighborhood_mean_isolated_rows_are_zero():
    x = ad.constant(np.ones((4, 2)))
    out = ad.neighborhood_mean(x, np.array([0, 1]), np.array([1, 0]))
    assert np.array_equal(out.data[2], [0.0, 0.0])
    assert np.array_equal(out.data[3], [0.0, 0.0])
    assert np.array_equal(out.data[0], [1.0, 1.0])


def test_neighborhood_mean_averages():
    x = ad.constant(np.array([[1.0], [5.0], [9.0]]))
    src = np.array([0, 2, 1, 1])
    dst = np.array([1, 1, 0, 2])
    out = ad.neighborhood_mean(x, src, dst)
    assert np.allclose(out.data, [[5.0], [5.0], [5.0]])


def test_degree_normalized_matches_dense_oracle():
    from oracles import dense_degree_normalized

    rng = np.random.default_rng(31)
    for _ in range(20):
        n = int(rng.integers(2, 7))
        x = rng.normal(size=(n, 3))
        pairs = [
            (i, j, float(rng.uniform(0.2, 2.0)))
            for i in range(n)
            for j in range(i + 1, n)
            if rng.random() < 0.7
        ]
        src = np.array([p[0] for p in pairs] + [p[1] for p in pairs], dtype=np.int64)
        dst = np.array([p[1] for p in pairs] + [p[0] for p in pairs], dtype=np.int64)
        w = np.array([p[2] for p in pairs] * 2)
        got = ad.degree_normalized_aggregate(ad.constant(x), src, dst, w).data
        want = dense_degree_normalized(x, src, dst, w, n)
        assert np.allclose(got, want, atol=1e-12)


# --------------------------------------------------------------------------
# tape discipline


def test_ops_work_without_a_tape():
    a = ad.parameter(np.ones((2, 2)))
    out = ad.relu(ad.add(a, a))
    assert np.array_equal(out.data, 2 * np.ones((2, 2)))
    assert out.requires_grad is False and out.tape is None


def test_tapes_do_not_nest():
    with ad.Tape():
        with pytest.raises(GradientError):
            with ad.Tape():
                pass


def test_backward_requires_scalar_recorded_loss():
    a = ad.parameter(np.ones((2, 2)))
    with ad.Tape():
        vec = ad.add(a, a)
        with pytest.raises(GradientError):
            ad.backward(vec)  # not scalar
    untaped = ad.sum_all(ad.add(a, a))
    with pytest.raises(GradientError):
        ad.backward(untaped)  # recorded outside any tape


def test_backward_runs_once_per_tape():
    a = ad.parameter(np.ones(1))
    with ad.Tape():
        loss = ad.sum_all(a)
        ad.backward(loss)
        with pytest.raises(GradientError):
            ad.backward(loss)


def test_values_cannot_cross_tapes():
    a = ad.parameter(np.ones(1))
    with ad.Tape():
        mid = ad.scalar_mul(a, 2.0)
    with ad.Tape():
        with pytest.raises(GradientError):
            ad.sum_all(mid)


def test_gradients_accumulate_across_reuse():
    a = ad.parameter(np.array([3.0]))
    with ad.Tape():
        loss = ad.sum_all(ad.add(a, a))
        ad.backward(loss)
    assert np.array_equal(a.grad, [2.0])


def test_accumulate_ignores_constants():
    c = ad.constant(np.ones(2))
    c.accumulate(np.ones(2))
    assert c.grad is None


def test_zero_grad_clears():
    a = ad.parameter(np.ones(1))
    a.grad = np.ones(1)
    ad.zero_grad({"a": a})
    assert a.grad is None


def test_uniform_init_bounds_and_determinism():
    draw1 = ad.uniform_init((100,), 16, np.random.default_rng(3))
    draw2 = ad.uniform_init((100,), 16, np.random.default_rng(3))
    assert np.array_equal(draw1, draw2)
    assert np.max(np.abs(draw1)) <= 0.25


# --------------------------------------------------------------------------
# Adam


def adam_oracle(data, grads, lr, steps, beta1=0.9, beta2=0.999, eps=1e-8):
    """Textbook Adam with bias correction, written independently."""
    x = data.copy()
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    for t in range(1, steps + 1):
        g = grads[t - 1]
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g**2
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        x = x - lr * m_hat / (np.sqrt(v_hat) + eps)
    return x


def test_adam_matches_oracle():
    rng = np.random.default_rng(44)
    data = rng.normal(size=(3, 2))
    grads = [rng.normal(size=(3, 2)) for _ in range(5)]
    p = ad.parameter(data.copy())
    opt = ad.Adam({"p": p}, lr=0.05)
    for g in grads:
        p.grad = g.copy()
        opt.step()
        opt.zero_grad()
    want = adam_oracle(data, grads, lr=0.05, steps=5)
    assert np.max(np.abs(p.data - want)) < 1e-14


def test_adam_zero_gradient_leaves_params_bit_identical():
    p = ad.parameter(np.array([1.25, -2.5, 3.75]))
    before = p.data.copy()
    opt = ad.Adam({"p": p}, lr=0.1)
    for _ in range(3):
        p.grad = np.zeros(3)
        opt.step()
    assert np.array_equal(p.data, before)
    p.grad = None  # missing gradients count as zero as well
    opt.step()
    assert np.array_equal(p.data, before)


def test_adam_rejects_non_finite_gradient():
    p = ad.parameter(np.ones(2))
    opt = ad.Adam({"p": p}, lr=0.1)
    p.grad = np.array([1.0, np.nan])
    with pytest.raises(GradientError):
        opt.step()


def test_adam_step_rebinds_data():
    p = ad.parameter(np.ones(2))
    snapshot = p.data
    opt = ad.Adam({"p": p}, lr=0.1)
    p.grad = np.ones(2)
    opt.step()
    assert np.array_equal(snapshot, np.ones(2))  # old array untouched
    assert not np.array_equal(p.data, snapshot)


# --------------------------------------------------------------------------
# checkpoints


def test_checkpoint_roundtrip_exact(tmp_path):
    rng = np.random.default_rng(55)
    params = {
        "ae.w": ad.parameter(rng.normal(size=(3, 4))),
        "clf.b": ad.parameter(rng.normal(size=(1, 1))),
        "clf.alpha": ad.parameter(rng.normal(size=2)),
    }
    opt = ad.Adam(params, lr=0.01)
    for _ in range(2):
        for p in params.values():
            p.grad = rng.normal(size=p.data.shape)
        opt.step()
    path = tmp_path / "model.ckpt"
    ad.save_checkpoint(path, params, opt.state)
    arrays, state = ad.load_checkpoint(path)
    assert set(arrays) == set(params)
    for name, p in params.items():
        assert np.array_equal(arrays[name], p.data)
        assert np.array_equal(state.m[name], opt.state.m[name])
        assert np.array_equal(state.v[name], opt.state.v[name])
    assert state.t == opt.state.t


def test_checkpoint_without_optimizer(tmp_path):
    params = {"w": ad.parameter(np.arange(6.0).reshape(2, 3))}
    path = tmp_path / "plain.ckpt"
    ad.save_checkpoint(path, params)
    arrays, state = ad.load_checkpoint(path)
    assert state is None
    assert np.array_equal(arrays["w"], params["w"].data)


def test_load_into_validates(tmp_path):
    params = {"w": ad.parameter(np.ones((2, 2)))}
    path = tmp_path / "model.ckpt"
    ad.save_checkpoint(path, params)
    arrays, _ = ad.load_checkpoint(path)

    target = {"w": ad.parameter(np.zeros((2, 2)))}
    ad.load_into(target, arrays)
    assert np.array_equal(target["w"].data, np.ones((2, 2)))

    with pytest.raises(ShapeError):
        ad.load_into({"w": ad.parameter(np.zeros((3, 2)))}, arrays)
    with pytest.raises(ShapeError):
        ad.load_into({"missing": ad.parameter(np.zeros(1))}, arrays)


def test_load_checkpoint_rejects_bad_magic(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"NOTACKPT" + b"\x00" * 16)
    with pytest.raises(ShapeError):
        ad.load_checkpoint(path)


def test_item_requires_scalar():
    with pytest.raises(ShapeError):
        ad.constant(np.ones(3)).item()
