"""Engine mechanics: graph traversal, accumulation, mode switches, and
the forward semantics of each primitive.  Gradient correctness against
finite differences lives in test_gradcheck."""

import numpy as np
import pytest

from seq2grid import autodiff as ad
from seq2grid.errors import DimensionError, ParameterError


def test_scalar_chain_gradients():
    x = ad.Tensor(3.0, requires_grad=True)
    y = x * x + x            # y = x^2 + x, dy/dx = 2x + 1
    y.backward()
    assert y.item() == pytest.approx(12.0)
    assert x.grad == pytest.approx(7.0)


def test_reused_tensor_accumulates_through_both_paths():
    x = ad.Tensor(2.0, requires_grad=True)
    a = x * 3.0
    b = x * 5.0
    (a + b).backward()
    assert x.grad == pytest.approx(8.0)


def test_diamond_graph_visits_node_once():
    x = ad.Tensor(np.ones(4), requires_grad=True)
    shared = x * 2.0
    loss = (shared * shared).sum()
    loss.backward()
    # d/dx sum((2x)^2) = 8x
    np.testing.assert_allclose(x.grad, 8.0 * np.ones(4))


def test_repeated_backward_accumulates():
    x = ad.Tensor(1.5, requires_grad=True)
    y = x * x
    y.backward()
    first = float(x.grad)
    y.backward()
    assert x.grad == pytest.approx(2 * first)
    x.zero_grad()
    assert x.grad is None


def test_deep_chain_has_no_recursion_limit():
    x = ad.Tensor(1.0, requires_grad=True)
    y = x
    for _ in range(5000):
        y = y + 0.0
    y.backward()
    assert x.grad == pytest.approx(1.0)


def test_backward_rejects_non_scalar():
    x = ad.Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(DimensionError):
        (x * 2.0).backward()


def test_no_grad_blocks_graph_building():
    x = ad.Tensor(2.0, requires_grad=True)
    with ad.no_grad():
        y = x * x
    assert not y.requires_grad
    z = x * x
    assert z.requires_grad


def test_detach_stops_gradient_flow():
    x = ad.Tensor(2.0, requires_grad=True)
    y = x.detach() * x
    y.backward()
    assert x.grad == pytest.approx(2.0)


def test_constant_inputs_get_no_gradient():
    x = ad.Tensor(2.0)
    y = ad.Tensor(3.0, requires_grad=True)
    (x * y).backward()
    assert x.grad is None
    assert y.grad == pytest.approx(2.0)


# ---- primitive forward semantics ----------------------------------------------


def test_matmul_matches_numpy(rng):
    a = rng.standard_normal((4, 5))
    b = rng.standard_normal((5, 3))
    out = ad.matmul(ad.Tensor(a), ad.Tensor(b))
    np.testing.assert_allclose(out.data, a @ b)


def test_broadcast_add_backward_sums_over_broadcast_axes():
    a = ad.Tensor(np.zeros((3, 4)), requires_grad=True)
    b = ad.Tensor(np.zeros(4), requires_grad=True)
    ((a + b).sum()).backward()
    assert a.grad.shape == (3, 4)
    assert b.grad.shape == (4,)
    np.testing.assert_allclose(b.grad, 3.0 * np.ones(4))


def test_softmax_rows_are_distributions(rng):
    x = rng.standard_normal((6, 5)) * 4
    p = ad.softmax(ad.Tensor(x)).data
    np.testing.assert_allclose(p.sum(axis=-1), np.ones(6), atol=1e-12)
    assert (p > 0).all()


def test_softmax_is_shift_invariant(rng):
    x = rng.standard_normal(7)
    a = ad.softmax(ad.Tensor(x)).data
    b = ad.softmax(ad.Tensor(x + 500.0)).data
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_cross_entropy_matches_log_softmax(rng):
    logits = rng.standard_normal((5, 9))
    idx = np.array([0, 3, 8, 1, 1])
    loss = ad.cross_entropy(ad.Tensor(logits), idx).item()
    shifted = logits - logits.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    want = -logp[np.arange(5), idx].mean()
    assert loss == pytest.approx(want, abs=1e-12)


def test_relu_subgradient_at_zero_is_zero():
    x = ad.Tensor(np.array([-1.0, 0.0, 2.0]), requires_grad=True)
    ad.relu(x).sum().backward()
    np.testing.assert_allclose(x.grad, [0.0, 0.0, 1.0])


def test_max_pool2d_routes_gradient_to_argmax():
    x = ad.Tensor(np.arange(16.0).reshape(1, 1, 4, 4), requires_grad=True)
    y = ad.max_pool2d(x, (4, 4))
    assert y.item() == 15.0
    y.sum().backward()
    want = np.zeros((1, 1, 4, 4))
    want[0, 0, 3, 3] = 1.0
    np.testing.assert_allclose(x.grad, want)


def test_max_pool2d_window_must_cover_input():
    x = ad.Tensor(np.zeros((1, 1, 4, 4)))
    with pytest.raises(ParameterError):
        ad.max_pool2d(x, (3, 3))


def test_embedding_scatters_gradients_per_row():
    table = ad.Tensor(np.zeros((5, 3)), requires_grad=True)
    ids = np.array([1, 1, 4])
    out = ad.embedding(table, ids)
    (out.sum()).backward()
    want = np.zeros((5, 3))
    want[1] = 2.0
    want[4] = 1.0
    np.testing.assert_allclose(table.grad, want)


def test_take_gathers_and_scatters(rng):
    x = ad.Tensor(rng.standard_normal((4, 3)), requires_grad=True)
    idx = np.array([2, 0, 2])
    y = ad.take(x, idx)
    np.testing.assert_allclose(y.data, x.data[idx])
    y.sum().backward()
    np.testing.assert_allclose(x.grad[2], 2.0 * np.ones(3))
    np.testing.assert_allclose(x.grad[1], np.zeros(3))


def test_reshape_transpose_concat_round_trip(rng):
    x = ad.Tensor(rng.standard_normal((2, 6)), requires_grad=True)
    y = ad.concat([x.reshape(3, 4).transpose(1, 0), ad.Tensor(np.ones((4, 3)))],
                  axis=1)
    assert y.shape == (4, 6)
    y.sum().backward()
    np.testing.assert_allclose(x.grad, np.ones((2, 6)))


def test_dropout_semantics(rng):
    x = ad.Tensor(np.ones((100, 8)), requires_grad=True)
    kept = ad.dropout(x, 0.4, True, rng)
    values = np.unique(kept.data.round(12))
    # inverted dropout: zeros and 1/(1-rate)
    np.testing.assert_allclose(values, [0.0, 1.0 / 0.6])
    off = ad.dropout(x, 0.4, False, rng)
    np.testing.assert_allclose(off.data, x.data)
    with pytest.raises(ParameterError):
        ad.dropout(x, 1.0, True, rng)
    with pytest.raises(ParameterError):
        ad.dropout(x, 0.4, True, None)


def test_dropout_zero_rate_is_identity(rng):
    x = ad.Tensor(np.ones(50))
    np.testing.assert_allclose(ad.dropout(x, 0.0, True, rng).data, x.data)


def test_matmul_shape_mismatch_raises():
    with pytest.raises(DimensionError):
        ad.matmul(ad.Tensor(np.ones((2, 3))), ad.Tensor(np.ones((4, 2))))


def test_conv2d_channel_mismatch_raises():
    x = ad.Tensor(np.ones((1, 3, 5, 5)))
    w = ad.Tensor(np.ones((2, 4, 3, 3)))
    with pytest.raises(DimensionError):
        ad.conv2d(x, w)


def test_conv2d_1x1_is_channel_mixing(rng):
    x = rng.standard_normal((2, 3, 4, 5))
    w = rng.standard_normal((6, 3, 1, 1))
    y = ad.conv2d(ad.Tensor(x), ad.Tensor(w)).data
    want = np.einsum("bchw,oc->bohw", x, w[:, :, 0, 0])
    np.testing.assert_allclose(y, want, atol=1e-12)


def test_conv2d_even_kernel_preserves_shape(rng):
    x = rng.standard_normal((1, 2, 4, 6))
    w = rng.standard_normal((3, 2, 2, 2))
    assert ad.conv2d(ad.Tensor(x), ad.Tensor(w)).shape == (1, 3, 4, 6)


def test_grid_step_propagates_to_all_inputs(rng):
    g = ad.Tensor(rng.standard_normal((2, 3, 4, 5)), requires_grad=True)
    e = ad.Tensor(rng.standard_normal((2, 5)), requires_grad=True)
    a = ad.Tensor(rng.random((2, 3)), requires_grad=True)
    ad.grid_step(g, e, a).sum().backward()
    assert g.grad.shape == g.shape
    assert e.grad.shape == e.shape
    assert a.grad.shape == a.shape
    assert np.any(a.grad != 0.0)


def test_trace_kinks_records_relu_and_pool_margins():
    margins = []
    with ad.trace_kinks(margins):
        ad.relu(ad.Tensor(np.array([-0.25, 0.75])))
        ad.max_pool2d(ad.Tensor(np.array([[[[1.0, 3.0], [0.0, 2.5]]]])),
                      (2, 2))
    assert margins[0] == pytest.approx(0.25)   # closest relu input to 0
    assert margins[1] == pytest.approx(0.5)    # top-2 pool gap
    margins.clear()
    ad.relu(ad.Tensor(np.array([0.1])))
    assert margins == []                        # tracing is scoped


def test_xavier_uniform_bounds(rng):
    t = ad.xavier_uniform((200, 50), rng, 50, 200)
    bound = np.sqrt(6.0 / 250.0)
    assert t.requires_grad
    assert np.abs(t.data).max() <= bound
    assert np.abs(t.data).max() > 0.5 * bound
