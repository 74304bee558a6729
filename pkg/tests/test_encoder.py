"""GRU encoder semantics, verified against a plain per-step reference
computed with raw numpy."""

import numpy as np
import pytest

from seq2grid import autodiff as ad
from seq2grid.encoder import (encode_actions, gru_cell, init_encoder_params,
                              layer_params)
from seq2grid.errors import DimensionError, ParameterError


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def reference_actions(x, params, layers):
    """Straight loop over time and layers with numpy arrays."""
    p = {k: v.data for k, v in params.items()}
    b, t, _ = x.shape
    hidden = p["enc.l0.U_z"].shape[0]
    for layer in range(layers):
        w = lambda g: p[f"enc.l{layer}.W_{g}"]
        u = lambda g: p[f"enc.l{layer}.U_{g}"]
        bias = lambda g: p[f"enc.l{layer}.b_{g}"]
        state = np.zeros((b, hidden))
        outs = np.zeros((b, t, hidden))
        for i in range(t):
            xi = x[:, i]
            z = sigmoid(xi @ w("z") + state @ u("z") + bias("z"))
            r = sigmoid(xi @ w("r") + state @ u("r") + bias("r"))
            cand = np.tanh(xi @ w("h") + (r * state) @ u("h") + bias("h"))
            state = (1.0 - z) * state + z * cand
            outs[:, i] = state
        x = outs
    logits = x @ p["enc.action.W"] + p["enc.action.b"]
    e = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def test_encode_actions_matches_reference(rng):
    for layers in (1, 2, 3):
        params = init_encoder_params(rng, 5, 7, layers)
        x = rng.standard_normal((2, 6, 5))
        got = encode_actions(x, params, layers).data
        want = reference_actions(x, params, layers)
        assert np.max(np.abs(got - want)) <= 1e-12


def test_action_rows_are_distributions(rng):
    params = init_encoder_params(rng, 4, 6, 2)
    out = encode_actions(rng.standard_normal((3, 9, 4)), params, 2).data
    np.testing.assert_allclose(out.sum(axis=-1), np.ones((3, 9)), atol=1e-12)
    assert (out > 0).all()


def test_single_sequence_shape(rng):
    params = init_encoder_params(rng, 4, 6, 1)
    out = encode_actions(rng.standard_normal((5, 4)), params, 1)
    assert out.shape == (5, 3)


def test_gru_cell_single_equals_batch_row(rng):
    params = layer_params(init_encoder_params(rng, 4, 6, 1), 0)
    x = rng.standard_normal((3, 4))
    s = rng.standard_normal((3, 6))
    batch = gru_cell(x, s, params).data
    for i in range(3):
        row = gru_cell(x[i], s[i], params).data
        np.testing.assert_allclose(row, batch[i], atol=1e-12)


def test_gru_cell_zero_update_gate_keeps_state(rng):
    """Saturating z to 0 freezes the state regardless of input."""
    params = layer_params(init_encoder_params(rng, 4, 6, 1), 0)
    params["W_z"] = ad.Tensor(np.zeros((4, 6)))
    params["U_z"] = ad.Tensor(np.zeros((6, 6)))
    params["b_z"] = ad.Tensor(np.full(6, -40.0))
    s = rng.standard_normal(6)
    out = gru_cell(rng.standard_normal(4), s, params).data
    np.testing.assert_allclose(out, s, atol=1e-12)


def test_gru_cell_shape_errors(rng):
    params = layer_params(init_encoder_params(rng, 4, 6, 1), 0)
    with pytest.raises(DimensionError):
        gru_cell(np.zeros(5), np.zeros(6), params)
    with pytest.raises(DimensionError):
        gru_cell(np.zeros((1, 4)), np.zeros((1, 7)), params)


def test_encode_actions_rejects_empty_sequence(rng):
    params = init_encoder_params(rng, 4, 6, 1)
    with pytest.raises(ParameterError):
        encode_actions(np.zeros((1, 0, 4)), params, 1)


def test_encoder_gradients_flow_to_first_layer(rng):
    params = init_encoder_params(rng, 4, 5, 2)
    x = ad.Tensor(rng.standard_normal((1, 6, 4)), requires_grad=True)
    encode_actions(x, params, 2).sum().backward()
    assert params["enc.l0.W_z"].grad is not None
    assert np.any(params["enc.l0.W_z"].grad != 0.0)
    assert np.any(x.grad != 0.0)
