"""Unidirectional multi-layer GRU encoder with a 3-way action head.

The encoder walks the embedded input left to right; at every step the
top layer's hidden state passes through a dense layer and a softmax to
produce the (update, push, noop) action distribution for that step.
The encoder never reads the grid.
"""

import numpy as np

from . import autodiff as ad
from .errors import DimensionError, ParameterError

GATE_NAMES = ("z", "r", "h")


def init_encoder_params(rng, input_dim, hidden, layers):
    """Flat name->Tensor dict for an L-layer GRU plus the action head."""
    params = {}
    for layer in range(layers):
        fan_in = input_dim if layer == 0 else hidden
        for gate in GATE_NAMES:
            params[f"enc.l{layer}.W_{gate}"] = ad.xavier_uniform(
                (fan_in, hidden), rng, fan_in, hidden
            )
            params[f"enc.l{layer}.U_{gate}"] = ad.xavier_uniform(
                (hidden, hidden), rng, hidden, hidden
            )
            params[f"enc.l{layer}.b_{gate}"] = ad.zeros((hidden,))
    params["enc.action.W"] = ad.xavier_uniform((hidden, 3), rng, hidden, 3)
    params["enc.action.b"] = ad.zeros((3,))
    return params


def layer_params(params, layer):
    prefix = f"enc.l{layer}."
    return {k[len(prefix):]: v for k, v in params.items() if k.startswith(prefix)}


def gru_cell(x, state, params):
    """One GRU step: z=sig(Wx+Us+b), r=sig(...), cand=tanh(W_h x+U_h(r*s)+b_h),
    s' = (1-z)*s + z*cand.  Accepts (h,) vectors or (B, h) batches."""
    x = ad.as_tensor(x)
    state = ad.as_tensor(state)
    single = x.ndim == 1
    if single:
        x = x.reshape(1, x.shape[0])
        state = state.reshape(1, state.shape[0])
    if x.ndim != 2 or state.ndim != 2:
        raise DimensionError(f"gru_cell: bad ranks {x.shape}, {state.shape}")
    if x.shape[1] != params["W_z"].shape[0] or state.shape[1] != params["U_z"].shape[0]:
        raise DimensionError(
            f"gru_cell: input {x.shape} / state {state.shape} do not match parameters"
        )
    z = ad.sigmoid(x @ params["W_z"] + state @ params["U_z"] + params["b_z"])
    r = ad.sigmoid(x @ params["W_r"] + state @ params["U_r"] + params["b_r"])
    cand = ad.tanh(x @ params["W_h"] + (r * state) @ params["U_h"] + params["b_h"])
    new = (1.0 - z) * state + z * cand
    return new.reshape(new.shape[1]) if single else new


def encode_actions(embeddings, params, layers):
    """Action rows for every timestep.

    ``embeddings`` is (T, h) or batched (B, T, h); the result matches
    with a trailing axis of 3.  Input projections for all steps run as
    one matmul per gate per layer; only the recurrences loop over time.
    """
    embeddings = ad.as_tensor(embeddings)
    single = embeddings.ndim == 2
    x = embeddings.reshape((1,) + embeddings.shape) if single else embeddings
    if x.ndim != 3:
        raise DimensionError(f"encode_actions: bad rank {embeddings.shape}")
    b, t, _ = x.shape
    if t < 1:
        raise ParameterError("encode_actions: empty sequence")
    hidden = params["enc.l0.U_z"].shape[0]
    for layer in range(layers):
        p = layer_params(params, layer)
        flat = x.reshape(b * t, x.shape[2])
        proj = {g: (flat @ p[f"W_{g}"] + p[f"b_{g}"]).reshape(b, t, hidden)
                for g in GATE_NAMES}
        state = ad.Tensor(np.zeros((b, hidden)))
        steps = []
        for i in range(t):
            z = ad.sigmoid(proj["z"][:, i] + state @ p["U_z"])
            r = ad.sigmoid(proj["r"][:, i] + state @ p["U_r"])
            cand = ad.tanh(proj["h"][:, i] + (r * state) @ p["U_h"])
            state = (1.0 - z) * state + z * cand
            steps.append(state.reshape(b, 1, hidden))
        x = ad.concat(steps, axis=1)
    logits = x.reshape(b * t, hidden) @ params["enc.action.W"] + params["enc.action.b"]
    actions = ad.softmax(logits, axis=-1).reshape(b, t, 3)
    return actions.reshape(t, 3) if single else actions
