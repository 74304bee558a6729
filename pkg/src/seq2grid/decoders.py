"""Heads that consume a grid: a residual-CNN sequence decoder and a
windowed-convolution classifier.

The sequence head treats the slot dimension as channels over the H x W
field, runs stacked bottleneck blocks, keeps only the top row, and maps
each column to vocabulary logits through one shared dense layer.
Targets are written into the grid columns flipped: reversed and padded
with the empty symbol to exactly W, so the least significant digit sits
at a fixed column.  The classifier head runs k x k convolutions for
k in {2, 3, 4}, max-pools each globally, and classifies the pooled
concatenation.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import CapacityError, DimensionError


@dataclass(frozen=True)
class CnnHeadConfig:
    vocab_out: int
    stacks: int = 3
    bottleneck_channels: int = 32
    expanded_channels: int = 64


@dataclass(frozen=True)
class TextCnnHeadConfig:
    n_labels: int
    kernel_sizes: tuple = (2, 3, 4)
    channels: int = 128
    dropout: float = 0.4


def _conv_init(rng, c_out, c_in, k):
    fan_in = c_in * k * k
    fan_out = c_out * k * k
    return ad.xavier_uniform((c_out, c_in, k, k), rng, fan_in, fan_out)


def init_cnn_head_params(rng, slot_dim, config):
    params = {
        "cnn.stem.w": _conv_init(rng, config.expanded_channels, slot_dim, 1),
        "cnn.stem.b": ad.zeros((config.expanded_channels,)),
    }
    for s in range(config.stacks):
        p = f"cnn.block{s}."
        params[p + "w1"] = _conv_init(rng, config.bottleneck_channels,
                                      config.expanded_channels, 1)
        params[p + "b1"] = ad.zeros((config.bottleneck_channels,))
        params[p + "w2"] = _conv_init(rng, config.bottleneck_channels,
                                      config.bottleneck_channels, 3)
        params[p + "b2"] = ad.zeros((config.bottleneck_channels,))
        params[p + "w3"] = _conv_init(rng, config.expanded_channels,
                                      config.bottleneck_channels, 1)
        params[p + "b3"] = ad.zeros((config.expanded_channels,))
    params["cnn.logit.w"] = ad.xavier_uniform(
        (config.expanded_channels, config.vocab_out),
        rng, config.expanded_channels, config.vocab_out)
    params["cnn.logit.b"] = ad.zeros((config.vocab_out,))
    return params


def _bias(b):
    return b.reshape(b.shape[0], 1, 1)


def bottleneck_block(x, params, prefix):
    """1x1 reduce, 3x3, 1x1 expand with relu between, identity skip,
    relu on the sum.  Spatial shape and channel count are preserved."""
    y = ad.relu(ad.conv2d(x, params[prefix + "w1"]) + _bias(params[prefix + "b1"]))
    y = ad.relu(ad.conv2d(y, params[prefix + "w2"]) + _bias(params[prefix + "b2"]))
    y = ad.conv2d(y, params[prefix + "w3"]) + _bias(params[prefix + "b3"])
    return ad.relu(x + y)


def cnn_forward(grid_slots, config, params):
    """Logits over (column, vocab) for a grid or a batch of grids.

    Input is (H, W, h) or (B, H, W, h) with slot vectors last; output is
    (W, V_out) or (B, W, V_out)."""
    slots = ad.as_tensor(grid_slots)
    single = slots.ndim == 3
    if single:
        slots = slots.reshape((1,) + slots.shape)
    if slots.ndim != 4:
        raise DimensionError(f"cnn_forward: bad grid rank {slots.shape}")
    b, height, width, _ = slots.shape
    x = slots.transpose(0, 3, 1, 2)
    x = ad.relu(ad.conv2d(x, params["cnn.stem.w"]) + _bias(params["cnn.stem.b"]))
    for s in range(config.stacks):
        x = bottleneck_block(x, params, f"cnn.block{s}.")
    top = x[:, :, 0, :]                       # only the top list feeds the logits
    cols = top.transpose(0, 2, 1).reshape(b * width, config.expanded_channels)
    logits = cols @ params["cnn.logit.w"] + params["cnn.logit.b"]
    logits = logits.reshape(b, width, config.vocab_out)
    return logits.reshape(width, config.vocab_out) if single else logits


def prepare_target(target_tokens, width, vocab):
    """Strip the trailing $, reverse, pad with the empty symbol to
    exactly ``width`` ids.  Longer targets reject the instance."""
    tokens = list(target_tokens)
    if tokens and tokens[-1] == vocab.eos_token:
        tokens = tokens[:-1]
    if len(tokens) > width:
        raise CapacityError(
            f"target of length {len(tokens)} exceeds grid width {width}"
        )
    flipped = list(reversed(tokens))
    ids = [vocab.id(t) for t in flipped]
    ids.extend([vocab.null_id] * (width - len(ids)))
    return ids


def decode_readout(logits, vocab):
    """Argmax per column, collect until the first empty symbol, then
    un-flip and close with $.  Lowest index wins argmax ties."""
    arr = logits.data if isinstance(logits, ad.Tensor) else np.asarray(logits)
    picks = arr.argmax(axis=-1)
    collected = []
    for pick in picks:
        if pick == vocab.null_id:
            break
        collected.append(vocab.token(int(pick)))
    return "".join(reversed(collected)) + vocab.eos_token


def init_textcnn_params(rng, slot_dim, config):
    params = {}
    for k in config.kernel_sizes:
        params[f"textcnn.k{k}.w"] = _conv_init(rng, config.channels, slot_dim, k)
        params[f"textcnn.k{k}.b"] = ad.zeros((config.channels,))
    total = config.channels * len(config.kernel_sizes)
    params["textcnn.dense.w"] = ad.xavier_uniform(
        (total, config.n_labels), rng, total, config.n_labels)
    params["textcnn.dense.b"] = ad.zeros((config.n_labels,))
    return params


def textcnn_forward(grid_slots, config, params, training=False, rng=None):
    """Label logits for a grid or grid batch: per kernel size, same-
    padded conv then relu then global max pool; concatenate; dropout in
    training; dense to labels."""
    slots = ad.as_tensor(grid_slots)
    single = slots.ndim == 3
    if single:
        slots = slots.reshape((1,) + slots.shape)
    b, height, width, _ = slots.shape
    x = slots.transpose(0, 3, 1, 2)
    pooled = []
    for k in config.kernel_sizes:
        y = ad.relu(ad.conv2d(x, params[f"textcnn.k{k}.w"])
                    + _bias(params[f"textcnn.k{k}.b"]))
        y = ad.max_pool2d(y, (height, width))
        pooled.append(y.reshape(b, config.channels))
    features = ad.concat(pooled, axis=1)
    if training:
        features = ad.dropout(features, config.dropout, True, rng)
    logits = features @ params["textcnn.dense.w"] + params["textcnn.dense.b"]
    return logits.reshape(config.n_labels) if single else logits
