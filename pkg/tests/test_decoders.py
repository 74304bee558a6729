"""Both grid readers: the residual CNN sequence head and the windowed
convolution classifier, plus the flipped-and-padded target codec."""

import numpy as np
import pytest

from seq2grid import autodiff as ad
from seq2grid import decoders
from seq2grid.errors import CapacityError


def make_cnn(rng, vocab_size, slot_dim=6):
    config = decoders.CnnHeadConfig(vocab_out=vocab_size, stacks=2,
                                    bottleneck_channels=4,
                                    expanded_channels=8)
    params = decoders.init_cnn_head_params(rng, slot_dim, config)
    return config, params


def make_textcnn(rng, n_labels=4, slot_dim=6):
    config = decoders.TextCnnHeadConfig(n_labels=n_labels,
                                        kernel_sizes=(2, 3), channels=5,
                                        dropout=0.4)
    params = decoders.init_textcnn_params(rng, slot_dim, config)
    return config, params


# ---- target codec --------------------------------------------------------------


def test_prepare_target_flips_and_pads(digit_vocab):
    ids = decoders.prepare_target(list("123$"), 6, digit_vocab)
    tokens = [digit_vocab.token(i) for i in ids]
    assert tokens == ["3", "2", "1", "∅", "∅", "∅"]


def test_prepare_target_without_eos(digit_vocab):
    ids = decoders.prepare_target(list("45"), 4, digit_vocab)
    assert [digit_vocab.token(i) for i in ids] == ["5", "4", "∅", "∅"]


def test_prepare_target_rejects_overflow(digit_vocab):
    with pytest.raises(CapacityError):
        decoders.prepare_target(list("12345$"), 4, digit_vocab)


def test_target_round_trip(digit_vocab, pyrng):
    """decode_readout on one-hot logits of prepared ids is an identity
    on the original string (with $ restored)."""
    chars = "0123456789-"
    for _ in range(300):
        n = pyrng.randint(1, 8)
        text = "".join(pyrng.choice(chars) for _ in range(n))
        target = text + "$"
        ids = decoders.prepare_target(list(target), 8, digit_vocab)
        logits = np.zeros((8, len(digit_vocab)))
        logits[np.arange(8), ids] = 1.0
        assert decoders.decode_readout(logits, digit_vocab) == target


def test_decode_readout_stops_at_first_empty(digit_vocab):
    v = len(digit_vocab)
    ids = [digit_vocab.id("7"), digit_vocab.null_id, digit_vocab.id("9")]
    logits = np.zeros((3, v))
    logits[np.arange(3), ids] = 1.0
    assert decoders.decode_readout(logits, digit_vocab) == "7$"


def test_decode_readout_all_empty_is_bare_eos(digit_vocab):
    logits = np.zeros((4, len(digit_vocab)))
    logits[:, digit_vocab.null_id] = 1.0
    assert decoders.decode_readout(logits, digit_vocab) == "$"


# ---- sequence head -------------------------------------------------------------


def test_cnn_forward_shapes(rng):
    config, params = make_cnn(rng, vocab_size=11)
    single = decoders.cnn_forward(rng.standard_normal((3, 5, 6)), config,
                                  params)
    assert single.shape == (5, 11)
    batch = decoders.cnn_forward(rng.standard_normal((2, 3, 5, 6)), config,
                                 params)
    assert batch.shape == (2, 5, 11)


def test_cnn_forward_batch_equals_single(rng):
    config, params = make_cnn(rng, vocab_size=9)
    grids = rng.standard_normal((3, 2, 4, 6))
    batch = decoders.cnn_forward(grids, config, params).data
    for i in range(3):
        one = decoders.cnn_forward(grids[i], config, params).data
        np.testing.assert_allclose(one, batch[i], atol=1e-12)


def test_cnn_head_reads_only_top_list(rng):
    """With no residual stacks the receptive field is 1x1, so the
    logits depend on the top list alone; rows below must not leak."""
    config = decoders.CnnHeadConfig(vocab_out=7, stacks=0,
                                    bottleneck_channels=4,
                                    expanded_channels=8)
    params = decoders.init_cnn_head_params(rng, 6, config)
    base = rng.standard_normal((2, 3, 6))
    changed = base.copy()
    changed[1] += 1.0                     # rows below the top list
    a = decoders.cnn_forward(base, config, params).data
    b = decoders.cnn_forward(changed, config, params).data
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_column_logits_share_one_dense_layer(rng):
    """Permuting grid columns permutes the logits identically, because
    every column goes through the same readout weights."""
    config = decoders.CnnHeadConfig(vocab_out=7, stacks=0,
                                    bottleneck_channels=4,
                                    expanded_channels=8)
    params = decoders.init_cnn_head_params(rng, 6, config)
    grid = rng.standard_normal((1, 4, 6))
    perm = [2, 0, 3, 1]
    direct = decoders.cnn_forward(grid[:, perm], config, params).data
    permuted = decoders.cnn_forward(grid, config, params).data[perm]
    np.testing.assert_allclose(direct, permuted, atol=1e-12)


def test_bottleneck_block_preserves_shape_and_skips(rng):
    config, params = make_cnn(rng, vocab_size=5)
    x = ad.Tensor(rng.standard_normal((1, 8, 3, 4)))
    y = decoders.bottleneck_block(x, params, "cnn.block0.")
    assert y.shape == x.shape
    # zeroing the residual branch leaves relu(x)
    zeroed = {k: (ad.Tensor(np.zeros_like(v.data))
                  if k.startswith("cnn.block0.") else v)
              for k, v in params.items()}
    out = decoders.bottleneck_block(x, zeroed, "cnn.block0.")
    np.testing.assert_allclose(out.data, np.maximum(x.data, 0.0))


# ---- classification head -------------------------------------------------------


def test_textcnn_shapes(rng):
    config, params = make_textcnn(rng)
    single = decoders.textcnn_forward(rng.standard_normal((4, 8, 6)),
                                      config, params)
    assert single.shape == (4,)
    batch = decoders.textcnn_forward(rng.standard_normal((3, 4, 8, 6)),
                                     config, params)
    assert batch.shape == (3, 4)


def test_textcnn_eval_mode_is_deterministic(rng):
    config, params = make_textcnn(rng)
    x = rng.standard_normal((2, 4, 8, 6))
    a = decoders.textcnn_forward(x, config, params, training=False).data
    b = decoders.textcnn_forward(x, config, params, training=False).data
    np.testing.assert_allclose(a, b)


def test_textcnn_dropout_only_in_training(rng):
    config, params = make_textcnn(rng)
    x = rng.standard_normal((2, 4, 8, 6))
    eval_out = decoders.textcnn_forward(x, config, params).data
    seeded = decoders.textcnn_forward(
        x, config, params, training=True,
        rng=np.random.default_rng(0)).data
    repeat = decoders.textcnn_forward(
        x, config, params, training=True,
        rng=np.random.default_rng(0)).data
    np.testing.assert_allclose(seeded, repeat)
    assert np.max(np.abs(seeded - eval_out)) > 0.0


def test_textcnn_max_pool_is_position_invariant(rng):
    """Global pooling: translating the only nonzero column must keep
    each kernel's pooled features except at the borders, so compare two
    interior placements."""
    config, params = make_textcnn(rng, slot_dim=6)
    grid = np.zeros((4, 9, 6))
    pattern = rng.standard_normal(6)
    a = grid.copy()
    a[1, 3] = pattern
    b = grid.copy()
    b[1, 5] = pattern
    fa = decoders.textcnn_forward(a, config, params).data
    fb = decoders.textcnn_forward(b, config, params).data
    np.testing.assert_allclose(fa, fb, atol=1e-12)
