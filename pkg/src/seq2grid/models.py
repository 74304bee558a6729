"""Model assembly: embedding + encoder + grid + head, as parameter
dictionaries plus pure forward/loss functions.

Three heads exist: ``cnn`` decodes the grid into a token sequence,
``textcnn`` classifies it, and ``grid`` feeds a pre-aligned token grid
straight to the CNN head with no encoder (the manual-alignment
baseline for the toy addition task).
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import decoders, grid
from .encoder import init_encoder_params
from .errors import ConfigError, DimensionError, StateError
from .tasks.vocab import NULL_ID, PAD_ID

EMBED_KEY = "embed.table"
SEQUENCE_HEAD, CLASSIFIER_HEAD, GRID_HEAD = "cnn", "textcnn", "grid"


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    head: str = SEQUENCE_HEAD
    slot_dim: int = 64
    enc_hidden: int = 128
    enc_layers: int = 3
    grid_height: int = 3
    grid_width: int = 25
    n_labels: int = 0
    cnn_stacks: int = 3
    cnn_bottleneck: int = 32
    cnn_expanded: int = 64
    textcnn_channels: int = 128
    textcnn_kernels: tuple = (2, 3, 4)
    dropout: float = 0.4

    def cnn_config(self):
        return decoders.CnnHeadConfig(
            vocab_out=self.vocab_size,
            stacks=self.cnn_stacks,
            bottleneck_channels=self.cnn_bottleneck,
            expanded_channels=self.cnn_expanded,
        )

    def textcnn_config(self):
        return decoders.TextCnnHeadConfig(
            n_labels=self.n_labels,
            kernel_sizes=self.textcnn_kernels,
            channels=self.textcnn_channels,
            dropout=self.dropout,
        )

    def validate(self):
        if min(self.grid_height, self.grid_width, self.slot_dim) < 1:
            raise ConfigError("grid dimensions must be positive")
        if self.head not in (SEQUENCE_HEAD, CLASSIFIER_HEAD, GRID_HEAD):
            raise ConfigError(f"unknown head {self.head!r}")
        if self.head == CLASSIFIER_HEAD and self.n_labels < 2:
            raise ConfigError("textcnn head needs n_labels >= 2")


def init_params(rng, cfg):
    """All trainable tensors for the configured model, keyed by name.
    The empty-symbol embedding row starts at zero and stays there: its
    gradient is masked before every optimizer step."""
    cfg.validate()
    table = ad.uniform((cfg.vocab_size, cfg.slot_dim), rng, 0.1)
    table.data[NULL_ID, :] = 0.0
    params = {EMBED_KEY: table}
    if cfg.head != GRID_HEAD:
        params.update(init_encoder_params(rng, cfg.slot_dim, cfg.enc_hidden,
                                          cfg.enc_layers))
    if cfg.head in (SEQUENCE_HEAD, GRID_HEAD):
        params.update(decoders.init_cnn_head_params(rng, cfg.slot_dim,
                                                    cfg.cnn_config()))
    else:
        params.update(decoders.init_textcnn_params(rng, cfg.slot_dim,
                                                   cfg.textcnn_config()))
    return params


def frozen_embedding_rows(cfg):
    return {EMBED_KEY: (NULL_ID,)}


def encode_grids(params, cfg, ids):
    return grid.encode_batch_to_grids(
        ids, params[EMBED_KEY], params,
        cfg.grid_height, cfg.grid_width, cfg.enc_layers, pad_id=PAD_ID,
    )


def sequence_logits(params, cfg, ids):
    """(B, W, V) logits for a padded (B, T) id batch.  The grid head
    instead expects row-major (B, H*W) cell ids and skips the encoder."""
    if cfg.head == GRID_HEAD:
        cells = np.asarray(ids, dtype=np.intp)
        hw = cfg.grid_height * cfg.grid_width
        if cells.ndim != 2 or cells.shape[1] != hw:
            raise DimensionError(
                f"grid head needs (B, {hw}) row-major cells, "
                f"got shape {cells.shape}"
            )
        cells = cells.reshape(-1, cfg.grid_height, cfg.grid_width)
        slots = ad.embedding(params[EMBED_KEY], cells)
        return decoders.cnn_forward(slots, cfg.cnn_config(), params)
    slots = encode_grids(params, cfg, ids)
    return decoders.cnn_forward(slots, cfg.cnn_config(), params)


def sequence_loss(params, cfg, ids, target_ids):
    """Mean cross entropy over every (instance, column) position."""
    logits = sequence_logits(params, cfg, ids)
    b, w, v = logits.shape
    flat = logits.reshape(b * w, v)
    targets = np.asarray(target_ids, dtype=np.intp).reshape(-1)
    return ad.cross_entropy(flat, targets)


def classifier_logits(params, cfg, ids, training=False, rng=None):
    slots = encode_grids(params, cfg, ids)
    return decoders.textcnn_forward(slots, cfg.textcnn_config(), params,
                                    training=training, rng=rng)


def classifier_loss(params, cfg, ids, labels, training=True, rng=None):
    logits = classifier_logits(params, cfg, ids, training=training, rng=rng)
    return ad.cross_entropy(logits, np.asarray(labels, dtype=np.intp))


def predict_sequences(params, cfg, ids, vocab):
    """Decoded output strings (greedy readout) for a padded id batch."""
    with ad.no_grad():
        logits = sequence_logits(params, cfg, ids)
    return [decoders.decode_readout(row, vocab) for row in logits.data]


def predict_labels(params, cfg, ids):
    with ad.no_grad():
        logits = classifier_logits(params, cfg, ids, training=False)
    return logits.data.argmax(axis=-1)


# ---- tiny composite builders for the finite-difference suite ----------------


def _jitter_params(params, rng, scale=0.05):
    """Offset every parameter, biases included.  Zero-initialized
    biases leave relu pre-activations exactly on the kink (dead
    channels make skip sums exactly zero), where one-sided analytic
    subgradients and central differences legitimately disagree."""
    for name, p in params.items():
        p.data += rng.uniform(-scale, scale, size=p.data.shape)
    params[EMBED_KEY].data[NULL_ID, :] = 0.0


# Smallest accepted distance from any relu/pool input to its kink;
# well above the finite-difference step so probes stay on one linear
# piece, far below typical activations so redraws are rare.
_KINK_MARGIN = 5e-5


def _certified(build):
    """True when ``build``'s forward pass stays clear of kinks."""
    margins = []
    with ad.trace_kinks(margins), ad.no_grad():
        build()
    return min(margins, default=1.0) >= _KINK_MARGIN


def _tiny_sequence_config():
    return ModelConfig(
        vocab_size=7, head=SEQUENCE_HEAD, slot_dim=4, enc_hidden=5,
        enc_layers=2, grid_height=2, grid_width=3,
        cnn_stacks=3, cnn_bottleneck=2, cnn_expanded=3,
    )


def _tiny_classifier_config():
    return ModelConfig(
        vocab_size=7, head=CLASSIFIER_HEAD, slot_dim=4, enc_hidden=5,
        enc_layers=2, grid_height=4, grid_width=5, n_labels=3,
        textcnn_channels=2,
    )


def build_tiny_sequence_check(rng, max_tries=200):
    """Full sequence model (embedding, GRU, grid fold, bottleneck
    stacks, shared logits, loss) on a random id batch with one padded
    tail, for the composite gradient check.  Redraws until the forward
    pass is certified kink-free."""
    cfg = _tiny_sequence_config()
    for _ in range(max_tries):
        params = init_params(rng, cfg)
        _jitter_params(params, rng)
        ids = np.array([
            rng.integers(2, cfg.vocab_size, size=4),
            np.concatenate([rng.integers(2, cfg.vocab_size, size=3), [PAD_ID]]),
        ])
        targets = rng.integers(0, cfg.vocab_size, size=(2, cfg.grid_width))
        build = lambda: sequence_loss(params, cfg, ids, targets)
        if _certified(build):
            return build, list(params.values())
    raise StateError("no kink-free draw found for the sequence check")


def build_tiny_classifier_check(rng, max_tries=200):
    """Full classifier model including training-mode dropout with a
    fixed mask seed; redraws until the forward pass is kink-free."""
    cfg = _tiny_classifier_config()
    for _ in range(max_tries):
        params = init_params(rng, cfg)
        _jitter_params(params, rng)
        ids = np.array([
            rng.integers(2, cfg.vocab_size, size=5),
            np.concatenate([rng.integers(2, cfg.vocab_size, size=4), [PAD_ID]]),
        ])
        labels = rng.integers(0, cfg.n_labels, size=2)
        mask_seed = int(rng.integers(0, 2**31))

        def build():
            local = np.random.default_rng(mask_seed)
            return classifier_loss(params, cfg, ids, labels, training=True,
                                   rng=local)

        if _certified(build):
            return build, list(params.values())
    raise StateError("no kink-free draw found for the classifier check")
