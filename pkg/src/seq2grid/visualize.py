"""Grid inspection: nearest-token tables and slot-norm heatmaps.

A filled slot holds the embedding of the token that was pushed into
it, possibly perturbed by training.  Mapping each slot back to the
nearest embedding row (L2) recovers a readable picture of what the
encoder wrote where.  Empty slots are all-zero and the null embedding
row is pinned at zero, so they map to the null token exactly.
"""

import numpy as np


def nearest_tokens(slots, embedding, vocab):
    """Nearest embedding row per slot.

    slots: (H, W, h) array.  embedding: (V, h) array.  Returns an
    (H, W) list-of-lists of token strings and the (H, W) id array.
    """
    height, width, dim = slots.shape
    if embedding.shape[1] != dim:
        raise ValueError("slot dim does not match embedding dim")
    flat = slots.reshape(height * width, dim)
    # (HW, V) squared distances via the expanded norm; V and HW are tiny.
    d2 = (
        (flat * flat).sum(axis=1, keepdims=True)
        - 2.0 * flat @ embedding.T
        + (embedding * embedding).sum(axis=1)[None, :]
    )
    ids = np.argmin(d2, axis=1).reshape(height, width)
    table = [[vocab.token(int(ids[i, j])) for j in range(width)]
             for i in range(height)]
    return table, ids


def ascii_grid(table, norms):
    """Fixed-width text rendering of the nearest-token table.

    Cells show the token and its slot L2 norm; the top list is row 0.
    """
    height = len(table)
    width = len(table[0]) if height else 0
    cells = [[f"{table[i][j]} {norms[i][j]:.2f}" for j in range(width)]
             for i in range(height)]
    col_w = max((len(c) for row in cells for c in row), default=1)
    sep = "+" + "+".join(["-" * (col_w + 2)] * width) + "+"
    lines = [sep]
    for row in cells:
        lines.append("| " + " | ".join(c.ljust(col_w) for c in row) + " |")
        lines.append(sep)
    return "\n".join(lines)


def slot_norms(slots):
    return np.sqrt((slots * slots).sum(axis=2))


def write_ppm_heatmap(path, norms, scale=24):
    """Binary PPM (P6) heatmap of slot norms, dark blue to bright red.

    Each cell becomes a scale x scale pixel block; intensity is the
    norm relative to the grid maximum (an all-empty grid renders dark).
    """
    norms = np.asarray(norms, dtype=np.float64)
    peak = float(norms.max())
    rel = norms / peak if peak > 0.0 else np.zeros_like(norms)
    r = np.clip(rel * 2.0, 0.0, 1.0)
    b = np.clip(2.0 - rel * 2.0, 0.0, 1.0)
    g = np.clip(rel * 1.2, 0.0, 0.6)
    rgb = np.stack([r, g, b], axis=2)
    pixels = (rgb * 255.0 + 0.5).astype(np.uint8)
    pixels = np.repeat(np.repeat(pixels, scale, axis=0), scale, axis=1)
    height, width = pixels.shape[:2]
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (width, height))
        fh.write(pixels.tobytes())


def render_grid(slots, embedding, vocab):
    """ASCII rendering plus the raw pieces for dumping."""
    table, ids = nearest_tokens(slots, embedding, vocab)
    norms = slot_norms(slots)
    text = ascii_grid(table, norms)
    return text, ids, norms
