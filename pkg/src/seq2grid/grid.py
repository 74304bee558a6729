"""Differentiable nested-list grid construction.

A grid is H ordered lists of W slots, each slot a vector in R^h.  Three
operations update it per input token: update the top list (shift it
right, write the embedding at the front), push a new top list (shift all
lists down), or leave the grid alone.  The encoder emits a distribution
over the three, and the realized update is their convex combination, so
the whole construction stays differentiable end to end.

Slots that nothing ever wrote hold the zero vector, which doubles as the
empty symbol.  On a shift the rightmost slot and the bottom list are
discarded; the grid type is fixed-size by construction.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import encoder as enc
from .errors import DimensionError, ParameterError

UPDATE, PUSH, NOOP = "update", "push", "noop"
ACTION_ORDER = (UPDATE, PUSH, NOOP)
NOOP_VECTOR = np.array([0.0, 0.0, 1.0])


@dataclass
class Grid:
    """H lists of W slots of dimension h; ``slots`` is a (H, W, h) Tensor.

    List 1 is the top list and slot 1 the leftmost, matching row 0 /
    column 0 of the array.
    """

    height: int
    width: int
    dim: int
    slots: ad.Tensor

    @classmethod
    def zero(cls, height, width, dim):
        if height < 1 or width < 1 or dim < 1:
            raise ParameterError(f"grid dims must be positive, got {height}x{width}x{dim}")
        return cls(height, width, dim, ad.Tensor(np.zeros((height, width, dim))))

    def check(self):
        if self.slots.shape != (self.height, self.width, self.dim):
            raise DimensionError(
                f"grid slots {self.slots.shape} != ({self.height}, {self.width}, {self.dim})"
            )


def top_list_update(grid, emb):
    """Shift the top list right (last slot discarded), write ``emb`` at
    the front; lists below stay untouched."""
    grid.check()
    emb = ad.as_tensor(emb)
    top = ad.concat([emb.reshape(1, grid.dim), grid.slots[0, : grid.width - 1]], axis=0)
    slots = ad.concat([top.reshape(1, grid.width, grid.dim), grid.slots[1:]], axis=0)
    return Grid(grid.height, grid.width, grid.dim, slots)


def new_list_push(grid, emb):
    """Shift every list down (bottom list discarded); the new top list
    holds ``emb`` followed by empty slots."""
    grid.check()
    emb = ad.as_tensor(emb)
    rest = ad.Tensor(np.zeros((grid.width - 1, grid.dim)))
    top = ad.concat([emb.reshape(1, grid.dim), rest], axis=0)
    slots = ad.concat(
        [top.reshape(1, grid.width, grid.dim), grid.slots[: grid.height - 1]], axis=0
    )
    return Grid(grid.height, grid.width, grid.dim, slots)


def step(grid, emb, actions):
    """Convex combination of update/push/noop weighted by ``actions``.

    ``actions`` is a 3-vector (update, push, noop) on the simplex.  Runs
    as one fused kernel; equals the explicit blend of the two shift
    operations and the unchanged grid."""
    grid.check()
    emb = ad.as_tensor(emb)
    actions = ad.as_tensor(actions)
    batched = ad.grid_step(
        grid.slots.reshape(1, grid.height, grid.width, grid.dim),
        emb.reshape(1, grid.dim),
        actions.reshape(1, 3),
    )
    return Grid(grid.height, grid.width, grid.dim, batched[0])


def blended_step(grid, emb, actions):
    """Reference form of ``step`` composed from the named operations;
    kept for equivalence testing against the fused kernel."""
    a = ad.as_tensor(actions)
    upd = top_list_update(grid, emb).slots
    psh = new_list_push(grid, emb).slots
    slots = a[0] * upd + a[1] * psh + a[2] * grid.slots
    return Grid(grid.height, grid.width, grid.dim, slots)


def fold_grid(embeddings, actions, height, width):
    """Fold the fused step over time from the zero grid.

    ``embeddings`` is (B, T, h) and ``actions`` (B, T, 3); returns the
    final (B, H, W, h) Tensor.  Also the substitution point for tests
    that replace learned actions with fixed ones."""
    embeddings = ad.as_tensor(embeddings)
    actions = ad.as_tensor(actions)
    b, t, dim = embeddings.shape
    if actions.shape != (b, t, 3):
        raise DimensionError(f"fold_grid: actions {actions.shape} vs embeddings {embeddings.shape}")
    state = ad.Tensor(np.zeros((b, height, width, dim)))
    for i in range(t):
        state = ad.grid_step(state, embeddings[:, i], actions[:, i])
    return state


def encode_batch_to_grids(token_ids, table, params, height, width, layers, pad_id=0):
    """Embed a padded id batch, run the encoder, and fold the grid.

    Positions holding ``pad_id`` get the forced action (0, 0, 1) instead
    of the encoder's output, so padding never touches the grid and a
    batch equals its instances evaluated one by one."""
    ids = np.asarray(token_ids, dtype=np.intp)
    if ids.ndim != 2 or ids.shape[1] < 1:
        raise ParameterError(f"encode_batch_to_grids: bad id batch shape {ids.shape}")
    emb = ad.embedding(table, ids)
    actions = enc.encode_actions(emb, params, layers)
    mask = (ids != pad_id).astype(np.float64)[:, :, None]
    if mask.min() < 1.0:
        forced = actions * ad.Tensor(mask) + ad.Tensor(NOOP_VECTOR * (1.0 - mask))
    else:
        forced = actions
    return fold_grid(emb, forced, height, width)


def encode_sequence_to_grid(token_ids, table, params, height, width, layers, pad_id=0):
    """Single-sequence form of ``encode_batch_to_grids``; returns a Grid."""
    ids = np.asarray(token_ids, dtype=np.intp).reshape(1, -1)
    slots = encode_batch_to_grids(ids, table, params, height, width, layers, pad_id)
    return Grid(height, width, table.shape[1], slots[0])


def discrete_oracle(embeddings, actions, height, width):
    """Simulate the nested list with explicit slot moves, no arithmetic.

    ``embeddings`` is a (T, h) array, ``actions`` a sequence of names
    from {update, push, noop}.  Reference for equivalence tests."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    dim = embeddings.shape[1]
    zero = np.zeros(dim)
    rows = [[zero.copy() for _ in range(width)] for _ in range(height)]
    for vec, act in zip(embeddings, actions):
        if act == UPDATE:
            rows[0] = [vec.copy()] + rows[0][: width - 1]
        elif act == PUSH:
            fresh = [vec.copy()] + [zero.copy() for _ in range(width - 1)]
            rows = [fresh] + rows[: height - 1]
        elif act == NOOP:
            pass
        else:
            raise ParameterError(f"unknown action {act!r}")
    return np.array([[slot for slot in row] for row in rows])
