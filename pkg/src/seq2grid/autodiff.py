"""Reverse-mode automatic differentiation over dense float64 arrays.

A ``Tensor`` wraps a numpy array together with an optional gradient and
the closure that propagates incoming gradients to its parents.  Calling
``backward`` on a scalar walks the graph once in reverse topological
order and accumulates (+=) into every reachable tensor that requires a
gradient.  Everything is double precision; there is no in-place graph
mutation, no fusion, and no device story.
"""

import contextlib

import numpy as np

from . import kernels
from .errors import DimensionError, NumericError, ParameterError

_GRAD_ENABLED = True
_KINK_TRACE = None


def grad_enabled():
    return _GRAD_ENABLED


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block (evaluation mode)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


@contextlib.contextmanager
def trace_kinks(margins):
    """Collect, for every relu and max pool evaluated in the block, the
    distance from its inputs to the nearest nondifferentiable point.
    Finite-difference checks reject points whose margin is within the
    probe step, where one-sided derivatives make the comparison moot."""
    global _KINK_TRACE
    prev = _KINK_TRACE
    _KINK_TRACE = margins
    try:
        yield margins
    finally:
        _KINK_TRACE = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self._op = "leaf"

    # ---- basic introspection -------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data.reshape(()))

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self._op}, requires_grad={self.requires_grad})"

    # ---- gradient plumbing ---------------------------------------------

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        """Reverse sweep from a scalar.  Interior gradients are rebuilt
        on every call; leaf gradients accumulate with += until cleared."""
        if self.data.size != 1:
            raise DimensionError(
                f"backward requires a scalar loss, got shape {self.shape}"
            )
        order = _toposort(self)
        for node in order:
            if node._parents:
                node.grad = None
        self._accumulate(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # ---- operator sugar --------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return take(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return tensor_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tensor_mean(self, axis, keepdims)


def as_tensor(value):
    return value if isinstance(value, Tensor) else Tensor(value)


def make_node(data, parents, backward, op):
    """Create a graph node; other modules use this for custom primitives.

    ``backward`` receives the upstream gradient array and must call
    ``parent._accumulate`` itself, guarding on ``requires_grad``.
    """
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
        out._op = op
    return out


def _toposort(root):
    order = []
    seen = set()
    stack = [(root, iter(root._parents))]
    seen.add(id(root))
    while stack:
        node, parents = stack[-1]
        advanced = False
        for p in parents:
            if id(p) not in seen and p._parents:
                seen.add(id(p))
                stack.append((p, iter(p._parents)))
                advanced = True
                break
            seen.add(id(p))
        if not advanced:
            order.append(node)
            stack.pop()
    return order


def _unbroadcast(g, shape):
    # Sum gradient over axes that numpy broadcasting expanded.
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---- arithmetic primitives -----------------------------------------------


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data + b.data
    except ValueError:
        raise DimensionError(f"add: incompatible shapes {a.shape} and {b.shape}")

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.data.shape))

    return make_node(data, (a, b), backward, "add")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data - b.data
    except ValueError:
        raise DimensionError(f"sub: incompatible shapes {a.shape} and {b.shape}")

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.data.shape))

    return make_node(data, (a, b), backward, "sub")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data * b.data
    except ValueError:
        raise DimensionError(f"mul: incompatible shapes {a.shape} and {b.shape}")

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return make_node(data, (a, b), backward, "mul")


def neg(a):
    a = as_tensor(a)

    def backward(g):
        if a.requires_grad:
            a._accumulate(-g)

    return make_node(-a.data, (a,), backward, "neg")


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects 2-d operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: inner dimensions differ {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    return make_node(data, (a, b), backward, "matmul")


# ---- pointwise nonlinearities ---------------------------------------------


def sigmoid(x):
    x = as_tensor(x)
    # Split by sign so exp never overflows.
    pos = x.data >= 0
    z = np.empty_like(x.data)
    z[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    ez = np.exp(x.data[~pos])
    z[~pos] = ez / (1.0 + ez)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * z * (1.0 - z))

    return make_node(z, (x,), backward, "sigmoid")


def tanh(x):
    x = as_tensor(x)
    y = np.tanh(x.data)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * (1.0 - y * y))

    return make_node(y, (x,), backward, "tanh")


def relu(x):
    x = as_tensor(x)
    y = np.maximum(x.data, 0.0)
    if _KINK_TRACE is not None and x.data.size:
        _KINK_TRACE.append(float(np.abs(x.data).min()))

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * (x.data > 0.0))

    return make_node(y, (x,), backward, "relu")


def softmax(x, axis=-1):
    x = as_tensor(x)
    if not np.all(np.isfinite(x.data)):
        raise NumericError("softmax received non-finite input")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        if x.requires_grad:
            dot = (g * y).sum(axis=axis, keepdims=True)
            x._accumulate(y * (g - dot))

    return make_node(y, (x,), backward, "softmax")


# ---- structured ops --------------------------------------------------------


def conv2d(x, w):
    """Same-padded square cross-correlation.

    ``x`` is (C_in, H, W) or batched (B, C_in, H, W); ``w`` is
    (C_out, C_in, k, k).  Even k pads one extra row/column on the
    bottom/right so the spatial shape is always preserved.
    """
    x, w = as_tensor(x), as_tensor(w)
    batched = x.ndim == 4
    if x.ndim not in (3, 4) or w.ndim != 4:
        raise DimensionError(f"conv2d: bad ranks {x.shape}, {w.shape}")
    if w.shape[2] != w.shape[3]:
        raise DimensionError(f"conv2d: kernel must be square, got {w.shape}")
    cin_axis = 1 if batched else 0
    if x.shape[cin_axis] != w.shape[1]:
        raise DimensionError(
            f"conv2d: input channels {x.shape[cin_axis]} != kernel channels {w.shape[1]}"
        )
    k = w.shape[2]
    pt = (k - 1) // 2
    xd = x.data if batched else x.data[None]
    xd = np.ascontiguousarray(xd)
    wd = np.ascontiguousarray(w.data)
    y = kernels.conv2d_forward(xd, wd, pt, pt)
    if not batched:
        y = y[0]

    def backward(g):
        gb = np.ascontiguousarray(g if batched else g[None])
        gx, gw = kernels.conv2d_backward(
            xd, wd, gb, pt, pt, x.requires_grad, w.requires_grad
        )
        if x.requires_grad:
            x._accumulate(gx if batched else gx[0])
        if w.requires_grad:
            w._accumulate(gw)

    return make_node(y, (x, w), backward, "conv2d")


def max_pool2d(x, window):
    """Global max pool; ``window`` must match the full spatial extent."""
    x = as_tensor(x)
    batched = x.ndim == 4
    if x.ndim not in (3, 4):
        raise DimensionError(f"max_pool2d: bad rank {x.shape}")
    h, w = x.shape[-2], x.shape[-1]
    if h == 0 or w == 0:
        raise DimensionError("max_pool2d: empty spatial extent")
    if tuple(window) != (h, w):
        raise ParameterError(f"max_pool2d window {window} must cover spatial ({h}, {w})")
    flat = x.data.reshape(x.shape[:-2] + (h * w,))
    arg = flat.argmax(axis=-1)  # first occurrence wins ties
    y = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    if _KINK_TRACE is not None and h * w > 1:
        top2 = np.partition(flat, h * w - 2, axis=-1)[..., -2:]
        _KINK_TRACE.append(float((top2[..., 1] - top2[..., 0]).min()))
    y = y.reshape(x.shape[:-2] + (1, 1))

    def backward(g):
        if x.requires_grad:
            gx = np.zeros_like(flat)
            np.put_along_axis(gx, arg[..., None], g.reshape(arg.shape + (1,)), axis=-1)
            x._accumulate(gx.reshape(x.data.shape))

    return make_node(y, (x,), backward, "max_pool2d")


def dropout(x, rate, training, rng):
    """Inverted dropout: zero with probability ``rate`` and scale
    survivors by 1/(1-rate) so the expectation is unchanged."""
    x = as_tensor(x)
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        def backward_id(g):
            if x.requires_grad:
                x._accumulate(g)

        return make_node(x.data.copy(), (x,), backward_id, "dropout")
    if rng is None:
        raise ParameterError("dropout in training mode needs an rng")
    keep = rng.random(x.data.shape) >= rate
    scale = 1.0 / (1.0 - rate)
    y = x.data * keep * scale

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * keep * scale)

    return make_node(y, (x,), backward, "dropout")


def cross_entropy(logits, target_indices):
    """Mean over positions of -log softmax(logits)[target].

    ``logits`` is (n_positions, V); the empty-symbol class is an
    ordinary class and contributes like any other.
    """
    logits = as_tensor(logits)
    if logits.ndim != 2:
        raise DimensionError(f"cross_entropy expects 2-d logits, got {logits.shape}")
    targets = np.asarray(target_indices, dtype=np.intp)
    if targets.ndim != 1 or targets.shape[0] != logits.shape[0]:
        raise DimensionError(
            f"cross_entropy: {logits.shape[0]} positions vs {targets.shape} targets"
        )
    v = logits.shape[1]
    if targets.size and (targets.min() < 0 or targets.max() >= v):
        raise IndexError(f"cross_entropy: target index out of range for V={v}")
    n = logits.shape[0]
    m = logits.data.max(axis=1, keepdims=True)
    e = np.exp(logits.data - m)
    lse = np.log(e.sum(axis=1)) + m[:, 0]
    picked = logits.data[np.arange(n), targets]
    data = np.array((lse - picked).mean())

    def backward(g):
        if logits.requires_grad:
            p = e / e.sum(axis=1, keepdims=True)
            p[np.arange(n), targets] -= 1.0
            logits._accumulate((float(g) / n) * p)

    return make_node(data, (logits,), backward, "cross_entropy")


# ---- shape ops --------------------------------------------------------------


def reshape(x, shape):
    x = as_tensor(x)
    data = x.data.reshape(shape)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g.reshape(x.data.shape))

    return make_node(data, (x,), backward, "reshape")


def transpose(x, axes=None):
    x = as_tensor(x)
    data = np.transpose(x.data, axes)
    inverse = None if axes is None else tuple(np.argsort(axes))

    def backward(g):
        if x.requires_grad:
            x._accumulate(np.transpose(g, inverse))

    return make_node(data, (x,), backward, "transpose")


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ParameterError("concat needs at least one tensor")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t._accumulate(g[tuple(idx)])

    return make_node(data, tuple(tensors), backward, "concat")


def take(x, idx):
    """Slicing and integer-array indexing; duplicate indices accumulate."""
    x = as_tensor(x)
    data = x.data[idx]
    items = idx if isinstance(idx, tuple) else (idx,)
    fancy = any(isinstance(i, (np.ndarray, list)) for i in items)

    def backward(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            if fancy:
                np.add.at(gx, idx, g)
            else:
                gx[idx] += g
            x._accumulate(gx)

    return make_node(data, (x,), backward, "take")


def tensor_sum(x, axis=None, keepdims=False):
    x = as_tensor(x)
    data = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if x.requires_grad:
            if axis is None:
                x._accumulate(np.broadcast_to(g, x.data.shape).copy())
            else:
                ge = g if keepdims else np.expand_dims(g, axis)
                x._accumulate(np.broadcast_to(ge, x.data.shape).copy())

    return make_node(data, (x,), backward, "sum")


def tensor_mean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    if axis is None:
        count = x.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([x.data.shape[a] for a in axes]))
    return tensor_sum(x, axis, keepdims) * (1.0 / count)


def embedding(table, ids):
    """Row gather: ``table`` is (V, h), ``ids`` any integer shape.

    Backward scatter-adds, so repeated ids accumulate correctly.
    """
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.intp)
    v = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= v):
        raise IndexError(f"embedding: id out of range for vocabulary size {v}")
    data = table.data[ids]

    def backward(g):
        if table.requires_grad:
            gt = np.zeros_like(table.data)
            np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[1]))
            table._accumulate(gt)

    return make_node(data, (table,), backward, "embedding")


def grid_step(grid, emb, actions):
    """Fused convex grid update, the inner loop of sequence encoding.

    ``grid`` is (B, H, W, h), ``emb`` (B, h), ``actions`` (B, 3) ordered
    (update, push, noop).  Dispatches to the selected kernel backend.
    """
    grid, emb, actions = as_tensor(grid), as_tensor(emb), as_tensor(actions)
    gd = np.ascontiguousarray(grid.data)
    ed = np.ascontiguousarray(emb.data)
    ad = np.ascontiguousarray(actions.data)
    data = kernels.grid_step_forward(gd, ed, ad)

    def backward(g):
        gg, ge, ga = kernels.grid_step_backward(gd, ed, ad, np.ascontiguousarray(g))
        if grid.requires_grad:
            grid._accumulate(gg)
        if emb.requires_grad:
            emb._accumulate(ge)
        if actions.requires_grad:
            actions._accumulate(ga)

    return make_node(data, (grid, emb, actions), backward, "grid_step")


# ---- parameter initialization ----------------------------------------------


def xavier_uniform(shape, rng, fan_in, fan_out):
    """Matrix weights: uniform in +-sqrt(6 / (fan_in + fan_out))."""
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def zeros(shape):
    return Tensor(np.zeros(shape), requires_grad=True)


def uniform(shape, rng, bound):
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)
