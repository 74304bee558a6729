"""Central finite-difference verification of backward rules.

The comparison is elementwise: |analytic - numeric| over the larger of
the two magnitudes, floored at the finite-difference noise band.  The
numeric side is a central difference (h=1e-5 for primitives, smaller
for the deep composites).  Suite builders draw inputs away from
relu/argmax kinks so the comparison is meaningful in double precision.
"""

import zlib

import numpy as np

from . import autodiff as ad

H_STEP = 1e-5
TOLERANCE = 1e-4


def max_rel_error(build, tensors, h=H_STEP, subsample=None, rng=None,
                  tol=TOLERANCE):
    """Max relative error between analytic and numeric gradients.

    ``build`` is a zero-argument callable returning a scalar Tensor; it
    must be deterministic and close over ``tensors``.  ``subsample``
    limits the check to that many random coordinates per tensor.

    The denominator is floored at the finite-difference noise bound
    scaled by 1/tol: the quotient (f(x+h) - f(x-h)) / 2h carries
    roundoff of order eps * |f| / h, so coordinates whose gradient sits
    below that band cannot be resolved numerically and count as passed
    unless the analytic value deviates beyond the band itself.
    """
    for t in tensors:
        t.zero_grad()
    loss = build()
    loss.backward()
    grads = []
    for t in tensors:
        if t.grad is None:
            raise AssertionError("tensor reachable from loss has no gradient")
        grads.append(t.grad.copy())

    eps = float(np.finfo(np.float64).eps)
    noise = 100.0 * eps * max(1.0, abs(loss.item())) / (2.0 * h)
    floor = noise / tol
    worst = 0.0
    with ad.no_grad():
        for t, analytic in zip(tensors, grads):
            flat = t.data.reshape(-1)
            n = flat.size
            if subsample is not None and n > subsample:
                idx = rng.choice(n, size=subsample, replace=False)
            else:
                idx = np.arange(n)
            for i in idx:
                keep = flat[i]
                flat[i] = keep + h
                up = build().item()
                flat[i] = keep - h
                down = build().item()
                flat[i] = keep
                numeric = (up - down) / (2.0 * h)
                a = analytic.reshape(-1)[i]
                err = abs(a - numeric) / (max(abs(a), abs(numeric)) + floor)
                if err > worst:
                    worst = err
    return worst


# ---- primitive suite -------------------------------------------------------
# Each builder returns (closure, list of checked tensors) for one random
# instance.  Shapes are small; 100 instances stay well under a second per op.


def _away_from_zero(rng, shape, low=0.1, high=1.5):
    # Magnitudes bounded away from 0 so +-h never crosses a relu kink.
    mag = rng.uniform(low, high, size=shape)
    sign = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
    return mag * sign


def rng_fixed(rng, shape):
    # Fixed projection so the scalar loss weights every output entry.
    return rng.standard_normal(shape)


def _build_matmul(rng):
    a = ad.Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    b = ad.Tensor(rng.standard_normal((4, 2)), requires_grad=True)
    w = rng_fixed(rng, (3, 2))
    return (lambda: (ad.matmul(a, b) * ad.Tensor(w)).sum()), [a, b]


def _build_add(rng):
    a = ad.Tensor(rng.standard_normal((4, 5)), requires_grad=True)
    b = ad.Tensor(rng.standard_normal((4, 5)), requires_grad=True)
    w = rng_fixed(rng, (4, 5))
    return (lambda: (ad.add(a, b) * ad.Tensor(w)).sum()), [a, b]


def _build_sub(rng):
    a = ad.Tensor(rng.standard_normal((4, 5)), requires_grad=True)
    b = ad.Tensor(rng.standard_normal((4, 5)), requires_grad=True)
    w = rng_fixed(rng, (4, 5))
    return (lambda: (ad.sub(a, b) * ad.Tensor(w)).sum()), [a, b]


def _build_mul(rng):
    a = ad.Tensor(rng.standard_normal((4, 5)), requires_grad=True)
    b = ad.Tensor(rng.standard_normal((4, 5)), requires_grad=True)
    w = rng_fixed(rng, (4, 5))
    return (lambda: (ad.mul(a, b) * ad.Tensor(w)).sum()), [a, b]


def _build_sigmoid(rng):
    x = ad.Tensor(rng.standard_normal((3, 7)), requires_grad=True)
    w = rng_fixed(rng, (3, 7))
    return (lambda: (ad.sigmoid(x) * ad.Tensor(w)).sum()), [x]


def _build_tanh(rng):
    x = ad.Tensor(rng.standard_normal((3, 7)), requires_grad=True)
    w = rng_fixed(rng, (3, 7))
    return (lambda: (ad.tanh(x) * ad.Tensor(w)).sum()), [x]


def _build_relu(rng):
    x = ad.Tensor(_away_from_zero(rng, (3, 7)), requires_grad=True)
    w = rng_fixed(rng, (3, 7))
    return (lambda: (ad.relu(x) * ad.Tensor(w)).sum()), [x]


def _build_softmax(rng):
    x = ad.Tensor(rng.standard_normal((4, 6)), requires_grad=True)
    w = rng_fixed(rng, (4, 6))
    return (lambda: (ad.softmax(x, axis=-1) * ad.Tensor(w)).sum()), [x]


def _build_conv2d(rng):
    k = int(rng.integers(1, 5))  # covers even and odd kernels
    x = ad.Tensor(rng.standard_normal((2, 4, 5)), requires_grad=True)
    w = ad.Tensor(rng.standard_normal((3, 2, k, k)) * 0.5, requires_grad=True)
    proj = rng_fixed(rng, (3, 4, 5))
    return (lambda: (ad.conv2d(x, w) * ad.Tensor(proj)).sum()), [x, w]


def _build_max_pool2d(rng):
    # Spread values so the argmax has a margin far wider than 2h.
    base = rng.permutation(np.arange(12, dtype=np.float64)).reshape(3, 4) * 0.5
    x = ad.Tensor(np.stack([base + rng.uniform(0, 0.01, size=(3, 4)) for _ in range(2)]),
                  requires_grad=True)
    w = rng_fixed(rng, (2, 1, 1))
    return (lambda: (ad.max_pool2d(x, (3, 4)) * ad.Tensor(w)).sum()), [x]


def _build_dropout(rng):
    x = ad.Tensor(rng.standard_normal((5, 6)), requires_grad=True)
    w = rng_fixed(rng, (5, 6))
    seed = int(rng.integers(0, 2**31))

    def build():
        # Reseeding fixes the mask so numeric and analytic sides agree.
        local = np.random.default_rng(seed)
        return (ad.dropout(x, 0.4, True, local) * ad.Tensor(w)).sum()

    return build, [x]


def _build_cross_entropy(rng):
    x = ad.Tensor(rng.standard_normal((3, 5)), requires_grad=True)
    targets = rng.integers(0, 5, size=3)
    return (lambda: ad.cross_entropy(x, targets)), [x]


def _build_embedding(rng):
    table = ad.Tensor(rng.standard_normal((6, 4)), requires_grad=True)
    ids = rng.integers(0, 6, size=(2, 3))  # repeats exercise scatter-add
    w = rng_fixed(rng, (2, 3, 4))
    return (lambda: (ad.embedding(table, ids) * ad.Tensor(w)).sum()), [table]


def _build_reshape_transpose(rng):
    x = ad.Tensor(rng.standard_normal((2, 3, 4)), requires_grad=True)
    w = rng_fixed(rng, (4, 6))
    return (
        lambda: (ad.transpose(ad.reshape(x, (6, 4)), (1, 0)) * ad.Tensor(w)).sum()
    ), [x]


def _build_concat_take(rng):
    a = ad.Tensor(rng.standard_normal((2, 3)), requires_grad=True)
    b = ad.Tensor(rng.standard_normal((2, 2)), requires_grad=True)
    w = rng_fixed(rng, (2, 4))
    return (lambda: (ad.concat([a, b], axis=1)[:, 1:] * ad.Tensor(w)).sum()), [a, b]


def _build_grid_step(rng):
    g = ad.Tensor(rng.standard_normal((2, 3, 4, 5)), requires_grad=True)
    e = ad.Tensor(rng.standard_normal((2, 5)), requires_grad=True)
    raw = rng.uniform(0.1, 1.0, size=(2, 3))
    a = ad.Tensor(raw / raw.sum(axis=1, keepdims=True), requires_grad=True)
    w = rng_fixed(rng, (2, 3, 4, 5))
    return (lambda: (ad.grid_step(g, e, a) * ad.Tensor(w)).sum()), [g, e, a]


PRIMITIVE_SUITE = [
    ("matmul", _build_matmul),
    ("add", _build_add),
    ("sub", _build_sub),
    ("mul", _build_mul),
    ("sigmoid", _build_sigmoid),
    ("tanh", _build_tanh),
    ("relu", _build_relu),
    ("softmax", _build_softmax),
    ("conv2d", _build_conv2d),
    ("max_pool2d", _build_max_pool2d),
    ("dropout", _build_dropout),
    ("cross_entropy", _build_cross_entropy),
    ("embedding", _build_embedding),
    ("reshape_transpose", _build_reshape_transpose),
    ("concat_take", _build_concat_take),
    ("grid_step", _build_grid_step),
]


def check_primitive(name, builder, instances=100, seed=0, tol=TOLERANCE):
    """Run one primitive's random-instance sweep; returns max error."""
    rng = np.random.default_rng(seed ^ zlib.crc32(name.encode()))
    worst = 0.0
    for _ in range(instances):
        build, tensors = builder(rng)
        worst = max(worst, max_rel_error(build, tensors))
    return worst


def run_primitive_suite(instances=100, seed=0, tol=TOLERANCE):
    """Returns [(op name, max relative error, passed)] for every primitive."""
    rows = []
    for name, builder in PRIMITIVE_SUITE:
        err = check_primitive(name, builder, instances=instances, seed=seed, tol=tol)
        rows.append((name, err, err <= tol))
    return rows


COMPOSITE_H = 1e-6


def run_composite_suite(instances=100, seed=0, tol=TOLERANCE, subsample=12):
    """Finite-difference checks through the full sequence and
    classification models at a tiny configuration.  Coordinates are
    subsampled per instance; one instance per model checks everything.

    The builders certify their draw against relu/pool kink margins, and
    the step is smaller than the primitive one so that no probed
    coordinate can push a pre-activation across a kink.
    """
    from . import models  # lazy: models imports this package's primitives

    rows = []
    for name, builder in (
        ("s2g_cnn_composite", models.build_tiny_sequence_check),
        ("s2g_textcnn_composite", models.build_tiny_classifier_check),
    ):
        rng = np.random.default_rng(seed ^ zlib.crc32(name.encode()))
        worst = 0.0
        for i in range(instances):
            build, tensors = builder(rng)
            cap = None if i == 0 else subsample
            worst = max(worst, max_rel_error(build, tensors, h=COMPOSITE_H,
                                             subsample=cap, rng=rng))
        rows.append((name, worst, worst <= tol))
    return rows
