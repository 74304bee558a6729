"""Pure-numpy implementations of the hot kernels.

Same call signatures as the compiled extension in ``_core.pyx``; the
selector in ``__init__`` picks one of the two at import time.  All arrays
are C-contiguous float64.
"""

import numpy as np

NAME = "numpy"


def im2col(x, k, pt, pl):
    """Unfold same-padded k x k patches of ``x`` (B,C,H,W) into a matrix.

    Returns an array of shape (B*H*W, C*k*k) whose row (b*H*W + i*W + j)
    holds the patch centred so that output pixel (i, j) is the dot product
    of that row with a flattened (C,k,k) filter.  ``pt``/``pl`` are the
    top/left zero-padding; bottom/right padding is k-1-pt / k-1-pl.
    """
    b, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pt, k - 1 - pt), (pl, k - 1 - pl)))
    windows = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
    # (B,C,H,W,k,k) -> (B,H,W,C,k,k) -> (B*H*W, C*k*k)
    return np.ascontiguousarray(windows.transpose(0, 2, 3, 1, 4, 5)).reshape(
        b * h * w, c * k * k
    )


def col2im(cols, shape, k, pt, pl):
    """Adjoint of :func:`im2col`: scatter-add patch rows back onto (B,C,H,W)."""
    b, c, h, w = shape
    xp = np.zeros((b, c, h + k - 1, w + k - 1))
    patches = cols.reshape(b, h, w, c, k, k).transpose(0, 3, 4, 5, 1, 2)
    for ky in range(k):
        for kx in range(k):
            xp[:, :, ky : ky + h, kx : kx + w] += patches[:, :, ky, kx]
    return xp[:, :, pt : pt + h, pl : pl + w]


def conv2d_forward(x, w, pt, pl):
    """Same-padded cross-correlation: (B,Cin,H,W) * (Cout,Cin,k,k) -> (B,Cout,H,W)."""
    b, cin, h, wd = x.shape
    cout, _, k, _ = w.shape
    wmat = w.reshape(cout, cin * k * k).T
    if k == 1:
        # 1x1 convolution is a plain channel-mixing matmul
        y = x.transpose(0, 2, 3, 1).reshape(b * h * wd, cin) @ wmat
    else:
        y = im2col(x, k, pt, pl) @ wmat
    return np.ascontiguousarray(y.reshape(b, h, wd, cout).transpose(0, 3, 1, 2))

def conv2d_backward(x, w, gy, pt, pl, need_gx, need_gw):
    """Gradients of :func:`conv2d_forward` w.r.t. input and weights."""
    b, cin, h, wd = x.shape
    cout, _, k, _ = w.shape
    gmat = np.ascontiguousarray(gy.transpose(0, 2, 3, 1)).reshape(b * h * wd, cout)
    gx = gw = None
    if k == 1:
        xmat = x.transpose(0, 2, 3, 1).reshape(b * h * wd, cin)
        if need_gw:
            gw = (xmat.T @ gmat).T.reshape(cout, cin, 1, 1)
        if need_gx:
            gx = np.ascontiguousarray(
                (gmat @ w.reshape(cout, cin)).reshape(b, h, wd, cin).transpose(0, 3, 1, 2)
            )
        return gx, gw
    cols = im2col(x, k, pt, pl)
    if need_gw:
        gw = (cols.T @ gmat).T.reshape(cout, cin, k, k)
    if need_gx:
        gcols = gmat @ w.reshape(cout, cin * k * k)
        gx = col2im(gcols, x.shape, k, pt, pl)
    return gx, gw


def grid_step_forward(g, e, a):
    """One fused nested-list update.

    ``g`` is the grid (B,H,W,h), ``e`` the incoming item (B,h), ``a`` the
    per-instance action weights (B,3) ordered (update, push, noop).  The
    result is the convex combination

        a_upd * top_list_update(g, e) + a_push * new_list_push(g, e) + a_noop * g
    """
    au = a[:, 0, None, None, None]
    ap = a[:, 1, None, None, None]
    an = a[:, 2, None, None, None]
    out = an * g
    out[:, 1:] += au * g[:, 1:]
    out[:, 1:] += ap * g[:, :-1]
    out[:, 0, 1:] += a[:, 0, None, None] * g[:, 0, :-1]
    out[:, 0, 0] += (a[:, 0, None] + a[:, 1, None]) * e
    return out


def grid_step_backward(g, e, a, gy):
    """Gradients of :func:`grid_step_forward` w.r.t. grid, item, and actions."""
    au = a[:, 0, None, None, None]
    ap = a[:, 1, None, None, None]
    an = a[:, 2, None, None, None]
    ga = np.empty_like(a)
    # d/da_upd: contraction of gy with the shifted-top grid
    ga[:, 0] = (
        (gy[:, 1:] * g[:, 1:]).sum(axis=(1, 2, 3))
        + (gy[:, 0, 1:] * g[:, 0, :-1]).sum(axis=(1, 2))
        + (gy[:, 0, 0] * e).sum(axis=1)
    )
    ga[:, 1] = (gy[:, 1:] * g[:, :-1]).sum(axis=(1, 2, 3)) + (gy[:, 0, 0] * e).sum(axis=1)
    ga[:, 2] = (gy * g).sum(axis=(1, 2, 3))
    ge = (a[:, 0, None] + a[:, 1, None]) * gy[:, 0, 0]
    gg = an * gy
    gg[:, 1:] += au * gy[:, 1:]
    gg[:, :-1] += ap * gy[:, 1:]
    gg[:, 0, :-1] += a[:, 0, None, None] * gy[:, 0, 1:]
    return gg, ge, ga
