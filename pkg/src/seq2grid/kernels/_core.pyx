# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for the two inner loops that dominate training time:
same-padded convolution (patch packing/unpacking around a BLAS matmul) and
the fused nested-list grid update.  Mirrors ``numpy_backend`` exactly."""

import numpy as np

cimport numpy as cnp

cnp.import_array()

NAME = "compiled"


def im2col(double[:, :, :, ::1] x, int k, int pt, int pl):
    cdef Py_ssize_t b = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef cnp.ndarray[double, ndim=2] out = np.zeros((b * h * w, c * k * k))
    cdef double[:, ::1] cols = out
    cdef Py_ssize_t bi, ci, i, j, ky, kx, iy, ix, row, col0
    for bi in range(b):
        for i in range(h):
            for j in range(w):
                row = (bi * h + i) * w + j
                for ci in range(c):
                    col0 = ci * k * k
                    for ky in range(k):
                        iy = i + ky - pt
                        if iy < 0 or iy >= h:
                            continue
                        for kx in range(k):
                            ix = j + kx - pl
                            if 0 <= ix < w:
                                cols[row, col0 + ky * k + kx] = x[bi, ci, iy, ix]
    return out


def col2im(double[:, ::1] cols, shape, int k, int pt, int pl):
    cdef Py_ssize_t b = shape[0], c = shape[1], h = shape[2], w = shape[3]
    cdef cnp.ndarray[double, ndim=4] out = np.zeros((b, c, h, w))
    cdef double[:, :, :, ::1] gx = out
    cdef Py_ssize_t bi, ci, i, j, ky, kx, iy, ix, row, col0
    for bi in range(b):
        for i in range(h):
            for j in range(w):
                row = (bi * h + i) * w + j
                for ci in range(c):
                    col0 = ci * k * k
                    for ky in range(k):
                        iy = i + ky - pt
                        if iy < 0 or iy >= h:
                            continue
                        for kx in range(k):
                            ix = j + kx - pl
                            if 0 <= ix < w:
                                gx[bi, ci, iy, ix] += cols[row, col0 + ky * k + kx]
    return out


def conv2d_forward(x, w, int pt, int pl):
    cdef Py_ssize_t b = x.shape[0], cin = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t cout = w.shape[0], k = w.shape[2]
    wmat = w.reshape(cout, cin * k * k).T
    if k == 1:
        y = x.transpose(0, 2, 3, 1).reshape(b * h * wd, cin) @ wmat
    else:
        y = im2col(x, k, pt, pl) @ wmat
    return np.ascontiguousarray(y.reshape(b, h, wd, cout).transpose(0, 3, 1, 2))


def conv2d_backward(x, w, gy, int pt, int pl, bint need_gx, bint need_gw):
    cdef Py_ssize_t b = x.shape[0], cin = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t cout = w.shape[0], k = w.shape[2]
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
        gw = (np.asarray(cols).T @ gmat).T.reshape(cout, cin, k, k)
    if need_gx:
        gcols = gmat @ w.reshape(cout, cin * k * k)
        gx = col2im(np.ascontiguousarray(gcols), (b, cin, h, wd), k, pt, pl)
    return gx, gw


def grid_step_forward(double[:, :, :, ::1] g, double[:, ::1] e, double[:, ::1] a):
    cdef Py_ssize_t b = g.shape[0], h = g.shape[1], w = g.shape[2], d = g.shape[3]
    cdef cnp.ndarray[double, ndim=4] res = np.empty((b, h, w, d))
    cdef double[:, :, :, ::1] out = res
    cdef Py_ssize_t bi, i, j, l
    cdef double au, ap, an
    for bi in range(b):
        au = a[bi, 0]
        ap = a[bi, 1]
        an = a[bi, 2]
        for l in range(d):
            out[bi, 0, 0, l] = (au + ap) * e[bi, l] + an * g[bi, 0, 0, l]
        for j in range(1, w):
            for l in range(d):
                out[bi, 0, j, l] = au * g[bi, 0, j - 1, l] + an * g[bi, 0, j, l]
        for i in range(1, h):
            for j in range(w):
                for l in range(d):
                    out[bi, i, j, l] = (au + an) * g[bi, i, j, l] + ap * g[bi, i - 1, j, l]
    return res


def grid_step_backward(
    double[:, :, :, ::1] g, double[:, ::1] e, double[:, ::1] a, double[:, :, :, ::1] gy
):
    cdef Py_ssize_t b = g.shape[0], h = g.shape[1], w = g.shape[2], d = g.shape[3]
    cdef cnp.ndarray[double, ndim=4] rgg = np.zeros((b, h, w, d))
    cdef cnp.ndarray[double, ndim=2] rge = np.empty((b, d))
    cdef cnp.ndarray[double, ndim=2] rga = np.zeros((b, 3))
    cdef double[:, :, :, ::1] gg = rgg
    cdef double[:, ::1] ge = rge
    cdef double[:, ::1] ga = rga
    cdef Py_ssize_t bi, i, j, l
    cdef double au, ap, an, su, sp, sn, gv
    for bi in range(b):
        au = a[bi, 0]
        ap = a[bi, 1]
        an = a[bi, 2]
        su = sp = sn = 0.0
        for l in range(d):
            gv = gy[bi, 0, 0, l]
            su += gv * e[bi, l]
            sp += gv * e[bi, l]
            sn += gv * g[bi, 0, 0, l]
            ge[bi, l] = (au + ap) * gv
            gg[bi, 0, 0, l] += an * gv
        for j in range(1, w):
            for l in range(d):
                gv = gy[bi, 0, j, l]
                su += gv * g[bi, 0, j - 1, l]
                sn += gv * g[bi, 0, j, l]
                gg[bi, 0, j - 1, l] += au * gv
                gg[bi, 0, j, l] += an * gv
        for i in range(1, h):
            for j in range(w):
                for l in range(d):
                    gv = gy[bi, i, j, l]
                    su += gv * g[bi, i, j, l]
                    sp += gv * g[bi, i - 1, j, l]
                    sn += gv * g[bi, i, j, l]
                    gg[bi, i, j, l] += (au + an) * gv
                    gg[bi, i - 1, j, l] += ap * gv
        ga[bi, 0] = su
        ga[bi, 1] = sp
        ga[bi, 2] = sn
    return rgg, rge, rga
