# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled batched kernels for residual nets.

Same contract as numpy_backend; see that module for the interface docs.
The loops are written for small layer widths (tens of units) where BLAS
dispatch and Python overhead dominate the pure-numpy path.
"""

import numpy as np

cimport cython
from libc.math cimport tanh, tanhf

name = "compiled"

ctypedef fused floating:
    float
    double


cdef inline floating _tanh(floating x) noexcept nogil:
    if floating is float:
        return tanhf(x)
    else:
        return tanh(x)


cdef void _affine(floating[:, :] X, floating[:, ::1] W, floating[::1] b,
                  floating[:, ::1] out) noexcept nogil:
    # out = X @ W.T + b
    cdef Py_ssize_t i, j, k
    cdef floating acc
    for i in range(X.shape[0]):
        for j in range(W.shape[0]):
            acc = b[j]
            for k in range(X.shape[1]):
                acc += X[i, k] * W[j, k]
            out[i, j] = acc


cdef void _affine_tanh(floating[:, :] X, floating[:, ::1] W, floating[::1] b,
                       floating[:, ::1] out) noexcept nogil:
    # out = tanh(X @ W.T + b)
    cdef Py_ssize_t i, j, k
    cdef floating acc
    for i in range(X.shape[0]):
        for j in range(W.shape[0]):
            acc = b[j]
            for k in range(X.shape[1]):
                acc += X[i, k] * W[j, k]
            out[i, j] = _tanh(acc)


cdef void _matmul_t_acc(floating[:, :] X, floating[:, ::1] W,
                        floating[:, ::1] out) noexcept nogil:
    # out += X @ W.T
    cdef Py_ssize_t i, j, k
    cdef floating acc
    for i in range(X.shape[0]):
        for j in range(W.shape[0]):
            acc = 0
            for k in range(X.shape[1]):
                acc += X[i, k] * W[j, k]
            out[i, j] += acc


cdef void _matmul(floating[:, :] D, floating[:, ::1] W, floating[:, ::1] out,
                  bint accumulate) noexcept nogil:
    # out (+)= D @ W
    cdef Py_ssize_t i, j, k
    cdef floating d
    for i in range(D.shape[0]):
        if not accumulate:
            for k in range(W.shape[1]):
                out[i, k] = 0
        for j in range(D.shape[1]):
            d = D[i, j]
            for k in range(W.shape[1]):
                out[i, k] += d * W[j, k]


cdef void _outer_acc(floating[:, :] D, floating[:, :] X,
                     floating[:, ::1] G) noexcept nogil:
    # G += D.T @ X
    cdef Py_ssize_t i, j, k
    cdef floating d
    for i in range(D.shape[0]):
        for j in range(D.shape[1]):
            d = D[i, j]
            for k in range(X.shape[1]):
                G[j, k] += d * X[i, k]


cdef void _colsum_acc(floating[:, :] D, floating[::1] g) noexcept nogil:
    cdef Py_ssize_t i, j
    for i in range(D.shape[0]):
        for j in range(D.shape[1]):
            g[j] += D[i, j]


cdef void _tanh_bwd_ip(floating[:, ::1] dH, floating[:, :] H) noexcept nogil:
    # dH *= 1 - H**2
    cdef Py_ssize_t i, j
    for i in range(dH.shape[0]):
        for j in range(dH.shape[1]):
            dH[i, j] *= 1 - H[i, j] * H[i, j]


def net_forward(list hidden_w, list hidden_b, object w_out,
                floating[:, ::1] w_bypass, floating[::1] b_bypass,
                floating[:, :] z):
    cdef Py_ssize_t B = z.shape[0]
    cdef Py_ssize_t L = len(hidden_w)
    cdef Py_ssize_t l
    if floating is double:
        dtype = np.float64
    else:
        dtype = np.float32

    out_arr = np.empty((B, w_bypass.shape[0]), dtype=dtype)
    cdef floating[:, ::1] out = out_arr
    _affine[floating](z, w_bypass, b_bypass, out)

    hs = []
    cdef floating[:, :] h_prev = z
    cdef floating[:, ::1] Wl, h_new
    cdef floating[::1] bl
    for l in range(L):
        Wl = hidden_w[l]
        bl = hidden_b[l]
        h_arr = np.empty((B, Wl.shape[0]), dtype=dtype)
        h_new = h_arr
        _affine_tanh[floating](h_prev, Wl, bl, h_new)
        hs.append(h_arr)
        h_prev = h_new
    if L:
        Wl = w_out
        _matmul_t_acc[floating](h_prev, Wl, out)
    return out_arr, hs


def net_backward(list hidden_w, list hidden_b, object w_out,
                 floating[:, ::1] w_bypass,
                 floating[:, :] z, list hs, floating[:, :] dz_out,
                 list gw_hidden, list gb_hidden, object gw_out,
                 floating[:, ::1] gw_bypass, floating[::1] gb_bypass):
    cdef Py_ssize_t B = z.shape[0]
    cdef Py_ssize_t L = len(hidden_w)
    cdef Py_ssize_t l
    if floating is double:
        dtype = np.float64
    else:
        dtype = np.float32

    _outer_acc[floating](dz_out, z, gw_bypass)
    _colsum_acc[floating](dz_out, gb_bypass)
    dz_arr = np.empty((B, z.shape[1]), dtype=dtype)
    cdef floating[:, ::1] dz = dz_arr
    _matmul[floating](dz_out, w_bypass, dz, False)

    cdef floating[:, ::1] Wl, dh, dh_prev, gw
    cdef floating[::1] gb
    cdef floating[:, :] h_l, prev
    if L:
        Wl = w_out
        dh_arr = np.empty((B, Wl.shape[1]), dtype=dtype)
        dh = dh_arr
        _matmul[floating](dz_out, Wl, dh, False)
        gw = gw_out
        h_l = hs[L - 1]
        _outer_acc[floating](dz_out, h_l, gw)
        for l in range(L - 1, -1, -1):
            h_l = hs[l]
            _tanh_bwd_ip[floating](dh, h_l)  # dh is now the pre-activation cotangent
            if l == 0:
                prev = z
            else:
                prev = hs[l - 1]
            gw = gw_hidden[l]
            gb = gb_hidden[l]
            _outer_acc[floating](dh, prev, gw)
            _colsum_acc[floating](dh, gb)
            Wl = hidden_w[l]
            if l == 0:
                _matmul[floating](dh, Wl, dz, True)
            else:
                dh_prev_arr = np.empty((B, Wl.shape[1]), dtype=dtype)
                dh_prev = dh_prev_arr
                _matmul[floating](dh, Wl, dh_prev, False)
                dh = dh_prev
    return dz_arr
