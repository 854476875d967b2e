# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled edge kernels: per-edge matrix-vector products and segment
reductions, the inner loop of every message-passing layer.

All reductions run in edge order, so results are reproducible and match the
pure-numpy fallback up to floating-point associativity.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def edge_matvec(double[:, ::1] kflat, double[:, ::1] vec):
    """out[e] = K_e @ vec[e] with K_e = kflat[e] reshaped to (w, w)."""
    cdef Py_ssize_t E = kflat.shape[0]
    cdef Py_ssize_t w = vec.shape[1]
    out_arr = np.empty((E, w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t e, i, j, base
    cdef double acc
    for e in range(E):
        for i in range(w):
            base = i * w
            acc = 0.0
            for j in range(w):
                acc += kflat[e, base + j] * vec[e, j]
            out[e, i] = acc
    return out_arr


def edge_matvec_backward(double[:, ::1] kflat, double[:, ::1] vec,
                         double[:, ::1] gout, bint need_k, bint need_v):
    """Gradients of edge_matvec: dK_e = g_e vec_eᵀ, dvec_e = K_eᵀ g_e."""
    cdef Py_ssize_t E = kflat.shape[0]
    cdef Py_ssize_t w = vec.shape[1]
    dk_arr = np.empty((E, w * w), dtype=np.float64) if need_k else None
    dv_arr = np.zeros((E, w), dtype=np.float64) if need_v else None
    cdef double[:, ::1] dk
    cdef double[:, ::1] dv
    cdef Py_ssize_t e, i, j, base
    cdef double g
    if need_k and need_v:
        dk = dk_arr
        dv = dv_arr
        for e in range(E):
            for i in range(w):
                base = i * w
                g = gout[e, i]
                for j in range(w):
                    dk[e, base + j] = g * vec[e, j]
                    dv[e, j] += kflat[e, base + j] * g
    elif need_k:
        dk = dk_arr
        for e in range(E):
            for i in range(w):
                base = i * w
                g = gout[e, i]
                for j in range(w):
                    dk[e, base + j] = g * vec[e, j]
    elif need_v:
        dv = dv_arr
        for e in range(E):
            for i in range(w):
                base = i * w
                g = gout[e, i]
                for j in range(w):
                    dv[e, j] += kflat[e, base + j] * g
    return dk_arr, dv_arr


def segment_sum(double[:, ::1] values, long[::1] seg, Py_ssize_t n_segments):
    """Row-wise sum of values into n_segments bins, sequential in edge order."""
    cdef Py_ssize_t E = values.shape[0]
    cdef Py_ssize_t d = values.shape[1]
    out_arr = np.zeros((n_segments, d), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t e, j, s
    for e in range(E):
        s = seg[e]
        for j in range(d):
            out[s, j] += values[e, j]
    return out_arr


def scatter_add_rows(double[:, ::1] out, long[::1] idx, double[:, ::1] rows):
    """out[idx[e]] += rows[e], sequential in row order. Mutates out."""
    cdef Py_ssize_t E = rows.shape[0]
    cdef Py_ssize_t d = rows.shape[1]
    cdef Py_ssize_t e, j, s
    for e in range(E):
        s = idx[e]
        for j in range(d):
            out[s, j] += rows[e, j]


def msg_mean_forward(double[:, ::1] kflat, double[:, ::1] src_state,
                     long[::1] src_idx, long[::1] tgt_idx,
                     long[::1] counts, Py_ssize_t n_tgt):
    """Mean over incoming edges of K_e @ src_state[src_idx[e]], per target.

    Fuses gather, per-edge matvec and the segment mean into one pass;
    bitwise identical to the composed primitives (same summation order).
    """
    cdef Py_ssize_t E = src_idx.shape[0]
    cdef Py_ssize_t w = src_state.shape[1]
    out_arr = np.zeros((n_tgt, w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t e, i, j, s, t, base
    cdef double acc
    for e in range(E):
        s = src_idx[e]
        t = tgt_idx[e]
        for i in range(w):
            base = i * w
            acc = 0.0
            for j in range(w):
                acc += kflat[e, base + j] * src_state[s, j]
            out[t, i] += acc
    cdef double c
    for t in range(n_tgt):
        if counts[t] > 1:
            c = <double> counts[t]
            for i in range(w):
                out[t, i] /= c
    return out_arr


def msg_mean_backward(double[:, ::1] kflat, double[:, ::1] src_state,
                      long[::1] src_idx, long[::1] tgt_idx,
                      double[:, ::1] gmean, Py_ssize_t n_src,
                      bint need_k, bint need_src):
    """Gradients of msg_mean_forward; gmean must already carry the 1/count."""
    cdef Py_ssize_t E = src_idx.shape[0]
    cdef Py_ssize_t w = src_state.shape[1]
    dk_arr = np.empty((E, w * w), dtype=np.float64) if need_k else None
    ds_arr = np.zeros((n_src, w), dtype=np.float64) if need_src else None
    cdef double[:, ::1] dk
    cdef double[:, ::1] ds
    cdef Py_ssize_t e, i, j, s, t, base
    cdef double ge
    if need_k and need_src:
        dk = dk_arr
        ds = ds_arr
        for e in range(E):
            s = src_idx[e]
            t = tgt_idx[e]
            for i in range(w):
                base = i * w
                ge = gmean[t, i]
                for j in range(w):
                    dk[e, base + j] = ge * src_state[s, j]
                    ds[s, j] += kflat[e, base + j] * ge
    elif need_k:
        dk = dk_arr
        for e in range(E):
            s = src_idx[e]
            t = tgt_idx[e]
            for i in range(w):
                base = i * w
                ge = gmean[t, i]
                for j in range(w):
                    dk[e, base + j] = ge * src_state[s, j]
    elif need_src:
        ds = ds_arr
        for e in range(E):
            s = src_idx[e]
            t = tgt_idx[e]
            for i in range(w):
                base = i * w
                ge = gmean[t, i]
                for j in range(w):
                    ds[s, j] += kflat[e, base + j] * ge
    return dk_arr, ds_arr
