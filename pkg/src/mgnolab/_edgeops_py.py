"""Pure-numpy fallback for the compiled edge kernels.

Matches mgnolab._edgeops exactly up to floating-point associativity; the
compiled module is preferred at import time when available.
"""

import numpy as np


def edge_matvec(kflat: np.ndarray, vec: np.ndarray) -> np.ndarray:
    E, w = vec.shape
    return np.einsum("eij,ej->ei", kflat.reshape(E, w, w), vec, optimize=False)


def edge_matvec_backward(kflat, vec, gout, need_k, need_v):
    E, w = vec.shape
    dk = dv = None
    if need_k:
        dk = (gout[:, :, None] * vec[:, None, :]).reshape(E, w * w)
    if need_v:
        dv = np.einsum("eij,ei->ej", kflat.reshape(E, w, w), gout, optimize=False)
    return dk, dv


def segment_sum(values: np.ndarray, seg: np.ndarray, n_segments: int) -> np.ndarray:
    out = np.zeros((n_segments, values.shape[1]), dtype=np.float64)
    np.add.at(out, seg, values)
    return out


def scatter_add_rows(out: np.ndarray, idx: np.ndarray, rows: np.ndarray) -> None:
    np.add.at(out, idx, rows)


def msg_mean_forward(kflat, src_state, src_idx, tgt_idx, counts, n_tgt):
    per_edge = edge_matvec(kflat, src_state[src_idx])
    out = np.zeros((n_tgt, src_state.shape[1]), dtype=np.float64)
    np.add.at(out, tgt_idx, per_edge)
    out /= np.maximum(counts, 1)[:, None]
    return out


def msg_mean_backward(kflat, src_state, src_idx, tgt_idx, gmean, n_src,
                      need_k, need_src):
    E, w = src_idx.shape[0], src_state.shape[1]
    ge = gmean[tgt_idx]
    dk = dsrc = None
    if need_k:
        dk = (ge[:, :, None] * src_state[src_idx][:, None, :]).reshape(E, w * w)
    if need_src:
        dsrc = np.zeros((n_src, w), dtype=np.float64)
        per_edge = np.einsum("eij,ei->ej", kflat.reshape(E, w, w), ge, optimize=False)
        np.add.at(dsrc, src_idx, per_edge)
    return dk, dsrc
