# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled LSTM recurrence kernels.

Same contract as ``kgpool._lstm_py``. The per-step recurrent product goes
through BLAS ``dgemm``; gate nonlinearities and the state update are fused
into one C loop per step.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport tanh
from libc.string cimport memcpy
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


cdef inline double _sig(double x) noexcept nogil:
    return 0.5 * (1.0 + tanh(0.5 * x))


cdef void _step(const double *z, const double *c_prev, double *c_out, double *h_out,
                double *g, int H) noexcept nogil:
    # one row: activations first, state second, so each loop is a plain
    # contiguous map the compiler can vectorise
    cdef int j
    for j in range(H):
        g[j] = _sig(z[j])
    for j in range(H, 2 * H):
        g[j] = _sig(z[j])
    for j in range(2 * H, 3 * H):
        g[j] = tanh(z[j])
    for j in range(3 * H, 4 * H):
        g[j] = _sig(z[j])
    for j in range(H):
        c_out[j] = g[H + j] * c_prev[j] + g[j] * g[2 * H + j]
    for j in range(H):
        h_out[j] = g[3 * H + j] * tanh(c_out[j])


def lstm_forward(xw, u, lengths):
    cdef cnp.ndarray[cnp.float64_t, ndim=3, mode="c"] XW = np.ascontiguousarray(xw, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] U = np.ascontiguousarray(u, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1, mode="c"] L = np.ascontiguousarray(lengths, dtype=np.int64)
    cdef int T = XW.shape[0]
    cdef int B = XW.shape[1]
    cdef int H4 = XW.shape[2]
    cdef int H = H4 // 4
    cdef cnp.ndarray[cnp.float64_t, ndim=3, mode="c"] hs = np.zeros((T + 1, B, H))
    cdef cnp.ndarray[cnp.float64_t, ndim=3, mode="c"] cs = np.zeros((T + 1, B, H))
    cdef cnp.ndarray[cnp.float64_t, ndim=3, mode="c"] gates = np.zeros((T, B, H4))
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] z = np.empty((B, H4))
    cdef double *zp = <double *> z.data
    cdef double *xp = <double *> XW.data
    cdef double *up = <double *> U.data
    cdef double *hp = <double *> hs.data
    cdef double *cp = <double *> cs.data
    cdef double *gp = <double *> gates.data
    cdef cnp.int64_t *lp = <cnp.int64_t *> L.data
    cdef double one = 1.0
    cdef int t, b, j
    cdef size_t sh, sg
    cdef char tn = b'N'
    if T == 0 or B == 0:
        return hs, cs, gates
    with nogil:
        for t in range(T):
            memcpy(zp, xp + <size_t> t * B * H4, B * H4 * sizeof(double))
            if H > 0:
                dgemm(&tn, &tn, &H4, &B, &H, &one, up, &H4, hp + <size_t> t * B * H, &H, &one, zp, &H4)
            for b in range(B):
                sh = (<size_t> t * B + b) * H
                sg = (<size_t> t * B + b) * H4
                if t < lp[b]:
                    _step(zp + b * H4, cp + sh, cp + sh + B * H, hp + sh + B * H, gp + sg, H)
                else:
                    memcpy(cp + sh + B * H, cp + sh, H * sizeof(double))
                    memcpy(hp + sh + B * H, hp + sh, H * sizeof(double))
    return hs, cs, gates


cdef void _step_back(const double *g, const double *c_prev, const double *c_cur, double *dh,
                     double *dc, double *dz, int H) noexcept nogil:
    cdef int j
    cdef double gi, gf, gg, go, tc, dct
    for j in range(H):
        gi = g[j]
        gf = g[H + j]
        gg = g[2 * H + j]
        go = g[3 * H + j]
        tc = tanh(c_cur[j])
        dct = dc[j] + dh[j] * go * (1.0 - tc * tc)
        dz[j] = dct * gg * gi * (1.0 - gi)
        dz[H + j] = dct * c_prev[j] * gf * (1.0 - gf)
        dz[2 * H + j] = dct * gi * (1.0 - gg * gg)
        dz[3 * H + j] = dh[j] * tc * go * (1.0 - go)
        dc[j] = dct * gf


def lstm_backward(dh_final, hs_in, cs_in, gates_in, u, lengths):
    cdef cnp.ndarray[cnp.float64_t, ndim=3, mode="c"] hs = np.ascontiguousarray(hs_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=3, mode="c"] cs = np.ascontiguousarray(cs_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=3, mode="c"] gates = np.ascontiguousarray(gates_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] U = np.ascontiguousarray(u, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1, mode="c"] L = np.ascontiguousarray(lengths, dtype=np.int64)
    cdef int T = gates.shape[0]
    cdef int B = gates.shape[1]
    cdef int H4 = gates.shape[2]
    cdef int H = H4 // 4
    cdef cnp.ndarray[cnp.float64_t, ndim=3, mode="c"] dz = np.zeros((T, B, H4))
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] dh = np.array(dh_final, dtype=np.float64, order="C", copy=True)
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] dhn = np.empty((B, H))
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] dc = np.zeros((B, H))
    cdef double *up = <double *> U.data
    cdef double *cp = <double *> cs.data
    cdef double *gp = <double *> gates.data
    cdef double *dzp = <double *> dz.data
    cdef double *dhp = <double *> dh.data
    cdef double *dcp = <double *> dc.data
    cdef double *dhnp = <double *> dhn.data
    cdef cnp.int64_t *lp = <cnp.int64_t *> L.data
    cdef double one = 1.0
    cdef double zero = 0.0
    cdef char tn = b'N'
    cdef char tt = b'T'
    cdef int t, b
    cdef size_t sh, sg
    if T == 0 or B == 0:
        return dz, np.zeros((H, H4))
    with nogil:
        for t in range(T - 1, -1, -1):
            for b in range(B):
                if t < lp[b]:
                    sh = (<size_t> t * B + b) * H
                    sg = (<size_t> t * B + b) * H4
                    _step_back(gp + sg, cp + sh, cp + sh + B * H, dhp + b * H, dcp + b * H, dzp + sg, H)
            if H > 0:
                dgemm(&tt, &tn, &H, &B, &H4, &one, up, &H4, dzp + <size_t> t * B * H4, &H4, &zero, dhnp, &H)
            for b in range(B):
                if t < lp[b]:
                    memcpy(dhp + b * H, dhnp + b * H, H * sizeof(double))
    du = hs[:T].reshape(-1, H).T @ dz.reshape(-1, H4)
    return dz, du
