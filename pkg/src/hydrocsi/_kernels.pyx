# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the two hot loops: the direct-sum non-uniform DFT
and the per-Doppler-bin minimum-variance delay sweep.

Semantics match ``_kernels_py`` exactly; speed comes from phasor recurrences
(replacing per-entry exp calls) and from running the covariance / Cholesky /
solve chain in one C loop without per-bin temporaries.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, sin
from libc.string cimport memcpy
from scipy.linalg.cython_blas cimport dgemm
from scipy.linalg.cython_lapack cimport zpotrf, zpotrs

cnp.import_array()

DEF TWO_PI = 6.283185307179586476925287


def nudft(const double[:, ::1] weighted_values, const double[::1] timestamps, const double[::1] freqs):
    """Direct-sum NUDFT of real streams; see ``_kernels_py.nudft``.

    Requires a uniformly spaced frequency grid (the caller checks and falls
    back otherwise); the complex exponentials are then generated by a
    per-sample geometric recurrence instead of L*F exp calls.
    """
    cdef int S = weighted_values.shape[0]
    cdef int L = weighted_values.shape[1]
    cdef int F = freqs.shape[0]
    cdef cnp.ndarray er_arr = np.empty((L, F), dtype=np.float64, order="F")
    cdef cnp.ndarray ei_arr = np.empty((L, F), dtype=np.float64, order="F")
    cdef double[::1, :] er = er_arr
    cdef double[::1, :] ei = ei_arr
    cdef double df = 0.0
    if F > 1:
        df = freqs[1] - freqs[0]
    cdef Py_ssize_t k, m
    cdef double br, bi, sr, si, tr
    cdef double ang0, dang
    for k in range(L):
        ang0 = -TWO_PI * freqs[0] * timestamps[k]
        dang = -TWO_PI * df * timestamps[k]
        br = cos(ang0)
        bi = sin(ang0)
        sr = cos(dang)
        si = sin(dang)
        for m in range(F):
            er[k, m] = br
            ei[k, m] = bi
            tr = br * sr - bi * si
            bi = br * si + bi * sr
            br = tr
    cdef cnp.ndarray outr_arr = np.empty((S, F), dtype=np.float64)
    cdef cnp.ndarray outi_arr = np.empty((S, F), dtype=np.float64)
    cdef double[:, ::1] outr = outr_arr
    cdef double[:, ::1] outi = outi_arr
    # C-order (S, L) and (S, F) buffers are Fortran (L, S) and (F, S);
    # compute OUT^T = E^T @ V^T with one dgemm per component.
    cdef double one = 1.0, zero = 0.0
    cdef char ta = b"T", tb = b"N"
    dgemm(&ta, &tb, &F, &S, &L, &one, &er[0, 0], &L,
          &weighted_values[0, 0], &L, &zero, &outr[0, 0], &F)
    dgemm(&ta, &tb, &F, &S, &L, &one, &ei[0, 0], &L,
          &weighted_values[0, 0], &L, &zero, &outi[0, 0], &F)
    return outr_arr + 1j * outi_arr


def mvdr_rows(const double complex[:, :, ::1] slices, const double complex[::1, :] steering,
              double loading):
    """Batched MVDR delay sweep; see ``_kernels_py.mvdr_rows``.

    ``steering`` must be Fortran-ordered (M, D).
    """
    cdef int B = slices.shape[0]
    cdef int M = slices.shape[1]
    cdef int N = slices.shape[2]
    cdef int D = steering.shape[1]
    cdef cnp.ndarray power_arr = np.zeros((B, D), dtype=np.float64)
    cdef cnp.ndarray degen_arr = np.zeros(B, dtype=np.uint8)
    cdef double[:, ::1] power = power_arr
    cdef unsigned char[::1] degen = degen_arr
    cdef cnp.ndarray r_arr = np.empty((M, M), dtype=np.complex128, order="F")
    cdef cnp.ndarray z_arr = np.empty((M, D), dtype=np.complex128, order="F")
    cdef double complex[::1, :] r = r_arr
    cdef double complex[::1, :] z = z_arr
    cdef Py_ssize_t b, i, j, n0, d
    cdef double complex acc, aij
    cdef double trace, q
    cdef int info, nrhs = D, lda = M
    cdef char lo = b"L"
    for b in range(B):
        # covariance: R = Lambda Lambda^H / N  (M x M, N snapshots)
        for i in range(M):
            for j in range(M):
                acc = 0
                for n0 in range(N):
                    acc = acc + slices[b, i, n0] * slices[b, j, n0].conjugate()
                r[i, j] = acc / N
        trace = 0.0
        for i in range(M):
            trace += r[i, i].real
        if not (trace > 0.0) or trace != trace:
            degen[b] = 1
            continue
        # forward-backward average: (R + J conj(R) J) / 2, each mirror pair once
        for i in range(M):
            for j in range(M):
                if i * M + j <= (M - 1 - i) * M + (M - 1 - j):
                    acc = 0.5 * (r[i, j] + r[M - 1 - i, M - 1 - j].conjugate())
                    r[i, j] = acc
                    r[M - 1 - i, M - 1 - j] = acc.conjugate()
        for i in range(M):
            r[i, i] = r[i, i] + loading * trace / M
        zpotrf(&lo, &M, &r[0, 0], &lda, &info)
        if info != 0:
            degen[b] = 1
            continue
        memcpy(&z[0, 0], &steering[0, 0], sizeof(double complex) * M * D)
        zpotrs(&lo, &M, &nrhs, &r[0, 0], &lda, &z[0, 0], &lda, &info)
        if info != 0:
            degen[b] = 1
            continue
        for d in range(D):
            q = 0.0
            for i in range(M):
                aij = steering[i, d].conjugate() * z[i, d]
                q += aij.real
            if q < 0.0:
                q = -q
            power[b, d] = 1.0 / q
    return power_arr, degen_arr.astype(bool)
