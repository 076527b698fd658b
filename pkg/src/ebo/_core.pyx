# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled implementations of the hot numerical kernels.

Mirrors the contract of :mod:`ebo._kernels_py` (see that module for the
conventions).  Cut locations are derived with the exact same floating-point
expressions as the NumPy fallback so both backends produce bit-identical
layouts from the same uniform draws.
"""

import numpy as np

from libc.math cimport log, INFINITY, M_PI
from scipy.linalg.cython_lapack cimport dpotrf

NAME = "compiled"

ctypedef unsigned long long u64

cdef double LOG_2PI = log(2.0 * M_PI)
cdef u64 _C1 = 0x9E3779B97F4A7C15ULL
cdef u64 _C2 = 0xBF58476D1CE4E5B9ULL
cdef u64 _C3 = 0x94D049BB133111EBULL


cdef inline u64 _mix(u64 h, u64 v) nogil:
    cdef u64 z = h + (v + _C1)
    z = (z ^ (z >> 30)) * _C2
    z = (z ^ (z >> 27)) * _C3
    return z ^ (z >> 31)


cdef double _chol_loglik_inplace(double[:, ::1] C, const double[::1] y,
                                 double[::1] xbuf, int n) nogil:
    # LAPACK works column-major; asking for the upper factor of the
    # column-major view leaves the *row-major* lower triangle of the buffer
    # holding the lower Cholesky factor.
    cdef char uplo = b'U'
    cdef int info = 0, nn = n, lda = n
    cdef int i, j
    cdef double acc, logdet = 0.0, quad = 0.0
    if n == 0:
        return 0.0
    dpotrf(&uplo, &nn, &C[0, 0], &lda, &info)
    if info != 0:
        return -INFINITY
    for i in range(n):
        acc = y[i]
        for j in range(i):
            acc -= C[i, j] * xbuf[j]
        acc /= C[i, i]
        xbuf[i] = acc
        quad += acc * acc
        logdet += log(C[i, i])
    return -0.5 * quad - logdet - 0.5 * n * LOG_2PI


def add_equality(double[:, ::1] U, const u64[::1] labels, double coeff):
    """In place: ``U[i, j] += coeff`` wherever ``labels[i] == labels[j]``."""
    cdef Py_ssize_t n = labels.shape[0]
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(n):
            U[i, i] += coeff
            for j in range(i + 1, n):
                if labels[i] == labels[j]:
                    U[i, j] += coeff
                    U[j, i] += coeff


def chol_loglik(C, y):
    """Log-density of ``y`` under ``N(0, C)``; ``-inf`` if not PD.

    ``C`` is overwritten with factorisation workspace.
    """
    cdef double[:, ::1] Cv = C
    cdef const double[::1] yv = y
    cdef Py_ssize_t n = yv.shape[0]
    xbuf = np.empty(n, dtype=np.float64)
    cdef double[::1] xv = xbuf
    cdef double out
    with nogil:
        out = _chol_loglik_inplace(Cv, yv, xv, <int>n)
    return out


def gram_loglik(const double[:, ::1] U, double scale, double sigma2,
                const double[::1] y):
    """Log-likelihood of ``y`` under covariance ``U*scale + sigma2*I``."""
    cdef Py_ssize_t n = y.shape[0]
    if n == 0:
        return 0.0
    scratch = np.empty((n, n), dtype=np.float64)
    xbuf = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] Cv = scratch
    cdef double[::1] xv = xbuf
    cdef Py_ssize_t i, j
    cdef double out
    with nogil:
        for i in range(n):
            for j in range(n):
                Cv[i, j] = U[i, j] * scale
            Cv[i, i] += sigma2
        out = _chol_loglik_inplace(Cv, y, xv, <int>n)
    return out


def loglik_delta(const double[:, ::1] U, double scale, double sigma2,
                 const double[::1] y, const u64[:, ::1] minus,
                 const u64[:, ::1] plus):
    """Log-likelihood after swapping equality blocks (see NumPy fallback)."""
    cdef Py_ssize_t n = y.shape[0]
    if n == 0:
        return 0.0
    scratch = np.empty((n, n), dtype=np.float64)
    xbuf = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] Cv = scratch
    cdef double[::1] xv = xbuf
    cdef Py_ssize_t i, j, r
    cdef Py_ssize_t n_minus = minus.shape[0], n_plus = plus.shape[0]
    cdef double v, out
    with nogil:
        for i in range(n):
            for j in range(n):
                v = U[i, j] * scale
                for r in range(n_minus):
                    if minus[r, i] == minus[r, j]:
                        v -= scale
                for r in range(n_plus):
                    if plus[r, i] == plus[r, j]:
                        v += scale
                Cv[i, j] = v
            Cv[i, i] += sigma2
        out = _chol_loglik_inplace(Cv, y, xv, <int>n)
    return out


def cut_scan(const double[:, ::1] U_base, double scale, double sigma2,
             const double[::1] y, const double[::1] xs,
             const u64[::1] other_hash, int kind, double lo, double hi,
             const double[:, ::1] uniforms, int cur_k, double cur_loglik,
             const u64[::1] cur_labels):
    """Score every candidate cut count for one (dimension, layer) slot.

    Same contract as the NumPy fallback: candidate ``cur_k`` keeps its current
    labels and cached log-likelihood; every other candidate derives a fresh
    layout from its row of ``uniforms``.
    """
    cdef Py_ssize_t n = xs.shape[0]
    cdef Py_ssize_t n_cand = uniforms.shape[0]
    logliks_np = np.empty(n_cand, dtype=np.float64)
    labels_np = np.empty((n_cand, n), dtype=np.uint64)
    cutbuf_np = np.empty(max(1, n_cand - 1), dtype=np.float64)
    scratch_np = np.empty((n, n), dtype=np.float64)
    xbuf_np = np.empty(n, dtype=np.float64)
    cdef double[::1] logliks = logliks_np
    cdef u64[:, :] labels = labels_np
    cdef double[::1] cutbuf = cutbuf_np
    cdef double[:, ::1] scratch = scratch_np
    cdef double[::1] xbuf = xbuf_np
    cdef Py_ssize_t c, i, j, b
    cdef double w, delta, key, v
    cdef Py_ssize_t pos
    with nogil:
        for c in range(n_cand):
            if c == cur_k:
                logliks[c] = cur_loglik
                for i in range(n):
                    labels[c, i] = cur_labels[i]
                continue
            if kind == 0 and c > 0:
                w = (hi - lo) / c
                delta = uniforms[c, 0] * w
                for j in range(c):
                    cutbuf[j] = (lo + delta) + <double>j * w
            elif c > 0:
                for j in range(c):
                    cutbuf[j] = lo + uniforms[c, j] * (hi - lo)
                for j in range(1, c):
                    key = cutbuf[j]
                    pos = j
                    while pos > 0 and cutbuf[pos - 1] > key:
                        cutbuf[pos] = cutbuf[pos - 1]
                        pos -= 1
                    cutbuf[pos] = key
            for i in range(n):
                b = 0
                while b < c and xs[i] >= cutbuf[b]:
                    b += 1
                labels[c, i] = _mix(other_hash[i], <u64>b)
            if n == 0:
                logliks[c] = 0.0
                continue
            for i in range(n):
                for j in range(n):
                    v = U_base[i, j] * scale
                    if labels[c, i] == labels[c, j]:
                        v += scale
                    scratch[i, j] = v
                scratch[i, i] += sigma2
            logliks[c] = _chol_loglik_inplace(scratch, y, xbuf, <int>n)
    return logliks_np, labels_np


def cross_match(const u64[:, :] q_labels, const u64[:, :] t_labels):
    """Count label agreements between query and training points."""
    cdef Py_ssize_t blocks = q_labels.shape[0]
    cdef Py_ssize_t nq = q_labels.shape[1]
    cdef Py_ssize_t nt = t_labels.shape[1]
    out_np = np.zeros((nq, nt), dtype=np.float64)
    cdef double[:, ::1] out = out_np
    cdef Py_ssize_t b, i, j
    with nogil:
        for b in range(blocks):
            for i in range(nq):
                for j in range(nt):
                    if q_labels[b, i] == t_labels[b, j]:
                        out[i, j] += 1.0
    return out_np
