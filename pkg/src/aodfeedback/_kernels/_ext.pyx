# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled codeword-search kernels (same contracts as ``_pure``)."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline double _abs2(double complex z) nogil:
    return z.real * z.real + z.imag * z.imag


def best_codeword(const double complex[:, ::1] codewords,
                  const double complex[::1] x):
    cdef Py_ssize_t n = codewords.shape[0], d = codewords.shape[1]
    cdef Py_ssize_t i, j, best_i = 0
    cdef double s, best = -1.0
    cdef double complex acc, c
    with nogil:
        for i in range(n):
            acc = 0
            for j in range(d):
                c = codewords[i, j]
                acc = acc + c.conjugate() * x[j]
            s = _abs2(acc)
            if s > best:
                best = s
                best_i = i
    return int(best_i), float(best)


def best_subspace_codeword(const double complex[:, ::1] inner,
                           const double complex[::1] b,
                           const double complex[:, ::1] gram):
    cdef Py_ssize_t n = inner.shape[0], p = inner.shape[1]
    cdef Py_ssize_t i, k, l, best_i = 0
    cdef double s, den, best = -1.0
    cdef double complex num, row, wk
    with nogil:
        for i in range(n):
            num = 0
            den = 0.0
            for k in range(p):
                wk = inner[i, k].conjugate()
                num = num + wk * b[k]
                row = 0
                for l in range(p):
                    row = row + gram[k, l] * inner[i, l]
                den = den + (wk * row).real
            if den < 1e-300:
                den = 1e-300
            s = _abs2(num) / den
            if s > best:
                best = s
                best_i = i
    return int(best_i), float(best)


def assign_chordal(const double complex[:, ::1] samples,
                   const double complex[:, ::1] codewords):
    cdef Py_ssize_t n = samples.shape[0], m = codewords.shape[0]
    cdef Py_ssize_t d = samples.shape[1]
    cdef Py_ssize_t a, i, j, best_i
    cdef double s, best
    cdef double complex acc, xa
    labels_arr = np.empty(n, dtype=np.intp)
    best_arr = np.empty(n, dtype=np.float64)
    cdef Py_ssize_t[::1] labels = labels_arr
    cdef double[::1] bests = best_arr
    with nogil:
        for a in range(n):
            best = -1.0
            best_i = 0
            for i in range(m):
                acc = 0
                for j in range(d):
                    xa = samples[a, j].conjugate()
                    acc = acc + xa * codewords[i, j]
                s = _abs2(acc)
                if s > best:
                    best = s
                    best_i = i
            labels[a] = best_i
            bests[a] = best
    return labels_arr, best_arr

