# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Fused single-pass pointwise kernels for the power-law nonlinearity.

Mirrors :mod:`nehari_fs._kernels_py`; the loops run without the GIL so
concurrent solver starts can overlap.  Integer and half-integer exponents
(the common cases) avoid libm ``pow``.
"""
import numpy as np
from libc.math cimport fabs, floor, pow, sqrt


cdef struct Expo:
    double e
    int whole
    int kind  # 0 generic, 1 integer, 2 half-integer


cdef Expo _expo(double e):
    cdef Expo x
    x.e = e
    x.kind = 0
    x.whole = 0
    if 0.0 <= e <= 32.0:
        if e == floor(e):
            x.kind = 1
            x.whole = <int>e
        elif 2.0 * e == floor(2.0 * e):
            x.kind = 2
            x.whole = <int>floor(e)
    return x


cdef inline double _ipow(double a, int n) nogil:
    cdef double r = 1.0
    while n:
        if n & 1:
            r *= a
        a *= a
        n >>= 1
    return r


cdef inline double _pow(double a, Expo x) nogil:
    if x.kind == 1:
        return _ipow(a, x.whole)
    if x.kind == 2:
        return _ipow(a, x.whole) * sqrt(a)
    return pow(a, x.e)


def power_sums(const double[::1] u, const double[::1] b, gamma, double p, double q):
    cdef Py_ssize_t i, n = u.shape[0]
    cdef double a, s_p = 0.0, s_q = 0.0
    cdef const double[::1] g
    cdef Expo ep = _expo(p), eq = _expo(q)
    if gamma is None:
        with nogil:
            for i in range(n):
                s_p += b[i] * _pow(fabs(u[i]), ep)
        return s_p, 0.0
    g = gamma
    with nogil:
        for i in range(n):
            a = fabs(u[i])
            s_p += b[i] * _pow(a, ep)
            s_q += g[i] * _pow(a, eq)
    return s_p, s_q


def power_terms(const double[::1] u, const double[::1] b, gamma, double p, double q):
    cdef Py_ssize_t i, n = u.shape[0]
    cdef double a, fp, gq, s_p = 0.0, s_q = 0.0
    cdef const double[::1] g
    cdef Expo ep = _expo(p - 2.0), eq = _expo(q - 2.0)
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    if gamma is None:
        with nogil:
            for i in range(n):
                fp = b[i] * _pow(fabs(u[i]), ep) * u[i]
                o[i] = fp
                s_p += fp * u[i]
        return out, s_p, 0.0
    g = gamma
    with nogil:
        for i in range(n):
            a = fabs(u[i])
            fp = b[i] * _pow(a, ep) * u[i]
            gq = g[i] * _pow(a, eq) * u[i]
            o[i] = fp - gq
            s_p += fp * u[i]
            s_q += gq * u[i]
    return out, s_p, s_q


def power_pairing(const double[::1] u, const double[::1] v, const double[::1] b,
                  gamma, double p, double q):
    cdef Py_ssize_t i, n = u.shape[0]
    cdef double a, s = 0.0
    cdef const double[::1] g
    cdef Expo ep = _expo(p - 2.0), eq = _expo(q - 2.0)
    if gamma is None:
        with nogil:
            for i in range(n):
                s += b[i] * _pow(fabs(u[i]), ep) * u[i] * v[i]
        return s
    g = gamma
    with nogil:
        for i in range(n):
            a = fabs(u[i])
            s += (b[i] * _pow(a, ep) - g[i] * _pow(a, eq)) * u[i] * v[i]
    return s
