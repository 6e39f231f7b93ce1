# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: exp(-x) Re Ei(x) and the closed-form Faddeev Green table.

Same region split as the numpy fallback in ``_kernels_py``.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, cos, sin, log, sqrt, fabs, atan2, M_PI

cnp.import_array()

cdef double EULER_GAMMA = 0.57721566490153286061
cdef double SERIES_RADIUS = 2.0
cdef double ASYMPTOTIC_RADIUS = 40.0


cdef inline double complex _cexp(double complex x) nogil:
    cdef double e = exp(x.real)
    return e * cos(x.imag) + 1j * (e * sin(x.imag))


cdef inline double _cabs(double complex x) nogil:
    return sqrt(x.real * x.real + x.imag * x.imag)


cdef double complex _series(double complex x, double ax) nogil:
    cdef double complex term = 1.0
    cdef double complex acc = 0.0
    cdef int k = 1
    cdef int kmax = <int>(2.718281828459045 * ax) + 40
    while k <= kmax:
        term = term * x / k
        acc = acc + term / k
        k += 1
    return _cexp(-x) * (EULER_GAMMA + log(ax) + acc.real)


cdef double complex _cf_scaled_e1(double complex y) nogil:
    # modified Lentz; returns exp(y) E1(y)
    cdef double tiny = 1e-300
    cdef double complex b = y + 1.0
    cdef double complex c = 1.0 / tiny
    cdef double complex d = 1.0 / b
    cdef double complex h = d
    cdef double complex delta
    cdef double an
    cdef int i
    for i in range(1, 4000):
        an = -(<double>i) * i
        b = b + 2.0
        d = 1.0 / (an * d + b)
        c = b + an / c
        delta = c * d
        h = h * delta
        if _cabs(delta - 1.0) < 1e-16:
            break
    return h


cdef double complex _asym(double complex x) nogil:
    cdef double complex s = 1.0
    cdef double complex term = 1.0
    cdef double complex nxt
    cdef double best = 1.0
    cdef int k
    for k in range(1, 60):
        nxt = term * k / x
        if _cabs(nxt) >= best:
            break
        term = nxt
        best = _cabs(nxt)
        s = s + term
        if best < 1e-18:
            break
    return s / x


cdef inline double complex _fold(double complex a, double complex x) nogil:
    cdef double complex ac = a.real - 1j * a.imag
    return 0.5 * (a + _cexp(-2j * x.imag) * ac)


cdef double complex scaled_re_ei_c(double complex x) nogil:
    cdef double ax = _cabs(x)
    cdef bint near_pos = fabs(atan2(x.imag, x.real)) < M_PI / 4
    if ax <= SERIES_RADIUS or (near_pos and ax < ASYMPTOTIC_RADIUS):
        return _series(x, ax)
    if near_pos:
        return _fold(_asym(x), x)
    return _fold(-_cf_scaled_e1(-x), x)


def scaled_re_ei(x):
    """``exp(-x) * Re Ei(x)`` elementwise for complex input, ``x != 0``."""
    arr = np.asarray(x, dtype=np.complex128)
    shape = arr.shape
    flat = np.ascontiguousarray(arr.ravel())
    out = np.empty_like(flat)
    cdef double complex[::1] xv = flat
    cdef double complex[::1] ov = out
    cdef Py_ssize_t i, n = flat.shape[0]
    for i in range(n):
        if xv[i] == 0:
            raise ZeroDivisionError("scaled_re_ei is singular at x = 0")
    with nogil:
        for i in range(n):
            ov[i] = scaled_re_ei_c(xv[i])
    return out.reshape(shape)


def faddeev_green(z, lam):
    """``-(i/pi) exp(-lam z) Re Ei(lam z)``; Laplace kernel when ``lam == 0``."""
    arr = np.asarray(z, dtype=np.complex128)
    shape = arr.shape
    flat = np.ascontiguousarray(arr.ravel())
    out = np.empty_like(flat)
    cdef double complex[::1] zv = flat
    cdef double complex[::1] ov = out
    cdef double complex lm = complex(lam)
    cdef double complex pref = -1j / M_PI
    cdef Py_ssize_t i, n = flat.shape[0]
    for i in range(n):
        if zv[i] == 0:
            raise ZeroDivisionError("Green function is singular at z = 0")
    with nogil:
        if lm == 0:
            for i in range(n):
                ov[i] = pref * (log(_cabs(zv[i])) + EULER_GAMMA)
        else:
            for i in range(n):
                ov[i] = pref * scaled_re_ei_c(lm * zv[i])
    return out.reshape(shape)
