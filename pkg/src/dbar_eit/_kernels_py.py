"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``.

The central special function is

    F(x) = exp(-x) * Re Ei(x),

which is branch independent (the branches of Ei differ by imaginary
constants) and stays O(1/|x|) for large arguments, unlike Ei itself.
Writing ``A = exp(-x) Ei(x)`` on any branch gives
``F = (A + exp(-2i Im x) conj(A)) / 2``, which is what the large-argument
branches evaluate.
"""

from __future__ import annotations

import numpy as np

EULER_GAMMA = 0.57721566490153286061

SERIES_RADIUS = 2.0
ASYMPTOTIC_RADIUS = 40.0
_CF_TOL = 1e-16
_CF_MAXITER = 2000


def _series_re_ei(x):
    """gamma + ln|x| + Re sum_{k>=1} x^k / (k k!)."""
    ax = np.abs(x)
    kmax = int(np.e * ax.max()) + 40 if x.size else 0
    term = np.ones_like(x)
    acc = np.zeros_like(x)
    for k in range(1, kmax + 1):
        term = term * x / k
        acc += term / k
    return EULER_GAMMA + np.log(ax) + acc.real


def _cf_scaled_e1(y):
    """exp(y) E1(y) by modified Lentz on the even continued fraction."""
    tiny = 1e-300
    b = y + 1.0
    c = np.full_like(y, 1.0 / tiny)
    d = 1.0 / b
    h = d.copy()
    active = np.ones(y.shape, dtype=bool)
    for i in range(1, _CF_MAXITER):
        an = -float(i * i)
        b = b + 2.0
        d = 1.0 / (an * d + b)
        c = b + an / c
        delta = c * d
        h = np.where(active, h * delta, h)
        active &= np.abs(delta - 1.0) > _CF_TOL
        if not active.any():
            break
    else:
        raise RuntimeError("continued fraction for E1 did not converge")
    return h


def _asym_scaled_ei(x):
    """exp(-x) Ei(x) up to an imaginary multiple of exp(-x), |x| large."""
    s = np.ones_like(x)
    term = np.ones_like(x)
    best = np.abs(term)
    for k in range(1, 60):
        nxt = term * k / x
        grow = np.abs(nxt) >= best
        # stop each entry at its smallest term (optimal truncation)
        term = np.where(grow, 0.0, nxt)
        best = np.where(grow, 0.0, np.abs(nxt))
        s = s + term
        if not np.any(best > 1e-18):
            break
    return s / x


def scaled_re_ei(x):
    """``exp(-x) * Re Ei(x)`` for complex ``x`` (array or scalar), ``x != 0``."""
    x = np.asarray(x, dtype=complex)
    shape = x.shape
    x = x.ravel()
    out = np.empty_like(x)
    ax = np.abs(x)
    if np.any(ax == 0):
        raise ZeroDivisionError("scaled_re_ei is singular at x = 0")
    near_pos = np.abs(np.angle(x)) < np.pi / 4
    m_ser = (ax <= SERIES_RADIUS) | (near_pos & (ax < ASYMPTOTIC_RADIUS))
    m_asy = near_pos & (ax >= ASYMPTOTIC_RADIUS)
    m_cf = ~(m_ser | m_asy)
    if m_ser.any():
        xs = x[m_ser]
        out[m_ser] = np.exp(-xs) * _series_re_ei(xs)
    if m_asy.any():
        xa = x[m_asy]
        a = _asym_scaled_ei(xa)
        out[m_asy] = 0.5 * (a + np.exp(-2j * xa.imag) * np.conj(a))
    if m_cf.any():
        xc = x[m_cf]
        a = -_cf_scaled_e1(-xc)
        out[m_cf] = 0.5 * (a + np.exp(-2j * xc.imag) * np.conj(a))
    return out.reshape(shape)


def faddeev_green(z, lam):
    """Closed-form Faddeev Green function ``-(i/pi) exp(-lam z) Re Ei(lam z)``.

    At ``lam = 0`` the ``ln|lam|`` divergence is dropped and the Laplace
    kernel ``-(i/pi)(ln|z| + gamma)`` is returned.
    """
    z = np.asarray(z, dtype=complex)
    lam = complex(lam)
    if np.any(z == 0):
        raise ZeroDivisionError("Green function is singular at z = 0")
    if lam == 0:
        return -1j / np.pi * (np.log(np.abs(z)) + EULER_GAMMA) + 0j
    return -1j / np.pi * scaled_re_ei(lam * z)
