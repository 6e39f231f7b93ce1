"""Faddeev Green function of ``dbar(d + lambda dz)`` and the quadratic-phase kernel g_a.

Conventions (frozen package-wide): ``dA`` is the Euclidean area element,
``dz^dzbar`` written against a positive density counts as ``2 dA``, and the
Green function is normalised so that, as forms,
``dbar(d + lam dz) g = delta``, i.e. in coordinates

    2i * d_zbar (d_z + lam) g = delta.

Three independent evaluations of g exist here:

* :func:`faddeev_g` -- the frequency representation
  ``(i/2 pi^2) * int exp(i(w zbar + wbar z)) / (w (wbar - i lam)) dA(w)``.
  Rotating ``z`` onto the positive axis and integrating the imaginary
  direction of ``w`` exactly by residues leaves a single oscillatory
  integral with a simple pole, which is done by graded Gauss panels on a
  truncated line plus an integration-by-parts tail.
* :func:`faddeev_g_shifted_form` -- the representation with phase
  ``exp(lam w - conj(lam w))`` and denominator ``(w + z) wbar``, reduced
  the same way after rotating ``lam`` onto the positive axis.
* :func:`dbar_eit.kernels.faddeev_green` -- the closed form
  ``-(i/pi) exp(-lam z) Re Ei(lam z)`` (compiled hot path).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import j0

from .kernels import EULER_GAMMA, faddeev_green

# mean of ln|w| over the unit square centred at 0
LOG_CELL_MEAN = 0.5 * (np.log(0.5) - 3.0 + np.pi / 2)

_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


class TruncationError(RuntimeError):
    """Requested accuracy not reached at the configured frequency cutoff."""


class OscillationBudgetError(ValueError):
    """The quadrature grid cannot resolve the requested oscillation."""


# ---------------------------------------------------------------------------
# one-dimensional reduced integrals


def _panels(a, b, width, near, dist):
    """Panel breakpoints on [a, b], graded towards ``near`` (a or b).

    Panels within ``dist`` of the end ``near`` have widths growing
    geometrically from ``dist/4``, so a pole at distance ``dist`` from that
    end is resolved.
    """
    length = b - a
    first = min(width, max(dist, 1e-300) / 4)
    w = [first]
    s = first
    while s < length and w[-1] < width:
        nxt = min(width, w[-1] * 1.5)
        w.append(nxt)
        s += nxt
    graded = np.cumsum(w)
    graded = graded[graded < length]
    rest_start = graded[-1] if graded.size else 0.0
    n_rest = int(np.ceil((length - rest_start) / width))
    uniform = rest_start + (length - rest_start) * np.arange(1, n_rest + 1) / n_rest
    offs = np.concatenate([[0.0], graded, uniform])
    if near == "a":
        return a + offs
    return (b - offs)[::-1]


def _gauss_on(br):
    mid = 0.5 * (br[1:] + br[:-1])
    half = 0.5 * (br[1:] - br[:-1])
    x = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    w = (half[:, None] * _GL_W[None, :]).ravel()
    return x, w


def _tail(omega, c, K, sign):
    """Integration-by-parts tail of ``int exp(i omega u)/(u - c)``.

    ``sign=+1`` gives the integral over ``[K, inf)``, ``sign=-1`` over
    ``(-inf, -K]``.
    """
    u0 = sign * K
    e = np.exp(1j * omega * u0)
    s = 0.0 + 0.0j
    fact = 1.0
    for n in range(4):
        if n:
            fact *= n
        s += fact / ((u0 - c) ** (n + 1) * (1j * omega) ** (n + 1))
    return -sign * e * s


def _split_pole_integral(omega, c, lo, hi, K, width):
    """``pi * (int_hi^inf - int_-inf^lo) exp(i omega u)/(u - c) du``.

    The pole ``c`` lies at distance ``|c|`` from both endpoints (it sits
    over the gap ``[lo, hi]``), so each half-line is graded towards its
    finite end.
    """
    if not K > max(abs(lo), abs(hi)) + 1:
        raise TruncationError("frequency cutoff too small for this argument")
    dist = abs(c)
    total = 0.0 + 0.0j
    x, w = _gauss_on(_panels(hi, K, width, "a", dist))
    total += np.sum(w * np.exp(1j * omega * x) / (x - c))
    total += _tail(omega, c, K, +1)
    x, w = _gauss_on(_panels(-K, lo, width, "b", dist))
    total -= np.sum(w * np.exp(1j * omega * x) / (x - c))
    total -= _tail(omega, c, K, -1)
    return np.pi * total


def _panel_width(omega):
    return min(0.5, np.pi / (2 * max(omega, 1e-12)))


def _freq_integral(z, lam, K):
    """``int exp(i(w zbar + wbar z)) / (w (wbar - i lam)) dA(w)``, lam != 0."""
    beta = np.angle(z)
    x = abs(z)
    lp = lam * np.exp(1j * beta)
    c = 0.5j * lp
    lo, hi = min(0.0, -lp.imag), max(0.0, -lp.imag)
    return _split_pole_integral(2 * x, c, lo, hi, K, _panel_width(2 * x))


def _shifted_integral(z, lam, K):
    """``int exp(lam w - conj(lam w)) / ((w + z) wbar) dA(w)``, lam != 0."""
    alpha = np.angle(lam)
    zp = z * np.exp(1j * alpha)
    om = 2 * abs(lam)
    c = 0.5j * zp
    lo, hi = min(0.0, -zp.imag), max(0.0, -zp.imag)
    return _split_pole_integral(om, c, lo, hi, K, _panel_width(om))


def _laplace_regularised(z, K):
    """``2 pi int_0^inf (J0(2|z| rho) - 1[rho<1]) / rho d rho`` truncated at K."""
    a = 2 * abs(z)
    width = _panel_width(a)
    x, w = _gauss_on(_panels(0.0, 1.0, min(width, 0.25), "a", 0.0))
    inner = np.sum(w * (j0(a * x) - 1.0) / x)
    x, w = _gauss_on(_panels(1.0, K, width, "a", 1.0))
    outer = np.sum(w * j0(a * x) / x)
    # leading asymptotic tail of int_K^inf J0(a rho)/rho
    tail = -np.sqrt(2 / (np.pi * a * K)) * np.sin(a * K - np.pi / 4) / (a * K)
    return 2 * np.pi * (inner + outer + tail)


# ---------------------------------------------------------------------------
# public evaluations of g


def _checked(fun, z, lam, k_max, rtol):
    v1 = fun(z, lam, k_max)
    v2 = fun(z, lam, 2 * k_max)
    if abs(v2 - v1) > rtol * abs(v2):
        raise TruncationError(
            f"doubling k_max={k_max} changed g by {abs(v2 - v1) / abs(v2):.2e} relative"
        )
    return v2


def faddeev_g(z, lam, k_max=4096.0, rtol=1e-3):
    """Faddeev Green function from its frequency representation.

    Parameters
    ----------
    z : complex
        Nonzero evaluation point.
    lam : complex
        Spectral parameter. ``lam = 0`` returns the Laplace kernel
        ``-(i/pi)(ln|z| + gamma)`` (the ``ln|lam|`` divergence removed),
        evaluated from the regularised radial Bessel integral.
    k_max : float
        Frequency cutoff. The value is also computed at ``2 k_max`` and
        :class:`TruncationError` is raised when the two differ by more than
        ``rtol`` relative.
    """
    z = complex(z)
    lam = complex(lam)
    if z == 0:
        raise ZeroDivisionError("faddeev_g is singular at z = 0")
    if lam == 0:
        val = _checked(lambda zz, _, k: _laplace_regularised(zz, k), z, lam, k_max, rtol)
    else:
        val = _checked(_freq_integral, z, lam, k_max, rtol)
    return 1j / (2 * np.pi**2) * val


def faddeev_g_shifted_form(z, lam, k_max=4096.0, rtol=1e-3):
    """Faddeev Green function from the ``(w + z) wbar`` representation, ``lam != 0``."""
    z = complex(z)
    lam = complex(lam)
    if lam == 0:
        raise ValueError("the shifted representation diverges at lam = 0")
    val = _checked(_shifted_integral, z, lam, k_max, rtol)
    return 1j / (2 * np.pi**2) * val


def printed_form_shifted(z, lam, **kw):
    """First printed representation, prefactor ``i/(2 pi)^2`` with ``dw^dwbar = 2 dA``."""
    return 1j / (2 * np.pi) ** 2 * 2 * faddeev_g_shifted_form(z, lam, **kw) * (2 * np.pi**2 / 1j)


def printed_form_frequency(z, lam, **kw):
    """Second printed representation, prefactor ``i/(2 (2 pi)^2)`` with ``dw^dwbar = 2 dA``."""
    return 1j / (2 * (2 * np.pi) ** 2) * 2 * faddeev_g(z, lam, **kw) * (2 * np.pi**2 / 1j)


def cell_average_g(lam, h):
    """Average of g over the ``h x h`` cell centred at the singularity.

    Uses ``g ~ -(i/pi)(ln|w| + gamma + ln|lam|)`` near 0; the first
    correction is odd in ``w`` and averages out.
    """
    lam = complex(lam)
    log_lam = np.log(abs(lam)) if lam != 0 else 0.0
    return -1j / np.pi * (EULER_GAMMA + log_lam + np.log(h) + LOG_CELL_MEAN)


# ---------------------------------------------------------------------------
# lattice tables and convolution


@dataclass(frozen=True)
class FaddeevGreenTable:
    """g on the difference lattice ``h * (mx + i my)``, ``|mx|, |my| < n``.

    The singular centre node holds the cell average and is flagged.
    """

    lam: complex
    h: float
    n: int
    values: np.ndarray = field(repr=False)
    truncation: float = np.inf
    singular_index: tuple = (0, 0)

    @property
    def resolution(self) -> int:
        return self.n

    def kernel_fft(self):
        return _kernel_fft(self.lam, self.h, self.n)

    def convolve(self, f):
        """``h^2 sum_j g(z_i - xi_j) f_j`` on an ``n x n`` cell-centred grid."""
        f = np.asarray(f)
        if f.shape != (self.n, self.n):
            raise ValueError("density shape does not match table")
        m = 2 * self.n
        F = np.fft.fft2(f, s=(m, m))
        out = np.fft.ifft2(F * self.kernel_fft())
        n = self.n
        return out[n - 1 : 2 * n - 1, n - 1 : 2 * n - 1]

    def save(self, path):
        """Flat little-endian binary: header then re/im pairs, row-major."""
        hdr = struct.pack(
            "<ddqqdd", self.lam.real, self.lam.imag, self.n, self.n, self.truncation, self.h
        )
        data = np.ascontiguousarray(self.values, dtype="<c16")
        with open(path, "wb") as fh:
            fh.write(hdr)
            fh.write(data.view("<f8").tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            raw = fh.read()
        size = struct.calcsize("<ddqqdd")
        lr, li, n1, n2, cut, h = struct.unpack("<ddqqdd", raw[:size])
        vals = np.frombuffer(raw[size:], dtype="<f8").view("<c16")
        vals = vals.reshape(2 * n1 - 1, 2 * n2 - 1).copy()
        vals.setflags(write=False)
        return cls(complex(lr, li), h, int(n1), vals, cut, (int(n1) - 1, int(n2) - 1))


@lru_cache(maxsize=64)
def build_green_table(lam, h, n) -> FaddeevGreenTable:
    """Closed-form table of g at lattice differences (cached per ``(lam, h, n)``)."""
    lam = complex(lam)
    m = np.arange(-(n - 1), n)
    d = h * (m[None, :] + 1j * m[:, None])
    d[n - 1, n - 1] = 1.0
    vals = faddeev_green(d, lam)
    vals[n - 1, n - 1] = cell_average_g(lam, h)
    vals.setflags(write=False)
    return FaddeevGreenTable(lam, float(h), int(n), vals, np.inf, (n - 1, n - 1))


@lru_cache(maxsize=64)
def _kernel_fft(lam, h, n):
    tab = build_green_table(lam, h, n)
    m = 2 * n
    pad = np.zeros((m, m), dtype=complex)
    pad[: 2 * n - 1, : 2 * n - 1] = tab.values * h * h
    k = np.fft.fft2(pad)
    k.setflags(write=False)
    return k


# ---------------------------------------------------------------------------
# residual self-check


def box_grid(n, half_width=1.0):
    """Cell-centred ``n x n`` grid on ``[-a, a]^2``; index ``[iy, ix]``."""
    h = 2 * half_width / n
    ax = -half_width + (np.arange(n) + 0.5) * h
    return ax[None, :] + 1j * ax[:, None], h


def apply_dbar_operator(u, h, lam):
    """``2i (u_zzbar + lam u_zbar)`` by central differences on interior nodes.

    Returns an array of shape ``(n - 2, n - 2)``.
    """
    lap = (
        u[1:-1, 2:] + u[1:-1, :-2] + u[2:, 1:-1] + u[:-2, 1:-1] - 4 * u[1:-1, 1:-1]
    ) / h**2
    ux = (u[1:-1, 2:] - u[1:-1, :-2]) / (2 * h)
    uy = (u[2:, 1:-1] - u[:-2, 1:-1]) / (2 * h)
    dbar = 0.5 * (ux + 1j * uy)
    return 2j * (lap / 4 + lam * dbar)


def smooth_bump(z, radius=0.6, center=0.0):
    s2 = np.abs(np.asarray(z) - center) ** 2 / radius**2
    out = np.zeros(s2.shape)
    m = s2 < 1
    out[m] = np.exp(1 - 1 / (1 - s2[m]))
    return out


def greens_residual_test(lam, phi=None, h=1 / 64):
    """Relative residual of ``dbar(d + lam dz)`` applied to ``g * phi``.

    Parameters
    ----------
    lam : complex
    phi : callable or None
        Density ``phi(z)`` supported in ``|z| < 0.8``; default is a smooth
        bump of radius 0.6.
    h : float
        Grid spacing on the box ``[-1, 1]^2``.
    """
    n = int(round(2 / h))
    z, h = box_grid(n)
    f = smooth_bump(z) if phi is None else np.asarray(phi(z), dtype=complex)
    if not np.any(np.abs(f) > 0):
        raise ValueError("zero density: residual undefined")
    if np.any(np.abs(f[np.abs(z) >= 0.8]) > 0):
        raise ValueError("density must be supported in |z| < 0.8")
    u = build_green_table(complex(lam), h, n).convolve(f)
    res = apply_dbar_operator(u, h, complex(lam))
    ref = f[1:-1, 1:-1]
    return float(np.linalg.norm(res - ref) / np.linalg.norm(ref))


# ---------------------------------------------------------------------------
# quadratic-phase kernel


@dataclass(frozen=True)
class BukhgeimValue:
    value: complex
    error_estimate: float
    radius: float
    n: int


@dataclass(frozen=True)
class BukhgeimKernelTable:
    a: complex
    lam: complex
    pairs: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)


def _bukhgeim_integral(z, zeta, center, lam, radius, n):
    """``int_{|eta - center| < R} E / ((eta - z)(conj(zeta) - conj(eta))) dA``.

    ``E = exp(-lam s^2 + conj(lam s^2))`` with ``s = center - eta``. The two
    simple singularities are removed by subtracting their leading terms
    times a smooth radial cutoff; those terms integrate to zero exactly.
    """
    h = 2 * radius / n
    ax = -radius + (np.arange(n) + 0.5) * h
    eta = center + ax[None, :] + 1j * ax[:, None]
    inside = np.abs(eta - center) < radius

    def phase(e):
        s2 = lam * (center - e) ** 2
        return np.exp(-s2 + np.conj(s2))

    rc = 0.25 * min(abs(z - zeta), 1.0) if z != zeta else 0.25

    def cut(e, p):
        t = np.abs(e - p) / rc
        return np.where(t < 1, np.cos(0.5 * np.pi * np.minimum(t, 1)) ** 2, 0.0)

    with np.errstate(divide="ignore", invalid="ignore"):
        f = phase(eta) / ((eta - z) * (np.conj(zeta) - np.conj(eta)))
        A = phase(z) / (np.conj(zeta) - np.conj(z))
        B = phase(zeta) / (zeta - z)
        f = f - A * cut(eta, z) / (eta - z) - B * cut(eta, zeta) / (np.conj(zeta) - np.conj(eta))
    f = np.where(np.isfinite(f), f, 0.0)
    return np.sum(f[inside]) * h * h


def bukhgeim_g(a, z, zeta, lam, radius=3.0, n=256, budget=1.0):
    """Quadratic-phase kernel g_a by truncated-disk quadrature.

    The integral over the plane is replaced by the disk of ``radius``
    about the phase centre ``zeta + a``; the result depends on that
    truncation (the integrand decays only like ``1/|eta|^2`` and the
    integral is log-divergent at ``lam = 0``). The error estimate is the
    change from resolution ``n/2`` to ``n``.

    Raises
    ------
    OscillationBudgetError
        When the phase changes by more than ``budget`` radians per cell
        at the disk edge.
    """
    a, z, zeta, lam = complex(a), complex(z), complex(zeta), complex(lam)
    if z == zeta:
        raise ValueError("z = zeta is a singular configuration")
    h = 2 * radius / n
    if 2 * abs(lam) * radius * h > budget:
        raise OscillationBudgetError(
            f"|lam|={abs(lam):.3g} exceeds the budget of this grid (n={n}, R={radius})"
        )
    center = zeta + a
    pref = 1j * np.exp(lam * a * a - np.conj(lam * a * a)) / (2 * np.pi**2) * 2
    v = pref * _bukhgeim_integral(z, zeta, center, lam, radius, n)
    v_half = pref * _bukhgeim_integral(z, zeta, center, lam, radius, n // 2)
    return BukhgeimValue(complex(v), float(abs(v - v_half)), radius, n)


def bukhgeim_table(a, lam, pairs, **kw) -> BukhgeimKernelTable:
    pairs = np.asarray(pairs, dtype=complex).reshape(-1, 2)
    vals = np.array([bukhgeim_g(a, p[0], p[1], lam, **kw).value for p in pairs])
    return BukhgeimKernelTable(complex(a), complex(lam), pairs, vals)
