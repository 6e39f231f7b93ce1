"""Affine plane curves ``V = {P(z1, z2) = 0}``: charts, critical points, the
Cauchy-type kernel, stationary phase and the exceptional-set determinant.

Conventions. ``s(z) = z1 + theta z2`` is the linear phase; ``e(z) =
exp(lam s - conj(lam s))``. A (1,1)-form on ``V`` is written
``q = Q_V dd^c|z|^2|_V`` and in a chart ``z_c`` one has
``dd^c|z|^2|_V = 4 (1 + |dz_o/dz_c|^2) dA(z_c)``.

Stationary phase at a simple critical point ``w`` of ``s|_V`` gives

    int_V e^{i tau (s + conj s)} q ~ (4 pi / tau) (1 + |theta|^2) |P1|^3 / |H| Q_V(w) e^{2 i tau Re s(w)},
    H = P11 P2^2 - 2 P12 P1 P2 + P22 P1^2.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np
from numpy.polynomial import polynomial as npoly

from .faddeev_kernels import OscillationBudgetError

log = logging.getLogger(__name__)


class BranchPointError(ValueError):
    """The chart degenerates (``dP/dz_other = 0``) at the requested point."""


class DegenerateThetaError(ValueError):
    """``theta`` is forbidden or yields a multiple critical point."""


class NonGenericDivisorError(ValueError):
    pass


class VandermondeError(ValueError):
    pass


# ---------------------------------------------------------------------------
# curves


@dataclass(frozen=True)
class AlgebraicCurve:
    """``P(z1, z2) = sum C[i, j] z1^i z2^j``.

    ``forms`` are numerators ``c_k`` (coefficient arrays in the same layout)
    of holomorphic forms ``omega_k = c_k dz1 / P2``.
    """

    coeffs: np.ndarray = field(repr=False)
    name: str = "curve"
    forms: tuple = field(default=(), repr=False)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim != 2 or not np.any(c):
            raise ValueError("coefficients must be a nonzero 2D array")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self) -> int:
        i, j = np.nonzero(self.coeffs)
        return int(np.max(i + j))

    @property
    def genus(self) -> int:
        n = self.degree
        return (n - 1) * (n - 2) // 2

    def _d(self, a, b):
        c = self.coeffs
        if a:
            c = npoly.polyder(c, a, axis=0)
        if b:
            c = npoly.polyder(c, b, axis=1)
        return c

    def eval(self, z1, z2, d=(0, 0)):
        z1, z2 = np.broadcast_arrays(np.asarray(z1), np.asarray(z2))
        return npoly.polyval2d(z1, z2, self._d(*d))

    def __call__(self, z1, z2):
        return self.eval(z1, z2)

    def grad(self, z1, z2):
        return self.eval(z1, z2, (1, 0)), self.eval(z1, z2, (0, 1))

    def hessian_form(self, z1, z2):
        """``H = P11 P2^2 - 2 P12 P1 P2 + P22 P1^2``."""
        p1, p2 = self.grad(z1, z2)
        p11 = self.eval(z1, z2, (2, 0))
        p12 = self.eval(z1, z2, (1, 1))
        p22 = self.eval(z1, z2, (0, 2))
        return p11 * p2**2 - 2 * p12 * p1 * p2 + p22 * p1**2

    def asymptotic_slopes(self):
        """Roots ``gamma`` of the top-degree part ``P_N(1, gamma)``."""
        n = self.degree
        top = np.array([self.coeffs[n - j, j] if n - j < self.coeffs.shape[0] and j < self.coeffs.shape[1] else 0 for j in range(n + 1)])
        return npoly.polyroots(np.trim_zeros(top, "b")) if np.count_nonzero(top) > 1 else np.array([])

    def forbidden_thetas(self):
        """``theta_l = -1 / gamma_l``: critical points escape to infinity."""
        g = self.asymptotic_slopes()
        return -1 / g[g != 0]

    def theta_margin(self, theta):
        f = self.forbidden_thetas()
        return float(np.min(np.abs(theta - f))) if f.size else np.inf

    def branch_points(self):
        """``z1`` values where ``P2 = 0`` on ``V`` (roots of the discriminant)."""
        G = npoly.polyder(self.coeffs, 1, axis=1)
        res = _resultant_z1(self, G)
        res = np.trim_zeros(np.where(np.abs(res) > 1e-11 * np.max(np.abs(res)), res, 0), "b")
        return npoly.polyroots(res) if res.size > 1 else np.array([])

    @property
    def r0(self) -> float:
        """Radius beyond which ``z1`` is a chart coordinate (``P2 != 0``)."""
        b = self.branch_points()
        return float(np.max(np.abs(b))) if b.size else 0.0

    def form_values(self, z1, z2):
        """``omega_k / dz1 = c_k / P2`` for every form."""
        p2 = self.eval(z1, z2, (0, 1))
        z1, z2 = np.broadcast_arrays(np.asarray(z1), np.asarray(z2))
        return [npoly.polyval2d(z1, z2, np.asarray(c, dtype=complex)) / p2 for c in self.forms]

    def to_file(self, path):
        with Path(path).open("w") as fh:
            fh.write(f"# {self.name}\n# i j re im\n")
            for (i, j), c in np.ndenumerate(self.coeffs):
                if c != 0:
                    fh.write(f"{i} {j} {float(c.real)!r} {float(c.imag)!r}\n")


def read_curve(path, name=None, forms=()) -> AlgebraicCurve:
    """Coefficient file: one ``i j re im`` monomial per line, ``#`` comments."""
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#")[0].strip()
        if line:
            i, j, re, im = line.split()
            rows.append((int(i), int(j), float(re) + 1j * float(im)))
    if not rows:
        raise ValueError(f"no monomials in {path}")
    n1 = max(r[0] for r in rows) + 1
    n2 = max(r[1] for r in rows) + 1
    c = np.zeros((n1, n2), dtype=complex)
    for i, j, v in rows:
        c[i, j] += v
    return AlgebraicCurve(c, name or Path(path).stem, tuple(forms))


def shipped_curve(name: str) -> AlgebraicCurve:
    path = resources.files("dbar_eit") / "data" / f"{name}.txt"
    forms = (np.ones((1, 1)),) if name == "fermat_cubic" else ()
    with resources.as_file(path) as p:
        return read_curve(p, name, forms)


def ellipse() -> AlgebraicCurve:
    return shipped_curve("ellipse")


def fermat_cubic() -> AlgebraicCurve:
    """``z1^3 + z2^3 = 1`` with its holomorphic form ``dz1 / P2``."""
    return shipped_curve("fermat_cubic")


# ---------------------------------------------------------------------------
# points and branches


@dataclass(frozen=True)
class CurvePoints:
    z1: complex
    roots: np.ndarray
    multiplicity: np.ndarray
    branch_point: bool


def _z2_poly(curve, z1):
    # coefficients in z2 (ascending) at fixed z1
    return np.array([npoly.polyval(z1, curve.coeffs[:, j]) for j in range(curve.coeffs.shape[1])])


def curve_points(curve: AlgebraicCurve, z1, tol=1e-6) -> CurvePoints:
    """All ``z2`` with ``P(z1, z2) = 0``; coincident roots are merged and flagged."""
    z1 = complex(z1)
    c = _z2_poly(curve, z1)
    if not np.any(np.abs(c) > 1e-14 * np.max(np.abs(curve.coeffs))):
        raise ValueError("P(z1, .) vanishes identically")
    c = np.trim_zeros(np.where(np.abs(c) > 1e-14 * np.max(np.abs(c)), c, 0), "b")
    r = npoly.polyroots(c) if c.size > 1 else np.array([])
    r = np.array([_polish_z2(curve, z1, x) for x in r])
    roots, mult = [], []
    for x in r:
        for k, y in enumerate(roots):
            if abs(x - y) < tol * max(1.0, abs(y)):
                mult[k] += 1
                roots[k] = (roots[k] * (mult[k] - 1) + x) / mult[k]
                break
        else:
            roots.append(x)
            mult.append(1)
    mult = np.array(mult)
    return CurvePoints(z1, np.array(roots), mult, bool(np.any(mult > 1)))


def _polish_z2(curve, z1, z2, it=3):
    for _ in range(it):
        p2 = curve.eval(z1, z2, (0, 1))
        if abs(p2) < 1e-14:
            break
        z2 = z2 - curve(z1, z2) / p2
    return z2


def _newton_other(curve, zc, zo, chart, it=20, tol=1e-13):
    """Solve ``P = 0`` for the non-chart coordinate, vectorised."""
    zo = np.array(zo, dtype=complex)
    d = (1, 0) if chart == 2 else (0, 1)
    for _ in range(it):
        z1, z2 = (zo, zc) if chart == 2 else (zc, zo)
        f = curve(z1, z2)
        fp = curve.eval(z1, z2, d)
        step = f / fp
        zo = zo - step
        if np.all(np.abs(step) <= tol * (1 + np.abs(zo))):
            break
    return zo


def track_branch(curve: AlgebraicCurve, z1_path, z2_start, max_halvings=12, branch_tol=1e-4):
    """Continue a root ``z2(z1)`` along ``z1_path`` with step halving.

    Raises ``BranchPointError`` when ``|P2|`` drops below ``branch_tol``
    (relative to ``|P1|``) or the continuation cannot be resolved.
    """
    path = np.asarray(z1_path, dtype=complex)
    out = np.empty(path.size, dtype=complex)
    z2 = complex(_newton_other(curve, path[0], z2_start, chart=1))
    out[0] = z2
    for k in range(1, path.size):
        a, b = path[k - 1], path[k]
        sub = 1
        for _ in range(max_halvings):
            pts = a + (b - a) * np.arange(sub + 1) / sub
            w = z2
            ok = True
            for p0, p in zip(pts[:-1], pts[1:]):
                p1, p2 = curve.grad(p0, w)
                if abs(p2) < branch_tol * (1 + abs(p1)):
                    raise BranchPointError(f"branch point near z1={p0}")
                # tangent predictor, Newton corrector
                w_new = complex(_newton_other(curve, p, w - p1 / p2 * (p - p0), chart=1))
                if abs(w_new - w) > 0.25 * (1 + abs(w)) or abs(curve(p, w_new)) > 1e-9:
                    ok = False
                    break
                w = w_new
            if ok:
                z2 = w
                break
            sub *= 2
        else:
            raise BranchPointError(f"continuation failed between {a} and {b}")
        p1, p2 = curve.grad(b, z2)
        if abs(p2) < branch_tol * (1 + abs(p1)):
            raise BranchPointError(f"branch point near z1={b}")
        out[k] = z2
    return out


# ---------------------------------------------------------------------------
# critical points


@dataclass(frozen=True)
class CriticalPoint:
    w: tuple
    theta: complex
    second_order: complex
    first_deriv: complex

    @property
    def phase_node(self) -> float:
        """``2 Re(w1 + theta w2)``, the frequency of ``e^{i tau (s + conj s)}``."""
        return 2 * float(np.real(self.w[0] + self.theta * self.w[1]))


def _sylvester_det(a, b):
    # a, b ascending coefficient lists with formal degrees len-1
    m, n = len(a) - 1, len(b) - 1
    S = np.zeros((m + n, m + n), dtype=complex)
    for i in range(n):
        S[i, i : i + m + 1] = a[::-1]
    for i in range(m):
        S[n + i, i : i + n + 1] = b[::-1]
    return np.linalg.det(S)


def _resultant_z1(curve, G, rho=1.0):
    """Coefficients (ascending in z1) of ``Res_{z2}(P, G)`` by FFT interpolation."""
    n = curve.degree
    deg = n * (n - 1) + n  # safe upper bound
    K = 1 << int(np.ceil(np.log2(deg + 1)))
    pts = rho * np.exp(2j * np.pi * np.arange(K) / K)
    vals = []
    for x in pts:
        a = np.array([npoly.polyval(x, curve.coeffs[:, j]) for j in range(curve.coeffs.shape[1])])
        b = np.array([npoly.polyval(x, G[:, j]) for j in range(G.shape[1])])
        vals.append(_sylvester_det(a, b))
    c = np.fft.fft(np.array(vals)) / K
    return c / rho ** np.arange(K)


def find_critical_points(curve: AlgebraicCurve, theta, tol=1e-8):
    """Points of ``V`` where ``(dz1 + theta dz2)|_V = 0``, i.e. ``P2 = theta P1``."""
    theta = complex(theta)
    if np.any(np.abs(curve.forbidden_thetas() - theta) < 1e-10):
        raise DegenerateThetaError(f"theta={theta} is forbidden")
    C = curve.coeffs
    G = npoly.polyder(C, 1, axis=1)
    P1c = npoly.polyder(C, 1, axis=0)
    Gm = np.zeros((max(G.shape[0], P1c.shape[0]), max(G.shape[1], P1c.shape[1])), dtype=complex)
    Gm[: G.shape[0], : G.shape[1]] += G
    Gm[: P1c.shape[0], : P1c.shape[1]] -= theta * P1c
    # drop trailing all-zero columns in z2 so the formal degree is honest
    while Gm.shape[1] > 1 and not np.any(Gm[:, -1]):
        Gm = Gm[:, :-1]
    res = _resultant_z1(curve, Gm)
    scale = np.max(np.abs(res))
    res = np.where(np.abs(res) > 1e-11 * scale, res, 0)
    res = np.trim_zeros(res, "b")
    z1s = npoly.polyroots(res) if res.size > 1 else np.array([])
    pts = []
    for x in z1s:
        cand = curve_points(curve, x, tol=1e-12).roots
        gv = np.abs(npoly.polyval2d(np.full(cand.shape, x), cand, Gm))
        y = cand[np.argmin(gv)]
        w = _polish_critical(curve, theta, x, y)
        pts.append(w)
    out = []
    for w in pts:
        if any(abs(w[0] - u.w[0]) + abs(w[1] - u.w[1]) < 1e-6 for u in out):
            raise DegenerateThetaError(f"double critical point near {w} at theta={theta}")
        p1 = complex(curve.eval(*w, (1, 0)))
        H = complex(curve.hessian_form(*w))
        if abs(H) < tol:
            raise DegenerateThetaError(f"degenerate critical point {w}")
        out.append(CriticalPoint(w, theta, H, p1))
    return out


def _polish_critical(curve, theta, z1, z2, it=30):
    for _ in range(it):
        p1, p2 = curve.grad(z1, z2)
        p11 = curve.eval(z1, z2, (2, 0))
        p12 = curve.eval(z1, z2, (1, 1))
        p22 = curve.eval(z1, z2, (0, 2))
        F = np.array([curve(z1, z2), p2 - theta * p1])
        J = np.array([[p1, p2], [p12 - theta * p11, p22 - theta * p12]])
        d = np.linalg.solve(J, F)
        z1, z2 = z1 - d[0], z2 - d[1]
        if np.max(np.abs(d)) < 1e-15 * (1 + abs(z1) + abs(z2)):
            break
    return complex(z1), complex(z2)


def localization_constant(curve, thetas):
    """``max_m |w_m| sqrt(delta(theta))`` over a theta sample (bound ``|w| <= C / sqrt(delta)``)."""
    best = 0.0
    for th in thetas:
        d = curve.theta_margin(th)
        for cp in find_critical_points(curve, th):
            best = max(best, abs(cp.w[0]) * np.sqrt(d))
    return best


# ---------------------------------------------------------------------------
# chart patches


@dataclass(frozen=True)
class CurvePatch:
    """Square grid in the chart coordinate with the other coordinate continued."""

    curve: AlgebraicCurve = field(repr=False)
    chart: int
    zc: np.ndarray = field(repr=False)
    zo: np.ndarray = field(repr=False)
    h: float
    mask: np.ndarray = field(repr=False)

    @property
    def z1(self):
        return self.zo if self.chart == 2 else self.zc

    @property
    def z2(self):
        return self.zc if self.chart == 2 else self.zo

    def slope(self):
        """``dz_other / dz_chart``."""
        p1, p2 = self.curve.grad(self.z1, self.z2)
        return -p2 / p1 if self.chart == 2 else -p1 / p2

    def area_density(self):
        """``dd^c|z|^2|_V / dA(z_c)``."""
        return 4 * (1 + np.abs(self.slope()) ** 2)


def build_patch(curve: AlgebraicCurve, seed, chart=2, half_width=0.8, n=256, radius=None) -> CurvePatch:
    """Patch centred at the chart value of ``seed = (z1, z2)``.

    The other coordinate is continued outward from the centre row by row;
    ``radius`` (default ``half_width``) masks the square to a disk.
    """
    z1s, z2s = complex(seed[0]), complex(seed[1])
    c0 = z2s if chart == 2 else z1s
    o0 = z1s if chart == 2 else z2s
    h = 2 * half_width / n
    ax = -half_width + (np.arange(n) + 0.5) * h
    zc = c0 + ax[None, :] + 1j * ax[:, None]
    zo = np.empty_like(zc)
    mid = n // 2
    # centre row outward in both directions
    row = np.empty(n, dtype=complex)
    w = complex(_newton_other(curve, c0 + ax[mid] + 1j * ax[mid], o0, chart))
    row[mid] = w
    for k in list(range(mid + 1, n)) + list(range(mid - 1, -1, -1)):
        prev = row[k - 1] if k > mid else row[k + 1]
        row[k] = complex(_newton_other(curve, zc[mid, k], prev, chart))
    zo[mid] = row
    for r in list(range(mid + 1, n)) + list(range(mid - 1, -1, -1)):
        prev = zo[r - 1] if r > mid else zo[r + 1]
        zo[r] = _newton_other(curve, zc[r], prev, chart)
    mask = np.abs(zc - c0) <= (radius or half_width)
    z1, z2 = (zo, zc) if chart == 2 else (zc, zo)
    bad = mask & (np.abs(curve(z1, z2)) > 1e-8)
    if np.any(bad):
        raise BranchPointError(f"continuation failed on {bad.sum()} patch nodes")
    return CurvePatch(curve, chart, zc, zo, h, mask)


# ---------------------------------------------------------------------------
# Cauchy-type kernel


def r1_kernel(curve: AlgebraicCurve, a, z):
    """``(1/(2 pi i)) det[grad P(a), conj(a - z)/|a - z|^2] / P2(a)``.

    The kernel of the main part of the inverse of dbar applied to a point
    mass at ``a`` (normalised against ``dz1 / P2``), evaluated at ``z``.
    """
    a1, a2 = a
    z1, z2 = np.asarray(z[0]), np.asarray(z[1])
    p1, p2 = curve.grad(a1, a2)
    d1, d2 = np.conj(a1 - z1), np.conj(a2 - z2)
    n2 = np.abs(a1 - z1) ** 2 + np.abs(a2 - z2) ** 2
    return (p1 * d2 - p2 * d1) / n2 / p2 / (2j * np.pi)


def r1_kernel_chart2(curve: AlgebraicCurve, a, z):
    """The same kernel expressed through the ``z2`` chart (``dz1/P2 = -dz2/P1``)."""
    a1, a2 = a
    z1, z2 = np.asarray(z[0]), np.asarray(z[1])
    p1, p2 = curve.grad(a1, a2)
    d1, d2 = np.conj(a1 - z1), np.conj(a2 - z2)
    n2 = np.abs(a1 - z1) ** 2 + np.abs(a2 - z2) ** 2
    per_dz2 = -(p1 * d2 - p2 * d1) / n2 / p1 / (2j * np.pi)
    return per_dz2 * (-p1 / p2)  # dz2/dz1 on V


def r1_apply(patch: CurvePatch, phi, targets=None, block=512):
    """Apply the kernel to ``Phi = phi dzbar_c`` sampled on the patch.

    Midpoint rule in the chart with the self term dropped; the kernel's
    leading part is the Cauchy kernel ``-1/(pi (xi_c - z_c))``, whose cell
    mean vanishes. ``targets`` are ``(z1, z2)`` arrays (default: patch nodes).
    """
    phi = np.asarray(phi)
    if not np.any(phi):
        shape = patch.zc.shape if targets is None else np.shape(targets[0])
        return np.zeros(shape, dtype=complex)
    sel = patch.mask & (phi != 0)
    x1, x2 = patch.z1[sel], patch.z2[sel]
    p1, p2 = patch.curve.grad(x1, x2)
    # R1 Phi = (+1/pi) int phi/P2 det dA (chart 1), (-1/pi) int phi/P1 det dA (chart 2)
    w = (phi[sel] / p2 if patch.chart == 1 else -phi[sel] / p1) * patch.h**2 / np.pi
    t1, t2 = (patch.z1, patch.z2) if targets is None else (np.asarray(targets[0]), np.asarray(targets[1]))
    f1, f2 = t1.ravel(), t2.ravel()
    out = np.empty(f1.size, dtype=complex)
    for k0 in range(0, f1.size, block):
        a1 = f1[k0 : k0 + block, None]
        a2 = f2[k0 : k0 + block, None]
        d1 = np.conj(x1[None, :] - a1)
        d2 = np.conj(x2[None, :] - a2)
        n2 = np.abs(x1[None, :] - a1) ** 2 + np.abs(x2[None, :] - a2) ** 2
        det = np.where(n2 > 0, (p1[None, :] * d2 - p2[None, :] * d1) / np.where(n2 > 0, n2, 1), 0)
        out[k0 : k0 + block] = det @ w
    return out.reshape(t1.shape)


def chart_dbar(patch: CurvePatch, f):
    """``d f / d conj(z_c)`` by central differences (edges NaN)."""
    out = np.full(f.shape, np.nan + 0j)
    h = patch.h
    fx = (f[1:-1, 2:] - f[1:-1, :-2]) / (2 * h)
    fy = (f[2:, 1:-1] - f[:-2, 1:-1]) / (2 * h)
    out[1:-1, 1:-1] = 0.5 * (fx + 1j * fy)
    return out


# ---------------------------------------------------------------------------
# stationary phase


def _phase(patch, theta):
    return patch.z1 + theta * patch.z2


def stationary_phase_integral(patches, Q_V, tau, theta=0.0, budget=1.0, power=0) -> complex:
    """Direct quadrature of ``int_V (i s_r)^power e^{i tau s_r} Q_V dd^c|z|^2|_V``, ``s_r = 2 Re s``.

    ``Q_V`` is a callable ``(z1, z2) -> density``; it must vanish (to
    working precision) outside the union of the disjoint ``patches``.
    """
    total = 0j
    for p in patches:
        s = _phase(p, theta)
        sr = 2 * s.real
        grad = 2 * np.abs(1 + theta * p.slope() if p.chart == 1 else p.slope() + theta)
        q = Q_V(p.z1, p.z2)
        live = p.mask & (np.abs(q) > 1e-12 * np.max(np.abs(q)))
        if np.any(live) and tau * np.max(grad[live]) * p.h > budget:
            raise OscillationBudgetError(f"phase step {tau * np.max(grad[live]) * p.h:.2f} exceeds {budget}")
        integrand = (1j * sr) ** power * np.exp(1j * tau * sr) * q * p.area_density()
        total += np.sum(integrand[p.mask]) * p.h**2
    return complex(total)


def stationary_weight(curve: AlgebraicCurve, cp: CriticalPoint) -> float:
    """``4 pi (1 + |theta|^2) |P1|^3 / |H|`` at a critical point."""
    return 4 * np.pi * (1 + abs(cp.theta) ** 2) * abs(cp.first_deriv) ** 3 / abs(cp.second_order)


def stationary_phase_model(curve: AlgebraicCurve, crit, Q_V, tau, theta=None) -> complex:
    """Leading stationary-phase sum for the integral above (``power = 0``)."""
    tot = 0j
    for cp in crit:
        tot += stationary_weight(curve, cp) / tau * Q_V(*cp.w) * np.exp(1j * tau * cp.phase_node)
    return complex(tot)


def printed_stationary_phase_model(curve: AlgebraicCurve, crit, Q_V, tau) -> complex:
    """The literal theta = 0 display ``-(pi/tau) |P1| Q_2 / |P22| e^{...}`` (``Q_2 = Q_V`` at ``w``).

    Equal to ``-1/4`` of :func:`stationary_phase_model`; kept to pin that ratio.
    """
    tot = 0j
    for cp in crit:
        if cp.theta != 0:
            raise ValueError("printed form is stated for theta = 0")
        p22 = complex(curve.eval(*cp.w, (0, 2)))
        tot += -np.pi / tau * abs(cp.first_deriv) * Q_V(*cp.w) / abs(p22) * np.exp(1j * tau * cp.phase_node)
    return complex(tot)


# ---------------------------------------------------------------------------
# Vandermonde recovery


def boundary_functional_derivatives(patches, Q_V, tau, theta=0.0, orders=(1, 2), **kw):
    """``d^k/dtau^k`` of ``F(tau) = (1/2i) int_V e^{i tau s_r} q`` (interior side, ``mu = 1``)."""
    return np.array([stationary_phase_integral(patches, Q_V, tau, theta, power=k, **kw) / 2j for k in orders])


@dataclass(frozen=True)
class VandermondeResult:
    Q: np.ndarray
    cond: float
    nodes: np.ndarray


def vandermonde_recover_Q(curve: AlgebraicCurve, crit, derivs, tau, orders=None, cond_limit=1e12) -> VandermondeResult:
    """Solve ``tau F^(k)(tau) = sum_m A_m Q_m (i s_m)^k e^{i tau s_m}`` for ``Q_m``.

    ``A_m = stationary_weight / (2i)``; ``orders`` defaults to ``1..M``.
    """
    M = len(crit)
    orders = tuple(range(1, M + 1)) if orders is None else tuple(orders)
    if len(orders) != M or len(derivs) != M:
        raise ValueError("need one derivative order per critical point")
    s = np.array([cp.phase_node for cp in crit])
    if M > 1 and np.min(np.abs(s[:, None] - s[None, :])[~np.eye(M, dtype=bool)]) < 1e-9:
        raise VandermondeError("coincident Vandermonde nodes")
    A = np.array([stationary_weight(curve, cp) / 2j for cp in crit])
    V = np.array([[A[m] * (1j * s[m]) ** k * np.exp(1j * tau * s[m]) for m in range(M)] for k in orders])
    cond = float(np.linalg.cond(V))
    if not np.isfinite(cond) or cond > cond_limit:
        raise VandermondeError(f"system condition {cond:.3e} above limit")
    Q = np.linalg.solve(V, tau * np.asarray(derivs))
    return VandermondeResult(Q, cond, s)


# ---------------------------------------------------------------------------
# exponential polynomials


def _monomial(lam, p, q):
    # lam^p conj(lam)^q := |lam|^{p+q} e^{i (p - q) arg lam}, p - q integer
    lam = np.asarray(lam, dtype=complex)
    return np.abs(lam) ** float(p + q) * np.exp(1j * float(p - q) * np.angle(lam))


@dataclass(frozen=True)
class ExpPoly:
    """``sum_k q_k(lam, conj lam) exp(lam alpha_k - conj(lam alpha_k))``.

    ``terms`` maps a frequency ``alpha`` to a dict ``{(p, q): c}`` of
    monomials ``c lam^p conj(lam)^q``; ``p, q`` may be half-integers with
    ``p - q`` integer.
    """

    terms: tuple

    @classmethod
    def from_dict(cls, d):
        out = []
        for alpha, mon in d.items():
            mon = {k: v for k, v in mon.items() if v != 0}
            if mon:
                out.append((complex(alpha), tuple(sorted(mon.items()))))
        return cls(tuple(out))

    def as_dict(self):
        return {a: dict(m) for a, m in self.terms}

    def __mul__(self, other):
        acc = {}
        for a, m in self.terms:
            for b, n in other.terms:
                key = _freq_key(a + b)
                slot = acc.setdefault(key, {})
                for (p1, q1), c1 in m:
                    for (p2, q2), c2 in n:
                        k = (p1 + p2, q1 + q2)
                        slot[k] = slot.get(k, 0) + c1 * c2
        return ExpPoly.from_dict(acc)

    def __add__(self, other):
        acc = {}
        for a, m in self.terms + other.terms:
            slot = acc.setdefault(_freq_key(a), {})
            for k, c in m:
                slot[k] = slot.get(k, 0) + c
        return ExpPoly.from_dict(acc)

    def __neg__(self):
        return ExpPoly(tuple((a, tuple((k, -c) for k, c in m)) for a, m in self.terms))

    def __sub__(self, other):
        return self + (-other)

    def __call__(self, lam):
        lam = np.asarray(lam, dtype=complex)
        out = np.zeros(lam.shape, dtype=complex)
        for a, m in self.terms:
            e = np.exp(lam * a - np.conj(lam * a))
            out += sum(c * _monomial(lam, p, q) for (p, q), c in m) * e
        return out

    def frequencies(self):
        return np.array([a for a, _ in self.terms])

    def h(self, lam):
        """``max_k Re(lam alpha_k - conj(lam alpha_k))`` (zero for these unimodular phases)."""
        lam = np.asarray(lam, dtype=complex)
        if not self.terms:
            return np.full(lam.shape, -np.inf)
        return np.max([np.real(lam * a - np.conj(lam * a)) for a in self.frequencies()], axis=0)

    def to_sympy(self):
        import sympy as sp

        L, Lb = sp.symbols("lam lamb")
        expr = 0
        for a, m in self.terms:
            A = sp.nsimplify(a.real, rational=False) + sp.I * sp.nsimplify(a.imag, rational=False)
            poly = sum(complex(c) * L ** sp.Rational(Fraction(p).limit_denominator()) * Lb ** sp.Rational(Fraction(q).limit_denominator()) for (p, q), c in m)
            expr += poly * sp.exp(L * A - Lb * sp.conjugate(A))
        return expr, (L, Lb)


def _freq_key(a, digits=12):
    return complex(round(a.real, digits), round(a.imag, digits))


def _det_exppoly(M):
    n = len(M)
    if n == 1:
        return M[0][0]
    tot = None
    for perm in itertools.permutations(range(n)):
        sign = np.linalg.det(np.eye(n)[list(perm)])
        term = ExpPoly.from_dict({0: {(0, 0): round(sign)}})
        for i, j in enumerate(perm):
            term = term * M[i][j]
        tot = term if tot is None else tot + term
    return tot


@dataclass(frozen=True)
class EpsInfResult:
    floor: float
    c_hat: float
    sup_values: np.ndarray


def exppoly_eps_inf(Q, lambda_samples, epsilon, n_radial=8, n_angular=32) -> EpsInfResult:
    """``min_lam sup_{|lam' - lam| < eps} |Q(lam')|`` over a polar net of each disk."""
    lam = np.asarray(lambda_samples, dtype=complex).ravel()
    if lam.size == 0:
        raise ValueError("empty sample set")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    r = epsilon * np.arange(n_radial + 1) / n_radial * (1 - 1e-12)
    t = 2 * np.pi * np.arange(n_angular) / n_angular
    net = np.unique(np.concatenate([[0], (r[1:, None] * np.exp(1j * t[None, :])).ravel()]))
    sup = np.array([np.max(np.abs(Q(l + net))) for l in lam])
    eh = np.exp(Q.h(lam)) if isinstance(Q, ExpPoly) else np.ones_like(sup)
    c_hat = float(np.max(eh / sup)) if np.all(sup > 0) else np.inf
    return EpsInfResult(float(np.min(sup)), c_hat, sup)


# ---------------------------------------------------------------------------
# the exceptional-set determinant


@dataclass(frozen=True)
class DivisorTheta:
    points: tuple
    theta: complex
    forbidden_thetas: np.ndarray = field(repr=False)

    @property
    def delta(self) -> float:
        return float(np.min(np.abs(self.theta - self.forbidden_thetas)))


def make_divisor(curve: AlgebraicCurve, points, theta, tol=1e-10) -> DivisorTheta:
    """Validate ``theta`` genericity and the divisor determinant ``det[omega_j/dz1 (a_k)]``."""
    pts = tuple((complex(a), complex(b)) for a, b in points)
    if len(pts) != len(curve.forms):
        raise ValueError("need one divisor point per holomorphic form")
    f = curve.forbidden_thetas()
    d = DivisorTheta(pts, complex(theta), f)
    if not d.delta > 0:
        raise DegenerateThetaError(f"theta={theta} is not generic")
    for a in pts:
        if abs(curve(*a)) > 1e-8:
            raise ValueError(f"{a} is not on the curve")
    if any(abs(a[0]) <= curve.r0 for a in pts):
        raise ValueError("divisor points must lie outside the branch-point disk |z1| <= r0")
    W = np.array([[v for v in curve.form_values(*a)] for a in pts])
    det = np.linalg.det(W)
    if not np.isfinite(det) or abs(det) < tol * max(1.0, np.max(np.abs(W)) ** len(pts)):
        raise NonGenericDivisorError(f"divisor determinant {det:.3e} vanishes")
    return d


def _entry_parts(curve, divisor, crit):
    """Per-entry coefficients: divisor term ``W`` and critical-point terms ``K_m``."""
    th = divisor.theta
    g = len(divisor.points)
    W = np.zeros((g, g), dtype=complex)
    K = np.zeros((g, g, len(crit)), dtype=complex)
    for j, a in enumerate(divisor.points):
        p1, p2 = curve.grad(*a)
        for k, c in enumerate(curve.forms):
            ck = npoly.polyval2d(a[0], a[1], np.asarray(c, dtype=complex))
            W[j, k] = np.conj(ck / (p2 - th * p1))
        for m, cp in enumerate(crit):
            b = cp.w
            kern = complex(r1_kernel(curve, a, b))
            P1b = cp.first_deriv
            for k, c in enumerate(curve.forms):
                ck = npoly.polyval2d(b[0], b[1], np.asarray(c, dtype=complex))
                K[j, k, m] = abs(P1b) ** 3 * (1 + abs(th) ** 2) * kern * np.conj(-ck / P1b) / (4 * abs(cp.second_order))
    return W, K


def delta_theta_matrix(curve: AlgebraicCurve, divisor: DivisorTheta, lam, crit=None):
    """Two-term asymptotic matrix ``-(1/conj lam) e(a_j) W_jk - (pi/|lam|) sum_m e(b_m) K_jkm``."""
    lam = complex(lam)
    crit = crit or find_critical_points(curve, divisor.theta)
    W, K = _entry_parts(curve, divisor, crit)
    th = divisor.theta
    ea = np.array([np.exp(lam * (a[0] + th * a[1]) - np.conj(lam * (a[0] + th * a[1]))) for a in divisor.points])
    eb = np.array([np.exp(lam * (cp.w[0] + th * cp.w[1]) - np.conj(lam * (cp.w[0] + th * cp.w[1]))) for cp in crit])
    return -(ea[:, None] * W) / np.conj(lam) - (np.pi / abs(lam)) * (K @ eb)


def delta_theta_asymptotic(curve, divisor, lam, crit=None):
    """``(matrix, |lam|^g det)`` of the two-term asymptotic."""
    M = delta_theta_matrix(curve, divisor, lam, crit)
    return M, complex(abs(lam) ** M.shape[0] * np.linalg.det(M))


def delta_theta_surrogate(curve, divisor, lam, crit=None) -> complex:
    """``|lam|^g det`` of :func:`delta_theta_matrix`."""
    g = len(divisor.points)
    return complex(abs(lam) ** g * np.linalg.det(delta_theta_matrix(curve, divisor, lam, crit)))


def delta_theta_exppoly(curve, divisor, crit=None) -> ExpPoly:
    """The surrogate ``|lam|^g det`` as an exponential polynomial.

    Each entry times ``|lam|`` is ``-(|lam|/conj lam) W e(a_j) - pi sum_m K e(b_m)``
    with ``|lam|/conj lam = lam^{1/2} conj(lam)^{-1/2}``.
    """
    crit = crit or find_critical_points(curve, divisor.theta)
    W, K = _entry_parts(curve, divisor, crit)
    th = divisor.theta
    g = len(divisor.points)
    half = (Fraction(1, 2), Fraction(-1, 2))
    M = []
    for j, a in enumerate(divisor.points):
        row = []
        for k in range(g):
            d = {_freq_key(a[0] + th * a[1]): {half: -W[j, k]}}
            for m, cp in enumerate(crit):
                key = _freq_key(cp.w[0] + th * cp.w[1])
                d.setdefault(key, {})
                d[key][(0, 0)] = d[key].get((0, 0), 0) - np.pi * K[j, k, m]
            row.append(ExpPoly.from_dict(d))
        M.append(row)
    return _det_exppoly(M)


# ---------------------------------------------------------------------------
# convenience drivers


def patch_resolution(curve, seed, tau, theta=0.0, chart=2, half_width=0.8, budget=1.0, max_n=4096):
    """Smallest ``n`` keeping the phase step per cell below ``budget`` on the patch."""
    coarse = build_patch(curve, seed, chart, half_width, 64)
    sl = coarse.slope()
    grad = 2 * np.abs(1 + theta * sl if chart == 1 else sl + theta)
    g = np.max(grad[coarse.mask]) * 1.05
    n = int(np.ceil(2 * half_width * tau * g / budget))
    if n > max_n:
        raise OscillationBudgetError(f"patch needs n={n} > {max_n} cells per side at tau={tau}")
    return n


def chart2_branch_distance(curve, z2):
    """Distance from ``z2`` to the nearest ``z2`` with ``P1 = 0`` on the curve."""
    b = AlgebraicCurve(curve.coeffs.T).branch_points()
    return float(np.min(np.abs(b - z2))) if b.size else np.inf


def _patch_geometry(curve, w, half_width, rho):
    # the masked disk stays clear of chart-2 branch points; shrink the bump with it
    hw = min(half_width, 0.8 * chart2_branch_distance(curve, w[1]))
    return hw, min(rho, hw / 4)


def gaussian_density(w, rho=0.2, weight=1.0):
    """``weight * exp(-|z - w|^2 / rho^2)`` as a density on the curve."""
    w1, w2 = w
    return lambda z1, z2: weight * np.exp(-(np.abs(z1 - w1) ** 2 + np.abs(z2 - w2) ** 2) / rho**2)


def gaussian_phase_check(curve, theta, tau, rho=0.2, half_width=0.8, which=0):
    """Direct quadrature and leading model for a Gaussian at one critical point.

    Returns ``(direct, model, critical_point)``.
    """
    crit = find_critical_points(curve, theta)
    cp = crit[which]
    hw, rho = _patch_geometry(curve, cp.w, half_width, rho)
    Q = gaussian_density(cp.w, rho)
    n = patch_resolution(curve, cp.w, tau, theta, half_width=hw)
    p = build_patch(curve, cp.w, 2, hw, n)
    return stationary_phase_integral([p], Q, tau, theta), stationary_phase_model(curve, [cp], Q, tau), cp


def two_point_recovery(curve, theta, tau, weights, rho=0.2, half_width=0.8):
    """Vandermonde recovery for Gaussians of the given peak ``weights`` at every critical point."""
    crit = find_critical_points(curve, theta)
    if len(weights) != len(crit):
        raise ValueError("one weight per critical point")
    geo = [_patch_geometry(curve, cp.w, half_width, rho) for cp in crit]
    dens = [gaussian_density(cp.w, r, wt) for cp, (_, r), wt in zip(crit, geo, weights)]
    Q = lambda z1, z2: sum(d(z1, z2) for d in dens)
    patches = [build_patch(curve, cp.w, 2, hw, patch_resolution(curve, cp.w, tau, theta, half_width=hw)) for cp, (hw, _) in zip(crit, geo)]
    derivs = boundary_functional_derivatives(patches, Q, tau, theta, orders=range(1, len(crit) + 1))
    res = vandermonde_recover_Q(curve, crit, derivs, tau)
    truth = np.array([Q(*cp.w) for cp in crit])
    return res, truth
