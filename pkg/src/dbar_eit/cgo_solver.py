"""Complex geometrical optics solutions: interior and boundary integral equations.

Interior: ``mu = 1 + (i/2) int g(z - xi, lam) q0(xi) mu(xi) dA(xi)`` with
``q0 = Delta sqrt(sigma) / sqrt(sigma)`` (so ``Delta psi = q0 psi`` for
``psi = e^{lam z} mu``). It is discretised on a cell-centred Cartesian box
covering the disk; the convolution uses the lattice Green table and FFTs,
and the system is solved by GMRES restricted to the support of ``q0``.

Boundary: ``psi = e^{lam z} + (i/2) int_{|xi|=1} G(z - xi)
((Lambda_sigma - Lambda_1) psi)(xi) ds(xi)`` with
``G(w) = e^{lam w} g(w, lam) = -(i/pi) Re Ei(lam w)``. The logarithmic
diagonal singularity is handled either by Kress product quadrature or by
integrating the log over one arc cell.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.ndimage import map_coordinates
from scipy.sparse.linalg import LinearOperator, gmres

from .faddeev_kernels import box_grid, build_green_table
from .forward_dtn import Conductivity, DtnOperator, analyze, mode_numbers, synthesize
from .kernels import EULER_GAMMA, faddeev_green, scaled_re_ei
from .mesh import BoundaryRing, DiskGrid, build_boundary_ring

COND_LIMIT = 1e8


class ExceptionalPointError(RuntimeError):
    """The discrete system at this lambda is singular or too ill-conditioned."""

    def __init__(self, lam, cond, msg=""):
        super().__init__(f"lambda={lam}: {msg} (condition estimate {cond:.3e})")
        self.lam = lam
        self.cond = cond


class CgoSource(str, Enum):
    INTERIOR_LS = "interior_ls"
    BOUNDARY_EQ = "boundary_eq"
    DBAR_EQ = "dbar_eq"


# ---------------------------------------------------------------------------
# potential


def laplacian_fd(f, z, delta=1e-3):
    """Five-point Laplacian of a callable at points ``z`` with step ``delta``."""
    return (f(z + delta) + f(z - delta) + f(z + 1j * delta) + f(z - 1j * delta) - 4 * f(z)) / delta**2


def q_from_sigma(cond: Conductivity, z=None, delta=1e-3):
    """Area-form coefficient ``q0`` of ``q = dd^c sqrt(sigma)/sqrt(sigma) = q0 dA``.

    Evaluated at the disk grid nodes (or at ``z``) by finite differences of
    ``sqrt(sigma)``; exactly 0 outside the collar radius. The coefficient
    against ``dd^c|z|^2`` is ``q0 / 4``.
    """
    if cond.func is None:
        return _q_from_grid(cond)
    zz = cond.grid.nodes if z is None else np.asarray(z)
    s = lambda w: np.sqrt(cond(w))
    sig = cond(zz)
    if np.any(sig <= 0):
        raise ValueError("sigma must be positive")
    q = laplacian_fd(s, zz, delta) / np.sqrt(sig)
    return np.where(np.abs(zz) > cond.boundary_collar, 0.0, q)


def _q_from_grid(cond: Conductivity):
    # polar finite differences on the grid itself (no evaluator available)
    from .forward_dtn import spectral_derivative_matrix

    g = cond.grid
    s = np.sqrt(cond.sigma)
    h = g.h
    r = g.r
    pad = np.vstack([s, np.ones((1, g.n_angular))])
    # radial part (1/r)(r s_r)_r with s = 1 at r = 1 + h/2 (collar)
    rf = np.arange(g.n_radial + 1) * h
    ds = np.zeros((g.n_radial + 1, g.n_angular))
    ds[1:] = (pad[1:] - pad[:-1]) / h
    ds[-1] = 0.0
    rad = (rf[1:, None] * ds[1:] - rf[:-1, None] * ds[:-1]) / (r[:, None] * h)
    D = spectral_derivative_matrix(g.n_angular)
    ang = (s @ (D @ D).T) / r[:, None] ** 2
    q = (rad + ang) / s
    return np.where(g.radius_field() > cond.boundary_collar, 0.0, q)


# ---------------------------------------------------------------------------
# interior equation


@dataclass(frozen=True)
class CgoField:
    """``mu(., lam)`` on a disk grid plus the box data it was computed from.

    ``mu = psi e^{-lam z}``; ``mu -> 1`` at infinity is built into the
    decomposition ``mu = 1 + (i/2) g * (q0 mu)``.
    """

    lam: complex
    mu: np.ndarray = field(repr=False)
    source: CgoSource
    residual: float
    grid: DiskGrid | None = field(default=None, repr=False)
    box_z: np.ndarray | None = field(default=None, repr=False)
    box_h: float = 0.0
    box_mu: np.ndarray | None = field(default=None, repr=False)
    box_q0: np.ndarray | None = field(default=None, repr=False)

    def psi(self):
        return np.exp(self.lam * self.grid.nodes) * self.mu

    def evaluate(self, z):
        """Nystrom evaluation ``1 + (i/2) h^2 sum g(z - xi) q0 mu`` at arbitrary points."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        sel = self.box_q0 != 0
        xi = self.box_z[sel]
        dens = (self.box_q0 * self.box_mu)[sel] * self.box_h**2
        out = np.empty(z.shape, dtype=complex)
        flat = z.ravel()
        res = out.ravel()
        for k0 in range(0, flat.size, 256):
            blk = flat[k0 : k0 + 256]
            d = blk[:, None] - xi[None, :]
            d = np.where(d == 0, 1e-300, d)
            res[k0 : k0 + 256] = 1 + 0.5j * (faddeev_green(d, self.lam) @ dens)
        return res.reshape(z.shape)

    def trace(self, ring: BoundaryRing):
        """psi on the boundary ring from the Nystrom representation."""
        return np.exp(self.lam * ring.points) * self.evaluate(ring.points)

    def to_csv(self, path):
        _write_field_csv(path, self.lam, self.grid.nodes.ravel(), self.mu.ravel())


def _box_interp(values, z, half_width, n):
    """Cubic interpolation of cell-centred box data at points ``z``."""
    h = 2 * half_width / n
    col = (np.real(z) + half_width) / h - 0.5
    row = (np.imag(z) + half_width) / h - 0.5
    coords = np.vstack([row.ravel(), col.ravel()])
    re = map_coordinates(values.real, coords, order=3, mode="nearest")
    im = map_coordinates(values.imag, coords, order=3, mode="nearest")
    return (re + 1j * im).reshape(np.shape(z))


def solve_lippmann_schwinger(
    cond: Conductivity, lam, n_box: int = 128, tol: float = 1e-8, map_to_grid: str = "interpolate"
) -> CgoField:
    """Solve the interior equation on the ``n_box x n_box`` box ``[-1, 1]^2``.

    Parameters
    ----------
    map_to_grid : {"interpolate", "nystrom"}
        How ``mu`` is transferred to the disk grid: cubic interpolation of
        the box solution (fast) or the Nystrom representation (exact for
        the discrete system, slower).
    """
    lam = complex(lam)
    z, h = box_grid(n_box)
    q0 = q_from_sigma(cond, z)
    sel = q0 != 0
    grid = cond.grid
    if not np.any(sel):
        mu_box = np.ones_like(z)
        mu = np.ones(grid.shape, dtype=complex)
        return CgoField(lam, mu, CgoSource.INTERIOR_LS, 0.0, grid, z, h, mu_box, q0)
    table = build_green_table(lam, h, n_box)
    idx = np.flatnonzero(sel)

    def apply_full(m_sel):
        dens = np.zeros(z.size, dtype=complex)
        dens[idx] = q0.ravel()[idx] * m_sel
        return table.convolve(dens.reshape(z.shape))

    def matvec(m_sel):
        return m_sel - 0.5j * apply_full(m_sel).ravel()[idx]

    A = LinearOperator((idx.size, idx.size), matvec=matvec, dtype=complex)
    b = np.ones(idx.size, dtype=complex)
    sol, info = gmres(A, b, rtol=tol * 1e-2, atol=0.0, restart=80, maxiter=50)
    res = float(np.linalg.norm(matvec(sol) - b) / np.linalg.norm(b))
    if info != 0 or not res <= tol:
        raise ExceptionalPointError(lam, np.inf, f"GMRES stalled at residual {res:.2e}")
    mu_box = 1 + 0.5j * apply_full(sol)
    if map_to_grid == "nystrom":
        tmp = CgoField(lam, None, CgoSource.INTERIOR_LS, res, grid, z, h, mu_box, q0)
        mu = tmp.evaluate(grid.nodes)
    else:
        mu = _box_interp(mu_box, grid.nodes, 1.0, n_box)
    return CgoField(lam, mu, CgoSource.INTERIOR_LS, res, grid, z, h, mu_box, q0)


def born_mu(cond: Conductivity, lam, n_box: int = 128):
    """First Born term ``1 + (i/2) g * q0`` on the box."""
    z, h = box_grid(n_box)
    q0 = q_from_sigma(cond, z)
    return z, 1 + 0.5j * build_green_table(complex(lam), h, n_box).convolve(q0.astype(complex))


# ---------------------------------------------------------------------------
# boundary equation


@dataclass(frozen=True)
class BoundaryTrace:
    lam: complex
    psi_b: np.ndarray = field(repr=False)
    c_residual: float
    cond: float = 1.0
    ring: BoundaryRing | None = field(default=None, repr=False)

    @property
    def mu_b(self):
        return np.exp(-self.lam * self.ring.points) * self.psi_b

    def to_csv(self, path):
        _write_field_csv(path, self.lam, self.ring.points, self.psi_b)


def kress_log_weights(n):
    """Weights ``R_j`` for ``int_0^{2pi} ln(4 sin^2((t_0 - s)/2)) f(s) ds ~ sum R_j f(s_j)``."""
    t = 2 * np.pi * np.arange(n) / n
    m = np.arange(1, n // 2)
    R = -(4 * np.pi / n) * (np.cos(np.outer(t, m)) / m).sum(axis=1)
    R -= (4 * np.pi / n**2) * np.cos((n // 2) * t)
    return R


def boundary_kernel_matrix(lam, ring: BoundaryRing, rule: str = "kress"):
    """Matrix of ``phi -> int G(z_k - xi) phi(xi) ds(xi)`` on the ring."""
    lam = complex(lam)
    n = ring.n_points
    pts = ring.points
    d = pts[:, None] - pts[None, :]
    k = np.arange(n)
    lag = (k[None, :] - k[:, None]) % n
    dt = ring.arc_weight
    if lam == 0:
        raise ValueError("boundary kernel needs lam != 0")
    logc = EULER_GAMMA + np.log(abs(lam))
    offd = d != 0
    dd = np.where(offd, d, 1.0)
    # G = -(i/pi) Re Ei(lam w) = -(i/pi) exp(lam w) F(lam w)
    reei = np.exp(lam * dd) * scaled_re_ei(lam * dd)
    if rule == "kress":
        smooth = np.where(offd, reei.real - np.log(np.abs(dd)), logc)
        R = kress_log_weights(n)
        return -1j / np.pi * (0.5 * R[lag] + dt * smooth)
    if rule == "local_cell":
        K = np.where(offd, reei.real, 0.0) * dt
        # cell integral of ln|2 sin(s/2)| ~ ln|s| over |s| < dt/2, plus the constant
        diag = dt * (np.log(dt / 2) - 1 + logc)
        K = K + np.diag(np.full(n, diag))
        return -1j / np.pi * K
    raise ValueError(f"unknown singular rule {rule!r}")


def delta_lambda_nodal(dtn: DtnOperator, n_points: int):
    """Nodal matrix of ``Lambda_sigma - Lambda_1`` through the truncated Fourier basis."""
    N = dtn.n_modes
    diff = dtn.matrix - np.diag(np.abs(mode_numbers(N)))
    I = np.eye(n_points)
    C = analyze(I, N)  # (2N+1, n)
    return synthesize(diff @ C, n_points)


def solve_boundary_equation(dtn: DtnOperator, lam, n_points: int = 256, rule: str = "kress") -> BoundaryTrace:
    """Nystrom solve of the boundary integral equation for ``psi`` on ``|z| = 1``."""
    lam = complex(lam)
    ring = build_boundary_ring(n_points)
    if n_points <= 2 * dtn.n_modes:
        raise ValueError("ring must resolve the DtN modes")
    D = delta_lambda_nodal(dtn, n_points)
    rhs = np.exp(lam * ring.points)
    if not np.any(D):
        return BoundaryTrace(lam, rhs, 0.0, 1.0, ring)
    K = boundary_kernel_matrix(lam, ring, rule)
    A = np.eye(n_points) - 0.5j * (K @ D)
    cond = float(np.linalg.cond(A))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise ExceptionalPointError(lam, cond, "boundary system ill-conditioned")
    psi = np.linalg.solve(A, rhs)
    res = float(np.linalg.norm(A @ psi - rhs) / np.linalg.norm(rhs))
    return BoundaryTrace(lam, psi, res, cond, ring)


# ---------------------------------------------------------------------------
# io


def _write_field_csv(path, lam, z, values):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda_re", "lambda_im", "re", "im", "value_re", "value_im"])
        for zz, v in zip(z, values):
            w.writerow([f"{lam.real:.16e}", f"{lam.imag:.16e}", f"{zz.real:.16e}", f"{zz.imag:.16e}", f"{v.real:.16e}", f"{v.imag:.16e}"])
