"""Forward conductivity solver on the unit disk and the Dirichlet-to-Neumann map.

Discretisation: cell-centred finite volumes in the radial direction (rings
at ``r_i = (i + 1/2) h``; the flux through ``r = 0`` vanishes, so the
origin needs no special treatment), conductivity averaged at half rings,
and a Fourier pseudo-spectral angular operator ``D diag(sigma) D``. The
Dirichlet face sits half a cell outside the last ring.

Two boundary-current rules are available:

* ``"schur"`` (default): the two-point flux through the Dirichlet face.
  This is the Schur complement of a symmetric stiffness matrix, so the
  assembled DtN matrix is Hermitian to rounding for real ``sigma``.
* ``"stencil"``: third-order one-sided difference of ``U`` at ``r = 1``
  from the boundary value and the last three rings.

Assembled maps subtract the discretisation error of the same scheme at
``sigma = 1``: ``Lambda = diag|n| + (Lambda_h[sigma] - Lambda_h[1])``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable

import numpy as np

from .mesh import DiskGrid


class SolverError(RuntimeError):
    pass


class DtnKind(str, Enum):
    FULL_SIGMA = "full_sigma"
    REFERENCE_ONE = "reference_one"


class TraceKind(str, Enum):
    PHI_HAT = "phi_hat"
    PHI_HAT_ZERO = "phi_hat_zero"


@dataclass(frozen=True)
class Conductivity:
    """Conductivity sampled on a disk grid.

    ``func`` (optional) evaluates sigma at arbitrary points and is used
    when another module needs samples off the polar grid.
    """

    grid: DiskGrid
    sigma: np.ndarray = field(repr=False)
    boundary_collar: float = 0.9
    smoothness_tag: str = "C2"
    func: Callable | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        s = np.asarray(self.sigma, dtype=float)
        if s.shape != self.grid.shape:
            raise ValueError("sigma shape does not match grid")
        if not np.all(np.isfinite(s)) or np.any(s <= 0):
            raise ValueError("sigma must be finite and positive at every node")
        if not 0 < self.boundary_collar < 1:
            raise ValueError("boundary_collar must lie in (0, 1)")
        collar = self.grid.radius_field() > self.boundary_collar
        if np.any(s[collar] != 1.0):
            raise ValueError("sigma must equal 1 outside the collar radius")
        s = s.copy()
        s.setflags(write=False)
        object.__setattr__(self, "sigma", s)

    def __call__(self, z):
        if self.func is None:
            raise ValueError("conductivity has no closed-form evaluator")
        z = np.asarray(z)
        out = np.asarray(self.func(z), dtype=float)
        return np.where(np.abs(z) > self.boundary_collar, 1.0, out)

    @classmethod
    def from_function(cls, grid, func, boundary_collar=0.9, smoothness_tag="C-infinity"):
        sig = np.asarray(func(grid.nodes), dtype=float)
        sig = np.where(grid.radius_field() > boundary_collar, 1.0, sig)
        return cls(grid, sig, boundary_collar, smoothness_tag, func)

    @classmethod
    def identity(cls, grid, boundary_collar=0.9):
        return cls(grid, np.ones(grid.shape), boundary_collar, "constant", lambda z: np.ones(np.shape(z)))


# ---------------------------------------------------------------------------
# Fourier helpers (basis e^{int}, |n| <= N)


def mode_numbers(n_modes):
    return np.arange(-n_modes, n_modes + 1)


def synthesize(coeffs, n_angular):
    """Samples of ``sum_n c_n e^{int}`` at ``t_j = 2 pi j / n_angular``."""
    coeffs = np.asarray(coeffs)
    N = (coeffs.shape[0] - 1) // 2
    t = 2 * np.pi * np.arange(n_angular) / n_angular
    E = np.exp(1j * np.outer(t, mode_numbers(N)))
    return E @ coeffs


def analyze(samples, n_modes):
    """Fourier coefficients ``c_n``, ``|n| <= n_modes``, along axis 0."""
    samples = np.asarray(samples)
    na = samples.shape[0]
    if n_modes >= na // 2:
        raise ValueError("n_modes must be below n_angular / 2")
    F = np.fft.fft(samples, axis=0) / na
    idx = mode_numbers(n_modes) % na
    return F[idx]


def spectral_derivative_matrix(n):
    """Real antisymmetric Fourier differentiation matrix, Nyquist mode dropped."""
    k = np.fft.fftfreq(n, 1.0 / n)
    k[n // 2] = 0.0
    I = np.eye(n)
    return np.real(np.fft.ifft(1j * k[:, None] * np.fft.fft(I, axis=0), axis=0))


# ---------------------------------------------------------------------------
# polar elliptic solver


class PolarEllipticSolver:
    """Solve ``div(sigma grad U) - c U = 0`` in the disk with ``U = f`` on the circle.

    ``c`` (default 0) is an optional reaction coefficient sampled on the
    grid; ``sigma`` must equal 1 in the last ring.
    """

    def __init__(self, grid: DiskGrid, sigma: np.ndarray, reaction: np.ndarray | None = None):
        self.grid = grid
        nr, na = grid.shape
        h = grid.h
        sig = np.asarray(sigma, dtype=float)
        r = grid.r
        rf = (np.arange(nr + 1)) * h  # faces r_{i-1/2}; rf[nr] = 1
        sf = np.empty((nr + 1, na))
        sf[0] = 0.0
        sf[1:nr] = 0.5 * (sig[:-1] + sig[1:])
        sf[nr] = sig[-1]
        D = spectral_derivative_matrix(na)
        self._coup = rf[:, None] * sf / h  # radial face couplings
        self._coup[nr] = rf[nr] * sf[nr] / (h / 2)
        diag_blocks = []
        for i in range(nr):
            B = (h / r[i]) * (D @ (sig[i][:, None] * D))
            B -= np.diag(self._coup[i] + self._coup[i + 1])
            if reaction is not None:
                B -= np.diag(np.asarray(reaction)[i] * r[i] * h)
            diag_blocks.append(B)
        self._B = diag_blocks
        self._factor()

    def _factor(self):
        nr = self.grid.n_radial
        M = [None] * nr
        Minv = [None] * nr
        M[0] = self._B[0]
        Minv[0] = np.linalg.inv(M[0])
        for i in range(1, nr):
            c = self._coup[i]
            M[i] = self._B[i] - (c[:, None] * Minv[i - 1]) * c[None, :]
            Minv[i] = np.linalg.inv(M[i])
        self._Minv = Minv

    def solve(self, f_nodal):
        """Nodal boundary values (``n_angular`` x k) -> field (nr, na, k)."""
        f = np.asarray(f_nodal)
        squeeze = f.ndim == 1
        if squeeze:
            f = f[:, None]
        nr = self.grid.n_radial
        rhs_last = -self._coup[nr][:, None] * f.astype(np.result_type(f, float))
        zero = np.zeros_like(rhs_last)
        # block Thomas: forward elimination, then back substitution
        g = [None] * nr
        g[0] = rhs_last if nr == 1 else zero
        for i in range(1, nr):
            base = rhs_last if i == nr - 1 else zero
            g[i] = base - self._coup[i][:, None] * (self._Minv[i - 1] @ g[i - 1])
        U = np.empty((nr,) + f.shape, dtype=np.result_type(f, float))
        U[-1] = self._Minv[-1] @ g[-1]
        for i in range(nr - 2, -1, -1):
            U[i] = self._Minv[i] @ (g[i] - self._coup[i + 1][:, None] * U[i + 1])
        return U[..., 0] if squeeze else U

    def residual(self, U, f_nodal):
        """Max-norm residual of the discrete equations for a computed field."""
        U = np.asarray(U)
        f = np.asarray(f_nodal)
        nr = self.grid.n_radial
        cp = self._coup if f.ndim == 1 else self._coup[:, :, None]
        res = 0.0
        for i in range(nr):
            v = self._B[i] @ U[i]
            if i > 0:
                v = v + cp[i] * U[i - 1]
            if i < nr - 1:
                v = v + cp[i + 1] * U[i + 1]
            else:
                v = v + cp[nr] * f
            res = max(res, float(np.max(np.abs(v))))
        return res

    def boundary_current(self, U, f_nodal, rule="schur"):
        """``sigma dU/dr`` at ``r = 1`` at the angular nodes."""
        h = self.grid.h
        f = np.asarray(f_nodal)
        if rule == "schur":
            c = self._coup[-1] if f.ndim == 1 else self._coup[-1][:, None]
            return c * (f - U[-1])
        if rule == "stencil":
            w = _ONE_SIDED
            return (w[0] * f + w[1] * U[-1] + w[2] * U[-2] + w[3] * U[-3]) / h
        raise ValueError(f"unknown boundary rule {rule!r}")


def _one_sided_weights():
    # derivative at s = 0 from nodes s = 0, -1/2, -3/2, -5/2 (units of h)
    s = np.array([0.0, -0.5, -1.5, -2.5])
    V = np.vander(s, 4, increasing=True).T
    rhs = np.array([0.0, 1.0, 0.0, 0.0])
    return np.linalg.solve(V, rhs)


_ONE_SIDED = _one_sided_weights()


# ---------------------------------------------------------------------------
# public operations


def solve_dirichlet(cond: Conductivity, f_coeffs, solver: PolarEllipticSolver | None = None):
    """sigma-harmonic extension of boundary data given by Fourier coefficients.

    Parameters
    ----------
    f_coeffs : array, shape (2N+1,) or (2N+1, k)
        Coefficients of ``e^{int}``, ``|n| <= N``.

    Returns
    -------
    ndarray, shape (n_radial, n_angular[, k])
    """
    grid = cond.grid
    f_coeffs = np.asarray(f_coeffs, dtype=complex)
    if (f_coeffs.shape[0] - 1) // 2 >= grid.n_angular // 2:
        raise ValueError("data has more modes than the angular grid resolves")
    f = synthesize(f_coeffs, grid.n_angular)
    solver = solver or PolarEllipticSolver(grid, cond.sigma)
    U = solver.solve(f)
    res = solver.residual(U, f)
    scale = max(1.0, float(np.max(np.abs(f))))
    if not np.isfinite(res) or res > 1e-8 * scale * max(1.0, float(np.max(solver._coup))):
        raise SolverError(f"Dirichlet solve residual {res:.3e}")
    return U


@dataclass(frozen=True)
class DtnOperator:
    n_modes: int
    matrix: np.ndarray = field(repr=False)
    kind: DtnKind = DtnKind.FULL_SIGMA
    raw: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def modes(self):
        return mode_numbers(self.n_modes)

    def apply(self, coeffs):
        return self.matrix @ coeffs

    def hermitian_error(self):
        M = self.matrix
        return float(np.linalg.norm(M - M.conj().T) / np.linalg.norm(M)) if np.any(M) else 0.0

    def to_csv(self, path):
        write_matrix_csv(path, self.matrix)


def _raw_dtn(grid, sigma, n_modes, rule):
    solver = PolarEllipticSolver(grid, sigma)
    C = np.eye(2 * n_modes + 1, dtype=complex)
    f = synthesize(C, grid.n_angular)
    U = solver.solve(f)
    J = solver.boundary_current(U, f, rule)
    return analyze(J, n_modes)


def assemble_dtn(cond: Conductivity, n_modes: int, rule: str = "schur", reference_subtract: bool = True):
    """DtN matrix on ``{e^{int}: |n| <= n_modes}``; column n = current for data ``e^{int}``."""
    if n_modes < 1:
        raise ValueError("n_modes must be >= 1")
    grid = cond.grid
    if n_modes >= grid.n_angular // 2:
        raise ValueError("n_modes must be below n_angular / 2")
    raw = _raw_dtn(grid, cond.sigma, n_modes, rule)
    if reference_subtract:
        ref = _raw_dtn_reference(grid.n_radial, grid.n_angular, n_modes, rule)
        mat = np.diag(np.abs(mode_numbers(n_modes)).astype(complex)) + (raw - ref)
    else:
        mat = raw
    if np.all(cond.sigma == 1.0) and reference_subtract:
        mat = np.diag(np.abs(mode_numbers(n_modes)).astype(complex))
    mat.setflags(write=False)
    return DtnOperator(n_modes, mat, DtnKind.FULL_SIGMA, raw)


_REF_CACHE: dict = {}


def _raw_dtn_reference(nr, na, n_modes, rule):
    key = (nr, na, n_modes, rule)
    if key not in _REF_CACHE:
        from .mesh import build_disk_grid

        g = build_disk_grid(nr, na)
        _REF_CACHE[key] = _raw_dtn(g, np.ones(g.shape), n_modes, rule)
    return _REF_CACHE[key]


def reference_dtn(n_modes: int) -> DtnOperator:
    """Exact DtN of the unit disk at ``sigma = 1``: ``diag(|n|)``."""
    mat = np.diag(np.abs(mode_numbers(n_modes)).astype(complex))
    mat.setflags(write=False)
    return DtnOperator(n_modes, mat, DtnKind.REFERENCE_ONE)


@dataclass(frozen=True)
class DbarTraceOperator:
    """Map boundary coefficients of ``psi`` to those of ``d_zbar psi`` on the circle."""

    matrix: np.ndarray = field(repr=False)
    kind: TraceKind = TraceKind.PHI_HAT

    def apply(self, coeffs):
        return self.matrix @ coeffs


def dbar_trace(dtn: DtnOperator) -> DbarTraceOperator:
    """``d_zbar psi = (e^{it}/2)(psi_r + i psi_t)`` on ``|z| = 1``.

    With ``psi_r = Lambda psi`` (sigma = 1 at the boundary) and
    ``i psi_t -> -n c_n`` this is ``shift_{+1}((Lambda - diag n)/2)``; the
    mode ``N + 1`` produced by the shift is dropped.
    """
    N = dtn.n_modes
    inner = 0.5 * (dtn.matrix - np.diag(mode_numbers(N)))
    M = np.zeros_like(inner)
    M[1:, :] = inner[:-1, :]
    kind = TraceKind.PHI_HAT_ZERO if dtn.kind == DtnKind.REFERENCE_ONE else TraceKind.PHI_HAT
    M.setflags(write=False)
    return DbarTraceOperator(M, kind)


def dd_c_abs_z_squared_density(h=1e-3, z0=0.3 + 0.2j):
    """Numerical coefficient of ``dd^c|z|^2`` against ``dx^dy`` (should be 4)."""
    f = lambda z: np.abs(z) ** 2
    return (f(z0 + h) + f(z0 - h) + f(z0 + 1j * h) + f(z0 - 1j * h) - 4 * f(z0)) / h**2


def write_matrix_csv(path, M):
    """Row-major ``re,im`` pairs, one matrix entry per line."""
    M = np.asarray(M)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["re", "im"])
        for v in M.ravel():
            w.writerow([f"{v.real:.16e}", f"{v.imag:.16e}"])


def read_matrix_csv(path, n):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return (data[:, 0] + 1j * data[:, 1]).reshape(n, n)
