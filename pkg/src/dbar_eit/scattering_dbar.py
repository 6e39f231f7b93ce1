"""Scattering data ``b(lam)`` and the spectral-plane D-bar equation.

With ``psi = e^{lam z} mu`` and ``Delta psi = q0 psi``::

    conj(lam) b(lam) = (1/(4 pi)) int e^{lam z - conj(lam) conj(z)} q0 mu dA
                     = -(1/(2 pi i)) oint e^{lam z - conj(lam) conj(z)} d_zbar mu dzbar

and ``mu(z, .)`` solves

    mu(lam) - (1/pi) int r(lam') conj(mu(lam')) / (lam - lam') dA(lam') = 1,
    r(lam') = b(lam') exp(conj(lam') conj(z) - lam' z),

which is equivalent to ``d mu / d conj(lam) = r conj(mu)``.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from math import factorial
from pathlib import Path

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .cgo_solver import (
    CgoField,
    ExceptionalPointError,
    q_from_sigma,
    solve_boundary_equation,
    solve_lippmann_schwinger,
)
from .faddeev_kernels import box_grid
from .forward_dtn import Conductivity, DbarTraceOperator, DtnOperator, analyze, dbar_trace
from .mesh import LambdaGrid, build_lambda_grid

log = logging.getLogger(__name__)


class ScatteringMethod(str, Enum):
    BOUNDARY = "boundary_form"
    INTERIOR = "interior_form"


class DbarSolveError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScatteringGrid:
    """``b`` sampled on a spectral grid; masked nodes hold 0 and are never used."""

    lgrid: LambdaGrid
    b: np.ndarray = field(repr=False)
    exceptional_mask: np.ndarray = field(repr=False)
    method: ScatteringMethod

    def __post_init__(self):
        if self.b.shape != self.lgrid.nodes.shape or self.exceptional_mask.shape != self.b.shape:
            raise ValueError("b and mask must match the lambda grid")
        if np.any(self.b[self.exceptional_mask] != 0):
            raise ValueError("masked nodes must carry b = 0")

    def masked(self, policy: str = "zero") -> np.ndarray:
        """``b`` with masked nodes zeroed or filled from unmasked neighbours."""
        if policy == "zero" or not self.exceptional_mask.any():
            return self.b.copy()
        if policy != "interpolate":
            raise ValueError(f"unknown mask policy {policy!r}")
        out = self.b.copy()
        good = ~self.exceptional_mask
        pts = self.lgrid.nodes[good]
        for idx in zip(*np.nonzero(self.exceptional_mask)):
            d = np.abs(pts - self.lgrid.nodes[idx])
            near = np.argsort(d)[:4]
            w = 1 / d[near]
            out[idx] = np.sum(w * self.b[good][near]) / w.sum()
        return out

    def to_csv(self, path):
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lambda_re", "lambda_im", "b_re", "b_im", "mask"])
            for lam, b, m in zip(self.lgrid.nodes.ravel(), self.b.ravel(), self.exceptional_mask.ravel()):
                w.writerow([f"{lam.real:.16e}", f"{lam.imag:.16e}", f"{b.real:.16e}", f"{b.imag:.16e}", int(m)])

    @classmethod
    def from_csv(cls, path, method=ScatteringMethod.BOUNDARY):
        d = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        n = int(round(np.sqrt(d.shape[0])))
        lam = (d[:, 0] + 1j * d[:, 1]).reshape(n, n)
        lg = build_lambda_grid(float(np.max(np.abs(lam.real))) + (lam[0, 1] - lam[0, 0]).real / 2, n)
        if not np.allclose(lg.nodes, lam, rtol=0, atol=1e-12):
            raise ValueError("file does not hold a square cell-centred lambda grid")
        b = (d[:, 2] + 1j * d[:, 3]).reshape(n, n)
        return cls(lg, b, d[:, 4].reshape(n, n).astype(bool), ScatteringMethod(method))


def _check_lam(lam):
    lam = complex(lam)
    if lam == 0:
        raise ValueError("b is undefined at lambda = 0 (division by conj(lambda))")
    return lam


def scattering_boundary(trace, phi_hat: DbarTraceOperator, lam=None) -> complex:
    """``b`` from a boundary trace of ``psi`` and the D-bar trace operator.

    The coefficients ``d_k`` of ``d_zbar psi`` on the circle give
    ``oint e^{-conj(lam) conj(z)} d_zbar psi dzbar = -2 pi i sum_{m>=0} d_{m+1} (-conj(lam))^m / m!``.
    """
    lam = _check_lam(trace.lam if lam is None else lam)
    N = (phi_hat.matrix.shape[0] - 1) // 2
    c = analyze(trace.psi_b, N)
    d = phi_hat.apply(c)
    lb = np.conj(lam)
    m = np.arange(N)
    terms = d[N + 1 + m] * np.array([(-lb) ** k / factorial(k) for k in m])
    return complex(terms.sum() / lb)


def scattering_interior(cgo: CgoField, q0=None, lam=None) -> complex:
    """``b = (1/(4 pi conj(lam))) int e^{lam z - conj(lam z)} q0 mu dA`` on the solver box."""
    lam = _check_lam(cgo.lam if lam is None else lam)
    z = cgo.box_z
    q = cgo.box_q0 if q0 is None else q0
    e = np.exp(lam * z - np.conj(lam * z))
    return complex(np.sum(e * q * cgo.box_mu) * cgo.box_h**2 / (4 * np.pi * np.conj(lam)))


def born_scattering(cond: Conductivity, lam, n_box: int = 128) -> complex:
    """Linearised ``b`` with ``mu = 1``."""
    lam = _check_lam(lam)
    z, h = box_grid(n_box)
    q0 = q_from_sigma(cond, z)
    return complex(np.sum(np.exp(lam * z - np.conj(lam * z)) * q0) * h * h / (4 * np.pi * np.conj(lam)))


def _pmap(fun, items, workers):
    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(fun, items))
    return [fun(x) for x in items]


def compute_scattering(
    lgrid: LambdaGrid,
    method: str | ScatteringMethod = ScatteringMethod.BOUNDARY,
    dtn: DtnOperator | None = None,
    cond: Conductivity | None = None,
    n_points: int = 128,
    n_box: int = 96,
    rule: str = "kress",
    workers: int = 1,
) -> ScatteringGrid:
    """Evaluate ``b`` on every node; exceptional nodes are masked and logged."""
    method = ScatteringMethod(method)
    if method == ScatteringMethod.BOUNDARY:
        if dtn is None:
            raise ValueError("boundary form needs a DtN operator")
        P = dbar_trace(dtn)

        def one(lam):
            try:
                return scattering_boundary(solve_boundary_equation(dtn, lam, n_points, rule), P), False
            except ExceptionalPointError as exc:
                log.info("masked %s", exc)
                return 0j, True
    else:
        if cond is None:
            raise ValueError("interior form needs a conductivity")

        def one(lam):
            try:
                return scattering_interior(solve_lippmann_schwinger(cond, lam, n_box=n_box)), False
            except ExceptionalPointError as exc:
                log.info("masked %s", exc)
                return 0j, True

    out = _pmap(one, list(lgrid.nodes.ravel()), workers)
    b = np.array([o[0] for o in out]).reshape(lgrid.nodes.shape)
    mask = np.array([o[1] for o in out]).reshape(lgrid.nodes.shape)
    if mask.any():
        log.warning("%d of %d lambda nodes masked as exceptional", mask.sum(), mask.size)
    return ScatteringGrid(lgrid, b, mask, method)


# ---------------------------------------------------------------------------
# spectral-plane equation


@dataclass(frozen=True)
class DbarLambdaSolution:
    z: complex
    lgrid: LambdaGrid
    mu: np.ndarray = field(repr=False)
    residual: float
    iterations: int = 0


def _cauchy_fft(lgrid: LambdaGrid):
    # kernel 1/(lam - lam') on lattice offsets, zero self term (cell mean of 1/w vanishes)
    n, s = lgrid.n, lgrid.spacing
    k = np.arange(-n + 1, n)
    w = s * (k[None, :] + 1j * k[:, None])
    K = np.where(w == 0, 0, 1 / np.where(w == 0, 1, w))
    pad = np.zeros((2 * n, 2 * n), dtype=complex)
    pad[: 2 * n - 1, : 2 * n - 1] = K
    return np.fft.fft2(pad)


def cauchy_transform(f, lgrid: LambdaGrid, kernel_fft=None):
    """``(1/pi) sum_{lam' != lam} f(lam') / (lam - lam') * cell_area`` on the grid."""
    n = lgrid.n
    Kf = _cauchy_fft(lgrid) if kernel_fft is None else kernel_fft
    pad = np.zeros((2 * n, 2 * n), dtype=complex)
    pad[:n, :n] = f
    out = np.fft.ifft2(Kf * np.fft.fft2(pad))[n - 1 : 2 * n - 1, n - 1 : 2 * n - 1]
    return out * lgrid.cell_area / np.pi


def dbar_weight(b, lgrid: LambdaGrid, z):
    """``r(lam) = b(lam) exp(conj(lam z) - lam z)``."""
    lz = lgrid.nodes * complex(z)
    return b * np.exp(np.conj(lz) - lz)


def solve_dbar_lambda(sgrid: ScatteringGrid, z, tol: float = 1e-10, policy: str = "zero") -> DbarLambdaSolution:
    """Solve the real-linear spectral equation for ``mu(z, .)`` on ``sgrid.lgrid``.

    Written on ``x = [Re mu, Im mu]`` so that GMRES sees an R-linear map.
    """
    lg = sgrid.lgrid
    r = dbar_weight(sgrid.masked(policy), lg, z)
    if not np.all(np.isfinite(r)):
        raise ValueError("b must be finite on unmasked nodes")
    n2 = lg.n * lg.n
    if not np.any(r):
        return DbarLambdaSolution(complex(z), lg, np.ones(lg.nodes.shape, dtype=complex), 0.0)
    Kf = _cauchy_fft(lg)

    def op(mu):
        return mu - cauchy_transform(r * np.conj(mu), lg, Kf)

    def matvec(x):
        mu = (x[:n2] + 1j * x[n2:]).reshape(lg.nodes.shape)
        y = op(mu).ravel()
        return np.concatenate([y.real, y.imag])

    A = LinearOperator((2 * n2, 2 * n2), matvec=matvec, dtype=float)
    rhs = np.concatenate([np.ones(n2), np.zeros(n2)])
    count = [0]
    x, info = gmres(A, rhs, rtol=tol, atol=0.0, restart=60, maxiter=200, callback=lambda _: count.__setitem__(0, count[0] + 1), callback_type="pr_norm")
    res = float(np.linalg.norm(matvec(x) - rhs) / np.linalg.norm(rhs))
    if info != 0 or res > 10 * tol:
        raise DbarSolveError(f"spectral D-bar solve stalled at residual {res:.2e} (z={z})")
    mu = (x[:n2] + 1j * x[n2:]).reshape(lg.nodes.shape)
    return DbarLambdaSolution(complex(z), lg, mu, res, count[0])


def born_dbar_lambda(sgrid: ScatteringGrid, z, policy: str = "zero"):
    """One fixed-point step: ``1 + (1/pi) int r / (lam - lam') dA``."""
    r = dbar_weight(sgrid.masked(policy), sgrid.lgrid, z)
    return 1 + cauchy_transform(r, sgrid.lgrid)


def dbar_residual(sol: DbarLambdaSolution, sgrid: ScatteringGrid, policy: str = "zero"):
    """Max of ``|d mu/d conj(lam) - r conj(mu)|`` by central differences on interior nodes."""
    lg = sol.lgrid
    s = lg.spacing
    mu = sol.mu
    dx = (mu[1:-1, 2:] - mu[1:-1, :-2]) / (2 * s)
    dy = (mu[2:, 1:-1] - mu[:-2, 1:-1]) / (2 * s)
    dbar = 0.5 * (dx + 1j * dy)
    r = dbar_weight(sgrid.masked(policy), lg, sol.z)
    return np.abs(dbar - (r * np.conj(mu))[1:-1, 1:-1])
