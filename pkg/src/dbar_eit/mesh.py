"""Grids and quadrature for the unit disk, its boundary circle and the lambda plane.

All integrals in the package are reduced to three rules:

* a polar midpoint rule on the disk (``DiskGrid``),
* the trapezoidal rule on the unit circle (``BoundaryRing``),
* a cell-centred square grid in the spectral plane (``LambdaGrid``).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


def _freeze(*arrays):
    for a in arrays:
        a.setflags(write=False)


@dataclass(frozen=True)
class DiskGrid:
    """Tensor-product polar grid on the unit disk with midpoint weights.

    Node ``(i, j)`` sits at radius ``(i + 1/2)/n_radial`` and angle
    ``2*pi*j/n_angular``; arrays are stored ring-major with shape
    ``(n_radial, n_angular)``.
    """

    n_radial: int
    n_angular: int
    r: np.ndarray = field(repr=False)
    t: np.ndarray = field(repr=False)
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    interior_mask: np.ndarray = field(repr=False)

    @property
    def h(self) -> float:
        """Radial mesh parameter."""
        return 1.0 / self.n_radial

    @property
    def dt(self) -> float:
        return 2.0 * np.pi / self.n_angular

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_radial, self.n_angular)

    @property
    def size(self) -> int:
        return self.n_radial * self.n_angular

    def radius_field(self) -> np.ndarray:
        return np.abs(self.nodes)

    def to_csv(self, path) -> None:
        write_nodes_csv(path, self.nodes.ravel(), self.weights.ravel())


def build_disk_grid(n_radial: int, n_angular: int) -> DiskGrid:
    """Build the polar midpoint grid.

    ``n_angular`` must be even so that the angular FFT has a Nyquist mode
    and the grid is symmetric under ``z -> -z``.
    """
    if int(n_radial) != n_radial or int(n_angular) != n_angular:
        raise ValueError("grid sizes must be integers")
    n_radial, n_angular = int(n_radial), int(n_angular)
    if n_radial <= 0 or n_angular <= 0:
        raise ValueError("grid sizes must be positive")
    if n_radial < 4:
        raise ValueError(f"n_radial must be >= 4, got {n_radial}")
    if n_angular < 8 or n_angular % 2:
        raise ValueError(f"n_angular must be even and >= 8, got {n_angular}")
    h = 1.0 / n_radial
    dt = 2.0 * np.pi / n_angular
    r = (np.arange(n_radial) + 0.5) * h
    t = np.arange(n_angular) * dt
    nodes = r[:, None] * np.exp(1j * t[None, :])
    weights = np.repeat((r * h * dt)[:, None], n_angular, axis=1)
    interior = np.ones_like(weights, dtype=bool)
    interior[-1, :] = False
    _freeze(r, t, nodes, weights, interior)
    return DiskGrid(n_radial, n_angular, r, t, nodes, weights, interior)


@dataclass(frozen=True)
class BoundaryRing:
    """Equispaced points on the unit circle with trapezoidal weights."""

    n_points: int
    points: np.ndarray = field(repr=False)
    t: np.ndarray = field(repr=False)

    @property
    def arc_weight(self) -> float:
        return 2.0 * np.pi / self.n_points

    def to_csv(self, path) -> None:
        write_nodes_csv(path, self.points, np.full(self.n_points, self.arc_weight))


def build_boundary_ring(n_points: int) -> BoundaryRing:
    n_points = int(n_points)
    if n_points < 2 or n_points & (n_points - 1):
        raise ValueError(f"n_points must be a power of two >= 2, got {n_points}")
    t = 2.0 * np.pi * np.arange(n_points) / n_points
    pts = np.exp(1j * t)
    _freeze(t, pts)
    return BoundaryRing(n_points, pts, t)


@dataclass(frozen=True)
class LambdaGrid:
    """Cell-centred square grid ``[-R, R]^2`` in the spectral plane.

    Nodes are offset by half a cell, so ``lambda = 0`` is never a node and
    the node set is closed under negation and conjugation.
    """

    radius: float
    n: int
    nodes: np.ndarray = field(repr=False)

    @property
    def spacing(self) -> float:
        return 2.0 * self.radius / self.n

    @property
    def cell_area(self) -> float:
        return self.spacing**2

    @property
    def axis(self) -> np.ndarray:
        return -self.radius + (np.arange(self.n) + 0.5) * self.spacing

    def to_csv(self, path) -> None:
        write_nodes_csv(path, self.nodes.ravel(), np.full(self.nodes.size, self.cell_area))


def build_lambda_grid(radius: float, n: int) -> LambdaGrid:
    """Square grid of ``n x n`` cell centres; array index is ``[iy, ix]``."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    n = int(n)
    if n <= 0 or n % 2:
        raise ValueError(f"n must be a positive even integer, got {n}")
    h = 2.0 * radius / n
    ax = -radius + (np.arange(n) + 0.5) * h
    nodes = ax[None, :] + 1j * ax[:, None]
    _freeze(nodes)
    return LambdaGrid(float(radius), n, nodes)


def _check_finite(f) -> np.ndarray:
    f = np.asarray(f)
    if not np.all(np.isfinite(f)):
        raise ValueError("integrand has non-finite values")
    return f


def quad_disk(f, grid: DiskGrid) -> complex:
    """Midpoint rule: ``sum f(z_k) w_k``."""
    f = _check_finite(f)
    if f.shape != grid.shape and f.size != grid.size:
        raise ValueError(f"field shape {f.shape} does not match grid {grid.shape}")
    val = np.sum(f.reshape(grid.shape) * grid.weights)
    return complex(val) if np.iscomplexobj(val) else float(val)


def quad_boundary(f, ring: BoundaryRing) -> complex:
    """Trapezoidal rule on the unit circle (arc-length measure)."""
    f = _check_finite(f)
    if f.shape != (ring.n_points,):
        raise ValueError(f"field shape {f.shape} does not match ring size {ring.n_points}")
    val = np.sum(f) * ring.arc_weight
    return complex(val) if np.iscomplexobj(val) else float(val)


def write_nodes_csv(path, nodes, weights) -> None:
    """One row per node: ``re,im,weight`` in 17-digit scientific notation."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["re", "im", "weight"])
        for z, wt in zip(np.ravel(nodes), np.ravel(weights)):
            w.writerow([f"{z.real:.16e}", f"{z.imag:.16e}", f"{float(wt):.16e}"])


def read_nodes_csv(path) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0] + 1j * data[:, 1], data[:, 2]
