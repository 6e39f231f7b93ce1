"""Smooth test conductivities with sigma = 1 outside their support."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from ..forward_dtn import Conductivity
from .config import ConfigError, PipelineConfig


class PhantomKind(str, Enum):
    IDENTITY = "identity"
    RADIAL_BUMP = "radial_bump"
    OFFSET_BUMP = "offset_bump"
    TWO_BUMPS = "two_bumps"
    POLYNOMIAL_BUMP = "polynomial_bump"


def smooth_bump(r, radius):
    """``exp(1 - 1/(1 - (r/radius)^2))`` inside, 0 outside; peak 1 at r = 0."""
    r = np.asarray(r, dtype=float)
    s = np.clip(r / radius, 0, 1 - 1e-15)
    return np.where(r < radius, np.exp(1 - 1 / (1 - s**2)), 0.0)


@dataclass(frozen=True)
class Phantom:
    kind: PhantomKind
    params: dict
    sigma: Callable = field(repr=False)
    q0: Callable | None = field(default=None, repr=False)

    def conductivity(self, grid, collar=0.9) -> Conductivity:
        return Conductivity.from_function(grid, self.sigma, collar)

    def Q(self, z):
        """``q0 / 4`` (coefficient against ``dd^c|z|^2``) when closed form is known."""
        if self.q0 is None:
            raise ValueError(f"{self.kind.value} has no closed-form q")
        return self.q0(z) / 4


def _check_support(center, radius, collar):
    if abs(center) + radius > collar:
        raise ConfigError(f"support |z - {center}| < {radius} leaves the collar radius {collar}")


def _bump_sigma(center, radius, contrast):
    return lambda z: 1 + (contrast - 1) * smooth_bump(np.abs(np.asarray(z) - center), radius)


def polynomial_bump(center, radius, contrast):
    """``sigma = 1 + k (1 - s)^4`` with ``s = |z - c|^2 / r^2``, ``k = contrast - 1``.

    C^3 across ``s = 1``. Closed form of ``q0 = Delta sqrt(sigma) / sqrt(sigma)``
    is ``Delta sigma / (2 sigma) - |grad sigma|^2 / (4 sigma^2)`` with
    ``Delta sigma = 16 k (1-s)^2 (4s - 1) / r^2`` and
    ``|grad sigma|^2 = 64 k^2 s (1-s)^6 / r^2``.
    """
    k = contrast - 1

    def sig(z):
        s = np.abs(np.asarray(z) - center) ** 2 / radius**2
        return 1 + k * np.where(s < 1, (1 - np.minimum(s, 1)) ** 4, 0.0)

    def q0(z):
        s = np.abs(np.asarray(z) - center) ** 2 / radius**2
        t = np.where(s < 1, 1 - np.minimum(s, 1), 0.0)
        sg = 1 + k * t**4
        lap = 16 * k * t**2 * (4 * s - 1) / radius**2
        grad2 = 64 * k**2 * s * t**6 / radius**2
        return np.where(s < 1, lap / (2 * sg) - grad2 / (4 * sg**2), 0.0)

    return sig, q0


def make_phantom(cfg: PipelineConfig) -> Phantom:
    """Phantom from the config's ``phantom`` kind and geometry keys."""
    kind = PhantomKind(cfg.phantom)
    c, r, k = complex(cfg.center), cfg.radius, cfg.contrast
    if k <= 0 or cfg.contrast2 <= 0:
        raise ConfigError("contrast must be positive")
    params = {"center": c, "radius": r, "contrast": k}
    if kind is PhantomKind.IDENTITY:
        return Phantom(kind, {}, lambda z: np.ones(np.shape(z)), lambda z: np.zeros(np.shape(z)))
    if kind is PhantomKind.RADIAL_BUMP:
        c = 0j
        params["center"] = c
    _check_support(c, r, cfg.collar)
    if kind in (PhantomKind.RADIAL_BUMP, PhantomKind.OFFSET_BUMP):
        return Phantom(kind, params, _bump_sigma(c, r, k))
    if kind is PhantomKind.POLYNOMIAL_BUMP:
        sig, q0 = polynomial_bump(c, r, k)
        return Phantom(kind, params, sig, q0)
    c2, r2, k2 = complex(cfg.center2), cfg.radius2, cfg.contrast2
    _check_support(c2, r2, cfg.collar)
    if abs(c - c2) < r + r2:
        raise ConfigError("two_bumps supports overlap")
    f1, f2 = _bump_sigma(c, r, k), _bump_sigma(c2, r2, k2)
    params.update(center2=c2, radius2=r2, contrast2=k2)
    return Phantom(kind, params, lambda z: f1(z) + f2(z) - 1)
