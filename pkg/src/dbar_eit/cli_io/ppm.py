"""Binary PPM (P6) heatmaps with a blue-white-red diverging colormap.

Values are mapped to ``t = (v - center) / limit`` clipped to ``[-1, 1]``;
``t = -1`` is blue (59, 76, 192), ``t = 0`` white, ``t = +1`` red
(180, 4, 38), with linear interpolation in RGB on each half. Pixels
outside the unit disk are mid grey.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

BLUE = np.array([59, 76, 192], dtype=float)
WHITE = np.array([255, 255, 255], dtype=float)
RED = np.array([180, 4, 38], dtype=float)
GREY = np.array([128, 128, 128], dtype=np.uint8)


def diverging_rgb(values, center=0.0, limit=None):
    v = np.asarray(values, dtype=float)
    finite = np.isfinite(v)
    if limit is None:
        limit = np.max(np.abs(v[finite] - center)) if np.any(finite) else 1.0
    limit = limit if limit > 0 else 1.0
    t = np.clip((np.where(finite, v, center) - center) / limit, -1, 1)[..., None]
    rgb = np.where(t < 0, WHITE + (WHITE - BLUE) * t, WHITE + (RED - WHITE) * t)
    return np.rint(rgb).astype(np.uint8)


def write_ppm(path, rgb):
    rgb = np.asarray(rgb, dtype=np.uint8)
    h, w, _ = rgb.shape
    with Path(path).open("wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(rgb.tobytes())


def read_ppm(path):
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P6":
        raise ValueError("not a binary PPM")
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4][: w * h * 3], dtype=np.uint8).reshape(h, w, 3)


def disk_image(grid, field, size=128):
    """Nearest-node resampling of a polar-grid field onto a ``size x size`` square."""
    ax = (np.arange(size) + 0.5) / size * 2 - 1
    z = ax[None, :] - 1j * ax[:, None]  # row 0 at the top
    r = np.abs(z)
    ir = np.clip(np.searchsorted(grid.r, r), 0, grid.n_radial - 1)
    alt = np.clip(ir - 1, 0, grid.n_radial - 1)
    ir = np.where(np.abs(grid.r[alt] - r) < np.abs(grid.r[ir] - r), alt, ir)
    it = np.rint(np.mod(np.angle(z), 2 * np.pi) / grid.dt - grid.t[0] / grid.dt).astype(int) % grid.n_angular
    img = np.asarray(field)[ir, it].astype(float)
    return np.where(r <= 1, img, np.nan)


def write_heatmap(path, grid, field, center=0.0, limit=None, size=128):
    img = disk_image(grid, field, size)
    rgb = diverging_rgb(img, center, limit)
    rgb[~np.isfinite(img)] = GREY
    write_ppm(path, rgb)
    return rgb


def write_array_heatmap(path, values, center=0.0, limit=None):
    """Heatmap of a rectangular array (e.g. ``|b|`` on the lambda grid), row 0 at the bottom."""
    rgb = diverging_rgb(np.asarray(values)[::-1], center, limit)
    write_ppm(path, rgb)
    return rgb
