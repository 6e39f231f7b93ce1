"""Flat ``key = value`` run configuration.

Grammar: one assignment per line, ``#`` starts a comment, blank lines are
ignored. Values are parsed by the type of the matching field: ints,
floats, complex numbers in Python syntax (``0.1+0.05j``), strings, and
comma-separated tuples. Unknown keys are errors.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path


class ConfigError(ValueError):
    pass


PHANTOM_KINDS = ("identity", "radial_bump", "offset_bump", "two_bumps", "polynomial_bump")
ROUTES = ("novikov", "bukhgeim")


@dataclass
class PipelineConfig:
    # grids
    n_radial: int = 64
    n_angular: int = 128
    n_modes: int = 32
    lambda_radius: float = 6.0
    lambda_n: int = 16
    n_points: int = 128
    n_box: int = 96
    n_z: int = 32
    collar: float = 0.9
    # phantom
    phantom: str = "radial_bump"
    center: complex = 0j
    radius: float = 0.5
    contrast: float = 1.3
    center2: complex = -0.35 + 0j
    radius2: float = 0.3
    contrast2: float = 0.8
    # route and route parameters
    route: str = "novikov"
    scatter_form: str = "boundary"
    taus: tuple = (20.0, 40.0, 80.0)
    bukhgeim_n: int = 1024
    bukhgeim_nz: int = 16
    points: tuple = (0.1 + 0.05j, -0.2 + 0.1j)
    lambdas: tuple = (1.0, 2.0 + 1.0j, -2.5j)
    z_points: tuple = (0j, 0.2 + 0.1j)
    # curves
    curve: str = "ellipse"
    theta: complex = 0.4 + 0.3j
    tau: float = 100.0
    # bookkeeping
    dbar_tol: float = 1e-10
    workers: int = 1
    out: str = "eit_out"
    seed: int = 0

    def validate(self):
        if self.phantom not in PHANTOM_KINDS:
            raise ConfigError(f"phantom must be one of {PHANTOM_KINDS}")
        if self.route not in ROUTES:
            raise ConfigError(f"route must be one of {ROUTES}")
        if self.scatter_form not in ("boundary", "interior", "both"):
            raise ConfigError("scatter_form must be boundary, interior or both")
        for k in ("contrast", "contrast2"):
            if not getattr(self, k) > 0:
                raise ConfigError(f"{k} must be positive, got {getattr(self, k)}")
        for k in ("radius", "radius2", "lambda_radius", "tau"):
            if not getattr(self, k) > 0:
                raise ConfigError(f"{k} must be positive")
        if not 0 < self.collar < 1:
            raise ConfigError("collar must lie in (0, 1)")
        if self.n_modes >= self.n_angular // 2:
            raise ConfigError("n_modes must be below n_angular / 2")
        if self.lambda_n % 2:
            raise ConfigError("lambda_n must be even")
        if len(self.taus) < 3:
            raise ConfigError("taus needs at least three values")
        return self

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)

    def to_text(self):
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(_fmt(x) for x in v)
            else:
                v = _fmt(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


def _fmt(v):
    if isinstance(v, complex):
        return repr(v).strip("()")
    return str(v)


def _parse_value(name, raw, default):
    try:
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, complex):
            return complex(raw.replace(" ", ""))
        if isinstance(default, tuple):
            parts = [p.strip() for p in raw.split(",") if p.strip()]
            kind = complex if any(isinstance(x, complex) for x in default) else float
            return tuple(complex(p) if kind is complex else float(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc
    return raw


def parse_assignments(pairs, base: PipelineConfig | None = None) -> PipelineConfig:
    """Apply ``(key, raw_value)`` pairs on top of ``base``."""
    cfg = base or PipelineConfig()
    known = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
    upd = {}
    for key, raw in pairs:
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        upd[key] = _parse_value(key, raw, known[key])
    return cfg.replace(**upd)


def parse_config_text(text: str, base=None) -> PipelineConfig:
    pairs = []
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#")[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value")
        k, v = line.split("=", 1)
        pairs.append((k.strip(), v.strip()))
    return parse_assignments(pairs, base)


def load_config(path, overrides=()) -> PipelineConfig:
    cfg = parse_config_text(Path(path).read_text()) if path else PipelineConfig()
    pairs = []
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        k, v = item.split("=", 1)
        pairs.append((k.strip(), v.strip()))
    return parse_assignments(pairs, cfg).validate()
