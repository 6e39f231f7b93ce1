"""Stage-by-stage orchestration with CSV artifacts and a plain-text manifest.

Manifest lines are ``stage key=value``; every stage writes ``wall_s`` and,
where the stage has them, ``residual`` and ``cond``. CSV numbers are
written with ``%.16e`` (17 significant digits) so doubles round-trip.
"""

from __future__ import annotations

import csv
import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..cgo_solver import solve_boundary_equation, solve_lippmann_schwinger
from ..forward_dtn import assemble_dtn
from ..mesh import build_disk_grid, build_lambda_grid
from ..reconstruction import reconstruct_bukhgeim, reconstruct_novikov
from ..scattering_dbar import compute_scattering, solve_dbar_lambda
from .config import PipelineConfig
from .phantoms import make_phantom
from .ppm import write_array_heatmap, write_heatmap

log = logging.getLogger(__name__)


class PipelineError(RuntimeError):
    def __init__(self, stage, cause):
        self.stage = stage
        super().__init__(f"stage {stage} failed: {cause}")


@dataclass
class Manifest:
    path: Path | None = None
    lines: list = field(default_factory=list)

    def record(self, stage, **kv):
        for k, v in kv.items():
            if isinstance(v, float):
                v = f"{v:.6e}"
            elif isinstance(v, complex):
                v = f"{v.real:.6e}{v.imag:+.6e}j"
            line = f"{stage} {k}={v}"
            self.lines.append(line)
            if self.path is not None:
                with self.path.open("a") as fh:
                    fh.write(line + "\n")

    def get(self, stage, key):
        for line in self.lines:
            s, kv = line.split(" ", 1)
            k, v = kv.split("=", 1)
            if s == stage and k == key:
                return v
        raise KeyError((stage, key))


def read_manifest(path):
    out = {}
    for line in Path(path).read_text().splitlines():
        s, kv = line.split(" ", 1)
        k, v = kv.split("=", 1)
        out.setdefault(s, {})[k] = v
    return out


@contextmanager
def stage(man: Manifest, name: str):
    t0 = time.perf_counter()
    try:
        yield
    except Exception as exc:
        man.record(name, status="failed", error=type(exc).__name__)
        raise PipelineError(name, exc) from exc
    man.record(name, wall_s=time.perf_counter() - t0)


def write_complex_csv(path, columns: dict):
    """Columns of complex arrays as ``name_re, name_im`` pairs; real-only columns as one."""
    names, cols = [], []
    for k, v in columns.items():
        v = np.ravel(v)
        if np.iscomplexobj(v):
            names += [f"{k}_re", f"{k}_im"]
            cols += [v.real, v.imag]
        else:
            names.append(k)
            cols.append(v.astype(float))
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in zip(*cols):
            w.writerow([f"{x:.16e}" for x in row])


@dataclass
class PipelineContext:
    cfg: PipelineConfig
    out: Path
    manifest: Manifest
    rng: np.random.Generator
    phantom: object = None
    grid: object = None
    cond: object = None
    dtn: object = None
    lgrid: object = None
    scattering: dict = field(default_factory=dict)
    result: object = None


def make_context(cfg: PipelineConfig, out=None, fresh_manifest=True) -> PipelineContext:
    cfg.validate()
    out = Path(out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    mpath = out / "manifest.txt"
    if fresh_manifest and mpath.exists():
        mpath.unlink()
    (out / "config.txt").write_text(cfg.to_text())
    man = Manifest(mpath)
    man.record("run", seed=cfg.seed)
    return PipelineContext(cfg, out, man, np.random.default_rng(cfg.seed))


def run_forward(ctx: PipelineContext):
    cfg = ctx.cfg
    with stage(ctx.manifest, "forward"):
        ctx.phantom = make_phantom(cfg)
        ctx.grid = build_disk_grid(cfg.n_radial, cfg.n_angular)
        ctx.cond = ctx.phantom.conductivity(ctx.grid, cfg.collar)
        write_complex_csv(ctx.out / "sigma_true.csv", {"z": ctx.grid.nodes, "sigma": ctx.cond.sigma})
        write_heatmap(ctx.out / "sigma_true.ppm", ctx.grid, ctx.cond.sigma, center=1.0)
        ctx.manifest.record("forward", phantom=cfg.phantom, sigma_max=float(ctx.cond.sigma.max()))
    return ctx


def run_dtn(ctx: PipelineContext):
    if ctx.cond is None:
        run_forward(ctx)
    with stage(ctx.manifest, "dtn"):
        ctx.dtn = assemble_dtn(ctx.cond, ctx.cfg.n_modes)
        ctx.dtn.to_csv(ctx.out / "dtn.csv")
        ctx.manifest.record("dtn", residual=ctx.dtn.hermitian_error(), cond=float(np.linalg.cond(ctx.dtn.matrix + np.eye(ctx.dtn.matrix.shape[0]))))
    return ctx


def run_cgo(ctx: PipelineContext):
    if ctx.dtn is None:
        run_dtn(ctx)
    cfg = ctx.cfg
    with stage(ctx.manifest, "cgo"):
        worst_r = worst_c = worst_gap = 0.0
        for k, lam in enumerate(cfg.lambdas):
            t = solve_boundary_equation(ctx.dtn, lam, cfg.n_points)
            t.to_csv(ctx.out / f"cgo_boundary_{k}.csv")
            ref = solve_lippmann_schwinger(ctx.cond, lam, n_box=cfg.n_box).trace(t.ring)
            worst_gap = max(worst_gap, float(np.linalg.norm(t.psi_b - ref) / np.linalg.norm(ref)))
            worst_r, worst_c = max(worst_r, t.c_residual), max(worst_c, t.cond)
        ctx.manifest.record("cgo", residual=worst_r, cond=worst_c, interior_gap=worst_gap)
    return ctx


def run_scatter(ctx: PipelineContext, form=None):
    if ctx.dtn is None:
        run_dtn(ctx)
    cfg = ctx.cfg
    form = form or cfg.scatter_form
    ctx.lgrid = build_lambda_grid(cfg.lambda_radius, cfg.lambda_n)
    forms = ("boundary", "interior") if form == "both" else (form,)
    with stage(ctx.manifest, "scatter"):
        for f in forms:
            S = compute_scattering(
                ctx.lgrid, f + "_form", dtn=ctx.dtn, cond=ctx.cond, n_points=cfg.n_points, n_box=cfg.n_box, workers=cfg.workers
            )
            ctx.scattering[f] = S
            S.to_csv(ctx.out / f"scattering_{f}.csv")
            write_array_heatmap(ctx.out / f"b_abs_{f}.ppm", np.abs(S.b))
            ctx.manifest.record("scatter", **{f"{f}_masked": int(S.exceptional_mask.sum()), f"{f}_max_abs_b": float(np.max(np.abs(S.b)))})
        if len(forms) == 2:
            a, b = ctx.scattering["boundary"], ctx.scattering["interior"]
            live = ~(a.exceptional_mask | b.exceptional_mask)
            rel = np.abs(a.b - b.b)[live] / np.maximum(np.abs(b.b)[live], 1e-300)
            ctx.manifest.record("scatter", residual=float(np.median(rel)), agree_1e2=float(np.mean(rel <= 1e-2)))
    return ctx


def _primary_scattering(ctx):
    if not ctx.scattering:
        run_scatter(ctx, "boundary")
    return ctx.scattering.get("boundary") or ctx.scattering["interior"]


def run_dbar(ctx: PipelineContext):
    S = _primary_scattering(ctx)
    with stage(ctx.manifest, "dbar"):
        worst = 0.0
        for k, z in enumerate(ctx.cfg.z_points):
            sol = solve_dbar_lambda(S, z, tol=ctx.cfg.dbar_tol)
            worst = max(worst, sol.residual)
            write_complex_csv(ctx.out / f"mu_lambda_{k}.csv", {"lambda": S.lgrid.nodes, "mu": sol.mu})
        ctx.manifest.record("dbar", residual=worst)
    return ctx


def run_reconstruct(ctx: PipelineContext, route=None):
    cfg = ctx.cfg
    route = route or cfg.route
    if route == "novikov":
        S = _primary_scattering(ctx)
    elif ctx.cond is None:
        run_forward(ctx)
    with stage(ctx.manifest, "reconstruct"):
        if route == "novikov":
            res = reconstruct_novikov(ctx.dtn, ctx.grid, S.lgrid, n_z=cfg.n_z, collar=cfg.collar, n_points=cfg.n_points, scattering=S)
            ctx.manifest.record("reconstruct", residual=float(res.diagnostics["dbar_residual"]), q_imag_max=res.diagnostics["q_imag_max"])
        else:
            res = reconstruct_bukhgeim(ctx.cond, ctx.grid, cfg.taus, n_a=cfg.bukhgeim_nz, n=cfg.bukhgeim_n, collar=cfg.collar)
            ctx.manifest.record("reconstruct", Q_imag_max=res.diagnostics["Q_imag_max"])
        res.compare(ctx.cond.sigma)
        ctx.result = res
        write_complex_csv(ctx.out / "sigma_rec.csv", {"z": ctx.grid.nodes, "sigma": res.sigma_rec})
        write_complex_csv(ctx.out / "q_rec.csv", {"z": ctx.grid.nodes, "q0": res.q_rec})
        write_heatmap(ctx.out / "sigma_rec.ppm", ctx.grid, res.sigma_rec, center=1.0)
        write_heatmap(ctx.out / "sigma_err.ppm", ctx.grid, res.sigma_rec - ctx.cond.sigma)
        ctx.manifest.record("reconstruct", route=route, projected=res.projected, **res.error_metrics)
    return ctx


def run_pipeline(cfg: PipelineConfig, out=None):
    """DtN -> boundary CGO -> b -> lambda-plane D-bar -> q -> sigma (or the pointwise route).

    Returns ``(ReconstructionResult, manifest_path)``. A failing stage is
    recorded in the manifest and re-raised as ``PipelineError``; files
    written by earlier stages are kept.
    """
    ctx = make_context(cfg, out)
    run_forward(ctx)
    if cfg.route == "novikov":
        run_dtn(ctx)
        run_scatter(ctx, cfg.scatter_form)
        run_dbar(ctx)
    run_reconstruct(ctx, cfg.route)
    ctx.manifest.record("run", status="ok")
    return ctx.result, ctx.manifest.path

