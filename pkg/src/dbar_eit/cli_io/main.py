"""``eit`` command line entry point."""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .. import __version__
from .. import curve_lab as cl
from ..reconstruction import bukhgeim_pointwise_Q
from ..cgo_solver import q_from_sigma
from .config import ConfigError, load_config
from .pipeline import (
    PipelineError,
    make_context,
    run_cgo,
    run_dbar,
    run_dtn,
    run_forward,
    run_pipeline,
    run_reconstruct,
    run_scatter,
    write_complex_csv,
)

STAGES = ("forward", "dtn", "cgo", "scatter", "dbar", "reconstruct", "bukhgeim", "curve", "pipeline")


def _common(p):
    p.add_argument("--config", metavar="PATH", help="flat key = value config file")
    p.add_argument("--out", metavar="DIR", help="output directory (overrides config 'out')")
    p.add_argument("--seed", type=int, help="random seed (overrides config 'seed')")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eit", description="D-bar conductivity reconstruction toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in [
        ("forward", "sample the phantom conductivity"),
        ("dtn", "assemble the Dirichlet-to-Neumann matrix"),
        ("cgo", "boundary CGO traces at the configured lambdas"),
        ("dbar", "solve the lambda-plane D-bar equation at the configured z points"),
        ("bukhgeim", "pointwise Q at the configured points"),
        ("pipeline", "full run with manifest"),
    ]:
        _common(sub.add_parser(name, help=text))
    p = sub.add_parser("scatter", help="scattering data on the lambda grid")
    p.add_argument("--form", choices=["boundary", "interior", "both"])
    _common(p)
    p = sub.add_parser("reconstruct", help="reconstruct sigma")
    p.add_argument("--route", choices=["novikov", "bukhgeim"])
    _common(p)
    p = sub.add_parser("curve", help="algebraic-curve experiments")
    p.add_argument("action", choices=["crit", "phase", "delta", "recover"])
    _common(p)
    return parser


def _config(args):
    over = list(args.set)
    if args.out:
        over.append(f"out={args.out}")
    if args.seed is not None:
        over.append(f"seed={args.seed}")
    if getattr(args, "form", None):
        over.append(f"scatter_form={args.form}")
    if getattr(args, "route", None):
        over.append(f"route={args.route}")
    return load_config(args.config, over)


def _curve(name):
    return cl.shipped_curve(name) if name in ("ellipse", "fermat_cubic") else cl.read_curve(name)


def cmd_curve(ctx, action):
    cfg, out, man = ctx.cfg, ctx.out, ctx.manifest
    curve = _curve(cfg.curve)
    theta = cfg.theta
    if action == "crit":
        crit = cl.find_critical_points(curve, theta)
        write_complex_csv(
            out / "critical_points.csv",
            {
                "w1": np.array([c.w[0] for c in crit]),
                "w2": np.array([c.w[1] for c in crit]),
                "second_order": np.array([c.second_order for c in crit]),
                "first_deriv": np.array([c.first_deriv for c in crit]),
            },
        )
        res = max(abs(curve(*c.w)) for c in crit)
        man.record("curve_crit", count=len(crit), expected=curve.degree * (curve.degree - 1), residual=float(res))
        print(f"{len(crit)} critical points (N(N-1) = {curve.degree * (curve.degree - 1)})")
    elif action == "phase":
        rows = []
        for tau in (cfg.tau / 2, cfg.tau, 2 * cfg.tau):
            d, m, cp = cl.gaussian_phase_check(curve, theta, tau)
            rows.append((tau, d, m))
            man.record("curve_phase", **{f"rel_err_tau{tau:g}": float(abs(d - m) / abs(d))})
        write_complex_csv(out / "phase.csv", {"tau": np.array([r[0] for r in rows]), "direct": np.array([r[1] for r in rows]), "model": np.array([r[2] for r in rows])})
        for tau, d, m in rows:
            print(f"tau={tau:g} direct={d:.6g} model={m:.6g} rel={abs(d - m) / abs(d):.3e}")
    elif action == "recover":
        crit = cl.find_critical_points(curve, theta)
        weights = np.linspace(1.0, 0.5, len(crit))
        res, truth = cl.two_point_recovery(curve, theta, cfg.tau, weights)
        write_complex_csv(out / "recover.csv", {"Q_rec": res.Q, "Q_true": truth.astype(complex)})
        man.record("curve_recover", cond=res.cond, residual=float(np.max(np.abs(res.Q - truth) / np.abs(truth))))
        print(f"max rel error {np.max(np.abs(res.Q - truth) / np.abs(truth)):.3e}, condition {res.cond:.3e}")
    else:
        if not curve.forms:
            raise ConfigError("delta needs a curve with holomorphic forms (fermat_cubic)")
        a1 = 2.0 * max(1.0, curve.r0)
        D = cl.make_divisor(curve, [(a1, cl.curve_points(curve, a1).roots[0])], theta)
        crit = cl.find_critical_points(curve, theta)
        E = cl.delta_theta_exppoly(curve, D, crit)
        lams = np.concatenate([r * np.exp(2j * np.pi * np.arange(48) / 48) for r in (10, 20, 40, 80)])
        vals = np.array([cl.delta_theta_surrogate(curve, D, l, crit) for l in lams])
        floor = cl.exppoly_eps_inf(E, lams, 0.5)
        write_complex_csv(out / "delta_scan.csv", {"lambda": lams, "surrogate": vals})
        man.record("curve_delta", max_abs=float(np.max(np.abs(vals))), eps_floor=floor.floor, c_hat=floor.c_hat)
        print(f"|lam^g Delta| in [{np.min(np.abs(vals)):.4g}, {np.max(np.abs(vals)):.4g}], eps-floor {floor.floor:.4g}")


def cmd_bukhgeim(ctx):
    run_forward(ctx)
    cfg = ctx.cfg
    rows = []
    for a in cfg.points:
        truth = float(q_from_sigma(ctx.cond, np.array([a]))[0]) / 4
        r = bukhgeim_pointwise_Q(ctx.cond, a, cfg.taus, truth=truth, n=cfg.bukhgeim_n)
        rows.append((a, r.extrapolated, truth, r.error_order))
        ctx.manifest.record("bukhgeim", **{f"order_{len(rows) - 1}": r.error_order})
    write_complex_csv(
        ctx.out / "bukhgeim.csv",
        {"a": np.array([r[0] for r in rows], dtype=complex), "Q_est": np.array([r[1] for r in rows]), "Q_true": np.array([r[2] for r in rows])},
    )
    for a, est, tr, order in rows:
        print(f"a={a} Q_est={est.real:.6g} Q_true={tr:.6g} order={order:.3f}")


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        if args.command == "pipeline":
            res, mpath = run_pipeline(cfg)
            print(f"rel_l2={res.error_metrics['rel_l2']:.4e} manifest={mpath}")
            return 0
        ctx = make_context(cfg)
        c = args.command
        if c == "forward":
            run_forward(ctx)
        elif c == "dtn":
            run_dtn(ctx)
        elif c == "cgo":
            run_cgo(ctx)
        elif c == "scatter":
            run_scatter(ctx, cfg.scatter_form)
        elif c == "dbar":
            run_dbar(ctx)
        elif c == "reconstruct":
            run_reconstruct(ctx, cfg.route)
            print(" ".join(f"{k}={v:.4e}" for k, v in ctx.result.error_metrics.items()))
        elif c == "bukhgeim":
            cmd_bukhgeim(ctx)
        elif c == "curve":
            cmd_curve(ctx, args.action)
        ctx.manifest.record("run", status="ok")
    except (ConfigError, PipelineError, ValueError) as exc:
        print(f"eit: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
