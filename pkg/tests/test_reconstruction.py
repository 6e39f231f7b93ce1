import numpy as np
import pytest

from dbar_eit.cgo_solver import q_from_sigma, solve_lippmann_schwinger
from dbar_eit.faddeev_kernels import OscillationBudgetError
from dbar_eit.forward_dtn import Conductivity, assemble_dtn
from dbar_eit.mesh import build_disk_grid, build_lambda_grid
from dbar_eit.reconstruction import (
    ReconstructionError,
    Route,
    bukhgeim_identity_rhs,
    bukhgeim_pointwise_Q,
    printed_prefactor_estimate,
    reconstruct_novikov,
    recover_q_from_psi,
    recover_sigma_from_q,
)

CENTER = 0.1 + 0.05j


def bump(r, radius=0.6):
    s = np.clip(np.asarray(r) / radius, 0, 1 - 1e-15)
    return np.where(np.asarray(r) < radius, np.exp(1 - 1 / (1 - s**2)), 0.0)


def poly_bump(z, r=0.6, k=0.4):
    s = np.abs(z - CENTER) ** 2 / r**2
    return 1 + k * np.where(s < 1, (1 - np.minimum(s, 1)) ** 4, 0)


@pytest.fixture(scope="module")
def grid():
    return build_disk_grid(48, 96)


@pytest.fixture(scope="module")
def phantom(grid):
    return Conductivity.from_function(grid, lambda z: 1 + 0.4 * bump(np.abs(z - 0.1j), 0.55))


@pytest.fixture(scope="module")
def pb(grid):
    return Conductivity.from_function(grid, poly_bump)


def test_q_from_plane_waves_vanishes():
    from dbar_eit.faddeev_kernels import box_grid

    z, h = box_grid(32)
    psi = np.stack([np.exp(l * z) for l in (0.5, 0.5j, -0.5)])
    rec = recover_q_from_psi(psi, h, np.abs(z) < 0.9)
    assert np.max(np.abs(rec.q)) < 1e-4
    assert rec.uncovered == 0


def test_q_from_interior_cgo(grid, phantom):
    fields, qs = [], None
    for lam in (0.4, 0.4j, -0.4 - 0.4j):
        f = solve_lippmann_schwinger(phantom, lam, n_box=96)
        fields.append(np.exp(lam * f.box_z) * f.box_mu)
        qs = f.box_q0
    z, h = f.box_z, f.box_h
    sup = np.abs(z) < 0.9
    rec = recover_q_from_psi(np.stack(fields), h, sup)
    inner = np.abs(z) < 0.85
    err = np.linalg.norm((rec.q - qs)[inner]) / np.linalg.norm(qs[inner])
    assert err < 0.1


def test_zero_crossing_is_masked():
    from dbar_eit.faddeev_kernels import box_grid

    z, h = box_grid(33)
    psi = z - z[16, 21]  # harmonic with a zero on a node
    rec = recover_q_from_psi(psi, h, np.abs(z) < 0.9)
    assert np.all(np.isfinite(rec.q))
    assert rec.uncovered == 1
    assert rec.coverage[16, 21] == 0
    assert np.max(np.abs(rec.q)) < 1e-10


def test_insufficient_coverage_raises():
    from dbar_eit.faddeev_kernels import box_grid

    z, h = box_grid(16)
    psi = np.where(np.abs(z) < 0.5, 0.0, 1.0) + 0j
    with pytest.raises(ReconstructionError):
        recover_q_from_psi(psi, h, np.abs(z) < 0.9)


def test_sigma_from_zero_q(grid):
    sigma, count = recover_sigma_from_q(grid, np.zeros(grid.shape))
    assert count == 0
    assert np.max(np.abs(sigma - 1)) < 1e-10


def test_sigma_round_trip(grid, phantom):
    sigma, count = recover_sigma_from_q(grid, q_from_sigma(phantom))
    w = grid.weights
    err = np.sqrt(np.sum(w * (sigma - phantom.sigma) ** 2) / np.sum(w * phantom.sigma**2))
    assert err < 0.02 and count == 0


def test_sigma_negated_q_differs(grid, phantom):
    sigma, _ = recover_sigma_from_q(grid, -q_from_sigma(phantom))
    assert np.all(sigma > 0)
    assert np.max(np.abs(sigma - phantom.sigma)) > 0.1


def test_excessive_projection_fails(grid):
    with pytest.raises(ReconstructionError):
        recover_sigma_from_q(grid, np.full(grid.shape, -50.0), collar=1.0)


def test_novikov_identity(grid):
    from dbar_eit.forward_dtn import reference_dtn

    res = reconstruct_novikov(reference_dtn(16), grid, build_lambda_grid(4.0, 8), n_z=24)
    assert res.route == Route.NOVIKOV
    assert np.max(np.abs(res.sigma_rec - 1)) < 1e-3
    assert np.max(np.abs(res.diagnostics["scattering"].b)) == 0


def test_novikov_low_contrast():
    g = build_disk_grid(32, 64)
    c = Conductivity.from_function(g, lambda z: 1 + 0.3 * bump(np.abs(z), 0.6))
    res = reconstruct_novikov(assemble_dtn(c, 16), g, build_lambda_grid(5.0, 12), n_z=24)
    m = res.compare(c.sigma)
    assert m["rel_l2"] < 0.2
    assert res.projected == 0 and np.all(res.sigma_rec > 0)
    assert np.all(res.sigma_rec[g.radius_field() > 0.9] == 1)


def test_bukhgeim_zero_q(grid):
    c = Conductivity.identity(grid)
    assert bukhgeim_identity_rhs(c, 0.1, 40) == 0
    r = bukhgeim_pointwise_Q(c, 0.1, [20, 40, 80], truth=0.0)
    assert np.all(r.estimates == 0)


def test_bukhgeim_first_order(pb):
    a = CENTER + 0.35
    Q = float(q_from_sigma(pb, np.array([a]))[0]) / 4
    r = bukhgeim_pointwise_Q(pb, a, [20, 40, 80], truth=Q, n=1024)
    assert r.conclusive
    assert 0.7 <= r.error_order <= 1.5
    # Richardson fit removes the 1/tau term
    assert abs(r.extrapolated - Q) < r.errors[-1]


def test_bukhgeim_center_matches_stationary_phase(pb):
    Q = float(q_from_sigma(pb, np.array([CENTER]))[0]) / 4
    est = 1j * 80 / np.pi * bukhgeim_identity_rhs(pb, CENTER, 80)
    assert abs(est - Q) < 1e-3 * abs(Q)


def test_printed_prefactor_gives_minus_four(pb):
    Q = float(q_from_sigma(pb, np.array([CENTER]))[0]) / 4
    assert printed_prefactor_estimate(pb, CENTER, 80) / Q == pytest.approx(-4, rel=1e-3)


def test_bukhgeim_outside_support_decays(pb):
    a = 0.8j  # outside the bump
    vals = [abs(bukhgeim_identity_rhs(pb, a, t)) for t in (20, 40, 80)]
    # |I| tau must still shrink, i.e. I = o(1/tau)
    assert vals[1] * 40 < vals[0] * 20 and vals[2] * 80 < vals[1] * 40


def test_bukhgeim_collar_point(pb):
    r = bukhgeim_pointwise_Q(pb, 0.95, [20, 40, 80], truth=0.0)
    assert abs(r.estimates[-1]) < 0.02


def test_bukhgeim_budget(pb):
    with pytest.raises(OscillationBudgetError):
        bukhgeim_identity_rhs(pb, 0.1, 400, n=256)
