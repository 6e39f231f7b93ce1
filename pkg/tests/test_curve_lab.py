import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from dbar_eit.curve_lab import (
    AlgebraicCurve,
    BranchPointError,
    DegenerateThetaError,
    ExpPoly,
    NonGenericDivisorError,
    VandermondeError,
    boundary_functional_derivatives,
    build_patch,
    chart_dbar,
    curve_points,
    delta_theta_asymptotic,
    delta_theta_exppoly,
    delta_theta_surrogate,
    ellipse,
    exppoly_eps_inf,
    fermat_cubic,
    find_critical_points,
    localization_constant,
    make_divisor,
    printed_stationary_phase_model,
    r1_apply,
    r1_kernel,
    r1_kernel_chart2,
    read_curve,
    stationary_phase_integral,
    stationary_phase_model,
    track_branch,
    vandermonde_recover_Q,
)
from dbar_eit.faddeev_kernels import OscillationBudgetError

RHO = 0.2
THETA = 0.4 + 0.3j


def gauss(c1, c2=0.0, rho=RHO):
    return lambda z1, z2: np.exp(-(np.abs(z1 - c1) ** 2 + np.abs(z2 - c2) ** 2) / rho**2)


def patch_n(tau):
    # phase step tau * 2|dz1/dz2| * h stays below one radian on the patch
    return int(np.ceil(1.6 * tau * 2 * 1.4))


@pytest.fixture(scope="module")
def crit0():
    return sorted(find_critical_points(ellipse(), 0), key=lambda c: -c.w[0].real)


@pytest.fixture(scope="module")
def cubic_divisor():
    f = fermat_cubic()
    a1 = 2.0
    a2 = curve_points(f, a1).roots[0]
    return f, make_divisor(f, [(a1, a2)], THETA), find_critical_points(f, THETA)


# --- curves and points


def test_shipped_curves():
    e, f = ellipse(), fermat_cubic()
    assert (e.degree, e.genus) == (2, 0)
    assert (f.degree, f.genus) == (3, 1)
    assert np.allclose(np.sort_complex(e.forbidden_thetas()), [-1j, 1j])
    assert np.allclose(f.forbidden_thetas() ** 3, 1)


def test_curve_file_roundtrip(tmp_path):
    f = fermat_cubic()
    f.to_file(tmp_path / "c.txt")
    g = read_curve(tmp_path / "c.txt")
    assert np.array_equal(f.coeffs, g.coeffs)


def test_ellipse_points():
    assert np.allclose(np.sort(curve_points(ellipse(), 0).roots.real), [-1, 1])
    cp = curve_points(ellipse(), 1)
    assert cp.branch_point and cp.multiplicity.tolist() == [2] and abs(cp.roots[0]) < 1e-6


def test_cubic_point_residuals():
    f = fermat_cubic()
    rng = np.random.default_rng(1)
    for z1 in rng.normal(size=5) + 1j * rng.normal(size=5):
        cp = curve_points(f, z1)
        assert cp.roots.size == 3 and not cp.branch_point
        assert np.max(np.abs(f(z1, cp.roots))) <= 1e-10


def test_identically_zero_slice_rejected():
    c = np.zeros((2, 2), dtype=complex)
    c[1, 0] = 1  # P = z1
    with pytest.raises(ValueError):
        curve_points(AlgebraicCurve(c), 0)


def test_regularity_on_samples():
    for curve in (ellipse(), fermat_cubic()):
        for z1 in (0.3 + 0.1j, -1.7, 2j):
            for z2 in curve_points(curve, z1).roots:
                assert max(abs(g) for g in curve.grad(z1, z2)) > 1e-3


def test_track_branch_continuity():
    f = fermat_cubic()
    path = 1 + 0.5 * np.exp(1j * np.linspace(0, 2 * np.pi, 200))
    z2 = track_branch(f, path, curve_points(f, path[0]).roots[0])
    assert np.max(np.abs(f(path, z2))) < 1e-9
    assert np.max(np.abs(np.diff(z2))) < 0.2
    # z1 = 1 is a triple branch point: one loop moves to another sheet
    assert abs(z2[-1] - z2[0]) > 0.5
    big = 2 * np.exp(1j * np.linspace(0, 2 * np.pi, 200))
    # a loop enclosing all branch points returns to the start sheet
    z2 = track_branch(f, big, curve_points(f, 2).roots[0])
    assert abs(z2[-1] - z2[0]) < 1e-9


def test_track_branch_hits_branch_point():
    with pytest.raises(BranchPointError):
        track_branch(ellipse(), np.linspace(0, 1, 11), 1.0)


# --- critical points


def test_ellipse_theta_one():
    pts = sorted(find_critical_points(ellipse(), 1), key=lambda c: c.w[0].real)
    s = 1 / np.sqrt(2)
    assert np.allclose([p.w for p in pts], [(-s, -s), (s, s)], atol=1e-12)


@pytest.mark.parametrize("curve,M", [(ellipse(), 2), (fermat_cubic(), 6)])
def test_critical_count(curve, M):
    pts = find_critical_points(curve, THETA)
    assert len(pts) == M == curve.degree * (curve.degree - 1)
    for p in pts:
        assert abs(curve(*p.w)) <= 1e-8
        p1, p2 = curve.grad(*p.w)
        assert abs(p2 - THETA * p1) <= 1e-8
        assert p.second_order != 0


def test_forbidden_and_degenerate_theta():
    with pytest.raises(DegenerateThetaError):
        find_critical_points(ellipse(), 1j)
    # theta = 0 on the Fermat cubic: three double points
    with pytest.raises(DegenerateThetaError):
        find_critical_points(fermat_cubic(), 0)


@settings(max_examples=25, deadline=None)
@given(r=st.floats(0.05, 3), a=st.floats(0, 2 * np.pi))
def test_critical_points_satisfy_system(r, a):
    theta = r * np.exp(1j * a)
    f = fermat_cubic()
    assume(f.theta_margin(theta) > 0.05)
    try:
        pts = find_critical_points(f, theta)
    except DegenerateThetaError:
        assume(False)
    assert len(pts) == 6
    for p in pts:
        p1, p2 = f.grad(*p.w)
        assert abs(f(*p.w)) < 1e-8 and abs(p2 - theta * p1) < 1e-8 * (1 + abs(p1))


def test_ellipse_exact_localization():
    for theta in (0.3 + 0.2j, 2.0, -0.5 + 0.9j):
        for p in find_critical_points(ellipse(), theta):
            assert abs(p.w[0]) == pytest.approx(1 / np.sqrt(abs(1 + theta**2)), rel=1e-10)


@pytest.mark.parametrize("curve", [ellipse(), fermat_cubic()])
def test_localization_constant_transfers(curve):
    rng = np.random.default_rng(7)
    fit = rng.uniform(0.1, 2.5, 12) * np.exp(2j * np.pi * rng.uniform(size=12))
    check = rng.uniform(0.1, 2.5, 12) * np.exp(2j * np.pi * rng.uniform(size=12))
    C = localization_constant(curve, [t for t in fit if curve.theta_margin(t) > 0.02])
    for t in check:
        if curve.theta_margin(t) > 0.02:
            d = curve.theta_margin(t)
            assert all(abs(p.w[0]) <= 1.5 * C / np.sqrt(d) for p in find_critical_points(curve, t))


# --- kernel


def test_r1_zero_density():
    p = build_patch(ellipse(), (1, 0), chart=2, half_width=0.3, n=16)
    assert np.all(r1_apply(p, np.zeros(p.zc.shape)) == 0)


def test_r1_dbar_inverse():
    p = build_patch(ellipse(), (1, 0), chart=2, half_width=0.5, n=64)
    w = p.zc
    g = np.exp(-np.abs(w) ** 2 / 0.03)
    phi = g * (-w / 0.03) * (1 + w)  # dbar of g (1 + w)
    res = chart_dbar(p, r1_apply(p, phi)) - phi
    inner = np.abs(w) < 0.3
    assert p.h == 1 / 64
    assert np.max(np.abs(res[inner])) <= 5e-2 * np.max(np.abs(phi))


def test_r1_line_is_cauchy_transform():
    # P = z1: V is the z2 line and the kernel is the plain Cauchy kernel
    c = np.zeros((2, 1), dtype=complex)
    c[1, 0] = 1
    line = AlgebraicCurve(c)
    p = build_patch(line, (0, 0), chart=2, half_width=0.5, n=16)
    phi = np.exp(-np.abs(p.zc) ** 2 / 0.05)
    t = p.zc[3, 5]
    d = t - p.zc
    direct = np.sum(np.where((d == 0) | ~p.mask, 0, phi / np.where(d == 0, 1, d))) * p.h**2 / np.pi
    assert abs(r1_apply(p, phi)[3, 5] - direct) < 1e-13


def test_r1_kernel_two_charts():
    f = fermat_cubic()
    swapped = AlgebraicCurve(f.coeffs.T)
    a = (2.0, curve_points(f, 2.0).roots[0])
    for z2 in (0.4 + 0.2j, -0.3 + 0.5j):
        # the same points reached from the z2 chart and then from the z1 chart
        for z1 in curve_points(swapped, z2).roots:
            back = curve_points(f, z1).roots
            z2b = back[np.argmin(np.abs(back - z2))]
            k1 = r1_kernel(f, a, (z1, z2b))
            k2 = r1_kernel_chart2(f, a, (z1, z2))
            assert abs(k1 - k2) <= 1e-6 * abs(k1)


# --- stationary phase


def test_stationary_phase_zero():
    p = build_patch(ellipse(), (1, 0), chart=2, half_width=0.5, n=32)
    zero = lambda z1, z2: np.zeros(np.shape(z1))
    assert stationary_phase_integral([p], zero, 10.0) == 0
    assert stationary_phase_model(ellipse(), find_critical_points(ellipse(), 0), zero, 10.0) == 0


def test_stationary_phase_convergence(crit0):
    e = ellipse()
    Q = gauss(1.0)
    errs = []
    for tau in (50, 100, 200):
        p = build_patch(e, (1, 0), chart=2, half_width=0.8, n=patch_n(tau))
        d = stationary_phase_integral([p], Q, tau)
        errs.append(abs(d - stationary_phase_model(e, crit0[:1], Q, tau)) / abs(d))
    assert errs[1] <= 0.1
    assert errs[0] > errs[1] > errs[2]


def test_printed_model_ratio(crit0):
    Q = gauss(1.0)
    r = printed_stationary_phase_model(ellipse(), crit0, Q, 100) / stationary_phase_model(ellipse(), crit0, Q, 100)
    assert r == pytest.approx(-0.25, abs=1e-12)


def test_away_from_critical_points_decays():
    e = ellipse()
    c2 = 0.4
    seed = (np.sqrt(1 - c2**2), c2)
    Q = gauss(seed[0], c2, 0.1)
    vals = []
    for tau in (25, 50, 100):
        p = build_patch(e, seed, chart=2, half_width=0.35, n=int(np.ceil(0.7 * tau * 2 * 1.2)))
        vals.append(tau * abs(stationary_phase_integral([p], Q, tau)))
    assert vals[2] < 0.1 * vals[0]


def test_budget_enforced():
    p = build_patch(ellipse(), (1, 0), chart=2, half_width=0.8, n=32)
    with pytest.raises(OscillationBudgetError):
        stationary_phase_integral([p], gauss(1.0), 200)


# --- Vandermonde recovery


def two_point_q(z1, z2):
    return (1 + 0.2 * np.real(z2)) * gauss(1.0)(z1, z2) + 0.6 * gauss(-1.0)(z1, z2)


def test_vandermonde_two_points(crit0):
    e = ellipse()
    truth = np.array([two_point_q(*c.w) for c in crit0])
    errs = []
    for tau in (50, 100):
        ps = [build_patch(e, (s, 0), chart=2, half_width=0.8, n=patch_n(tau)) for s in (1, -1)]
        r = vandermonde_recover_Q(e, crit0, boundary_functional_derivatives(ps, two_point_q, tau), tau)
        errs.append(np.max(np.abs(r.Q - truth) / truth))
        assert r.cond == pytest.approx(2.0, rel=1e-6)
    assert errs[1] <= 0.1 and errs[1] < errs[0]


def test_vandermonde_zero(crit0):
    assert np.all(vandermonde_recover_Q(ellipse(), crit0, [0, 0], 100).Q == 0)


def test_vandermonde_single_point_exact(crit0):
    e = ellipse()
    cp = crit0[:1]
    tau = 80.0
    Q = 0.73
    A = 4 * np.pi * abs(cp[0].first_deriv) ** 3 / abs(cp[0].second_order) / 2j
    F1 = A * Q * (1j * cp[0].phase_node) * np.exp(1j * tau * cp[0].phase_node) / tau
    r = vandermonde_recover_Q(e, cp, [F1], tau)
    assert r.Q[0] == pytest.approx(Q, rel=1e-14)


def test_vandermonde_coincident_nodes():
    # theta = 1: s_m = 2 Re(w1 + w2) = +-2 sqrt 2 are distinct; a repeated point is not
    cp = find_critical_points(ellipse(), 1)
    with pytest.raises(VandermondeError):
        vandermonde_recover_Q(ellipse(), [cp[0], cp[0]], [1, 1], 10)


# --- exceptional-set determinant


def test_divisor_validation():
    f = fermat_cubic()
    with pytest.raises(ValueError):
        make_divisor(f, [(0.2, curve_points(f, 0.2).roots[0])], THETA)
    with pytest.raises(DegenerateThetaError):
        make_divisor(f, [(2.0, curve_points(f, 2.0).roots[0])], f.forbidden_thetas()[0])
    g = AlgebraicCurve(f.coeffs, forms=(np.zeros((1, 1)),))
    with pytest.raises(NonGenericDivisorError):
        make_divisor(g, [(2.0, curve_points(f, 2.0).roots[0])], THETA)


def test_delta_bounded_on_annulus(cubic_divisor):
    f, D, cr = cubic_divisor
    lams = np.concatenate([r * np.exp(2j * np.pi * np.arange(48) / 48) for r in (10, 20, 40, 80)])
    v = np.abs([delta_theta_surrogate(f, D, l, cr) for l in lams])
    per = v.reshape(4, -1).max(axis=1)
    assert np.all(np.isfinite(v)) and per.max() < 2 * per.min()


def test_delta_matrix_form(cubic_divisor):
    f, D, cr = cubic_divisor
    M, d = delta_theta_asymptotic(f, D, 7 + 3j, cr)
    assert M.shape == (1, 1) and d == pytest.approx(abs(7 + 3j) * M[0, 0], rel=1e-14)


def test_delta_exppoly_matches_numeric(cubic_divisor):
    f, D, cr = cubic_divisor
    E = delta_theta_exppoly(f, D, cr)
    lams = np.array([5 + 2j, -13 + 7j, 30j, -22 - 9j])
    num = np.array([delta_theta_surrogate(f, D, l, cr) for l in lams])
    assert np.max(np.abs(E(lams) - num)) <= 1e-8
    assert len(E.terms) == 1 + len(cr)


def test_delta_exppoly_symbolic(cubic_divisor):
    sp = pytest.importorskip("sympy")
    f, D, cr = cubic_divisor
    E = delta_theta_exppoly(f, D, cr)
    expr, (L, Lb) = E.to_sympy()
    fn = sp.lambdify((L, Lb), expr, "numpy")
    for lam in (5 + 2j, -13 + 7j, 30j):
        assert abs(fn(lam, np.conj(lam)) - delta_theta_surrogate(f, D, lam, cr)) <= 1e-8


def test_form_scaling(cubic_divisor):
    f, D, cr = cubic_divisor
    c = 0.7 - 1.1j
    g = AlgebraicCurve(f.coeffs, forms=(c * np.ones((1, 1)),))
    Dg = make_divisor(g, D.points, D.theta)
    lam = 9 - 4j
    assert delta_theta_surrogate(g, Dg, lam, cr) == pytest.approx(np.conj(c) * delta_theta_surrogate(f, D, lam, cr), rel=1e-12)


# --- exponential polynomials


def test_exppoly_unimodular():
    E = ExpPoly.from_dict({1: {(0, 0): 1}})
    lams = np.array([3, 4j, -2 + 5j])
    r = exppoly_eps_inf(E, lams, 0.5)
    assert r.floor == pytest.approx(1) and r.c_hat == pytest.approx(1)


def test_exppoly_sine_floor():
    # e^{lam - conj lam} - e^{-(lam - conj lam)} = 2i sin(2 Im lam)
    E = ExpPoly.from_dict({1: {(0, 0): 1}, -1: {(0, 0): -1}})
    lams = np.linspace(0, 10, 101) * 1j + 3
    assert np.allclose(E(lams), 2j * np.sin(2 * lams.imag))
    r = exppoly_eps_inf(E, lams, 0.5, n_radial=64)
    assert r.floor == pytest.approx(2 * np.sin(1.0), rel=1e-3)


def test_exppoly_eps_inf_errors():
    E = ExpPoly.from_dict({1: {(0, 0): 1}})
    with pytest.raises(ValueError):
        exppoly_eps_inf(E, [], 0.5)
    with pytest.raises(ValueError):
        exppoly_eps_inf(E, [1.0], 0)


def test_delta_floor(cubic_divisor):
    f, D, cr = cubic_divisor
    E = delta_theta_exppoly(f, D, cr)
    lams = np.concatenate([r * np.exp(2j * np.pi * np.arange(32) / 32) for r in (10, 20, 40)])
    assert exppoly_eps_inf(E, lams, 0.5).floor > 0.01


coef = st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False)
freq = st.sampled_from([0, 1, -1, 1j, 0.5 - 0.3j])


@st.composite
def exppolys(draw):
    d = {}
    for _ in range(draw(st.integers(1, 3))):
        a = draw(freq)
        d.setdefault(a, {})[(draw(st.integers(0, 2)), draw(st.integers(0, 2)))] = draw(coef)
    return ExpPoly.from_dict(d)


@settings(max_examples=40, deadline=None)
@given(exppolys(), exppolys(), st.complex_numbers(min_magnitude=0.1, max_magnitude=4))
def test_exppoly_algebra(P, Q, lam):
    assert (P * Q)(lam) == pytest.approx(P(lam) * Q(lam), rel=1e-9, abs=1e-9)
    assert (P + Q)(lam) == pytest.approx(P(lam) + Q(lam), rel=1e-9, abs=1e-9)
    if P.terms:
        assert P.h(lam) == pytest.approx(0, abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.1, 3), st.floats(0, 2 * np.pi), st.floats(0.1, 1.0))
def test_exppoly_floor_two_frequencies(r, a, eps):
    # two noncollinear frequencies: the eps-sup never vanishes
    E = ExpPoly.from_dict({1: {(0, 0): 1}, 1j: {(0, 0): 1}})
    lam = r * np.exp(1j * a) * 10
    assert exppoly_eps_inf(E, [lam], eps).floor > 0
