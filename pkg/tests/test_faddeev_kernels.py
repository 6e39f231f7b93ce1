import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dbar_eit.faddeev_kernels import (
    LOG_CELL_MEAN,
    OscillationBudgetError,
    TruncationError,
    FaddeevGreenTable,
    build_green_table,
    bukhgeim_g,
    box_grid,
    faddeev_g,
    faddeev_g_shifted_form,
    greens_residual_test,
    printed_form_frequency,
    printed_form_shifted,
)
from dbar_eit.kernels import EULER_GAMMA, faddeev_green


def _sample(seed, n=10):
    rng = np.random.default_rng(seed)
    z = rng.uniform(0.05, 2, n) * np.exp(2j * np.pi * rng.uniform(size=n))
    lam = rng.uniform(0.1, 20, n) * np.exp(2j * np.pi * rng.uniform(size=n))
    return z, lam


def test_frequency_form_matches_closed_form():
    for z, lam in zip(*_sample(1)):
        assert abs(faddeev_g(z, lam) - faddeev_green(z, lam)) <= 1e-8 * abs(faddeev_green(z, lam))


def test_two_representations_equal_after_normalisation():
    for z, lam in zip(*_sample(2)):
        a = faddeev_g(z, lam)
        b = faddeev_g_shifted_form(z, lam)
        assert abs(a - b) <= 1e-8 * abs(a)


def test_printed_prefactors_differ_by_two():
    # the literal prefactors of the two displayed forms are not equal
    for z, lam in zip(*_sample(3, 4)):
        r = printed_form_shifted(z, lam) / printed_form_frequency(z, lam)
        assert r == pytest.approx(2.0, rel=1e-8)


def test_laplace_limit():
    for r in (0.05, 0.3, 1.7):
        z = r * np.exp(0.4j)
        exact = -1j / np.pi * (np.log(r) + EULER_GAMMA)
        assert abs(faddeev_g(z, 0) - exact) < 1e-6


def test_small_lambda_approaches_log_kernel():
    z = 0.4 + 0.3j
    lam = 1e-4j
    lead = -1j / np.pi * (np.log(abs(z)) + EULER_GAMMA + np.log(abs(lam)))
    assert abs(faddeev_g(z, lam) - lead) < 1e-3


@settings(max_examples=25, deadline=None)
@given(
    r=st.floats(0.05, 2.0),
    t=st.floats(0, 2 * np.pi),
    L=st.floats(0.0, 20.0),
    s=st.floats(0, 2 * np.pi),
)
def test_doubling_stability(r, t, L, s):
    z = r * np.exp(1j * t)
    lam = L * np.exp(1j * s)
    g1 = faddeev_g(z, lam, k_max=2048.0)
    g2 = faddeev_g(z, lam, k_max=8192.0)
    assert abs(g1 - g2) <= 1e-3 * abs(g2)


def test_truncation_error_reported():
    with pytest.raises(TruncationError):
        faddeev_g(0.5, 30j, k_max=4.0)


def test_zero_argument_rejected():
    with pytest.raises(ZeroDivisionError):
        faddeev_g(0, 1.0)


def test_conjugate_reflection_relation():
    # observed relation g(conj z, conj lam) = -conj g(z, lam), stable under k_max
    for z, lam in zip(*_sample(4, 4)):
        for k in (2048.0, 8192.0):
            a = faddeev_g(np.conj(z), np.conj(lam), k_max=k)
            b = faddeev_g(z, lam, k_max=k)
            assert abs(a + np.conj(b)) <= 1e-7 * abs(b)


def test_cell_mean_constant():
    n = 2000
    x = (np.arange(n) + 0.5) / n - 0.5
    X, Y = np.meshgrid(x, x)
    assert np.mean(0.5 * np.log(X**2 + Y**2)) == pytest.approx(LOG_CELL_MEAN, abs=1e-5)


@pytest.mark.parametrize("lam", [0, 1, 2 + 1j, 5j])
def test_greens_residual(lam):
    r64 = greens_residual_test(lam, h=1 / 64)
    r128 = greens_residual_test(lam, h=1 / 128)
    assert r64 <= 5e-2
    assert r128 <= 0.5 * r64


def test_greens_residual_rejects_zero_density():
    with pytest.raises(ValueError):
        greens_residual_test(1.0, phi=lambda z: 0 * z)


def test_convolution_matches_direct_sum():
    n = 12
    z, h = box_grid(n)
    rng = np.random.default_rng(0)
    f = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    lam = 1.5 - 0.5j
    tab = build_green_table(lam, h, n)
    u = tab.convolve(f)
    i, j = 3, 7
    d = z[i, j] - z
    g = np.where(d == 0, tab.values[n - 1, n - 1], faddeev_green(np.where(d == 0, 1, d), lam))
    assert abs(u[i, j] - h * h * np.sum(g * f)) < 1e-12


def test_table_roundtrip(tmp_path):
    tab = build_green_table(0.5 + 2j, 0.1, 5)
    tab_path = tmp_path / "g.bin"
    tab.save(tab_path)
    back = FaddeevGreenTable.load(tab_path)
    assert back.lam == tab.lam and back.n == tab.n and back.h == tab.h
    assert np.array_equal(back.values, tab.values)


def test_bukhgeim_laplace_case_exact():
    z, zeta, R = 0.3 + 0.1j, -0.2j, 3.0
    exact = -(2j / np.pi) * np.log(R / abs(z - zeta))
    v = bukhgeim_g(0, z, zeta, 0, radius=R, n=256)
    assert abs(v.value - exact) <= 1e-3 * abs(exact)


@pytest.mark.parametrize("lam", [0.0, 1.0, 2 + 1j])
def test_bukhgeim_resolution_oracle(lam):
    a, z, zeta = 0.1 - 0.2j, 0.4, 0.1j
    coarse = bukhgeim_g(a, z, zeta, lam, n=128, budget=5).value
    fine = bukhgeim_g(a, z, zeta, lam, n=512, budget=5).value
    assert abs(coarse - fine) <= 1e-2 * abs(fine)


@settings(max_examples=10, deadline=None)
@given(sx=st.floats(-1, 1), sy=st.floats(-1, 1))
def test_bukhgeim_translation(sx, sy):
    s = sx + 1j * sy
    a, z, zeta, lam = 0.2, 0.3 + 0.2j, -0.1, 1 + 1j
    v = bukhgeim_g(a, z, zeta, lam, n=128, budget=5).value
    w = bukhgeim_g(a, z + s, zeta + s, lam, n=128, budget=5).value
    assert abs(v - w) <= 1e-9 * abs(v)


def test_bukhgeim_decay_along_ray():
    # pointwise values oscillate; the banded envelope decays
    rs = np.linspace(0.3, 3.8, 15)
    vals = [abs(bukhgeim_g(0, r * np.exp(0.3j), 0.0, 2.0, radius=8, n=512, budget=50).value) for r in rs]
    env = [max(vals[k : k + 5]) for k in range(0, 15, 5)]
    assert env[0] > env[1] > env[2]


def test_bukhgeim_budget():
    with pytest.raises(OscillationBudgetError):
        bukhgeim_g(0, 0.5, 0, 40.0, n=64)
