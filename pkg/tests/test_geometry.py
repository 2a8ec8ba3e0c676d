import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfrg import (
    ConformalBackground,
    Lattice,
    LatticeMismatchError,
    PositivityError,
    PreconditionError,
    UnsupportedError,
    band_limited_psi,
    integrate,
    laplacian,
    make_tt_field,
    norm_squared,
    scalar_curvature,
    tt_check,
)
from cfrg.geometry import flat_laplacian, full_to_sym, sym_to_full, wide_laplacian

TWO_PI = 2 * math.pi


def cos_x1(lattice, m=1):
    x1, _, _ = lattice.coords()
    return np.cos(TWO_PI * m * x1 / lattice.L)


def wavy_background(n, amp=0.1, L=1.0):
    lat = Lattice(n, L)
    psi = band_limited_psi(lat, [(amp, (1, 0, 0), 0.0), (0.05, (0, 1, 1), 0.4)])
    return ConformalBackground.conformally_flat(lat, psi)


# -- lattice and backgrounds ---------------------------------------------------

def test_lattice_rejects_small_or_bad_period():
    with pytest.raises(PreconditionError):
        Lattice(4)
    with pytest.raises(PreconditionError):
        Lattice(16, 0.0)
    with pytest.raises(PreconditionError):
        Lattice(16, math.inf)


def test_lattice_coordinates():
    lat = Lattice(8, 2.0)
    assert lat.h == 0.25
    x1, x2, x3 = lat.coords()
    assert x1[3, 0, 0] == 0.75 and x2[0, 5, 0] == 1.25 and x3[0, 0, 7] == 1.75


def test_conformal_background_checks_psi():
    lat = Lattice(8)
    with pytest.raises(LatticeMismatchError):
        ConformalBackground.conformally_flat(lat, np.ones((9, 9, 9)))
    bad = np.ones(lat.shape)
    bad[1, 2, 3] = -0.1
    with pytest.raises(PositivityError):
        ConformalBackground.conformally_flat(lat, bad)


def test_shape_mismatch_is_a_lattice_error():
    bg = ConformalBackground.flat(Lattice(8))
    with pytest.raises(LatticeMismatchError):
        laplacian(np.ones((16, 16, 16)), bg)


# -- Laplacian ---------------------------------------------------------------------

def test_laplacian_annihilates_constants():
    for bg in (ConformalBackground.flat(Lattice(16)), wavy_background(16)):
        out = laplacian(np.full(bg.lattice.shape, 3.7), bg)
        assert np.abs(out).max() <= 1e-10


@pytest.mark.parametrize("L", [1.0, 2.5])
def test_flat_cosine_is_eigenfield(L):
    lat = Lattice(16, L)
    f = cos_x1(lat)
    expected = -(4 / lat.h**2) * math.sin(math.pi * lat.h / L) ** 2
    out = laplacian(f, ConformalBackground.flat(lat))
    assert np.allclose(out, expected * f, rtol=0, atol=1e-10 / lat.h**2)


def test_unit_psi_reproduces_flat():
    lat = Lattice(12)
    f = np.random.default_rng(1).standard_normal(lat.shape)
    flat = laplacian(f, ConformalBackground.flat(lat))
    conf = laplacian(f, ConformalBackground.conformally_flat(lat, np.ones(lat.shape)))
    # same stencil, different summation order
    assert np.abs(flat - conf).max() <= 1e-14 * np.abs(flat).max()


def test_stencil_order_two():
    # smooth function with known continuum Laplacian
    errs = []
    for n in (16, 32, 64):
        lat = Lattice(n)
        x1, x2, _ = lat.coords()
        f = np.sin(TWO_PI * x1) * np.cos(TWO_PI * x2)
        exact = -2 * TWO_PI**2 * f
        errs.append(np.abs(flat_laplacian(f, lat) - exact).max())
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert all(abs(p - 2) <= 0.2 for p in orders)


def test_conformal_laplacian_order_two():
    # psi = 1 + 0.1 cos(2 pi x1): Delta f = psi^-6 d1(psi^2 d1 f) for f = f(x1)
    errs = []
    for n in (16, 32, 64):
        lat = Lattice(n)
        x1, _, _ = lat.coords()
        k = TWO_PI
        psi = 1 + 0.1 * np.cos(k * x1)
        dpsi = -0.1 * k * np.sin(k * x1)
        f = np.sin(k * x1)
        df, d2f = k * np.cos(k * x1), -k**2 * np.sin(k * x1)
        exact = (2 * psi * dpsi * df + psi**2 * d2f) / psi**6
        bg = ConformalBackground.conformally_flat(lat, psi)
        errs.append(np.abs(laplacian(f, bg) - exact).max())
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert all(abs(p - 2) <= 0.2 for p in orders)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), conformal=st.booleans())
def test_laplacian_self_adjoint_zero_mean_nonpositive(seed, conformal):
    rng = np.random.default_rng(seed)
    lat = Lattice(8)
    if conformal:
        psi = 1 + 0.3 * rng.random(lat.shape)
        bg = ConformalBackground.conformally_flat(lat, psi)
    else:
        bg = ConformalBackground.flat(lat, rng.uniform(-1, 1))
    u, v = rng.standard_normal((2, *lat.shape))
    Lu, Lv = laplacian(u, bg), laplacian(v, bg)
    scale = np.sqrt(integrate(Lu**2, bg) * integrate(v**2, bg)) + 1.0
    assert abs(integrate(v * Lu, bg) - integrate(u * Lv, bg)) <= 1e-10 * scale
    assert abs(integrate(Lu, bg)) <= 1e-10 * (integrate(np.abs(Lu), bg) + 1.0)
    assert integrate(u * Lu, bg) <= 1e-10 * scale


# -- integration and curvature -------------------------------------------------------

def test_integrate_examples():
    lat = Lattice(16)
    flat = ConformalBackground.flat(lat)
    assert integrate(np.ones(lat.shape), flat) == pytest.approx(1.0, abs=1e-14)
    assert abs(integrate(cos_x1(lat), flat)) <= 1e-14
    two = ConformalBackground.conformally_flat(lat, np.full(lat.shape, 2.0))
    assert integrate(np.ones(lat.shape), two) == pytest.approx(64.0, rel=1e-14)


def test_scalar_curvature_trivial_cases():
    lat = Lattice(8)
    assert np.all(scalar_curvature(ConformalBackground.flat(lat, -1.0)) == -1.0)
    two = ConformalBackground.conformally_flat(lat, np.full(lat.shape, 2.0))
    assert np.abs(scalar_curvature(two)).max() <= 1e-12


def test_scalar_curvature_matches_analytic_at_second_order():
    # R = -8 psi^-5 psi'' with psi'' = -0.1 k^2 cos(k x1), differentiated by hand
    errs = []
    for n in (16, 32, 64):
        lat = Lattice(n)
        c = cos_x1(lat)
        psi = 1 + 0.1 * c
        exact = 8 * 0.1 * TWO_PI**2 * c / psi**5
        R = scalar_curvature(ConformalBackground.conformally_flat(lat, psi))
        errs.append(np.abs(R - exact).max())
    assert errs[0] < 0.05 * np.abs(exact).max()
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert all(abs(p - 2) <= 0.2 for p in orders)


def test_wide_laplacian_is_second_order():
    errs = []
    for n in (16, 32, 64):
        lat = Lattice(n)
        f = cos_x1(lat)
        errs.append(np.abs(wide_laplacian(f, lat) + TWO_PI**2 * f).max())
    assert abs(math.log2(errs[1] / errs[2]) - 2) <= 0.1


# -- tensors ---------------------------------------------------------------------------

def test_sym_round_trip():
    t = np.arange(6.0)
    full = sym_to_full(t)
    assert np.array_equal(full, full.T)
    assert np.array_equal(full_to_sym(full), t)


def test_constant_tt_field_norm():
    lat = Lattice(8)
    sigma = make_tt_field(lat, np.diag([1.0, 1.0, -2.0]))
    bg = ConformalBackground.flat(lat)
    assert np.all(norm_squared(sigma, bg) == 6.0)
    assert np.all(norm_squared(np.zeros((6, *lat.shape)), bg) == 0.0)


def _shear_mode(lat, amp=1.0):
    eps = np.zeros((3, 3))
    eps[1, 2] = eps[2, 1] = amp
    return (np.array([TWO_PI / lat.L, 0, 0]), eps, 0.0)


def test_single_mode_is_tt_to_roundoff():
    lat = Lattice(16)
    sigma = make_tt_field(lat, np.zeros(6), [_shear_mode(lat)])
    div, tr = tt_check(sigma, ConformalBackground.flat(lat))
    assert div <= 1e-12 and tr == 0.0
    # off-diagonal entry counts twice in the norm
    assert norm_squared(sigma, ConformalBackground.flat(lat))[0, 0, 0] == pytest.approx(2.0)


def test_mixed_tt_field_positive_norm():
    lat = Lattice(16)
    sigma = make_tt_field(lat, np.diag([1.0, 1.0, -2.0]), [_shear_mode(lat, 0.5)])
    s2 = norm_squared(sigma, ConformalBackground.flat(lat))
    assert s2.min() > 0
    assert s2.min() == pytest.approx(6.0, abs=1e-12)
    assert s2.max() == pytest.approx(6.5, abs=1e-12)


def test_tt_check_detects_longitudinal_mode():
    lat = Lattice(16)
    x1, _, _ = lat.coords()
    sigma = np.zeros((6, *lat.shape))
    sigma[0] = np.cos(TWO_PI * x1)
    div, _ = tt_check(sigma, ConformalBackground.flat(lat))
    assert div > 1.0


def test_make_tt_field_validates_modes():
    lat = Lattice(8)
    eps = np.zeros((3, 3))
    eps[0, 0], eps[1, 1] = 1.0, -1.0
    with pytest.raises(PreconditionError):
        make_tt_field(lat, np.zeros(6), [(np.array([TWO_PI, 0, 0]), eps, 0.0)])
    with pytest.raises(PreconditionError):
        make_tt_field(lat, np.diag([1.0, 1.0, 1.0]))
    with pytest.raises(PreconditionError):
        make_tt_field(lat, np.zeros(6), [(np.array([1.0, 0, 0]), np.zeros((3, 3)), 0.0)])


def test_tt_check_flat_only():
    with pytest.raises(UnsupportedError):
        tt_check(np.zeros((6, 8, 8, 8)), wavy_background(8))


def test_norm_squared_conformal_weight():
    lat = Lattice(8)
    bg = ConformalBackground.conformally_flat(lat, np.full(lat.shape, 2.0))
    sigma = make_tt_field(lat, np.diag([1.0, 1.0, -2.0]))
    assert np.allclose(norm_squared(sigma, bg), 6.0 / 2**8)
