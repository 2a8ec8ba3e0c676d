import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfrg import (
    ConformalBackground,
    ConvergenceError,
    Lattice,
    PositivityError,
    PreconditionError,
    Status,
    UnsupportedError,
    band_limited_psi,
    conformal_transfer,
    constant_root,
    flat_data,
    make_data,
    obstruction_check,
    residual,
    scaling_transform,
    solve_monotone,
    solve_newton,
    sub_super_bounds,
)
from cfrg.lichnerowicz import ClassTag, is_solvable

CONSTANT_CASES = [
    # (R, sigma2, tau2, phi)
    (0.0, 2 / 3, 1.0, 1.0),
    (1.0, 256.0, 0.0, 2.0),
    (-1.0, 0.0, 1.5, 1.0),
]


def wavy_sigma2(lat):
    x1, _, _ = lat.coords()
    return (2 / 3) * (1 + 0.5 * np.cos(2 * np.pi * x1 / lat.L))


# -- residual and constant roots ------------------------------------------------------

@pytest.mark.parametrize("R, s, t2, phi", CONSTANT_CASES)
def test_residual_vanishes_on_constant_solutions(R, s, t2, phi):
    data = flat_data(8, R, s, t2)
    assert np.abs(residual(np.full((8, 8, 8), phi), data)).max() <= 1e-13


def test_residual_rejects_nonpositive():
    data = flat_data(8, 0.0, 2 / 3, 1.0)
    with pytest.raises(PositivityError):
        residual(np.zeros((8, 8, 8)), data)


@pytest.mark.parametrize("R, s, t2, phi", CONSTANT_CASES)
def test_constant_root_examples(R, s, t2, phi):
    assert constant_root(R, s, t2) == pytest.approx(phi, rel=1e-14)


def test_constant_root_closed_forms():
    assert constant_root(2.0, 3.0, 0.0) == pytest.approx(1.5 ** 0.125, rel=1e-15)
    assert constant_root(-2.0, 0.0, 0.5) == pytest.approx(6.0 ** 0.25, rel=1e-15)
    assert constant_root(0.0, 0.5, 1.0) == pytest.approx(0.75 ** (1 / 12), rel=1e-15)


@settings(max_examples=60, deadline=None)
@given(R=st.floats(-5, 5), s=st.floats(1e-3, 1e3), t2=st.floats(1e-3, 1e3))
def test_constant_root_is_a_root(R, s, t2):
    u = constant_root(R, s, t2)
    g = t2 * u**12 / 12 + R * u**8 / 8 - s / 8
    scale = t2 * u**12 / 12 + abs(R) * u**8 / 8 + s / 8
    assert u > 0
    assert abs(g) <= 1e-12 * scale


@pytest.mark.parametrize("R, s, t2", [(0.0, 0.0, 1.0), (1.0, 0.0, 1.0), (-1.0, 1.0, 0.0), (0.0, 0.0, 0.0)])
def test_constant_root_without_positive_root(R, s, t2):
    with pytest.raises(PreconditionError):
        constant_root(R, s, t2)


# -- barriers ---------------------------------------------------------------------------

def test_bounds_for_varying_sigma2():
    lat = Lattice(16)
    x1, _, _ = lat.coords()
    # sigma2 between 1/2 and 2
    s2 = 1.25 + 0.75 * np.cos(2 * np.pi * x1)
    data = make_data(ConformalBackground.flat(lat, 0.0), sigma2=s2, tau=1.0, yamabe="0")
    lo, hi = sub_super_bounds(data)
    assert lo == pytest.approx(0.75 ** (1 / 12), rel=1e-14)
    assert hi == pytest.approx(3 ** (1 / 12), rel=1e-14)


@pytest.mark.parametrize("R, s, t2, phi", CONSTANT_CASES)
def test_bounds_collapse_on_constant_data(R, s, t2, phi):
    lo, hi = sub_super_bounds(flat_data(8, R, s, t2))
    assert lo == pytest.approx(phi, rel=1e-14) and hi == pytest.approx(phi, rel=1e-14)


def test_bounds_refuse_obstructed_class():
    with pytest.raises(PreconditionError):
        sub_super_bounds(flat_data(8, 1.0, 0.0, 1.0))


# -- solvers -------------------------------------------------------------------------------

@pytest.mark.parametrize("R, s, t2, phi", CONSTANT_CASES)
def test_both_solvers_recover_constants(R, s, t2, phi):
    data = flat_data(16, R, s, t2)
    for solve in (solve_monotone, solve_newton):
        rep = solve(data)
        assert rep.converged
        assert np.abs(rep.phi - phi).max() <= 1e-9


def test_monotone_constant_case_is_immediate():
    rep = solve_monotone(flat_data(8, 0.0, 2 / 3, 1.0))
    assert rep.iterations <= 1


def test_newton_from_exact_guess_is_immediate():
    rep = solve_newton(flat_data(8, 1.0, 256.0, 0.0), phi0=2.0)
    assert rep.iterations == 0 and rep.residual_max <= 1e-12


def test_solvers_agree_on_nonconstant_data():
    lat = Lattice(32)
    data = make_data(ConformalBackground.flat(lat, 0.0), sigma2=wavy_sigma2(lat), tau=1.0, yamabe="0")
    mono = solve_monotone(data)
    newton = solve_newton(data)
    assert mono.converged and newton.converged
    assert np.abs(mono.phi - newton.phi).max() <= 10 * data_tol(data)
    assert np.ptp(newton.phi) > 1e-3


def data_tol(data):
    return 1e-9 if data.bg.is_flat else 1e-8


def test_monotone_iterates_decrease_inside_barriers():
    lat = Lattice(16)
    data = make_data(ConformalBackground.flat(lat, 0.0), sigma2=wavy_sigma2(lat), tau=1.0, yamabe="0")
    lo, hi = sub_super_bounds(data)
    seen = []
    solve_monotone(data, callback=lambda k, phi: seen.append(phi.copy()))
    assert len(seen) > 2
    for a, b in zip(seen, seen[1:]):
        assert np.all(b <= a + 1e-12)
    for phi in seen:
        assert phi.min() >= lo - 1e-12 and phi.max() <= hi + 1e-12


def test_newton_solution_is_unique_from_different_starts():
    lat = Lattice(16)
    data = make_data(ConformalBackground.flat(lat, -1.0), sigma2=wavy_sigma2(lat), tau=1.0, yamabe="-")
    a = solve_newton(data, phi0=0.8)
    b = solve_newton(data, phi0=1.4)
    assert np.abs(a.phi - b.phi).max() <= 1e-8


def test_solvers_refuse_obstructed_classes():
    data = flat_data(8, 1.0, 0.0, 1.0)
    with pytest.raises(PreconditionError):
        solve_monotone(data)
    with pytest.raises(PreconditionError):
        solve_newton(data)


def test_newton_tiny_start_is_truthful():
    data = flat_data(16, -1.0, 0.0, 1.5)
    try:
        rep = solve_newton(data, phi0=1e-3)
    except ConvergenceError:
        return
    assert rep.converged and np.abs(rep.phi - 1.0).max() <= 1e-8


def test_newton_restarts_are_seeded():
    lat = Lattice(8)
    data = make_data(ConformalBackground.flat(lat, 0.0), sigma2=wavy_sigma2(lat), tau=1.0, yamabe="0")
    a = solve_newton(data, phi0=1e-3, restarts=3, seed=7)
    b = solve_newton(data, phi0=1e-3, restarts=3, seed=7)
    assert np.array_equal(a.phi, b.phi)


def test_report_json_is_plain():
    rep = solve_newton(flat_data(8, 0.0, 2 / 3, 1.0))
    out = rep.to_json("phi.cfrg")
    assert out["method"] == "newton" and out["phi_field"] == "phi.cfrg"
    assert out["bracket"] == [pytest.approx(1.0), pytest.approx(1.0)]


# -- obstruction ------------------------------------------------------------------------

@pytest.mark.parametrize("R, s, t2, status", [
    (1.0, 0.0, 1.0, Status.OBSTRUCTED),
    (0.0, 0.0, 0.0, Status.TRIVIAL_FAMILY),
    (-1.0, 1.0, 1.0, Status.SOLVABLE),
    (0.0, 1.0, 0.0, Status.OBSTRUCTED),
    (1.0, 1.0, 0.0, Status.SOLVABLE),
])
def test_obstruction_check(R, s, t2, status):
    verdict = obstruction_check(flat_data(8, R, s, t2))
    assert verdict.status is status
    assert verdict.reason


def test_obstruction_needs_flat_background():
    lat = Lattice(8)
    bg = ConformalBackground.conformally_flat(lat, np.ones(lat.shape))
    with pytest.raises(UnsupportedError):
        obstruction_check(make_data(bg, tau=1.0, yamabe="0"))


def test_solvability_from_term_signs():
    assert is_solvable(ClassTag("-", True, False))
    assert not is_solvable(ClassTag("-", False, True))
    assert not is_solvable(ClassTag("0", True, True))


# -- scaling ---------------------------------------------------------------------------------

def test_scaling_identity_is_identity_at_one():
    data = flat_data(8, 0.0, 2 / 3, 1.0)
    phi = np.full((8, 8, 8), 1.0)
    phic, datac = scaling_transform(phi, data, 1.0)
    assert np.array_equal(phic, phi)
    assert np.array_equal(datac.sigma2, data.sigma2) and datac.tau == data.tau


def test_scaling_constant_solution():
    data = flat_data(8, 0.0, 2 / 3, 1.0)
    phic, datac = scaling_transform(np.ones((8, 8, 8)), data, 2.0)
    assert np.all(phic == 2.0)
    assert datac.sigma2.max() == pytest.approx(256 * 2 / 3)
    assert datac.tau2 == pytest.approx(1 / 16)
    assert np.abs(residual(phic, datac)).max() <= 1e-12


@pytest.mark.parametrize("c", [1e-2, 1.0, 3.0, 1e2])
def test_residual_scales_linearly(c):
    lat = Lattice(12)
    rng = np.random.default_rng(3)
    data = make_data(ConformalBackground.flat(lat, -1.0), sigma2=wavy_sigma2(lat), tau=0.7, yamabe="-")
    phi = 1 + 0.1 * rng.standard_normal(lat.shape)
    r = residual(phi, data)
    phic, datac = scaling_transform(phi, data, c)
    rc = residual(phic, datac)
    assert np.abs(rc - c * r).max() <= 1e-12 * c * np.abs(r).max()


# -- conformal transfer ---------------------------------------------------------------------

def test_transfer_identity():
    data = flat_data(8, 0.0, 2 / 3, 1.0)
    phi = np.ones((8, 8, 8))
    phit, datat = conformal_transfer(phi, data, np.ones((8, 8, 8)))
    assert np.array_equal(phit, phi)
    assert np.abs(residual(phit, datat)).max() <= 1e-13


def test_transfer_constant_psi():
    data = flat_data(8, 0.0, 2 / 3, 1.0)
    phit, datat = conformal_transfer(np.ones((8, 8, 8)), data, np.full((8, 8, 8), 2.0))
    assert np.all(phit == 0.5)
    assert np.allclose(datat.sigma2, 2.0**-12 * 2 / 3, rtol=1e-14)
    assert np.abs(residual(phit, datat)).max() <= 1e-12


def test_transfer_residual_is_second_order():
    errs = []
    for n in (16, 32, 64):
        lat = Lattice(n)
        data = make_data(ConformalBackground.flat(lat, 0.0), sigma2=wavy_sigma2(lat), tau=1.0, yamabe="0")
        rep = solve_newton(data)
        psi = band_limited_psi(lat, [(0.1, (1, 0, 0), 0.0)])
        phit, datat = conformal_transfer(rep.phi, data, psi)
        assert datat.class_tag == data.class_tag
        errs.append(np.abs(residual(phit, datat)).max())
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert all(abs(p - 2) <= 0.2 for p in orders), orders


def test_transfer_needs_flat_zero_curvature():
    with pytest.raises(UnsupportedError):
        conformal_transfer(np.ones((8, 8, 8)), flat_data(8, -1.0, 1.0, 1.0), np.ones((8, 8, 8)))
