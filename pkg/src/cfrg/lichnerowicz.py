"""
The constant-mean-curvature Lichnerowicz equation

    Delta phi = R phi / 8 - sigma2 phi**-7 / 8 + tau**2 phi**5 / 12

on a periodic lattice: residuals, constant barriers, two independent
solvers, the solvability table, and the exact scaling and conformal
transforms of the data.
"""

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import NamedTuple, Optional

import numpy as np

from ._linsolve import solve_shifted, solve_shifted_flat
from .errors import ConvergenceError, PositivityError, PreconditionError, UnsupportedError
from .geometry import (
    ConformalBackground,
    Lattice,
    _check_scalar,
    _check_tensor,
    integrate,
    laplacian,
    norm_squared,
    scalar_curvature,
)
from .yamabe import DEFAULT_ZERO_TOL, yamabe_sign

SIGMA_ZERO_THRESHOLD = 1e-14
FLAT_TOL = 1e-9
CONFORMAL_TOL = 1e-8


class ClassTag(NamedTuple):
    yamabe: str       # "+", "0" or "-"
    sigma_zero: bool  # sigma2 == 0 identically
    tau_zero: bool

    def label(self):
        s = "sigma2=0" if self.sigma_zero else "sigma2!=0"
        t = "tau=0" if self.tau_zero else "tau!=0"
        return f"Y{self.yamabe}/{s}/{t}"


TRIVIAL_CELL = ClassTag("0", True, True)


def term_signs(tag):
    """Signs of the terms of ``F`` present for a class, as ``{name: "+"/"-"}``.

    For a constant-``R`` background the curvature term has the Yamabe sign.
    """
    terms = {}
    if tag.yamabe != "0":
        terms["R phi/8"] = tag.yamabe
    if not tag.sigma_zero:
        terms["-sigma2 phi^-7/8"] = "-"
    if not tag.tau_zero:
        terms["tau^2 phi^5/12"] = "+"
    return terms


def is_solvable(tag):
    """Unique positive solution exists: the terms of ``F`` take both signs."""
    return len(set(term_signs(tag).values())) == 2


@dataclass(frozen=True, eq=False)
class ConformalData:
    """Free data ``(lambda, sigma, tau)`` with cached ``|sigma|^2`` and class tag."""

    bg: ConformalBackground
    sigma: Optional[np.ndarray] = field(repr=False)
    sigma2: np.ndarray = field(repr=False)
    tau: float
    class_tag: ClassTag

    @property
    def lattice(self):
        return self.bg.lattice

    @property
    def tau2(self):
        return self.tau**2

    def describe(self):
        return {
            "background": self.bg.describe(),
            "tau": self.tau,
            "sigma2_min": float(self.sigma2.min()),
            "sigma2_max": float(self.sigma2.max()),
            "class": self.class_tag.label(),
        }


def _sigma_is_zero(sigma2):
    return float(np.max(sigma2)) < SIGMA_ZERO_THRESHOLD


def make_data(bg, sigma=None, tau=0.0, sigma2=None, yamabe=None, yamabe_tol=DEFAULT_ZERO_TOL):
    """Assemble :class:`ConformalData`.

    Either pass the tensor ``sigma`` or, for norm-only experiments, the scalar
    ``sigma2`` directly.  ``yamabe`` may be a known sign (``"+"``, ``"0"``,
    ``"-"``); otherwise it is computed with :func:`yamabe_sign`.
    """
    lattice = bg.lattice
    if sigma is not None:
        if sigma2 is not None:
            raise PreconditionError("pass sigma or sigma2, not both")
        sigma = _check_tensor(sigma, lattice, "sigma").copy()
        sigma.flags.writeable = False
        sigma2 = norm_squared(sigma, bg)
    elif sigma2 is None:
        sigma2 = lattice.zeros()
    else:
        sigma2 = np.array(np.broadcast_to(np.asarray(sigma2, dtype=float), lattice.shape))
        if sigma2.min() < 0:
            raise PreconditionError("sigma2 must be non-negative")
    if not np.all(np.isfinite(sigma2)):
        raise PreconditionError("sigma2 has non-finite values")
    sigma2.flags.writeable = False
    tau = float(tau)
    if not math.isfinite(tau):
        raise PreconditionError("tau must be finite")
    if yamabe is None:
        yamabe = yamabe_sign(bg, tol=yamabe_tol).sign
    elif yamabe not in ("+", "0", "-"):
        raise PreconditionError(f"unknown Yamabe sign {yamabe!r}")
    tag = ClassTag(yamabe, _sigma_is_zero(sigma2), tau == 0.0)
    return ConformalData(bg, sigma, sigma2, tau, tag)


def flat_data(n, R, sigma2=0.0, tau2=0.0, L=1.0):
    """Shortcut for flat data with prescribed ``R`` and scalar ``sigma2``, ``tau**2``."""
    bg = ConformalBackground.flat(Lattice(n, L), R)
    sign = "+" if R > 0 else "-" if R < 0 else "0"
    return make_data(bg, sigma2=sigma2, tau=math.sqrt(tau2), yamabe=sign)


# -- the equation -------------------------------------------------------------

def nonlinearity(phi, data, R=None):
    """Right-hand side ``F(x, phi)`` of the equation."""
    if R is None:
        R = scalar_curvature(data.bg)
    return R * phi / 8.0 - data.sigma2 * phi**-7 / 8.0 + data.tau2 * phi**5 / 12.0


def residual(phi, data):
    """``Delta phi - F(phi)`` nodewise."""
    phi = _check_scalar(phi, data.lattice, "phi")
    if not phi.min() > 0:
        raise PositivityError(f"phi must be positive (min = {phi.min():.3g})")
    return laplacian(phi, data.bg) - nonlinearity(phi, data)


def constant_root(R, s, t2):
    """Positive constant ``u`` with ``t2 u^12 / 12 + R u^8 / 8 - s / 8 = 0``.

    In ``w = u**4`` this is the cubic ``t2 w^3 / 12 + R w^2 / 8 - s / 8``.  Closed
    forms are used when a coefficient vanishes; otherwise bisection.
    """
    R, s, t2 = float(R), float(s), float(t2)
    if s < 0 or t2 < 0:
        raise PreconditionError("s and t2 must be non-negative")
    if s > 0 and t2 > 0:
        pass
    elif s > 0 and t2 == 0:
        if not R > 0:
            raise PreconditionError("no positive root: t2 = 0 needs R > 0")
        return (s / R) ** 0.125
    elif s == 0 and t2 > 0:
        if not R < 0:
            raise PreconditionError("no positive root: s = 0 needs R < 0")
        return (-3.0 * R / (2.0 * t2)) ** 0.25
    else:
        raise PreconditionError("no positive root: s = t2 = 0")
    if R == 0:
        return (1.5 * s / t2) ** (1.0 / 12.0)

    def g(u):
        w = u**4
        return t2 * w**3 / 12.0 + R * w**2 / 8.0 - s / 8.0

    # in w = u**4: g < 0 once both positive terms are below s/16, and g > 0
    # once t2 w^3 / 24 dominates both |R| w^2 / 8 and s / 8
    w_hi = max(3.0 * abs(R) / t2, (3.0 * s / t2) ** (1 / 3))
    w_lo = (0.75 * s / t2) ** (1 / 3)
    if R > 0:
        w_lo = min(w_lo, math.sqrt(0.5 * s / R))
    lo, hi = 0.5 * w_lo**0.25, 2.0 * w_hi**0.25
    if g(lo) >= 0 or g(hi) <= 0:
        raise PreconditionError("root is not bracketed")
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if g(mid) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return 0.5 * (lo + hi)


def _require_solvable(data):
    tag = data.class_tag
    if not is_solvable(tag):
        raise PreconditionError(f"class {tag.label()} has no unique solution to bracket")


def sub_super_bounds(data):
    """Constant sub- and supersolution ``(phi_minus, phi_plus)``.

    The subsolution uses the largest ``R`` and smallest ``sigma2``, the
    supersolution the opposite extremes, so that the sign of ``F`` at each
    constant holds at every node.
    """
    _require_solvable(data)
    R = scalar_curvature(data.bg)
    t2 = data.tau2
    smin, smax = float(data.sigma2.min()), float(data.sigma2.max())
    if data.class_tag.sigma_zero:
        smin = smax = 0.0
    try:
        lo = constant_root(R.max(), smin, t2)
        hi = constant_root(R.min(), smax, t2)
    except PreconditionError as exc:
        raise PreconditionError(f"degenerate bracket: {exc}") from None
    if not 0 < lo <= hi * (1 + 1e-12):
        raise PreconditionError(f"degenerate bracket ({lo}, {hi})")
    hi = max(lo, hi)
    # verify the barrier property at the nodes
    scale_lo = np.abs(R).max() * lo + smax * lo**-7 + t2 * lo**5 + 1.0
    scale_hi = np.abs(R).max() * hi + smax * hi**-7 + t2 * hi**5 + 1.0
    if nonlinearity(lo, data, R).max() > 1e-12 * scale_lo:
        raise PreconditionError("lower constant is not a subsolution")
    if nonlinearity(hi, data, R).min() < -1e-12 * scale_hi:
        raise PreconditionError("upper constant is not a supersolution")
    return lo, hi


def _try_bounds(data):
    try:
        return sub_super_bounds(data)
    except PreconditionError:
        return None


# -- solvers ------------------------------------------------------------------

class Method(str, Enum):
    MONOTONE = "monotone"
    NEWTON = "newton"


@dataclass(frozen=True)
class SolveReport:
    phi: np.ndarray = field(repr=False)
    residual_max: float
    residual_l2: float
    iterations: int
    method: Method
    converged: bool
    bracket: Optional[tuple]
    tol: float
    krylov_iterations: int = 0

    def to_json(self, field_ref=None):
        out = {
            "method": self.method.value,
            "converged": self.converged,
            "iterations": self.iterations,
            "krylov_iterations": self.krylov_iterations,
            "tol": self.tol,
            "residual_max": self.residual_max,
            "residual_l2": self.residual_l2,
            "phi_min": float(self.phi.min()),
            "phi_max": float(self.phi.max()),
            "bracket": list(self.bracket) if self.bracket else None,
        }
        if field_ref is not None:
            out["phi_field"] = str(field_ref)
        return out


def default_tol(data):
    return FLAT_TOL if data.bg.is_flat else CONFORMAL_TOL


def _report(phi, data, its, method, converged, bracket, tol, kits=0):
    r = residual(phi, data)
    vol = integrate(np.ones_like(phi), data.bg)
    return SolveReport(
        phi=phi,
        residual_max=float(np.abs(r).max()),
        residual_l2=float(np.sqrt(integrate(r**2, data.bg) / vol)),
        iterations=its,
        method=method,
        converged=converged,
        bracket=bracket,
        tol=tol,
        krylov_iterations=kits,
    )


def monotone_shift(data, bracket):
    """Upper bound of ``dF/dphi`` over the bracket box."""
    lo, hi = bracket
    R = scalar_curvature(data.bg)
    return (max(float(R.max()), 0.0) / 8.0
            + 7.0 / 8.0 * float(data.sigma2.max()) * lo**-8
            + 5.0 / 12.0 * data.tau2 * hi**4)


def solve_monotone(data, tol=None, max_iter=20000, callback=None):
    """Sub/supersolution iteration started from the supersolution.

    Each step solves ``(Delta - mu) phi_new = F(phi) - mu phi`` with ``mu`` an
    upper bound for ``dF/dphi`` on the bracket, so the iterates decrease
    monotonically and stay between the barriers.  ``callback(k, phi)`` is
    called after every step.
    """
    tol = default_tol(data) if tol is None else tol
    bracket = sub_super_bounds(data)
    lo, hi = bracket
    mu = monotone_shift(data, bracket)
    R = scalar_curvature(data.bg)
    slack = 10.0 * tol
    phi = data.lattice.constant(hi)
    kits = 0
    if callback is not None:
        callback(0, phi)
    for k in range(max_iter + 1):
        r = laplacian(phi, data.bg) - nonlinearity(phi, data, R)
        if np.abs(r).max() <= tol:
            return _report(phi, data, k, Method.MONOTONE, True, bracket, tol, kits)
        if k == max_iter:
            break
        rhs = nonlinearity(phi, data, R) - mu * phi
        if data.bg.is_flat:
            new = solve_shifted_flat(rhs, data.lattice, mu)
        else:
            new, its = solve_shifted(rhs, data.bg, mu, atol_rms=1e-3 * tol)
            kits += its
        if new.min() < lo - slack or new.max() > hi + slack:
            raise ConvergenceError("monotone iterate left the barrier bracket (internal error)")
        phi = new
        if callback is not None:
            callback(k + 1, phi)
    report = _report(phi, data, max_iter, Method.MONOTONE, False, bracket, tol, kits)
    raise ConvergenceError(f"monotone iteration: no convergence in {max_iter} steps", report)


def default_initial_guess(data):
    """Constant root at the field means, or 1 when that is not admissible."""
    R = float(np.mean(scalar_curvature(data.bg)))
    s = 0.0 if data.class_tag.sigma_zero else float(np.mean(data.sigma2))
    try:
        return data.lattice.constant(constant_root(R, s, data.tau2))
    except PreconditionError:
        return data.lattice.constant(1.0)


def solve_newton(data, tol=None, max_iter=60, phi0=None, max_halvings=30, restarts=0, seed=0):
    """Damped Newton on the residual with Krylov inner solves.

    The step is halved until the max-norm residual decreases and the iterate
    stays positive.  A converged state is accepted only if it also lies
    between the constant barriers (when those exist); this rejects the
    spurious near-zero states the residual cannot tell apart from solutions.
    With ``restarts > 0`` a failed solve is retried from randomly rescaled
    constant guesses drawn from ``numpy.random.default_rng(seed)``.
    """
    tol = default_tol(data) if tol is None else tol
    try:
        return _newton(data, tol, max_iter, phi0, max_halvings)
    except ConvergenceError:
        if restarts <= 0:
            raise
    rng = np.random.default_rng(seed)
    base = default_initial_guess(data)
    err = None
    for _ in range(restarts):
        guess = base * math.exp(0.5 * rng.standard_normal())
        try:
            return _newton(data, tol, max_iter, guess, max_halvings)
        except ConvergenceError as exc:
            err = exc
    raise err


def _newton(data, tol, max_iter, phi0, max_halvings):
    tag = data.class_tag
    if tag != TRIVIAL_CELL and not is_solvable(tag):
        raise PreconditionError(f"class {tag.label()} has no positive solution; refusing to iterate")
    bracket = _try_bounds(data)
    if phi0 is None:
        phi = default_initial_guess(data)
    else:
        phi = _check_scalar(np.broadcast_to(phi0, data.lattice.shape), data.lattice, "phi0").copy()
        if not phi.min() > 0:
            raise PositivityError("initial guess must be positive")
    R = scalar_curvature(data.bg)
    s2, t2 = data.sigma2, data.tau2

    def res(p):
        return laplacian(p, data.bg) - nonlinearity(p, data, R)

    r = res(phi)
    rnorm = np.abs(r).max()
    kits = 0
    for k in range(max_iter + 1):
        if rnorm <= tol:
            break
        if k == max_iter:
            report = _report(phi, data, k, Method.NEWTON, False, bracket, tol, kits)
            raise ConvergenceError(f"Newton: no convergence in {max_iter} steps", report)
        q = R / 8.0 + 7.0 / 8.0 * s2 * phi**-8 + 5.0 / 12.0 * t2 * phi**4
        if data.bg.is_flat and np.ptp(q) == 0:
            q = float(q.flat[0])
        step, its = solve_shifted(-r, data.bg, q, atol_rms=1e-2 * tol)
        kits += its
        alpha, accepted, positive_seen = 1.0, False, False
        for _ in range(max_halvings + 1):
            trial = phi + alpha * step
            if trial.min() > 0:
                positive_seen = True
                r_trial = res(trial)
                n_trial = np.abs(r_trial).max()
                if n_trial < rnorm:
                    phi, r, rnorm, accepted = trial, r_trial, n_trial, True
                    break
            alpha *= 0.5
        if not accepted:
            report = _report(phi, data, k, Method.NEWTON, False, bracket, tol, kits)
            if not positive_seen:
                raise PositivityError(f"Newton: every damped step leaves phi > 0 (iteration {k})")
            raise ConvergenceError(f"Newton: line search stagnated at residual {rnorm:.3e}", report)
    if bracket is not None:
        slack = 10.0 * tol
        lo, hi = bracket
        if phi.min() < lo - slack or phi.max() > hi + slack:
            report = _report(phi, data, k, Method.NEWTON, False, bracket, tol, kits)
            raise ConvergenceError(
                f"Newton reached residual {rnorm:.2e} at a state outside the barriers "
                f"[{lo:.6g}, {hi:.6g}] (min phi = {phi.min():.3g}); not a solution", report)
    return _report(phi, data, k, Method.NEWTON, True, bracket, tol, kits)


# -- solvability table ----------------------------------------------------------

class Status(str, Enum):
    SOLVABLE = "SOLVABLE"
    OBSTRUCTED = "OBSTRUCTED"
    TRIVIAL_FAMILY = "TRIVIAL_FAMILY"


class Obstruction(NamedTuple):
    status: Status
    reason: str


def obstruction_check(data):
    """Decide solvability from the class tag (constant-``R`` backgrounds only).

    Integrating the equation over the torus kills the Laplacian, so the
    integral of ``F(phi)`` must vanish; when every term present has the same
    strict sign no positive ``phi`` can do that.
    """
    if not data.bg.is_flat:
        raise UnsupportedError("obstruction check needs a constant-R (flat) background")
    tag = data.class_tag
    terms = term_signs(tag)
    if not terms:
        return Obstruction(Status.TRIVIAL_FAMILY, "R = 0, sigma = 0, tau = 0: every positive constant solves")
    signs = set(terms.values())
    if len(signs) == 2:
        return Obstruction(Status.SOLVABLE, f"class {tag.label()}: terms of both signs, unique positive solution")
    word = "positive" if signs == {"+"} else "negative"
    return Obstruction(
        Status.OBSTRUCTED,
        f"integral of Delta phi vanishes but the remaining terms ({', '.join(terms)}) are all {word}",
    )


# -- transforms -------------------------------------------------------------------

def scaling_transform(phi, data, c):
    """Map ``(phi, sigma, tau)`` to ``(c phi, c^4 sigma, tau / c^2)``.

    Residuals transform by ``residual(c phi, data_c) = c * residual(phi, data)``.
    """
    c = float(c)
    if not c > 0:
        raise PreconditionError("scale factor must be positive")
    sigma = None if data.sigma is None else data.sigma * c**4
    sigma2 = None if sigma is not None else data.sigma2 * c**8
    new = make_data(data.bg, sigma=sigma, sigma2=sigma2, tau=data.tau / c**2, yamabe=data.class_tag.yamabe)
    return c * np.asarray(phi), new


def conformal_transfer(phi, data, psi):
    """Move a solution on flat data to the metric ``psi^4 delta``.

    Returns ``(phi / psi, data~)`` where ``data~`` has the conformally flat
    background, ``sigma~ = psi^-2 sigma`` and the same ``tau``.  The class
    tag is carried over: the Yamabe class is a conformal invariant.
    """
    if not data.bg.is_flat or data.bg.R_const != 0.0:
        raise UnsupportedError("conformal transfer starts from the flat background with R = 0")
    psi = _check_scalar(psi, data.lattice, "psi")
    if not psi.min() > 0:
        raise PositivityError("psi must be positive")
    bg = ConformalBackground.conformally_flat(data.lattice, psi)
    if data.sigma is not None:
        sigma = data.sigma / psi**2
        new = make_data(bg, sigma=sigma, tau=data.tau, yamabe=data.class_tag.yamabe)
    else:
        new = make_data(bg, sigma2=data.sigma2 / psi**12, tau=data.tau, yamabe=data.class_tag.yamabe)
    new = replace(new, class_tag=data.class_tag)
    return np.asarray(phi) / psi, new
