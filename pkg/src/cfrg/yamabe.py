"""Yamabe quotient and Yamabe-sign classification of a background."""

from dataclasses import dataclass, field

import numpy as np

from ._linsolve import solve_shifted
from .errors import ConvergenceError, PositivityError, PreconditionError
from .geometry import _check_scalar, gradient, integrate, laplacian, scalar_curvature

DEFAULT_ZERO_TOL = 1e-6


@dataclass(frozen=True)
class YamabeReport:
    sign: str
    lambda1: float
    minimizer: np.ndarray = field(repr=False)
    quotient_at_minimizer: float
    iterations: int

    @property
    def sign_value(self):
        return {"+": 1, "0": 0, "-": -1}[self.sign]

    def to_json(self):
        return {
            "sign": self.sign,
            "lambda1": self.lambda1,
            "quotient": self.quotient_at_minimizer,
            "iterations": self.iterations,
        }


def rayleigh_quotient(psi, bg):
    """Yamabe functional of the test function ``psi`` in three dimensions.

    ``int(|grad psi|^2 + R psi^2 / 8) / (int psi^6)^(1/3)``, all measured in
    the background metric; gradients by centered differences.
    """
    psi = _check_scalar(psi, bg.lattice, "psi")
    if psi.min() <= 0:
        raise PositivityError("test function must be positive")
    grad2 = np.sum(gradient(psi, bg.lattice) ** 2, axis=0)
    if not bg.is_flat:
        grad2 = grad2 / bg.psi**4
    R = scalar_curvature(bg)
    num = integrate(grad2 + R * psi**2 / 8.0, bg)
    den = integrate(psi**6, bg)
    if den <= 0:
        raise PreconditionError("zero denominator in Yamabe quotient")
    return num / den ** (1.0 / 3.0)


def _winner(u, v, w):
    return float(np.sum(u * v * w))


def conformal_laplacian_eigen(bg, max_iter=200, rtol=1e-13):
    """Smallest eigenpair of ``-Delta + R/8`` by shifted inverse iteration.

    Returns ``(lambda1, eigenfunction, iterations)``; the eigenfunction is
    scaled to unit max and made positive.
    """
    R = scalar_curvature(bg)
    shift = max(0.0, -R.min() / 8.0) + 1.0
    q = R / 8.0 + shift
    if bg.is_flat:
        q = float(q.flat[0])
    w = bg.volume_density() * np.ones(bg.lattice.shape)

    def apply(u):
        return -laplacian(u, bg) + R * u / 8.0

    x = bg.lattice.constant(1.0)
    lam_old = np.inf
    for it in range(1, max_iter + 1):
        y, _ = solve_shifted(-x, bg, q, atol_rms=1e-14)
        x = y / np.sqrt(_winner(y, y, w) / w.size)
        Ax = apply(x)
        lam = _winner(x, Ax, w) / _winner(x, x, w)
        res = np.sqrt(_winner(Ax - lam * x, Ax - lam * x, w) / _winner(x, x, w))
        if abs(lam - lam_old) <= rtol * max(1.0, abs(lam)) and res <= 1e-9:
            break
        lam_old = lam
    else:
        raise ConvergenceError(f"inverse iteration did not converge in {max_iter} steps")
    if x.sum() < 0:
        x = -x
    x = x / x.max()
    return float(lam), x, it


def yamabe_sign(bg, tol=DEFAULT_ZERO_TOL, max_iter=200):
    """Classify ``bg`` as Yamabe positive, zero or negative.

    The sign is read off the principal eigenvalue of the conformal Laplacian,
    with ``|lambda1| <= tol`` counted as zero.
    """
    lam, phi, its = conformal_laplacian_eigen(bg, max_iter=max_iter)
    if phi.min() <= 0:
        raise ConvergenceError("principal eigenfunction is not positive")
    if lam > tol:
        sign = "+"
    elif lam < -tol:
        sign = "-"
    else:
        sign = "0"
    return YamabeReport(sign, lam, phi, rayleigh_quotient(phi, bg), its)
