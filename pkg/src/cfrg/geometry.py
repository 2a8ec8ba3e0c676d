"""
Periodic uniform-grid geometry on the 3-torus.

Scalar fields are plain ``ndarray`` objects of shape ``(n, n, n)`` indexed
``f[i1, i2, i3]`` so that axis ``a`` is the coordinate ``x^(a+1)``.  Symmetric
2-tensor fields are ``(6, n, n, n)`` arrays holding the components in the
order given by ``SYM_COMPONENTS``; only the six independent entries are ever
stored.

A background metric is either flat with a prescribed constant scalar
curvature (the coefficient-level surrogate used to reach all three Yamabe
signs on a torus) or conformally flat, ``psi**4 * delta``.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import LatticeMismatchError, PositivityError, PreconditionError, UnsupportedError

SYM_COMPONENTS = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))

# (i, j) -> position in the 6-vector
_SYM_INDEX = np.empty((3, 3), dtype=int)
for _p, (_i, _j) in enumerate(SYM_COMPONENTS):
    _SYM_INDEX[_i, _j] = _SYM_INDEX[_j, _i] = _p


@dataclass(frozen=True)
class Lattice:
    """Uniform periodic grid with ``n`` nodes per axis and period ``L``."""

    n: int
    L: float = 1.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 8:
            raise PreconditionError(f"lattice needs an integer n >= 8, got {self.n!r}")
        if not (np.isfinite(self.L) and self.L > 0):
            raise PreconditionError(f"period L must be positive and finite, got {self.L!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "L", float(self.L))

    @property
    def h(self):
        return self.L / self.n

    @property
    def shape(self):
        return (self.n, self.n, self.n)

    def axis(self):
        """Node coordinates along one axis, ``i * L / n``."""
        return np.arange(self.n) * self.L / self.n

    def coords(self):
        """Return ``(x1, x2, x3)`` node coordinate arrays, each of shape ``(n, n, n)``."""
        x = self.axis()
        return np.meshgrid(x, x, x, indexing="ij")

    def constant(self, value):
        return np.full(self.shape, float(value))

    def zeros(self):
        return np.zeros(self.shape)


class Mode(str, Enum):
    FLAT_PRESCRIBED_R = "flat"
    CONFORMALLY_FLAT = "conformally_flat"


@dataclass(frozen=True, eq=False)
class ConformalBackground:
    """The metric ``lambda`` and the data needed to evaluate its curvature.

    Use :meth:`flat` or :meth:`conformally_flat` rather than the constructor.
    """

    lattice: Lattice
    mode: Mode
    R_const: float = 0.0
    psi: np.ndarray = field(default=None, repr=False)

    @classmethod
    def flat(cls, lattice, R=0.0):
        R = float(R)
        if not np.isfinite(R):
            raise PreconditionError("R must be finite")
        return cls(lattice, Mode.FLAT_PRESCRIBED_R, R_const=R)

    @classmethod
    def conformally_flat(cls, lattice, psi):
        psi = np.array(psi, dtype=float)
        if psi.shape != lattice.shape:
            raise LatticeMismatchError(f"psi has shape {psi.shape}, lattice is {lattice.shape}")
        if not np.all(np.isfinite(psi)):
            raise PreconditionError("psi has non-finite values")
        if psi.min() <= 0:
            raise PositivityError(f"conformal factor must be positive (min psi = {psi.min():.3g})")
        psi.flags.writeable = False
        return cls(lattice, Mode.CONFORMALLY_FLAT, psi=psi)

    @property
    def is_flat(self):
        return self.mode is Mode.FLAT_PRESCRIBED_R

    def volume_density(self):
        """``sqrt(det lambda)`` per node (scalar 1.0 in flat mode)."""
        return 1.0 if self.is_flat else self.psi**6

    def metric(self):
        """The metric ``lambda_ij`` as a symmetric tensor field."""
        n = self.lattice.n
        out = np.zeros((6, n, n, n))
        diag = 1.0 if self.is_flat else self.psi**4
        out[:3] = diag
        return out

    def describe(self):
        if self.is_flat:
            return {"mode": self.mode.value, "R": self.R_const}
        return {"mode": self.mode.value, "psi_min": float(self.psi.min()), "psi_max": float(self.psi.max())}


def band_limited_psi(lattice, terms, base=1.0):
    """Build ``base + sum a * cos(2 pi m . x / L + phase)``.

    ``terms`` is an iterable of ``(amplitude, mode_numbers, phase)``.
    """
    x = lattice.coords()
    psi = np.full(lattice.shape, float(base))
    for amp, m, phase in terms:
        arg = sum(2 * np.pi * int(mi) * xi / lattice.L for mi, xi in zip(m, x))
        psi = psi + amp * np.cos(arg + phase)
    return psi


# -- checks -----------------------------------------------------------------

def _check_scalar(f, lattice, name="field"):
    f = np.asarray(f, dtype=float)
    if f.shape != lattice.shape:
        raise LatticeMismatchError(f"{name} has shape {f.shape}, lattice is {lattice.shape}")
    return f


def _check_finite(f, name="field"):
    if not np.all(np.isfinite(f)):
        raise PreconditionError(f"{name} has non-finite values")


def _check_tensor(t, lattice, name="tensor"):
    t = np.asarray(t, dtype=float)
    if t.shape != (6,) + lattice.shape:
        raise LatticeMismatchError(f"{name} has shape {t.shape}, expected {(6,) + lattice.shape}")
    return t


# -- symmetric tensor helpers ----------------------------------------------

def sym_to_full(t):
    """Expand ``(6, ...)`` storage to a ``(3, 3, ...)`` array (copy)."""
    t = np.asarray(t)
    return t[_SYM_INDEX]


def full_to_sym(a):
    """Pack a ``(3, 3, ...)`` array into ``(6, ...)``, using the upper triangle."""
    a = np.asarray(a)
    return np.stack([a[i, j] for i, j in SYM_COMPONENTS])


def as_sym6(value):
    """Accept either six components or a symmetric 3x3 and return six components."""
    a = np.asarray(value, dtype=float)
    if a.shape == (6,):
        return a.copy()
    if a.shape == (3, 3):
        if not np.allclose(a, a.T, rtol=0, atol=1e-14 * max(1.0, np.abs(a).max())):
            raise PreconditionError("tensor is not symmetric")
        return np.array([a[i, j] for i, j in SYM_COMPONENTS])
    raise PreconditionError(f"expected 6 components or a 3x3 matrix, got shape {a.shape}")


def sym_trace_flat(t):
    return t[0] + t[1] + t[2]


# -- difference operators ---------------------------------------------------

def diff_centered(f, axis, h):
    """Second-order centered first derivative along ``axis`` (periodic)."""
    return (np.roll(f, -1, axis) - np.roll(f, 1, axis)) / (2 * h)


def gradient(f, lattice):
    """Centered-difference gradient, shape ``(3, n, n, n)``."""
    return np.stack([diff_centered(f, a, lattice.h) for a in range(3)])


def flat_laplacian(f, lattice):
    """The 7-point periodic stencil."""
    h2 = lattice.h**2
    out = -6.0 * f
    for a in range(3):
        out = out + np.roll(f, 1, a) + np.roll(f, -1, a)
    return out / h2


def wide_laplacian(f, lattice):
    """Composition of centered first differences (spacing ``2h``).

    Independent of the compact stencil; used only for certificates.
    """
    return sum(diff_centered(diff_centered(f, a, lattice.h), a, lattice.h) for a in range(3))


def _face_weights(psi):
    # psi**2 averaged onto the faces between node i and i+1, per axis
    p2 = psi**2
    return [0.5 * (p2 + np.roll(p2, -1, a)) for a in range(3)]


def _weighted_div_grad(f, weights, h):
    # sum_a D-_a (w_a D+_a f): symmetric in the unweighted inner product
    out = np.zeros_like(f)
    for a, w in enumerate(weights):
        flux = w * (np.roll(f, -1, a) - f)
        out += flux - np.roll(flux, 1, a)
    return out / h**2


def laplacian(f, bg):
    """Discrete Laplace-Beltrami operator of ``bg`` applied to ``f``.

    In conformally flat mode ``Delta f = psi**-6 div(psi**2 grad f)`` written in
    flux form with ``psi**2`` averaged onto cell faces.  That makes the
    operator exactly self-adjoint for the ``psi**6`` volume weight and reduces
    it to the flat stencil when ``psi == 1``.
    """
    f = _check_scalar(f, bg.lattice)
    _check_finite(f)
    if bg.is_flat:
        return flat_laplacian(f, bg.lattice)
    return _weighted_div_grad(f, _face_weights(bg.psi), bg.lattice.h) / bg.psi**6


def weighted_laplacian(f, bg):
    """``sqrt(det lambda) * Delta f``; a symmetric matrix action in both modes."""
    if bg.is_flat:
        return flat_laplacian(f, bg.lattice)
    return _weighted_div_grad(f, _face_weights(bg.psi), bg.lattice.h)


def flat_stencil_symbol(lattice):
    """Eigenvalues of the flat stencil on the ``rfftn`` frequency grid."""
    n, h = lattice.n, lattice.h
    full = -(4.0 / h**2) * np.sin(np.pi * np.fft.fftfreq(n)) ** 2
    half = -(4.0 / h**2) * np.sin(np.pi * np.fft.rfftfreq(n)) ** 2
    return full[:, None, None] + full[None, :, None] + half[None, None, :]


def integrate(f, bg):
    """Riemann sum of ``f`` against the volume form of ``bg``."""
    f = _check_scalar(f, bg.lattice)
    return float(np.sum(f * bg.volume_density()) * bg.lattice.h**3)


def scalar_curvature(bg):
    """Scalar curvature of the background as a field.

    Flat mode returns the prescribed constant; conformally flat mode uses
    ``R = -8 psi**-5 Delta_flat psi``.
    """
    if bg.is_flat:
        return bg.lattice.constant(bg.R_const)
    if bg.psi.min() <= 0:
        raise PositivityError("psi must be positive")
    return -8.0 * flat_laplacian(bg.psi, bg.lattice) / bg.psi**5


# -- transverse-traceless tensors -------------------------------------------

def make_tt_field(lattice, const_part, wave_modes=()):
    """Build ``sigma_ij = C_ij + sum eps_ij cos(k . x + phase)``.

    Parameters
    ----------
    lattice : Lattice
    const_part : array_like
        Trace-free constant part, six components or a symmetric 3x3.
    wave_modes : iterable of (k, eps, phase)
        ``k`` a wavevector whose components are integer multiples of
        ``2 pi / L``; ``eps`` a symmetric, trace-free amplitude with
        ``k_i eps_ij = 0``.

    Returns
    -------
    ndarray, shape (6, n, n, n)
    """
    c = as_sym6(const_part)
    scale = max(1.0, np.abs(c).max())
    if abs(c[0] + c[1] + c[2]) > 1e-12 * scale:
        raise PreconditionError("constant part is not trace-free")
    n = lattice.n
    out = np.empty((6, n, n, n))
    out[:] = c[:, None, None, None]
    x = lattice.coords()
    for k, eps, phase in wave_modes:
        k = np.asarray(k, dtype=float)
        if k.shape != (3,):
            raise PreconditionError("wavevector needs three components")
        m = k * lattice.L / (2 * np.pi)
        if not np.any(k != 0):
            raise PreconditionError("zero wavevector")
        if np.max(np.abs(m - np.round(m))) > 1e-9:
            raise PreconditionError(f"wavevector {k} is not a multiple of 2 pi / L")
        e6 = as_sym6(eps)
        e = sym_to_full(e6)
        escale = max(1e-300, np.abs(e).max())
        if abs(np.trace(e)) > 1e-12 * escale:
            raise PreconditionError("mode amplitude is not trace-free")
        if np.abs(k @ e).max() > 1e-12 * escale * np.abs(k).max():
            raise PreconditionError("mode amplitude is not transverse to its wavevector")
        # build the phase from integer mode numbers so the field is exactly periodic
        arg = sum(2 * np.pi * np.round(mi) * xi / lattice.L for mi, xi in zip(m, x)) + phase
        out += e6[:, None, None, None] * np.cos(arg)[None]
    return out


def tt_check(sigma, bg):
    """Return ``(max |div sigma|, max |tr sigma|)`` against the flat metric."""
    if not bg.is_flat:
        raise UnsupportedError("TT check is defined against the flat metric only")
    sigma = _check_tensor(sigma, bg.lattice)
    full = sym_to_full(sigma)
    h = bg.lattice.h
    div = np.stack([sum(diff_centered(full[i, j], i, h) for i in range(3)) for j in range(3)])
    tr = sym_trace_flat(sigma)
    return float(np.abs(div).max()), float(np.abs(tr).max())


def norm_squared(sigma, bg):
    """``lambda^ik lambda^jl sigma_ij sigma_kl`` per node."""
    sigma = _check_tensor(sigma, bg.lattice)
    s2 = np.sum(sigma[:3] ** 2, axis=0) + 2.0 * np.sum(sigma[3:] ** 2, axis=0)
    if bg.is_flat:
        return s2
    return s2 / bg.psi**8
