"""
Physical initial data from a solved conformal factor, and discrete
certificates for the vacuum Hamiltonian and momentum constraints.
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import PositivityError, PreconditionError, UnsupportedError
from .geometry import (
    SYM_COMPONENTS,
    _check_scalar,
    diff_centered,
    sym_to_full,
    wide_laplacian,
)


@dataclass(frozen=True, eq=False)
class InitialDataSet:
    gamma: np.ndarray = field(repr=False)
    K: np.ndarray = field(repr=False)
    tau: float
    phi: np.ndarray = field(repr=False)
    data: object = field(repr=False)

    @property
    def lattice(self):
        return self.data.lattice

    def provenance_hash(self):
        """SHA-256 of the generating inputs (phi, sigma2, tau, background)."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.phi).tobytes())
        h.update(np.ascontiguousarray(self.data.sigma2).tobytes())
        if self.data.sigma is not None:
            h.update(np.ascontiguousarray(self.data.sigma).tobytes())
        h.update(repr(self.tau).encode())
        h.update(repr(self.data.bg.describe()).encode())
        if not self.data.bg.is_flat:
            h.update(np.ascontiguousarray(self.data.bg.psi).tobytes())
        return h.hexdigest()


def _inverse(full):
    # (3, 3, ...) -> (3, 3, ...) via batched inverse
    return np.moveaxis(np.linalg.inv(np.moveaxis(full, (0, 1), (-2, -1))), (-2, -1), (0, 1))


def positive_definite(gamma):
    """Leading principal minors of every node's metric are positive."""
    g = sym_to_full(gamma)
    m1 = g[0, 0]
    m2 = g[0, 0] * g[1, 1] - g[0, 1] ** 2
    m3 = np.linalg.det(np.moveaxis(g, (0, 1), (-2, -1)))
    return bool(m1.min() > 0 and m2.min() > 0 and m3.min() > 0)


def build_initial_data(phi, data):
    """``gamma = phi^4 lambda`` and ``K = phi^-2 sigma + tau phi^4 lambda / 3``."""
    phi = _check_scalar(phi, data.lattice, "phi")
    if not phi.min() > 0:
        raise PositivityError("phi must be positive")
    if data.sigma is None and not data.class_tag.sigma_zero:
        raise PreconditionError("data carries sigma2 only; the tensor sigma is needed for K")
    lam = data.bg.metric()
    gamma = phi**4 * lam
    K = gamma * (data.tau / 3.0)
    if data.sigma is not None:
        K = K + data.sigma / phi**2
    if not positive_definite(gamma):
        raise PositivityError("reconstructed metric is not positive definite")
    return InitialDataSet(gamma, K, data.tau, phi, data)


def trace_K(ids):
    ginv = _inverse(sym_to_full(ids.gamma))
    return np.einsum("ij...,ij...->...", ginv, sym_to_full(ids.K))


def norm_K_squared(ids):
    ginv = _inverse(sym_to_full(ids.gamma))
    Kf = sym_to_full(ids.K)
    Kup = np.einsum("ik...,jl...,kl...->ij...", ginv, ginv, Kf)
    return np.einsum("ij...,ij...->...", Kup, Kf)


def _total_conformal_factor(ids):
    # gamma = phi_hat^4 * (flat metric with curvature R_base)
    bg = ids.data.bg
    if bg.is_flat:
        return ids.phi, bg.R_const
    return ids.phi * bg.psi, 0.0


def _check_conformally_flat(ids):
    g = ids.gamma
    scale = np.abs(g[:3]).max()
    if np.abs(g[3:]).max() > 1e-14 * scale or np.abs(g[0] - g[1]).max() > 1e-12 * scale \
            or np.abs(g[0] - g[2]).max() > 1e-12 * scale:
        raise UnsupportedError("Hamiltonian certificate needs a conformally flat metric")


def hamiltonian_residual(ids):
    """``R(gamma) + (tr K)^2 - |K|^2`` nodewise.

    ``R(gamma)`` comes from the conformal identity for ``gamma = phi_hat^4 delta``
    with ``phi_hat`` the total conformal factor.  Its Laplacian is the
    centered-difference composition, not the compact stencil the solvers
    use, so the certificate measures discretization error rather than
    echoing the solver residual.
    """
    _check_conformally_flat(ids)
    lattice = ids.lattice
    phat, R0 = _total_conformal_factor(ids)
    R_gamma = (R0 * phat - 8.0 * wide_laplacian(phat, lattice)) / phat**5
    trK = trace_K(ids)
    return R_gamma + trK**2 - norm_K_squared(ids)


def christoffel(gamma, lattice):
    """``Gamma^m_{kj}`` by centered differences, shape ``(3, 3, 3, n, n, n)``."""
    g = sym_to_full(gamma)
    ginv = _inverse(g)
    h = lattice.h
    # dg[k, i, j] = d_k g_ij
    dg = np.stack([sym_to_full(np.stack([diff_centered(gamma[p], k, h) for p in range(6)]))
                   for k in range(3)])
    # lowered: Gamma_{l k j} = (d_k g_lj + d_j g_lk - d_l g_kj) / 2
    low = 0.5 * (np.einsum("klj...->lkj...", dg) + np.einsum("jlk...->lkj...", dg)
                 - np.einsum("lkj...->lkj...", dg))
    return np.einsum("ml...,lkj...->mkj...", ginv, low)


def momentum_residual(ids):
    """``K^j_{i;j} - d_i tr K`` as a ``(3, n, n, n)`` field."""
    if not positive_definite(ids.gamma):
        raise UnsupportedError("metric is not positive definite")
    lattice = ids.lattice
    h = lattice.h
    g = sym_to_full(ids.gamma)
    ginv = _inverse(g)
    Kf = sym_to_full(ids.K)
    Gam = christoffel(ids.gamma, lattice)
    # dK[k, j, i] = d_k K_ji
    dK = np.stack([sym_to_full(np.stack([diff_centered(ids.K[p], k, h) for p in range(6)]))
                   for k in range(3)])
    # nabla_k K_ji = d_k K_ji - Gamma^l_kj K_li - Gamma^l_ki K_jl
    covK = (dK - np.einsum("lkj...,li...->kji...", Gam, Kf)
            - np.einsum("lki...,jl...->kji...", Gam, Kf))
    div = np.einsum("jk...,kji...->i...", ginv, covK)
    trK = np.einsum("ij...,ij...->...", ginv, Kf)
    grad_tr = np.stack([diff_centered(trK, i, h) for i in range(3)])
    return div - grad_tr


def metadata(ids, config_hash=None):
    return {
        "tau": ids.tau,
        "n": ids.lattice.n,
        "L": ids.lattice.L,
        "components": ["".join("xyz"[a] for a in c) for c in SYM_COMPONENTS],
        "provenance_sha256": ids.provenance_hash(),
        "config_sha256": config_hash,
        "data": ids.data.describe(),
    }

