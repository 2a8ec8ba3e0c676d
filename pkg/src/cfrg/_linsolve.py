"""Linear solves for ``(Delta - q) u = f`` on a background."""

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg, gmres

from .errors import ConvergenceError
from .geometry import flat_stencil_symbol, weighted_laplacian


def solve_shifted_flat(rhs, lattice, mu):
    """Solve ``(Delta_flat - mu) u = rhs`` exactly by FFT diagonalisation.

    ``mu`` must be positive, or zero with a mean-free right side (the mean of
    the solution is then fixed to zero).
    """
    denom = flat_stencil_symbol(lattice) - mu
    rhat = np.fft.rfftn(rhs)
    if mu == 0:
        denom[0, 0, 0] = 1.0
        rhat[0, 0, 0] = 0.0
    return np.fft.irfftn(rhat / denom, s=lattice.shape, axes=(0, 1, 2))


def solve_shifted(rhs, bg, q, atol_rms=1e-12, maxiter=2000):
    """Solve ``(Delta_lambda - q) u = rhs`` for a scalar or field ``q``.

    Flat backgrounds with constant ``q`` go straight to the FFT.  Otherwise the
    system is multiplied by the volume density (which makes it symmetric),
    then handed to preconditioned CG when ``q > 0`` everywhere and to GMRES
    when it is not.  The preconditioner is the FFT inverse of a
    constant-coefficient version of the operator.

    Returns ``(u, krylov_iterations)``.
    """
    lattice = bg.lattice
    if bg.is_flat and np.ndim(q) == 0:
        return solve_shifted_flat(rhs, lattice, float(q)), 0

    q = np.broadcast_to(np.asarray(q, dtype=float), lattice.shape)
    w = bg.volume_density()
    wq = w * q
    shape, size = lattice.shape, lattice.n**3

    def matvec(v):
        v = v.reshape(shape)
        return (wq * v - weighted_laplacian(v, bg)).ravel()

    A = LinearOperator((size, size), matvec=matvec, dtype=float)

    diff_coeff = 1.0 if bg.is_flat else float(np.mean(bg.psi**2))
    shift = float(np.mean(wq))
    if abs(shift) < 1e-12:
        shift = 1.0
    symbol = abs(shift) - diff_coeff * flat_stencil_symbol(lattice)

    def precond(v):
        vhat = np.fft.rfftn(v.reshape(shape))
        return np.fft.irfftn(vhat / symbol, s=shape, axes=(0, 1, 2)).ravel()

    M = LinearOperator((size, size), matvec=precond, dtype=float)
    b = -(w * rhs).ravel()
    count = [0]

    def cb(_):
        count[0] += 1

    atol = atol_rms * np.sqrt(size)
    if q.min() > 0:
        sol, info = cg(A, b, rtol=0.0, atol=atol, maxiter=maxiter, M=M, callback=cb)
    else:
        sol, info = gmres(A, b, rtol=0.0, atol=atol, restart=60, maxiter=maxiter, M=M,
                          callback=cb, callback_type="pr_norm")
    if info != 0:
        raise ConvergenceError(f"Krylov solve did not reach atol={atol:.2e} (info={info})")
    return sol.reshape(shape), count[0]
