"""
Scripted studies: a-priori bound sweeps, scaling degeneration, the
solvability table scan and grid convergence studies.
"""

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, PositivityError, PreconditionError
from .geometry import (
    ConformalBackground,
    Lattice,
    band_limited_psi,
    make_tt_field,
    norm_squared,
    scalar_curvature,
)
from .lichnerowicz import (
    ClassTag,
    Status,
    conformal_transfer,
    constant_root,
    make_data,
    obstruction_check,
    residual,
    scaling_transform,
    solve_newton,
)
from .reconstruct import build_initial_data, hamiltonian_residual, momentum_residual, trace_K
from .yamabe import yamabe_sign

# Reference solvability table, keyed by (Yamabe sign, sigma2 == 0, tau == 0).
EXPECTED_TABLE = {
    ("+", True, True): "No",
    ("+", True, False): "No",
    ("+", False, True): "Yes",
    ("+", False, False): "Yes",
    ("0", True, True): "Yes",
    ("0", True, False): "No",
    ("0", False, True): "No",
    ("0", False, False): "Yes",
    ("-", True, True): "No",
    ("-", True, False): "Yes",
    ("-", False, True): "No",
    ("-", False, False): "Yes",
}


def _map(fn, items, threads):
    # results come back in input order whatever the thread count
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _default_modes():
    # (mode numbers, amplitude, phase); both amplitudes transverse and trace-free
    eps1 = np.zeros((3, 3))
    eps1[1, 1], eps1[2, 2] = 0.5, -0.5
    eps2 = np.zeros((3, 3))
    eps2[0, 2] = eps2[2, 0] = 0.3
    return (((1, 0, 0), eps1, 0.0), ((0, 1, 0), eps2, 0.3))


DEFAULT_SIGMA_CONST = (1.0, 1.0, -2.0, 0.0, 0.0, 0.0)


def default_tt_sigma(lattice):
    """Nonconstant TT tensor with ``min sigma2 > 0``: a constant part plus two modes."""
    modes = [(2 * np.pi * np.asarray(m, dtype=float) / lattice.L, eps, ph) for m, eps, ph in _default_modes()]
    return make_tt_field(lattice, DEFAULT_SIGMA_CONST, modes)


def log_axis(C, m):
    if m == 1:
        return np.array([1.0])
    return np.exp(np.linspace(-math.log(C), math.log(C), m))


# -- bounds sweep -----------------------------------------------------------------

@dataclass
class SweepReport:
    C1: float
    C2: float
    s_values: np.ndarray
    t_values: np.ndarray
    samples: list = field(repr=False)
    barriers: tuple
    violations: int

    @property
    def all_converged(self):
        return all(s["converged"] for s in self.samples)

    @property
    def failures(self):
        return [s for s in self.samples if not s["converged"]]

    @property
    def global_min(self):
        return min(s["phi_min"] for s in self.samples if s["converged"])

    @property
    def global_max(self):
        return max(s["phi_max"] for s in self.samples if s["converged"])

    def to_json(self):
        return {
            "C1": self.C1,
            "C2": self.C2,
            "s_values": [float(v) for v in self.s_values],
            "t_values": [float(v) for v in self.t_values],
            "barriers": list(self.barriers),
            "violations": self.violations,
            "all_converged": self.all_converged,
            "failures": [(s["s"], s["t"], s["error"]) for s in self.failures],
            "global_min_phi": self.global_min,
            "global_max_phi": self.global_max,
            "samples": self.samples,
        }

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "t", "min_phi", "max_phi", "iterations", "converged"])
            for s in self.samples:
                w.writerow([repr(s["s"]), repr(s["t"]), repr(s["phi_min"]), repr(s["phi_max"]),
                            s["iterations"], s["converged"]])


def bounds_sweep(C1, C2, base_sigma, bg, samples_per_axis, tol=None, threads=1):
    """Solve on a log-uniform grid of ``sigma2`` scales and ``tau**2`` values.

    ``base_sigma`` is rescaled so that ``min sigma2 = 1``; pass ``None`` for the
    ``sigma = 0`` class.  ``C2=None`` sweeps the ``tau = 0`` class.  Every
    converged solution is checked against the constant barriers evaluated at
    the corners of the hypothesis box.
    """
    m = int(samples_per_axis)
    if m < 1:
        raise PreconditionError("need at least one sample per axis")
    sign = yamabe_sign(bg).sign
    if base_sigma is not None:
        s2 = norm_squared(base_sigma, bg)
        if s2.min() <= 0:
            raise PreconditionError("base sigma must have sigma2 > 0 everywhere")
        base_sigma = base_sigma / math.sqrt(s2.min())
        base_max = float(s2.max() / s2.min())
        s_values = log_axis(C1, m)
    else:
        base_max = 0.0
        s_values = np.array([0.0])
    t_values = log_axis(C2, m) if C2 is not None else np.array([0.0])

    R = scalar_curvature(bg)
    s_lo = s_values.min() if base_sigma is not None else 0.0
    s_hi = s_values.max() * base_max
    barriers = (constant_root(R.max(), s_lo, t_values.max()),
                constant_root(R.min(), s_hi, t_values.min()))

    grid = [(i, j) for i in range(len(s_values)) for j in range(len(t_values))]

    def run(ij):
        i, j = ij
        s, t = float(s_values[i]), float(t_values[j])
        sigma = None if base_sigma is None else base_sigma * math.sqrt(s)
        data = make_data(bg, sigma=sigma, tau=math.sqrt(t), yamabe=sign)
        row = {"s": s, "t": t, "converged": False, "phi_min": math.nan, "phi_max": math.nan,
               "iterations": 0, "residual_max": math.nan, "within_barriers": False, "error": None}
        try:
            rep = solve_newton(data, tol=tol)
        except (ConvergenceError, PositivityError, PreconditionError) as exc:
            row["error"] = str(exc)
            return row
        lo, hi = barriers
        slack = 10 * rep.tol
        row.update(converged=rep.converged, phi_min=float(rep.phi.min()), phi_max=float(rep.phi.max()),
                   iterations=rep.iterations, residual_max=rep.residual_max,
                   within_barriers=bool(lo - slack <= rep.phi.min() and rep.phi.max() <= hi + slack))
        return row

    samples = _map(run, grid, threads)
    violations = sum(1 for s in samples if s["converged"] and not s["within_barriers"])
    return SweepReport(float(C1), None if C2 is None else float(C2), s_values, t_values,
                       samples, barriers, violations)


# -- degeneration ------------------------------------------------------------------

def degeneration_study(data0, phi0, c_values, tol=None):
    """Re-solve scaled data from scratch and compare with the scaled solution.

    The residual of the scaled problem is ``c`` times the original one, so for
    ``c < 1`` the re-solve tolerance is tightened to ``c * tol``; the deviation
    ``max|phi_c - c phi0| / c`` is then measured on the original scale.
    """
    tol = (1e-9 if data0.bg.is_flat else 1e-8) if tol is None else tol
    rows = []
    for c in c_values:
        expected, data_c = scaling_transform(phi0, data0, c)
        row = {"c": float(c), "ok": False, "error": None}
        try:
            rep = solve_newton(data_c, tol=tol * min(c, 1.0))
        except (ConvergenceError, PositivityError, PreconditionError) as exc:
            row["error"] = str(exc)
            rows.append(row)
            continue
        dev = float(np.abs(rep.phi - expected).max() / c)
        row.update(
            max_phi=float(rep.phi.max()),
            min_phi=float(rep.phi.min()),
            max_ratio=float(rep.phi.max() / c),
            min_ratio=float(rep.phi.min() / c),
            deviation=dev,
            iterations=rep.iterations,
            ok=dev <= 10 * tol,
        )
        rows.append(row)
    return rows


# -- solvability table -------------------------------------------------------------

@dataclass
class TableCell:
    tag: ClassTag
    R: float
    expected: str
    observed: Status
    evidence: dict

    @property
    def matches(self):
        if self.expected == "No":
            return self.observed is Status.OBSTRUCTED
        if self.observed is Status.TRIVIAL_FAMILY:
            return self.evidence.get("constants_solve", False)
        return self.observed is Status.SOLVABLE and self.evidence.get("converged", False) \
            and self.evidence.get("residual_max", math.inf) <= 1e-8

    def to_json(self):
        return {"class": self.tag.label(), "R": self.R, "expected": self.expected,
                "observed": self.observed.value, "matches": self.matches, "evidence": self.evidence}


@dataclass
class TableScanReport:
    cells: list

    @property
    def matches(self):
        return sum(c.matches for c in self.cells)

    @property
    def all_match(self):
        return self.matches == len(self.cells)

    def counts(self):
        out = {s.value: 0 for s in Status}
        for c in self.cells:
            out[c.observed.value] += 1
        return out

    def to_json(self):
        return {"matches": self.matches, "cells": [c.to_json() for c in self.cells], "counts": self.counts()}


def table_scan(n=16, R_values=(1.0, 0.0, -1.0), sigma=None, tau=1.0, tol=None, threads=1, L=1.0):
    """Classify and, where solvable, solve all twelve cells of the table."""
    lattice = Lattice(n, L)
    sigma = default_tt_sigma(lattice) if sigma is None else sigma
    jobs = [(R, with_sigma, with_tau) for R in R_values for with_sigma in (False, True)
            for with_tau in (False, True)]

    def run(job):
        R, with_sigma, with_tau = job
        bg = ConformalBackground.flat(lattice, R)
        data = make_data(bg, sigma=sigma if with_sigma else None, tau=tau if with_tau else 0.0)
        tag = data.class_tag
        verdict = obstruction_check(data)
        evidence = {"reason": verdict.reason, "lambda1": None}
        if verdict.status is Status.SOLVABLE:
            try:
                rep = solve_newton(data, tol=tol)
                evidence.update(rep.to_json())
            except (ConvergenceError, PositivityError, PreconditionError) as exc:
                evidence.update(converged=False, error=str(exc))
        elif verdict.status is Status.TRIVIAL_FAMILY:
            ok = all(np.abs(residual(lattice.constant(c), data)).max() <= 1e-12 for c in (0.5, 1.0, 3.0))
            evidence["constants_solve"] = bool(ok)
        return TableCell(tag, float(R), EXPECTED_TABLE[tuple(tag)], verdict.status, evidence)

    return TableScanReport(_map(run, jobs, threads))


# -- convergence -------------------------------------------------------------------

@dataclass(frozen=True)
class CaseSpec:
    """A continuum problem that can be put on any lattice.

    ``sigma_modes`` entries are ``(mode_numbers, eps, phase)`` with the wave
    vector ``2 pi m / L``; ``psi_terms`` (optional) are ``(amplitude,
    mode_numbers, phase)`` for a conformal transfer with ``psi = 1 + ...``.
    """

    R: float = 0.0
    sigma_const: tuple = None
    sigma_modes: tuple = ()
    tau: float = 1.0
    psi_terms: tuple = None
    L: float = 1.0

    def data(self, n):
        lattice = Lattice(n, self.L)
        bg = ConformalBackground.flat(lattice, self.R)
        sigma = None
        if self.sigma_const is not None or self.sigma_modes:
            const = np.zeros(6) if self.sigma_const is None else self.sigma_const
            modes = [(2 * np.pi * np.asarray(m, dtype=float) / self.L, eps, ph)
                     for m, eps, ph in self.sigma_modes]
            sigma = make_tt_field(lattice, const, modes)
        sign = "+" if self.R > 0 else "-" if self.R < 0 else "0"
        return make_data(bg, sigma=sigma, tau=self.tau, yamabe=sign)

    def psi(self, lattice):
        return band_limited_psi(lattice, self.psi_terms)


def wave_case(tau=1.0, R=0.0):
    """The smooth nonconstant-sigma case used throughout the studies."""
    return CaseSpec(R=R, sigma_const=DEFAULT_SIGMA_CONST, sigma_modes=_default_modes(), tau=tau)


def _orders(values, ns):
    out = []
    for a, b, na, nb in zip(values, values[1:], ns, ns[1:]):
        out.append(math.log(a / b) / math.log(nb / na) if a > 0 and b > 0 else math.nan)
    return out


def convergence_study(case, n_values, tol=None, roundoff=1e-11):
    """Solve ``case`` on each lattice and report observed orders.

    Solution orders use differences between consecutive grids, compared at
    the shared (coarse) nodes.  Residual orders use the residual max-norms
    directly.  When every measured quantity sits at roundoff level the study
    is flagged ``exact`` and no orders are reported.
    """
    ns = [int(n) for n in n_values]
    if len(ns) < 3 or any(b <= a for a, b in zip(ns, ns[1:])):
        raise PreconditionError("need at least three strictly increasing resolutions")
    if any(b % a for a, b in zip(ns, ns[1:])):
        raise PreconditionError("each resolution must divide the next")
    phis, ham, mom, trace_err, transfer = [], [], [], [], []
    for n in ns:
        data = case.data(n)
        rep = solve_newton(data, tol=tol)
        if not rep.converged:
            raise ConvergenceError(f"no convergence at n = {n}")
        phis.append(rep.phi)
        if data.sigma is not None or data.class_tag.sigma_zero:
            ids = build_initial_data(rep.phi, data)
            ham.append(float(np.abs(hamiltonian_residual(ids)).max()))
            mom.append(float(np.abs(momentum_residual(ids)).max()))
            trace_err.append(float(np.abs(trace_K(ids) - data.tau).max()))
        if case.psi_terms is not None:
            psi = case.psi(data.lattice)
            phit, datat = conformal_transfer(rep.phi, data, psi)
            transfer.append(float(np.abs(residual(phit, datat)).max()))

    diffs, vs_finest = [], []
    for a, b in zip(phis, phis[1:]):
        r = b.shape[0] // a.shape[0]
        diffs.append(float(np.abs(a - b[::r, ::r, ::r]).max()))
    for a in phis[:-1]:
        r = phis[-1].shape[0] // a.shape[0]
        vs_finest.append(float(np.abs(a - phis[-1][::r, ::r, ::r]).max()))

    measured = diffs + ham + mom + transfer
    exact = all(v <= roundoff for v in measured)
    out = {
        "n_values": ns,
        "exact": exact,
        "solution_differences": diffs,
        "solution_vs_finest": vs_finest,
        "hamiltonian_max": ham,
        "momentum_max": mom,
        "trace_error_max": trace_err,
        "transfer_residual_max": transfer,
    }
    if not exact:
        out["solution_orders"] = _orders(diffs, ns[1:])
        out["hamiltonian_orders"] = _orders(ham, ns) if ham else []
        out["momentum_orders"] = _orders(mom, ns) if mom else []
        out["transfer_orders"] = _orders(transfer, ns) if transfer else []
    return out
