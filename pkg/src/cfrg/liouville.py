"""
Radial shooting for ``u'' + (2/r) u' = k u^5`` with ``u(0) = 1, u'(0) = 0``.

Any bounded entire solution of ``Delta u = k u^5`` on R^3 with maximum value
``u(0) = 1`` would have to stay at or below 1.  The radial trajectory from
that maximum is strictly increasing, so it leaves ``[0, 1]`` immediately;
the functions here integrate it and measure how far out it crosses given
thresholds.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionError

BLOWUP_GUARD = 1e3
DEFAULT_STEP = 1e-3


@dataclass(frozen=True)
class RadialTrajectory:
    k: float
    step: float
    r: np.ndarray = field(repr=False)
    u: np.ndarray = field(repr=False)
    du: np.ndarray = field(repr=False)
    blew_up: bool = False

    @property
    def samples(self):
        return list(zip(self.r, self.u, self.du))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "u", "du"])
            for row in zip(self.r, self.u, self.du):
                w.writerow([repr(float(v)) for v in row])


def taylor_start(k, r):
    """Series solution near the origin, through ``r**6``."""
    a, b, c = k / 6.0, k**2 / 24.0, 5.0 * k**3 / 432.0
    u = 1.0 + a * r**2 + b * r**4 + c * r**6
    du = 2 * a * r + 4 * b * r**3 + 6 * c * r**5
    return u, du


def _rhs(k, r, u, v):
    return v, k * u**5 - 2.0 * v / r


def _rk4(k, r, u, v, h):
    k1u, k1v = _rhs(k, r, u, v)
    k2u, k2v = _rhs(k, r + h / 2, u + h / 2 * k1u, v + h / 2 * k1v)
    k3u, k3v = _rhs(k, r + h / 2, u + h / 2 * k2u, v + h / 2 * k2v)
    k4u, k4v = _rhs(k, r + h, u + h * k3u, v + h * k3v)
    return (u + h / 6 * (k1u + 2 * k2u + 2 * k3u + k4u),
            v + h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v))


def _validate(k, step):
    if not (math.isfinite(k) and k > 0):
        raise PreconditionError(f"k must be positive, got {k!r}")
    if not (math.isfinite(step) and step > 0):
        raise PreconditionError(f"step must be positive, got {step!r}")


def _natural_step(k, step):
    # default resolution is fixed in the scaled variable sqrt(k) r
    _validate(k, 1.0 if step is None else step)
    return DEFAULT_STEP / math.sqrt(k) if step is None else float(step)


def radial_shoot(k, r_max, step=None, guard=BLOWUP_GUARD):
    """Integrate the radial equation with classical RK4.

    The first step comes from the Taylor series, which sidesteps the ``2/r``
    singularity.  Integration stops at ``r_max`` or once ``u > guard``.
    """
    k = float(k)
    step = _natural_step(k, step)
    _validate(k, step)
    rs, us, dus = [0.0], [1.0], [0.0]
    r = step
    u, v = taylor_start(k, r)
    rs.append(r), us.append(u), dus.append(v)
    blew_up = False
    while r < r_max - 1e-12 * step:
        h = min(step, r_max - r)
        u, v = _rk4(k, r, u, v, h)
        r = r + h
        if not math.isfinite(u) or u > guard:
            blew_up = True
            if math.isfinite(u):
                rs.append(r), us.append(u), dus.append(v)
            break
        rs.append(r), us.append(u), dus.append(v)
    return RadialTrajectory(k, step, np.array(rs), np.array(us), np.array(dus), blew_up)


def exceedance_radius(k, threshold, step=None, r_max=None, rtol=1e-13):
    """Smallest ``r`` with ``u(r) >= threshold``.

    The crossing step is located by bisecting the length of a single RK4 step
    from the last node below the threshold, so the answer carries the
    integrator's own error and nothing from interpolation.
    """
    k, threshold = float(k), float(threshold)
    if not threshold > 1:
        raise PreconditionError("threshold must exceed 1")
    step = _natural_step(k, step)
    _validate(k, step)
    if r_max is None:
        r_max = 1e4 / math.sqrt(k)

    r = step
    u, v = taylor_start(k, r)
    if u >= threshold:
        base = 0.0

        def value(x):
            return taylor_start(k, x)[0]
    else:
        while True:
            if r >= r_max:
                raise PreconditionError(
                    f"no exceedance of {threshold} before r = {r_max:g}; reduce the step or raise r_max")
            u_new, v_new = _rk4(k, r, u, v, step)
            if not math.isfinite(u_new) or u_new >= threshold:
                break
            r, u, v = r + step, u_new, v_new
        base = r

        def value(x):
            return _rk4(k, base, u, v, x)[0]

    lo, hi = 0.0, step
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if hi - lo <= rtol * (base + hi) or mid in (lo, hi):
            break
        val = value(mid)
        if math.isfinite(val) and val >= threshold:
            hi = mid
        else:
            lo = mid
    return base + hi


@dataclass(frozen=True)
class NonexistenceReport:
    k: float
    thresholds: tuple
    radii: tuple
    strictly_increasing: bool
    min_slope: float
    trajectory: RadialTrajectory = field(repr=False)

    def to_json(self, trajectory_ref=None):
        return {
            "k": self.k,
            "thresholds": list(self.thresholds),
            "exceedance_radii": list(self.radii),
            "strictly_increasing": self.strictly_increasing,
            "min_slope_after_origin": self.min_slope,
            "trajectory_samples": len(self.trajectory.r),
            "trajectory_file": None if trajectory_ref is None else str(trajectory_ref),
            "conclusion": ("u increases from its supposed maximum u(0) = 1, so no solution "
                           "with 0 <= u <= 1 exists"),
        }


def nonexistence_report(k, thresholds=(1 + 1e-3, 1.5, 2.0), step=None):
    """Collect the witness: monotone trajectory plus finite exceedance radii."""
    radii = tuple(exceedance_radius(k, th, step=step) for th in thresholds)
    traj = radial_shoot(k, r_max=radii[-1], step=step)
    slopes = traj.du[1:]
    increasing = bool(np.all(slopes > 0) and np.all(np.diff(traj.u) > 0))
    return NonexistenceReport(float(k), tuple(thresholds), radii, increasing, float(slopes.min()), traj)
