"""
Constant-mean-curvature initial data for the vacuum Einstein constraints on a
discretised 3-torus: the Lichnerowicz equation, its solvability table, the
a-priori barriers, a radial Liouville witness and constraint certificates.
"""

from .errors import (
    ConvergenceError,
    LatticeMismatchError,
    PositivityError,
    PreconditionError,
    UnsupportedError,
)
from .geometry import (
    ConformalBackground,
    Lattice,
    Mode,
    band_limited_psi,
    gradient,
    integrate,
    laplacian,
    make_tt_field,
    norm_squared,
    scalar_curvature,
    tt_check,
)
from .lichnerowicz import (
    ClassTag,
    ConformalData,
    Method,
    SolveReport,
    Status,
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
from .yamabe import YamabeReport, rayleigh_quotient, yamabe_sign

__version__ = "0.1.0"
