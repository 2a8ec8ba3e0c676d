# ---
# jupyter:
#   jupytext:
#     formats: py:percent
#   kernelspec:
#     display_name: Python 3
#     language: python
#     name: python3
# ---

# %% [markdown]
# # A-priori barriers and loss of control under scaling
#
# Within a box `sigma2 in [1/C1, C1] * base`, `tau^2 in [1/C2, C2]` the
# solution is trapped between constants evaluated at the box corners.  We
# sweep the box on a log-uniform grid, then scale one solution by `c` to see
# the bounds fail outside any fixed box.

# %%
import numpy as np

from cfrg import ConformalBackground, Lattice, solve_newton
from cfrg.experiments import bounds_sweep, default_tt_sigma, degeneration_study, wave_case

lat = Lattice(16)
sigma = default_tt_sigma(lat)

# %%
for R in (1.0, 0.0, -1.0):
    bg = ConformalBackground.flat(lat, R)
    rep = bounds_sweep(4.0, 4.0, sigma, bg, 9, threads=4)
    lo, hi = rep.barriers
    print(f"R={R:+g}: {len(rep.samples)} samples, phi in [{rep.global_min:.5f}, {rep.global_max:.5f}], "
          f"barriers [{lo:.5f}, {hi:.5f}], violations {rep.violations}")

# %% [markdown]
# Scaling `(phi, sigma, tau) -> (c phi, c^4 sigma, tau / c^2)` maps solutions
# to solutions.  Re-solving the scaled data from scratch recovers `c phi`,
# so `max phi` runs off to infinity as `c` grows and `min phi` to zero as
# `c` shrinks.

# %%
data = wave_case().data(16)
base = solve_newton(data)
for row in degeneration_study(data, base.phi, [1 / 64, 1 / 8, 1.0, 8.0, 64.0], tol=base.tol):
    print(f"c={row['c']:8.4g}  min phi {row['min_phi']:.4e}  max phi {row['max_phi']:.4e}  "
          f"max phi / c {row['max_ratio']:.10f}  deviation {row['deviation']:.1e}")
