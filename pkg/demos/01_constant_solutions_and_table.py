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
# # Constant solutions and the solvability table
#
# On a flat torus with prescribed constant scalar curvature the equation
# `Delta phi = R phi/8 - sigma2 phi^-7/8 + tau^2 phi^5/12` has constant
# solutions whenever the three terms can balance.  We check a few by hand,
# then classify all twelve (Yamabe sign, sigma, tau) cells.

# %%
import numpy as np

from cfrg import constant_root, flat_data, obstruction_check, solve_monotone, solve_newton
from cfrg.experiments import table_scan

# %%
for R, s, t2 in [(0.0, 2 / 3, 1.0), (1.0, 256.0, 0.0), (-1.0, 0.0, 1.5)]:
    data = flat_data(16, R, s, t2)
    mono, newton = solve_monotone(data), solve_newton(data)
    print(f"R={R:+g} sigma2={s:g} tau2={t2:g}: root {constant_root(R, s, t2):.12f}, "
          f"monotone {mono.phi.mean():.12f} ({mono.iterations} its), "
          f"newton {newton.phi.mean():.12f} ({newton.iterations} its)")

# %% [markdown]
# An obstructed cell: positive curvature and tau but no sigma.  Every term
# on the right is positive, so integrating over the torus rules out a
# solution and the solvers refuse to start.

# %%
print(obstruction_check(flat_data(16, 1.0, 0.0, 1.0)))

# %%
rep = table_scan(n=16, threads=4)
for cell in rep.cells:
    extra = ""
    if "residual_max" in cell.evidence:
        extra = f" residual {cell.evidence['residual_max']:.1e}"
    print(f"{cell.tag.label():24s} expected {cell.expected:3s} observed {cell.observed.value:15s}"
          f" {'ok' if cell.matches else 'MISMATCH'}{extra}")
print(f"{rep.matches}/12 cells match; counts {rep.counts()}")
