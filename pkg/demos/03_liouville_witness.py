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
# # Radial witness for `Delta u = k u^5`
#
# A bounded entire solution with maximum `u(0) = 1` cannot exist.  Shooting
# radially from that maximum, the trajectory increases at once and crosses
# any threshold above 1 at a finite radius.  Here the radial problem has the
# closed form `u = (1 - k r^2 / 3)^(-1/2)`, which gives an exact check.

# %%
import math

from cfrg.liouville import exceedance_radius, nonexistence_report

# %%
for k in (1e-2, 1 / 12, 1.0, 1e2):
    rep = nonexistence_report(k)
    radii = ", ".join(f"{r:.6g}" for r in rep.radii)
    print(f"k={k:<8.4g} increasing={rep.strictly_increasing} radii [{radii}]")

# %% [markdown]
# Radii scale like `1/sqrt(k)`, and RK4 shows fourth-order convergence
# under step halving.

# %%
for k in (1e-2, 1 / 12, 1.0, 1e2):
    print(f"k={k:<8.4g} radius*sqrt(k) = {exceedance_radius(k, 1.5) * math.sqrt(k):.12f}")

exact = math.sqrt(3 * (1 - 2.0**-2))
errs = [abs(exceedance_radius(1.0, 2.0, step=h) - exact) for h in (0.02, 0.01, 0.005, 0.0025)]
print("errors", [f"{e:.2e}" for e in errs])
print("orders", [f"{math.log2(a / b):.3f}" for a, b in zip(errs, errs[1:])])
