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
# # Physical initial data and grid convergence
#
# From a solved `phi` we build `gamma = phi^4 lambda` and
# `K = phi^-2 sigma + tau gamma / 3`, then evaluate the vacuum Hamiltonian
# and momentum constraints with difference operators that are independent
# of the solver stencil.  Their residuals should shrink at second order.

# %%
from cfrg import solve_newton
from cfrg.experiments import CaseSpec, convergence_study, wave_case
from cfrg.reconstruct import build_initial_data, hamiltonian_residual, momentum_residual, trace_K

# %%
data = wave_case().data(32)
ids = build_initial_data(solve_newton(data).phi, data)
print(f"|H| max {abs(hamiltonian_residual(ids)).max():.3e}")
print(f"|M| max {abs(momentum_residual(ids)).max():.3e}")
print(f"|tr K - tau| max {abs(trace_K(ids) - data.tau).max():.1e}")

# %% [markdown]
# The same case on three grids, with the solution also moved onto the
# conformally related metric `psi^4 delta`, `psi = 1 + 0.1 cos(2 pi x1)`.

# %%
case = CaseSpec(**{**wave_case().__dict__, "psi_terms": ((0.1, (1, 0, 0), 0.0),)})
out = convergence_study(case, [16, 32, 64])
for key in ("solution", "hamiltonian", "momentum", "transfer"):
    print(f"{key:12s} orders {[round(p, 3) for p in out[key + '_orders']]}")
