# ---
# jupyter:
#   jupytext:
#     formats: py:percent
#     text_representation:
#       extension: .py
#       format_name: percent
# ---

# %% [markdown]
# # Power and price game
#
# Each transmitter best-responds to the interference prices charged by
# the others.  Equilibria are KKT points of the weighted goodput problem,
# so we compare against a brute-force grid search.

# %%
import numpy as np

from manetnum.game import (brute_force_schedule, exact_over_the_air_sums, kkt_residual,
                           over_the_air_price_sums, random_instance, run_table1)

rng = np.random.default_rng(7)
inst = random_instance(rng, 3)
res = run_table1(inst)
print(res.converged, res.iterations, res.state.powers)
print("KKT residual", kkt_residual(inst, res.state.powers).max_residual)

# %%
p_best, best = brute_force_schedule(inst, 20, refine=True)
print("NE", inst.objective(res.state.powers), "oracle", best)

# %% [markdown]
# The power iterates from the least strategy.  On some instances they dip,
# since the price players do not keep the game supermodular.

# %%
P = np.array([row.powers for row in res.trace])
print(np.round(P[:6], 4))
print("min step", np.diff(P, axis=0).min())

# %% [markdown]
# Price sums gathered over the air from superposed broadcasts.

# %%
est = over_the_air_price_sums(inst, res.state.powers, rng, symbols=10_000)
print(est, exact_over_the_air_sums(inst, res.state.powers))
