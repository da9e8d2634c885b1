# ---
# jupyter:
#   jupytext:
#     formats: py:percent
#     text_representation:
#       extension: .py
#       format_name: percent
# ---

# %% [markdown]
# # Rayleigh outage and goodput
#
# Success probability of a link under Rayleigh fading has a closed form.
# Here we look at how it and the goodput-maximizing rate react to the
# link's own power and to an interferer.

# %%
import numpy as np

from manetnum.channel import LinkChannel, RateSet, derivatives, max_goodput, success_probability
from manetnum.properties import PowerSweep, check_goodput_properties, check_success_properties, goodput_sweep

ch = LinkChannel(np.ones((2, 2)), 1.0)
rates = RateSet.arange(0.4, 2.0, 0.4)
print(success_probability(ch, [1.0, 0.0], 0, np.log(2)))  # exp(-1)

# %% [markdown]
# Sweep the own power with the interferer at 5 W.  The chosen rate only
# ever steps up.

# %%
grid = np.linspace(0.1, 20.0, 200)
g, mu = goodput_sweep(ch, rates, PowerSweep(0, grid, np.array([0.0, 5.0])), 0)
for k in (0, 50, 100, 199):
    print(f"p1={grid[k]:6.2f}  goodput={g[k]:.4f}  rate={mu[k]}")

# %% [markdown]
# Now hold the link at 25 W and turn up the interferer.

# %%
g, mu = goodput_sweep(ch, rates, PowerSweep(1, grid, np.array([25.0, 0.0])), 0)
print(np.unique(mu)[::-1])

# %% [markdown]
# Analytic partials at one point, then the randomized property checks.

# %%
d = derivatives(LinkChannel([[1.0, 0.3], [0.2, 1.0]], 0.5), [1.0, 2.0], 0, 0.8)
print(d.dq_dpl, d.dq_dpj, d.d2logq_dpl2)

for r in check_success_properties(sample_count=500, seed=0):
    print(r.as_row())
sweeps = [PowerSweep(0, grid, np.array([0.0, 5.0])), PowerSweep(1, grid, np.array([25.0, 0.0]))]
for r in check_goodput_properties(ch, rates, sweeps):
    print(r.as_row())
print(max_goodput(ch, [3.0, 1.0], 0, rates))
