# ---
# jupyter:
#   jupytext:
#     formats: py:percent
#     text_representation:
#       extension: .py
#       format_name: percent
# ---

# %% [markdown]
# # Goodput regions
#
# Two transmitters share a receiver.  Sampling the power box and keeping
# the best rate per link gives a set of achievable goodput pairs; time
# sharing makes its convex hull achievable too.

# %%
import numpy as np

from manetnum.channel import Link, NetworkTopology, RateSet
from manetnum.region import (DroppingProfile, PowerGrid, contains, enumerate_region, hull_area,
                             staircase_area)

topo = NetworkTopology(np.ones((3, 3)) - np.eye(3), 1.0, 0.01, [2.0, 3.0, 1.0])
ch = topo.link_channel([Link(0, 2), Link(1, 2)])
rates = RateSet.arange(0.4, 1.8, 0.4)
grid = PowerGrid([0.01, 0.01], [2.0, 3.0], 50)

reg = enumerate_region(ch, rates, grid)
print("hull area", hull_area(reg.hull))
print("staircase area", staircase_area(reg.raw_points))

# %% [markdown]
# Retaining failed packets (smaller drop probability) only grows the
# region.  With no drops at all every link delivers its top rate.

# %%
for delta in (1.0, 0.5, 0.0):
    r = enumerate_region(ch, rates, grid, DroppingProfile.uniform(delta, 2))
    print(delta, round(hull_area(r.hull), 4))

loose = enumerate_region(ch, rates, grid, DroppingProfile.uniform(0.5, 2))
print(all(contains(loose, p) for p in reg.raw_points))
