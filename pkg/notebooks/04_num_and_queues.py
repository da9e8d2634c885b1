# ---
# jupyter:
#   jupytext:
#     formats: py:percent
#     text_representation:
#       extension: .py
#       format_name: percent
# ---

# %% [markdown]
# # Congestion control and queues
#
# Four nodes, one source sending to two destinations through a relay.
# The dual loop sets source rates, and the schedule comes either from
# the game or from the brute-force optimum.

# %%
import numpy as np

from manetnum.channel import Link, NetworkTopology, RateSet
from manetnum.cli import fixed_schedule
from manetnum.num import CommodityFlow, num_loop, stand_in_four_node_topology
from manetnum.queues import run_stability_experiment

topo, flows, rates = stand_in_four_node_topology()
game = num_loop(topo, flows, rates, scheduler="game", iterations=1500)
oracle = num_loop(topo, flows, rates, scheduler="oracle", iterations=1500)
print("game  ", game.window_mean(game.x), game.objective.mean())
print("oracle", oracle.window_mean(oracle.x), oracle.objective.mean())
print("flagged game solves", len(game.flagged))

# %% [markdown]
# A relay chain with both links always on.  Arrivals below the supported
# rate keep the backlog flat, and arrivals far above it make it grow
# linearly.

# %%
G = np.array([[0.0, 1.0, 0.1], [1.0, 0.0, 1.0], [0.1, 1.0, 0.0]])
chain = NetworkTopology(G, 0.1, 0.1, 2.0)
sched, g = fixed_schedule(chain, [Link(0, 1), Link(1, 2)], [2.0, 2.0], RateSet.arange(0.2, 2.0, 0.2))
print("per-link goodput", g)
for scale in (0.5, 0.9, 1.2):
    rep = run_stability_experiment(chain, [CommodityFlow(0, 2)], [g.min()], scale, "fixed",
                                   fixed_schedule=sched, slots=20_000, seed=0)
    print(scale, rep.slope, rep.stable)
