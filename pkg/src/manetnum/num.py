"""
Dual decomposition of the goodput NUM problem.

Dual prices ``lam[n, d]`` (one per node and destination) couple two
subproblems solved every iteration:

* input rate control: each source picks ``x_s = argmax U_s(x) - lam_s x``;
* scheduling: links are weighted by their backpressure differential
  ``w_l = max_d (lam[b(l), d] - lam[e(l), d])^+`` and powers are chosen by
  the scheduling game (or by the brute-force oracle).

Prices then follow a projected subgradient step on flow conservation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channel import Link, NetworkTopology, RateSet, max_goodput
from .game import (SchedulingInstance, brute_force_schedule, run_table1,
                   select_receiver, unit_price_floor)
from .seeding import derive_rng

log = logging.getLogger(__name__)

DEFAULT_RATE_CAP = 10.0
DEFAULT_STEPSIZE = 0.05


@dataclass(frozen=True)
class UtilitySpec:
    """Weighted log utility ``weight * log(x + offset)``."""

    weight: float = 1.0
    offset: float = 0.0
    family: str = "weighted_log"

    def __post_init__(self):
        if self.family != "weighted_log":
            raise ValueError(f"unsupported utility family {self.family!r}")
        if self.weight <= 0:
            raise ValueError("utility weight must be positive")
        if self.offset < 0:
            raise ValueError("utility offset must be non-negative")

    def value(self, x):
        return self.weight * np.log(np.asarray(x) + self.offset)

    def derivative(self, x):
        return self.weight / (np.asarray(x) + self.offset)


@dataclass(frozen=True)
class CommodityFlow:
    source: int
    destination: int
    utility: UtilitySpec = field(default_factory=UtilitySpec)

    def __post_init__(self):
        if self.source == self.destination:
            raise ValueError("flow source and destination must differ")


@dataclass
class DualPrices:
    """``lam[n, d]`` for node ``n`` and commodity ``d`` (destination ``destinations[d]``)."""

    lam: np.ndarray
    destinations: tuple

    def __post_init__(self):
        self.lam = np.array(self.lam, dtype=float)
        self.destinations = tuple(int(d) for d in self.destinations)
        if self.lam.ndim != 2 or self.lam.shape[1] != len(self.destinations):
            raise ValueError("price matrix must be N x D with one column per destination")
        if np.any(self.lam < 0):
            raise ValueError("dual prices must be non-negative")
        for d, node in enumerate(self.destinations):
            self.lam[node, d] = 0.0

    @classmethod
    def zeros(cls, n_nodes: int, destinations: Sequence[int]) -> "DualPrices":
        return cls(np.zeros((n_nodes, len(destinations))), tuple(destinations))


@dataclass
class BackpressureWeights:
    """Per ordered node pair: weight ``w[b, e]`` and chosen commodity ``commodity[b, e]``."""

    w: np.ndarray
    commodity: np.ndarray

    def for_link(self, link: Link):
        return float(self.w[link.origin, link.end]), int(self.commodity[link.origin, link.end])


def input_rate(utility: UtilitySpec, lambda_s: float, cap: float = DEFAULT_RATE_CAP) -> float:
    """Maximizer of ``U(x) - lambda_s x`` over ``0 <= x <= cap``."""
    if lambda_s < 0:
        raise ValueError("price must be non-negative")
    if lambda_s == 0:
        return cap
    return float(min(cap, max(0.0, utility.weight / lambda_s - utility.offset)))


def backpressure_weights(prices: DualPrices, links: Sequence[Link] | None = None) -> BackpressureWeights:
    """Largest positive price differential per link; ties go to the lowest commodity index."""
    lam = prices.lam
    diff = lam[:, None, :] - lam[None, :, :]  # [b, e, d]
    commodity = np.argmax(diff, axis=2)
    w = np.maximum(np.take_along_axis(diff, commodity[:, :, None], axis=2)[:, :, 0], 0.0)
    np.fill_diagonal(w, 0.0)
    if links is not None:
        mask = np.zeros_like(w, dtype=bool)
        for l in links:
            mask[l.origin, l.end] = True
        w = np.where(mask, w, 0.0)
    return BackpressureWeights(w, commodity)


def dual_update(prices: DualPrices, x: np.ndarray, g: np.ndarray, stepsize: float) -> DualPrices:
    """Projected subgradient step on the dual prices.

    ``x[n, d]`` is the exogenous input rate and ``g[b, e, d]`` the goodput
    of commodity ``d`` on link ``b -> e``.
    """
    if stepsize <= 0:
        raise ValueError("stepsize must be positive")
    out = g.sum(axis=1)
    inn = g.sum(axis=0)
    lam = np.maximum(prices.lam + stepsize * (x - out + inn), 0.0)
    return DualPrices(lam, prices.destinations)


def link_rates(topo: NetworkTopology, rates: RateSet) -> np.ndarray:
    """Fixed rate per node pair: best isolated-link goodput rate at full power."""
    from .channel import LinkChannel

    N = topo.node_count
    R = np.zeros((N, N))
    for b in range(N):
        for e in range(N):
            if b == e or topo.gains[e, b] <= 0:
                continue
            ch = LinkChannel([[topo.gains[e, b]]], [topo.noise[e]])
            R[b, e] = max_goodput(ch, [topo.p_max[b]], 0, rates)[1]
    return R


def choose_links(topo: NetworkTopology, bw: BackpressureWeights, R: np.ndarray, prev_p):
    """One outgoing link per node with positive weight, picked by the receiver-selection score.

    Interference at each candidate receiver is measured from the previous
    iteration's powers ``prev_p``.  Nodes with no positive weight stay silent.
    """
    N = topo.node_count
    links, weights = [], []
    for n in range(N):
        cand = [Link(n, e) for e in range(N) if e != n and bw.w[n, e] > 0 and R[n, e] > 0]
        if not cand:
            continue
        interference = [sum(topo.gains[c.end, m] * prev_p[m] for m in range(N)
                            if m != n and m != c.end) for c in cand]
        link = select_receiver(topo, n, cand, [bw.w[n, c.end] for c in cand],
                               [R[n, c.end] for c in cand], interference)
        links.append(link)
        weights.append(bw.w[n, link.end])
    return links, weights


def solve_game(inst: SchedulingInstance, floors: dict, max_iters: int = 200, tol: float = 1e-7):
    """Run the power/price game, reusing the weight-free price floor of this link set."""
    key = tuple(inst.active_links)
    if key not in floors:
        floors[key] = unit_price_floor(inst)
    return run_table1(inst, max_iters=max_iters, tol=tol,
                      floor=inst.weights[:, None] * floors[key])


@dataclass
class NumTrace:
    lam: np.ndarray            # (T, N, D)
    x: np.ndarray              # (T, S)
    objective: np.ndarray      # (T,) sum of w_l g_l
    powers: np.ndarray         # (T, N), 0 for silent nodes
    goodput: np.ndarray        # (T, N, N, D)
    flagged: list              # iterations where the game did not converge

    def window_mean(self, arr, frac=0.2):
        k = max(1, int(len(arr) * frac))
        return np.mean(arr[-k:], axis=0)


def num_loop(topo: NetworkTopology, flows: Sequence[CommodityFlow], rates,
             scheduler: str = "game", stepsize: float = DEFAULT_STEPSIZE,
             iterations: int = 1000, seed: int = 0, goodput_mode: str = "expected",
             rate_cap: float = DEFAULT_RATE_CAP, game_tol: float = 1e-7,
             game_max_iters: int = 200, oracle_grid: int = 20) -> NumTrace:
    """Run the primal-dual congestion control / scheduling loop.

    ``rates`` is a :class:`RateSet` (each link then uses its best
    isolated-link rate) or an ``N x N`` matrix of fixed link rates.
    ``scheduler`` is ``"game"`` for the distributed power/price game or
    ``"oracle"`` for the refined brute-force optimum.  ``goodput_mode``
    picks expected goodputs or Bernoulli-realized transfers in the
    subgradient.
    """
    if scheduler not in ("game", "oracle"):
        raise ValueError(f"unknown scheduler {scheduler!r}")
    if goodput_mode not in ("expected", "realized"):
        raise ValueError(f"unknown goodput mode {goodput_mode!r}")
    N = topo.node_count
    R = link_rates(topo, rates) if isinstance(rates, RateSet) else np.asarray(rates, dtype=float)
    destinations = tuple(sorted({f.destination for f in flows}))
    dcol = {d: i for i, d in enumerate(destinations)}
    prices = DualPrices.zeros(N, destinations)
    rng = derive_rng(seed, "num_loop")
    floors: dict = {}

    T, S, D = iterations, len(flows), len(destinations)
    tr_lam = np.zeros((T, N, D))
    tr_x = np.zeros((T, S))
    tr_obj = np.zeros(T)
    tr_p = np.zeros((T, N))
    tr_g = np.zeros((T, N, N, D))
    flagged = []
    prev_p = np.zeros(N)

    for t in range(T):
        x = np.zeros((N, D))
        for s, f in enumerate(flows):
            xs = input_rate(f.utility, prices.lam[f.source, dcol[f.destination]], rate_cap)
            x[f.source, dcol[f.destination]] += xs
            tr_x[t, s] = xs

        bw = backpressure_weights(prices)
        links, weights = choose_links(topo, bw, R, prev_p)

        g = np.zeros((N, N, D))
        p_nodes = np.zeros(N)
        if links:
            mus = np.array([R[l.origin, l.end] for l in links])
            inst = SchedulingInstance(topo, links, weights, mus)
            if scheduler == "game":
                res = solve_game(inst, floors, game_max_iters, game_tol)
                if not res.converged:
                    flagged.append(t)
                p = res.state.powers
            else:
                p, _ = brute_force_schedule(inst, oracle_grid, refine=True)
            q = inst.q(p)
            for k, l in enumerate(links):
                d = bw.commodity[l.origin, l.end]
                if goodput_mode == "expected":
                    g[l.origin, l.end, d] = mus[k] * q[k]
                else:
                    g[l.origin, l.end, d] = mus[k] * (rng.random() < q[k])
                p_nodes[l.origin] = p[k]
            tr_obj[t] = float(np.dot(inst.weights, mus * q))
        # destinations absorb their own commodity
        for d, node in enumerate(destinations):
            g[node, :, d] = 0.0

        tr_lam[t] = prices.lam
        tr_p[t] = p_nodes
        tr_g[t] = g
        prev_p = p_nodes
        prices = dual_update(prices, x, g, stepsize)

    if flagged:
        log.warning("scheduling game hit max_iters in %d of %d iterations", len(flagged), T)
    return NumTrace(tr_lam, tr_x, tr_obj, tr_p, tr_g, flagged)


#: Gains of the four-node stand-in: cubic path loss on node positions
#: (0, 0), (1, 0), (1.8, 0.7), (1.8, -0.7), rounded to four decimals.
STAND_IN_GAINS = np.array([
    [0.0, 1.0, 0.1388, 0.1388],
    [1.0, 0.0, 0.8325, 0.8325],
    [0.1388, 0.8325, 0.0, 0.3644],
    [0.1388, 0.8325, 0.3644, 0.0],
])


def stand_in_four_node_topology() -> tuple:
    """Four-node, two-commodity scenario: source 0, destinations 2 and 3.

    Node 1 is a relay between the source and the two destinations.
    Returns ``(topo, flows, rates)``.
    """
    topo = NetworkTopology(gains=STAND_IN_GAINS, noise=0.05, p_min=0.05, p_max=2.0)
    flows = [CommodityFlow(0, 2), CommodityFlow(0, 3)]
    rates = RateSet.arange(0.5, 3.0, 0.5)
    return topo, flows, rates
