"""
Slotted multi-commodity queues with outage, ARQ retention and dropping.

Per slot and scheduled link ``l`` carrying commodity ``d`` at rate ``mu``:

* the transmitter sends ``s = min(u_b^d, mu)`` (fluid amount);
* the packet succeeds with ``X ~ Bernoulli(q_l)`` evaluated at ``mu``;
* on failure it is retained with probability ``delta`` (``A = 1``) and
  dropped otherwise, so the backlog leaves when ``1 - A (1 - X) = 1``;
* the receiver is credited ``s X``; dropped data is lost, and the
  destination of a commodity absorbs it.

Arrivals are added after service, as in the usual queue recursion.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channel import Link, NetworkTopology, RateSet, success_probabilities
from .game import SchedulingInstance
from .num import (CommodityFlow, DualPrices, backpressure_weights, choose_links,
                  link_rates, solve_game)
from .seeding import derive_rng

STABILITY_SLOPE = 1e-3


@dataclass
class QueueMatrix:
    """Backlogs ``u[n, d]``; ``destinations[d]`` is the node absorbing commodity ``d``."""

    u: np.ndarray
    destinations: tuple

    def __post_init__(self):
        self.u = np.array(self.u, dtype=float)
        self.destinations = tuple(int(d) for d in self.destinations)
        if self.u.ndim != 2 or self.u.shape[1] != len(self.destinations):
            raise ValueError("backlog matrix must be N x D")
        if np.any(self.u < 0):
            raise ValueError("backlogs must be non-negative")
        for d, node in enumerate(self.destinations):
            self.u[node, d] = 0.0

    @classmethod
    def empty(cls, n_nodes: int, destinations: Sequence[int]) -> "QueueMatrix":
        return cls(np.zeros((n_nodes, len(destinations))), tuple(destinations))

    @property
    def total(self) -> float:
        return float(self.u.sum())


@dataclass
class ArrivalProcess:
    """Exogenous arrivals with mean ``mean_rates[n, d]`` per slot."""

    mean_rates: np.ndarray
    distribution: str = "poisson"

    def __post_init__(self):
        self.mean_rates = np.asarray(self.mean_rates, dtype=float)
        if np.any(self.mean_rates < 0):
            raise ValueError("arrival rates must be non-negative")
        if self.distribution not in ("poisson", "deterministic"):
            raise ValueError(f"unknown arrival distribution {self.distribution!r}")

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        if self.distribution == "deterministic":
            return self.mean_rates.copy()
        return rng.poisson(self.mean_rates).astype(float)


@dataclass
class DropPolicy:
    """Continuation probabilities ``delta[b, e]`` for the link ``b -> e`` (scalar allowed)."""

    delta: np.ndarray | float = 1.0

    def __post_init__(self):
        self.delta = np.asarray(self.delta, dtype=float)
        if np.any((self.delta < 0) | (self.delta > 1)):
            raise ValueError("continuation probabilities must lie in [0, 1]")

    def for_link(self, link: Link) -> float:
        if self.delta.ndim == 0:
            return float(self.delta)
        return float(self.delta[link.origin, link.end])


@dataclass(frozen=True)
class ScheduledLink:
    link: Link
    commodity: int
    rate: float
    power: float


@dataclass
class SlotCounters:
    """Running totals used to check conservation and dropping frequencies."""

    attempts: int = 0
    errors: int = 0
    drops: int = 0
    sent: float = 0.0
    delivered: float = 0.0
    dropped: float = 0.0
    absorbed: float = 0.0


def step(queues: QueueMatrix, topo: NetworkTopology, schedule: Sequence[ScheduledLink],
         drops: DropPolicy, arrivals: np.ndarray, rng: np.random.Generator,
         counters: SlotCounters | None = None, success=None) -> QueueMatrix:
    """One slot of the queue recursion.

    ``success`` optionally overrides the per-link success probabilities
    (one per scheduled link); by default they come from the closed form at
    the scheduled powers and rates.
    """
    u = queues.u.copy()
    arrivals = np.asarray(arrivals, dtype=float)
    if arrivals.shape != u.shape:
        raise ValueError(f"arrivals must have shape {u.shape}")
    if schedule:
        if success is None:
            ch = topo.link_channel([s.link for s in schedule])
            success = success_probabilities(ch, [s.power for s in schedule],
                                            [s.rate for s in schedule])
        x = rng.random(len(schedule)) < np.asarray(success)
        keep = rng.random(len(schedule))
        inflow = np.zeros_like(u)
        for k, s in enumerate(schedule):
            b, e, d = s.link.origin, s.link.end, s.commodity
            sent = min(u[b, d], s.rate)
            retained = not x[k] and keep[k] < drops.for_link(s.link)
            if counters is not None:
                counters.attempts += 1
                counters.errors += int(not x[k])
                counters.drops += int(not x[k] and not retained)
            if retained:
                continue
            u[b, d] -= sent
            if x[k]:
                inflow[e, d] += sent
            if counters is not None:
                counters.sent += float(sent)
                if x[k]:
                    counters.delivered += float(sent)
                else:
                    counters.dropped += float(sent)
        u += inflow
    for d, node in enumerate(queues.destinations):
        if counters is not None:
            counters.absorbed += float(u[node, d])
        u[node, d] = 0.0
    u = np.maximum(u + arrivals, 0.0)
    for d, node in enumerate(queues.destinations):
        u[node, d] = 0.0
    return QueueMatrix(u, queues.destinations)


def backlog_slope(total: np.ndarray) -> float:
    """Least-squares slope of the total backlog over the second half of the run."""
    y = np.asarray(total, dtype=float)
    y = y[len(y) // 2:]
    t = np.arange(len(y), dtype=float)
    return float(np.polyfit(t, y, 1)[0])


@dataclass
class StabilityReport:
    total_backlog: np.ndarray            # (T,)
    backlog: np.ndarray                  # (T, D) per commodity
    mean_backlog: np.ndarray             # (N, D)
    slope: float
    threshold: float
    counters: SlotCounters = field(default_factory=SlotCounters)

    @property
    def stable(self) -> bool:
        return self.slope <= self.threshold


def _fixed_schedule(u: np.ndarray, fixed: Sequence[ScheduledLink]):
    """Keep fixed links and powers, pick the commodity with the largest positive backlog differential."""
    out = []
    for s in fixed:
        diff = u[s.link.origin] - u[s.link.end]
        d = int(np.argmax(diff))
        out.append(ScheduledLink(s.link, d if diff[d] > 0 else s.commodity, s.rate, s.power))
    return out


def _game_schedule(topo: NetworkTopology, queues: QueueMatrix, R: np.ndarray, prev_p, floors: dict):
    """Goodput backpressure: backlogs act as prices, the game sets powers."""
    N = topo.node_count
    bw = backpressure_weights(DualPrices(queues.u, queues.destinations))
    links, weights = choose_links(topo, bw, R, prev_p)
    p_nodes = np.zeros(N)
    if not links:
        return [], p_nodes
    mus = np.array([R[l.origin, l.end] for l in links])
    inst = SchedulingInstance(topo, links, weights, mus)
    p = solve_game(inst, floors).state.powers
    sched = []
    for k, l in enumerate(links):
        sched.append(ScheduledLink(l, int(bw.commodity[l.origin, l.end]), float(mus[k]), float(p[k])))
        p_nodes[l.origin] = p[k]
    return sched, p_nodes


def run_stability_experiment(topo: NetworkTopology, flows: Sequence[CommodityFlow], base_rates,
                             scale: float, policy: str = "fixed",
                             fixed_schedule: Sequence[ScheduledLink] | None = None,
                             rates: RateSet | np.ndarray | None = None,
                             slots: int = 50_000, seed: int = 0,
                             drops: DropPolicy | None = None, distribution: str = "poisson",
                             threshold: float = STABILITY_SLOPE) -> StabilityReport:
    """Simulate ``slots`` slots with arrivals ``scale * base_rates`` (one per flow).

    ``policy="fixed"`` keeps the links, rates and powers of
    ``fixed_schedule`` and only picks commodities by backlog differential;
    ``policy="goodput_backpressure"`` reruns receiver selection and the
    scheduling game every slot with backlogs as weights.
    """
    if policy not in ("fixed", "goodput_backpressure"):
        raise ValueError(f"unknown policy {policy!r}")
    if policy == "fixed" and not fixed_schedule:
        raise ValueError("fixed policy needs a schedule")
    if policy == "goodput_backpressure" and rates is None:
        raise ValueError("goodput_backpressure policy needs a rate set")
    base_rates = np.asarray(base_rates, dtype=float)
    if base_rates.shape != (len(flows),):
        raise ValueError("need one base rate per flow")
    N = topo.node_count
    destinations = tuple(sorted({f.destination for f in flows}))
    dcol = {d: i for i, d in enumerate(destinations)}
    mean = np.zeros((N, len(destinations)))
    for f, r in zip(flows, base_rates):
        mean[f.source, dcol[f.destination]] += scale * r
    arrivals = ArrivalProcess(mean, distribution)
    drops = drops or DropPolicy(1.0)
    R = None
    if policy == "goodput_backpressure":
        R = link_rates(topo, rates) if isinstance(rates, RateSet) else np.asarray(rates, dtype=float)

    rng_arr = derive_rng(seed, "queue_arrivals")
    rng_ch = derive_rng(seed, "queue_channel")
    queues = QueueMatrix.empty(N, destinations)
    counters = SlotCounters()
    total = np.zeros(slots)
    per_comm = np.zeros((slots, len(destinations)))
    acc = np.zeros_like(queues.u)
    prev_p = np.zeros(N)
    floors: dict = {}
    fixed_q = None
    if policy == "fixed":
        ch = topo.link_channel([s.link for s in fixed_schedule])
        fixed_q = success_probabilities(ch, [s.power for s in fixed_schedule],
                                        [s.rate for s in fixed_schedule])
    for t in range(slots):
        if policy == "fixed":
            sched = _fixed_schedule(queues.u, fixed_schedule)
        else:
            sched, prev_p = _game_schedule(topo, queues, R, prev_p, floors)
        queues = step(queues, topo, sched, drops, arrivals.sample(rng_arr), rng_ch, counters,
                      success=fixed_q)
        total[t] = queues.total
        per_comm[t] = queues.u.sum(axis=0)
        acc += queues.u
    return StabilityReport(total, per_comm, acc / slots, backlog_slope(total), threshold, counters)
