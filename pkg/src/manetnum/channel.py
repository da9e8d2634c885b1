"""
Outage-based link model under Rayleigh/Rayleigh fading.

A link succeeds when its SINR exceeds ``exp(mu) - 1`` for the scheduled
rate ``mu`` (nats per slot).  With Rayleigh fading on both the desired and
the interfering signals the success probability has the closed form

    q_l = exp(-s2 * gamma / (G_ll p_l)) * prod_{j != l} (1 + gamma G_lj p_j / (G_ll p_l))^-1

All functions here are pure; random draws take an explicit
:class:`numpy.random.Generator`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class Link:
    """Directed link from ``origin`` (transmitter) to ``end`` (receiver)."""

    origin: int
    end: int

    def __post_init__(self):
        if self.origin == self.end:
            raise ValueError(f"link origin and end must differ, got {self.origin}")


@dataclass
class NetworkTopology:
    """Nodes, slow-fading gains, noise powers and per-node power bounds.

    ``gains[i, j]`` is the path gain from transmitting node ``j`` to
    receiving node ``i``.  The diagonal is unused.
    """

    gains: np.ndarray
    noise: np.ndarray
    p_min: np.ndarray
    p_max: np.ndarray

    def __post_init__(self):
        self.gains = np.asarray(self.gains, dtype=float)
        n = self.gains.shape[0]
        self.noise = _broadcast(self.noise, n, "noise")
        self.p_min = _broadcast(self.p_min, n, "p_min")
        self.p_max = _broadcast(self.p_max, n, "p_max")
        if self.gains.shape != (n, n):
            raise ValueError(f"gain matrix must be square, got {self.gains.shape}")
        if n < 2:
            raise ValueError("a network needs at least two nodes")
        if not np.all(np.isfinite(self.gains)) or np.any(self.gains < 0):
            raise ValueError("gains must be finite and non-negative")
        if np.any(self.noise < 0):
            raise ValueError("noise powers must be non-negative")
        if np.any(self.p_min <= 0):
            raise ValueError("P_min must be strictly positive for every node")
        if np.any(self.p_max < self.p_min):
            raise ValueError("P_max must be >= P_min for every node")

    @property
    def node_count(self) -> int:
        return self.gains.shape[0]

    def link_channel(self, links: Sequence[Link], same_node_interference: bool = False) -> "LinkChannel":
        """Resolve node gains into the link-level gain matrix for ``links``.

        Entry ``[l, j]`` is the gain from the transmitter of link ``j`` to
        the receiver of link ``l``.  Links sharing a transmitter do not
        interfere unless ``same_node_interference`` is set, and a receiver
        never hears its own transmission (full duplex).
        """
        L = len(links)
        G = np.zeros((L, L))
        for l, a in enumerate(links):
            for j, b in enumerate(links):
                if j != l and b.origin == a.origin and not same_node_interference:
                    continue
                if b.origin == a.end:
                    continue
                G[l, j] = self.gains[a.end, b.origin]
        noise = np.array([self.noise[a.end] for a in links])
        return LinkChannel(G, noise)


@dataclass
class LinkChannel:
    """Link-level view: ``gains[l, l]`` direct gain, ``gains[l, j]`` interference gain."""

    gains: np.ndarray
    noise: np.ndarray

    def __post_init__(self):
        self.gains = np.atleast_2d(np.asarray(self.gains, dtype=float))
        L = self.gains.shape[0]
        if self.gains.shape != (L, L):
            raise ValueError(f"link gain matrix must be square, got {self.gains.shape}")
        self.noise = _broadcast(self.noise, L, "noise")
        if not np.all(np.isfinite(self.gains)) or np.any(self.gains < 0):
            raise ValueError("gains must be finite and non-negative")
        if np.any(self.noise < 0):
            raise ValueError("noise powers must be non-negative")

    @property
    def link_count(self) -> int:
        return self.gains.shape[0]


@dataclass(frozen=True)
class RateSet:
    """Finite, strictly ascending set of positive scheduling rates (nats/slot)."""

    rates: tuple = field(default=())

    def __post_init__(self):
        r = tuple(float(x) for x in self.rates)
        object.__setattr__(self, "rates", r)
        if not r:
            raise ValueError("rate set must be non-empty")
        if any(x <= 0 for x in r):
            raise ValueError("rates must be positive")
        if any(b <= a for a, b in zip(r, r[1:])):
            raise ValueError("rates must be strictly ascending")

    @classmethod
    def arange(cls, start: float, stop: float, step: float) -> "RateSet":
        """Rates ``start, start+step, ..., stop`` (inclusive, rounded to 12 digits)."""
        n = int(round((stop - start) / step)) + 1
        return cls(tuple(round(start + k * step, 12) for k in range(n)))

    def __iter__(self):
        return iter(self.rates)

    def __len__(self):
        return len(self.rates)

    def as_array(self) -> np.ndarray:
        return np.array(self.rates)

    @property
    def max_rate(self) -> float:
        return self.rates[-1]


def _broadcast(x, n, name):
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = np.full(n, float(arr))
    if arr.shape != (n,):
        raise ValueError(f"{name} must have length {n}, got shape {arr.shape}")
    return arr


def sinr_threshold(mu):
    """SINR needed to decode at rate ``mu``: ``exp(mu) - 1``."""
    mu = np.asarray(mu, dtype=float)
    if np.any(mu < 0):
        raise ValueError("rate must be non-negative")
    out = np.expm1(mu)
    return float(out) if out.ndim == 0 else out


def _check_link(ch: LinkChannel, p, l):
    p = np.asarray(p, dtype=float)
    if p.shape != (ch.link_count,):
        raise ValueError(f"power vector must have length {ch.link_count}")
    if p[l] <= 0:
        raise ValueError(f"transmit power of link {l} must be positive")
    if ch.gains[l, l] <= 0:
        raise ValueError(f"direct gain of link {l} must be positive")
    return p


def log_success_probability(ch: LinkChannel, p, l: int, mu: float) -> float:
    p = _check_link(ch, p, l)
    gamma = sinr_threshold(mu)
    g = ch.gains[l]
    signal = g[l] * p[l]
    ratio = gamma * g * p / signal
    ratio[l] = 0.0
    return float(-ch.noise[l] * gamma / signal - np.log1p(ratio).sum())


def success_probability(ch: LinkChannel, p, l: int, mu: float) -> float:
    """Closed-form probability that link ``l`` decodes at rate ``mu`` under powers ``p``."""
    return float(np.exp(log_success_probability(ch, p, l, mu)))


def success_probabilities(ch: LinkChannel, p, mu) -> np.ndarray:
    """Success probabilities of every link at once; ``mu`` is per link or scalar.

    Links with zero power are silent: they contribute no interference and
    get probability 0.
    """
    p = np.asarray(p, dtype=float)
    mu = np.broadcast_to(np.asarray(mu, dtype=float), p.shape)
    gamma = np.expm1(mu)
    G = ch.gains
    signal = np.diag(G) * p
    on = signal > 0
    q = np.zeros_like(p)
    s = signal[on]
    ratio = gamma[on, None] * G[on] * p[None, :] / s[:, None]
    idx = np.arange(len(p))[on]
    ratio[np.arange(len(idx)), idx] = 0.0
    q[on] = np.exp(-ch.noise[on] * gamma[on] / s - np.log1p(ratio).sum(axis=1))
    return q


def success_probability_measured(p_l: float, interference: float, sigma2: float,
                                 g_ll: float, mu: float) -> float:
    """Success probability when the receiver knows its interference level.

    The measured interference is treated as a deterministic extra noise
    term, so only the desired signal fades.
    """
    if p_l <= 0:
        raise ValueError("transmit power must be positive")
    if interference < 0:
        raise ValueError("interference must be non-negative")
    gamma = sinr_threshold(mu)
    return float(np.exp(-(interference + sigma2) * gamma / (g_ll * p_l)))


def goodput(ch: LinkChannel, p, l: int, mu: float) -> float:
    """Expected error-free rate ``mu * q``."""
    if mu == 0:
        _check_link(ch, p, l)
        return 0.0
    return mu * success_probability(ch, p, l, mu)


def max_goodput(ch: LinkChannel, p, l: int, rates: RateSet | Sequence[float]):
    """Best goodput over a finite rate set.

    Returns ``(g_max, mu_bar)``; ties go to the smallest rate.
    """
    rates = rates if isinstance(rates, RateSet) else RateSet(tuple(rates))
    best_g, best_mu = -1.0, None
    for mu in rates:
        g = goodput(ch, p, l, mu)
        if g > best_g:
            best_g, best_mu = g, mu
    return best_g, best_mu


@dataclass
class SuccessDerivatives:
    """First and second order partials of ``q_l`` (and ``log q_l``) at one point.

    Arrays indexed by link carry 0 at position ``l`` itself.
    """

    q: float
    dq_dpl: float
    dq_dpj: np.ndarray
    dq_dmu: float
    d2logq_dpl2: float
    d2logq_dpl_dpj: np.ndarray


def derivatives(ch: LinkChannel, p, l: int, mu: float) -> SuccessDerivatives:
    """Analytic partial derivatives of the Rayleigh success probability of link ``l``.

    Written in a form that stays finite for zero interference gains or
    zero interfering powers.
    """
    p = _check_link(ch, p, l)
    q = success_probability(ch, p, l, mu)
    gamma = sinr_threshold(mu)
    e_mu = np.exp(mu)
    g = ch.gains[l]
    G, pl, s2 = g[l], p[l], ch.noise[l]

    a = gamma * g * p  # gamma * G_lj * p_j
    a[l] = 0.0
    gj = gamma * g
    gj[l] = 0.0
    denom = G * pl + a  # G_ll p_l + gamma G_lj p_j

    dlog_dpl = s2 * gamma / (G * pl ** 2) + np.sum(a / (pl * denom))
    dlog_dpj = -gj / denom
    dlog_dpj[l] = 0.0
    dlog_dmu = -s2 * e_mu / (G * pl) - np.sum(e_mu * g * p * (np.arange(len(p)) != l) / denom)
    d2_pl2 = -2 * s2 * gamma / (G * pl ** 3) - np.sum(a * (2 * G * pl + a) / (pl ** 2 * denom ** 2))
    d2_cross = G * gj / denom ** 2
    d2_cross[l] = 0.0

    return SuccessDerivatives(
        q=q,
        dq_dpl=q * dlog_dpl,
        dq_dpj=q * dlog_dpj,
        dq_dmu=q * dlog_dmu,
        d2logq_dpl2=float(d2_pl2),
        d2logq_dpl_dpj=d2_cross,
    )


def sample_transmission(q: float, rng: np.random.Generator) -> int:
    """Bernoulli(q) success indicator."""
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"probability out of range: {q}")
    return int(rng.random() < q)
