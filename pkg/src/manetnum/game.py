"""
Distributed power scheduling as a supermodular power/price game.

Each transmitting node ``n`` uses a single link with fixed rate ``mu_n``
and weight ``w_n`` (its backpressure differential).  The centralized
problem is

    max_p  sum_n w_n mu_n q_n(p)    s.t.  P_min <= p <= P_max

The game splits it into *power players*, each maximizing the concave payoff
``J_n = w_n mu_n log q_n + p_n c_n``, and *price players* ``(m, n)`` that
track the normalized interference price

    pi_hat[m, n] = w_m mu_m (d q_m / d p_n) / q_n  <= 0,    c_n = sum_m pi_hat[m, n].

Round-robin best responses started at the least strategy climb
monotonically to an equilibrium, and equilibria are exactly the KKT points
of the centralized problem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq, minimize

from .channel import Link, LinkChannel, NetworkTopology
from .optimize import golden_section_max
from .region import log_success_grid

PRICE_FLOOR_MARGIN = 0.10
DEFAULT_TOL = 1e-7
MAX_BRUTE_FORCE_NODES = 5
# largest log(q_m / q_n) kept in a price; exp(600) ~ 1e260
LOG_RATIO_CAP = 600.0


class NonConvergenceError(RuntimeError):
    pass


@dataclass
class SchedulingInstance:
    """Weighted-goodput scheduling problem with one active link per transmitter.

    ``weights`` and ``rates`` are indexed like ``active_links``.  The power
    bounds are those of each link's transmitting node.
    """

    topo: NetworkTopology
    active_links: Sequence[Link]
    weights: np.ndarray
    rates: np.ndarray
    channel: LinkChannel = field(init=False, repr=False)

    def __post_init__(self):
        self.active_links = list(self.active_links)
        K = len(self.active_links)
        origins = [l.origin for l in self.active_links]
        if len(set(origins)) != K:
            raise ValueError("each transmitting node may use a single link")
        self.weights = np.broadcast_to(np.asarray(self.weights, dtype=float), (K,)).copy()
        self.rates = np.broadcast_to(np.asarray(self.rates, dtype=float), (K,)).copy()
        if not np.all(np.isfinite(self.weights)) or np.any(self.weights < 0):
            raise ValueError("weights must be finite and non-negative")
        if np.any(self.rates < 0):
            raise ValueError("rates must be non-negative")
        self.channel = self.topo.link_channel(self.active_links)
        if np.any(np.diag(self.channel.gains) <= 0):
            raise ValueError("every active link needs a positive direct gain")
        self.p_min = self.topo.p_min[origins].copy()
        self.p_max = self.topo.p_max[origins].copy()
        # cached per-instance constants
        self._gamma = np.expm1(self.rates)
        self._direct = np.diag(self.channel.gains).copy()
        self._cross = self.channel.gains - np.diag(self._direct)
        self._wmu = self.weights * self.rates

    @property
    def size(self) -> int:
        return len(self.active_links)

    # -- vectorized model pieces ------------------------------------------

    def log_q(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        signal = self._direct * p
        ratio = self._gamma[:, None] * self._cross * p[None, :] / signal[:, None]
        return -self.channel.noise * self._gamma / signal - np.log1p(ratio).sum(axis=1)

    def q(self, p) -> np.ndarray:
        return np.exp(self.log_q(p))

    def dq(self, p):
        """``(q, D)`` with ``D[m, n] = d q_m / d p_n``."""
        p = np.asarray(p, dtype=float)
        q = self.q(p)
        g, G, C = self._gamma, self._direct, self._cross
        a = g[:, None] * C * p[None, :]  # gamma_m G_mn p_n
        denom = (G * p)[:, None] + a
        D = -q[:, None] * g[:, None] * C / denom
        own = self.channel.noise * g / (G * p ** 2) + (a / (p[:, None] * denom)).sum(axis=1)
        np.fill_diagonal(D, q * own)
        return q, D

    def objective(self, p) -> float:
        return float(np.dot(self._wmu, self.q(p)))

    def gradient(self, p) -> np.ndarray:
        _, D = self.dq(p)
        return self._wmu @ D


@dataclass
class GameState:
    powers: np.ndarray
    prices: np.ndarray
    sum_prices: np.ndarray


@dataclass
class TraceRow:
    iteration: int
    powers: np.ndarray
    sum_prices: np.ndarray
    objective: float


@dataclass
class GameResult:
    state: GameState
    trace: list
    converged: bool
    iterations: int


@dataclass
class KktResidual:
    stationarity: np.ndarray
    complementarity: np.ndarray
    nu_lower: np.ndarray
    nu_upper: np.ndarray
    gradient: np.ndarray

    @property
    def max_residual(self) -> float:
        return float(max(np.max(np.abs(self.stationarity)), np.max(self.complementarity)))


# -- prices ----------------------------------------------------------------

def raw_price(inst: SchedulingInstance, p, m: int, n: int) -> float:
    """Interference price ``w_m mu_m dq_m/dp_n`` charged by ``m`` to ``n``."""
    if m == n:
        raise ValueError("a node does not price itself")
    _, D = inst.dq(p)
    return float(inst._wmu[m] * D[m, n])


def _unit_prices(gamma, direct, cross, mu, P, logq):
    """``mu_m dq_m/dp_n / q_n`` for power rows ``P``, with ``q_m / q_n`` formed in log space.

    Starved links have ``q`` below the double range; the ratio is capped
    instead of turning into ``0/0``.
    """
    denom = (direct * P)[..., :, None] + gamma[:, None] * cross * P[..., None, :]
    ratio = np.exp(np.minimum(logq[..., :, None] - logq[..., None, :], LOG_RATIO_CAP))
    with np.errstate(invalid="ignore", divide="ignore"):
        pr = -mu[:, None] * gamma[:, None] * cross / denom * ratio
    return np.where(cross > 0, pr, 0.0)


def price_matrix(inst: SchedulingInstance, p) -> np.ndarray:
    """All normalized prices ``pi_hat[m, n]`` (zero diagonal)."""
    p = np.asarray(p, dtype=float)
    P = inst.weights[:, None] * _unit_prices(inst._gamma, inst._direct, inst._cross,
                                              inst.rates, p, inst.log_q(p))
    np.fill_diagonal(P, 0.0)
    return P


def normalized_price(inst: SchedulingInstance, p, m: int, n: int) -> float:
    if m == n:
        raise ValueError("a node does not price itself")
    return float(price_matrix(inst, p)[m, n])


def unit_price_floor(inst: SchedulingInstance, grid_points: int | None = None) -> np.ndarray:
    """Grid minimum of ``pi_hat / w_m`` over the power box, widened by 10%.

    The price floor depends on the weights only through the factor
    ``w_m``, so callers that re-weight one link set can cache this.
    """
    K = inst.size
    if grid_points is None:
        grid_points = {1: 2, 2: 60, 3: 24, 4: 12}.get(K, 8)
    axes = [np.linspace(lo, hi, grid_points) for lo, hi in zip(inst.p_min, inst.p_max)]
    P = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=1)
    floor = np.zeros((K, K))
    for start in range(0, len(P), 50000):
        Pc = P[start:start + 50000]
        logq = log_success_grid(inst.channel, Pc, inst.rates)
        pr = _unit_prices(inst._gamma, inst._direct, inst._cross, inst.rates, Pc, logq)
        floor = np.minimum(floor, pr.min(axis=0))
    np.fill_diagonal(floor, 0.0)
    return (1.0 + PRICE_FLOOR_MARGIN) * floor


def price_floor(inst: SchedulingInstance, grid_points: int | None = None) -> np.ndarray:
    """Lower end of each price player's strategy interval."""
    return inst.weights[:, None] * unit_price_floor(inst, grid_points)


def best_response_price(inst: SchedulingInstance, p, m: int, n: int, floor: np.ndarray) -> float:
    """Projection of the current price onto ``[floor[m, n], 0]``."""
    return float(np.clip(normalized_price(inst, p, m, n), floor[m, n], 0.0))


# -- power players ---------------------------------------------------------

def payoff(inst: SchedulingInstance, n: int, p_n: float, p, c_n: float) -> float:
    """``J_n = w_n mu_n log q_n + p_n c_n`` with ``p_n`` substituted into ``p``."""
    if p_n <= 0:
        raise ValueError("power must be positive")
    x = np.array(p, dtype=float)
    x[n] = p_n
    return float(inst._wmu[n] * inst.log_q(x)[n] + p_n * c_n)


def _marginal(inst: SchedulingInstance, n: int, p, c_n: float):
    """``dJ_n/dp_n`` as a scalar closure (decreasing in ``p_n``)."""
    w = float(inst._wmu[n])
    G = inst._direct[n]
    g = inst._gamma[n]
    a = float(inst.channel.noise[n] * g / G)
    bs = [float(b) for b in g * inst._cross[n] * np.asarray(p) / G if b > 0]

    def h(x):
        s = a / (x * x)
        for b in bs:
            s += b / (x * (x + b))
        return w * s + c_n

    return h


def best_response_power(inst: SchedulingInstance, n: int, p, c_n: float,
                        method: str = "root") -> float:
    """Maximizer of ``J_n`` over ``[P_min, P_max]`` given the others' powers.

    ``method="root"`` solves ``dJ_n/dp_n = 0`` by Brent's method,
    ``method="golden"`` runs a derivative-free golden-section search.
    Both rely on ``J_n`` being concave in ``p_n``.
    """
    lo, hi = float(inst.p_min[n]), float(inst.p_max[n])
    if method == "golden":
        if hi <= lo:
            return lo
        f = lambda x: payoff(inst, n, x, p, c_n)
        x = golden_section_max(f, lo, hi, tol=1e-8 * (hi - lo))
        # the search never evaluates the endpoints themselves
        return max((lo, x, hi), key=f)
    if method != "root":
        raise ValueError(f"unknown method {method!r}")
    h = _marginal(inst, n, p, c_n)
    if h(hi) >= 0:
        return hi
    if hi <= lo or h(lo) <= 0:
        return lo
    return brentq(h, lo, hi, xtol=1e-14 * hi, rtol=4 * np.finfo(float).eps)


# -- round-robin best responses --------------------------------------------

def run_table1(inst: SchedulingInstance, max_iters: int = 200, tol: float = DEFAULT_TOL,
               floor: np.ndarray | None = None,
               price_estimator: Callable | None = None,
               init: np.ndarray | None = None) -> GameResult:
    """Round-robin best responses from the least joint strategy.

    Each iteration runs a Gauss-Seidel power phase in ascending node order
    followed by a price phase at the new powers.  Stops once powers and
    prices move by less than ``tol`` (sup norm).  ``price_estimator(p)``
    may replace the exact price sums, e.g. by an over-the-air estimate.
    ``init`` warm-starts the powers instead of using ``P_min``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if floor is None:
        floor = price_floor(inst)
    p = inst.p_min.copy() if init is None else np.clip(np.asarray(init, dtype=float), inst.p_min, inst.p_max)
    prices = floor.copy()
    np.fill_diagonal(prices, 0.0)
    c = prices.sum(axis=0)
    trace = [TraceRow(0, p.copy(), c.copy(), inst.objective(p))]
    converged = False
    t = 0
    for t in range(1, max_iters + 1):
        p_prev, prices_prev = p.copy(), prices
        for k in range(inst.size):
            p[k] = best_response_power(inst, k, p, c[k])
        prices = np.clip(price_matrix(inst, p), floor, 0.0)
        c = prices.sum(axis=0) if price_estimator is None else np.asarray(price_estimator(p))
        trace.append(TraceRow(t, p.copy(), c.copy(), inst.objective(p)))
        if np.max(np.abs(p - p_prev)) < tol and np.max(np.abs(prices - prices_prev)) < tol:
            converged = True
            break
    state = GameState(p, prices, c)
    return GameResult(state, trace, converged, t)


# -- optimality ------------------------------------------------------------

def kkt_residual(inst: SchedulingInstance, p, bound_tol: float = 1e-10) -> KktResidual:
    """Violation of the stationarity and complementary-slackness conditions.

    Interior coordinates get zero multipliers and residual ``|grad|``; a
    coordinate at a bound gets the sign-consistent multiplier and residual
    equal to the wrong-sign part of the gradient.
    """
    p = np.asarray(p, dtype=float)
    if np.any(p < inst.p_min - bound_tol) or np.any(p > inst.p_max + bound_tol):
        raise ValueError("power vector outside bounds")
    grad = inst.gradient(p)
    span = np.maximum(inst.p_max - inst.p_min, 1.0)
    at_lo = p <= inst.p_min + bound_tol * span
    at_hi = p >= inst.p_max - bound_tol * span
    nu_l = np.where(at_lo & ~at_hi, np.maximum(-grad, 0.0), 0.0)
    nu_u = np.where(at_hi, np.maximum(grad, 0.0), 0.0)
    stat = grad + nu_l - nu_u
    comp = np.maximum(nu_l * (p - inst.p_min), nu_u * (inst.p_max - p))
    return KktResidual(stat, np.abs(comp), nu_l, nu_u, grad)


def _open_grid_objective(inst: SchedulingInstance, grid_points: int):
    """Objective on the full product grid using broadcasting (no per-point loop)."""
    K = inst.size
    axes = [np.linspace(lo, hi, grid_points) for lo, hi in zip(inst.p_min, inst.p_max)]
    shape = [1] * K

    def ax(i):
        s = list(shape)
        s[i] = grid_points
        return axes[i].reshape(s)

    total = 0.0
    for n in range(K):
        if inst._wmu[n] == 0:
            continue
        pn = ax(n)
        sig = inst._direct[n] * pn
        logq = -inst.channel.noise[n] * inst._gamma[n] / sig
        for j in range(K):
            if j != n and inst._cross[n, j] > 0:
                logq = logq - np.log1p(inst._gamma[n] * inst._cross[n, j] * ax(j) / sig)
        total = total + inst._wmu[n] * np.exp(logq)
    total = np.broadcast_to(total, (grid_points,) * K)
    return axes, total


def brute_force_schedule(inst: SchedulingInstance, grid_points: int = 20, refine: bool = False):
    """Exhaustive grid search for the weighted-goodput maximum.

    Ties go to the lexicographically smallest power vector.  With
    ``refine`` the best grid point is polished by a bounded quasi-Newton
    run.  Returns ``(p, objective)``.
    """
    if inst.size > MAX_BRUTE_FORCE_NODES:
        raise ValueError(f"brute force limited to {MAX_BRUTE_FORCE_NODES} nodes")
    axes, vals = _open_grid_objective(inst, grid_points)
    idx = np.unravel_index(int(np.argmax(vals)), vals.shape)
    p = np.array([axes[i][k] for i, k in enumerate(idx)])
    if refine:
        p = local_maximize(inst, p)
    return p, inst.objective(p)


def local_maximize(inst: SchedulingInstance, p0) -> np.ndarray:
    """Bounded local ascent from ``p0`` to a KKT point."""
    scale = max(float(np.max(inst._wmu)), 1e-300)
    res = minimize(lambda x: -inst.objective(x) / scale, np.asarray(p0, dtype=float),
                   jac=lambda x: -inst.gradient(x) / scale, method="L-BFGS-B",
                   bounds=list(zip(inst.p_min, inst.p_max)),
                   options={"ftol": 1e-15, "gtol": 1e-13, "maxiter": 2000})
    p = np.clip(res.x, inst.p_min, inst.p_max)
    return _polish(inst, p)


def _polish(inst: SchedulingInstance, p, iters: int = 20) -> np.ndarray:
    """Projected Newton steps on the free coordinates (finite-difference Hessian)."""
    p = p.copy()
    for _ in range(iters):
        grad = inst.gradient(p)
        span = inst.p_max - inst.p_min
        free = ~(((p <= inst.p_min + 1e-12 * span) & (grad <= 0)) |
                 ((p >= inst.p_max - 1e-12 * span) & (grad >= 0)))
        if not free.any() or np.max(np.abs(grad[free])) < 1e-14:
            break
        idx = np.flatnonzero(free)
        H = np.empty((len(idx), len(idx)))
        for a, i in enumerate(idx):
            h = 1e-6 * p[i]
            e = np.zeros_like(p)
            e[i] = h
            H[:, a] = (inst.gradient(p + e)[idx] - inst.gradient(p - e)[idx]) / (2 * h)
        H = 0.5 * (H + H.T)
        if np.any(np.linalg.eigvalsh(H) >= 0):
            break
        step = np.linalg.solve(H, -grad[idx])
        trial = p.copy()
        trial[idx] = np.clip(p[idx] + step, inst.p_min[idx], inst.p_max[idx])
        if inst.objective(trial) < inst.objective(p) - 1e-15:
            break
        p = trial
    return p


def multistart_kkt_points(inst: SchedulingInstance, starts: int, rng: np.random.Generator):
    """Local maxima reached from random starting points (duplicates kept)."""
    pts = []
    for _ in range(starts):
        x0 = rng.uniform(inst.p_min, inst.p_max)
        pts.append(local_maximize(inst, x0))
    return pts


def best_response_map(inst: SchedulingInstance, p) -> np.ndarray:
    """Every power player's best response to ``p`` and the prices it induces."""
    p = np.asarray(p, dtype=float)
    c = price_matrix(inst, p).sum(axis=0)
    return np.array([best_response_power(inst, n, p, c[n]) for n in range(inst.size)])


# -- receiver choice and over-the-air pricing ------------------------------

def select_receiver(topo: NetworkTopology, n: int, connectivity: Sequence[Link], weights,
                    rates, interference, power: float | None = None) -> Link:
    """Pick the link maximizing the Markov-bound score

        w mu / (e^mu - 1) * G p / (I + sigma^2)

    among ``connectivity`` (links out of ``n`` with positive weight).  Ties
    go to the earliest candidate.
    """
    if not connectivity:
        raise ValueError(f"node {n} has an empty connectivity set")
    p = topo.p_max[n] if power is None else power
    best, best_score = None, -math.inf
    for link, w, mu, I in zip(connectivity, weights, rates, interference):
        if link.origin != n:
            raise ValueError(f"link {link} does not start at node {n}")
        score = w * mu / math.expm1(mu) * topo.gains[link.end, n] * p / (I + topo.noise[link.end])
        if score > best_score:
            best, best_score = link, score
    return best


def broadcast_powers(inst: SchedulingInstance, p, interference=None) -> np.ndarray:
    """Per-link broadcast level ``phi_m = w_m mu_m q_hat_m gamma_m / (G_mm p_m)``.

    ``q_hat`` is the measured-interference success probability; the mean
    interference ``sum_j G_mj p_j`` is used when none is supplied.
    """
    p = np.asarray(p, dtype=float)
    if interference is None:
        interference = inst._cross @ p
    q_hat = np.exp(-(interference + inst.channel.noise) * inst._gamma / (inst._direct * p))
    return inst._wmu * q_hat * inst._gamma / (inst._direct * p)


def measured_success(inst: SchedulingInstance, p, interference=None) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if interference is None:
        interference = inst._cross @ p
    return np.exp(-(interference + inst.channel.noise) * inst._gamma / (inst._direct * p))


def aggregate_prices_over_air(ch: LinkChannel, phi, fading, n: int, q_n: float,
                              sigma2: float = 0.0, noise_draw=None) -> float:
    """Recover the price sum ``c_n`` from the superposed broadcasts at node ``n``.

    Every other link's receiver broadcasts with power ``phi_m``; node ``n``
    hears ``sum_m G[m, n] F_m phi_m + noise`` over the reciprocal channel.
    ``fading`` holds draws ``F_m`` (shape ``(M,)`` or ``(symbols, M)``) and
    the received power is averaged over symbols.  The known noise level
    ``sigma2`` is subtracted before dividing by ``-q_n``.  Without
    ``noise_draw`` the noise power is exactly ``sigma2`` and cancels; with
    it the per-symbol noise power is ``sigma2 * noise_draw``.
    """
    phi = np.asarray(phi, dtype=float)
    if np.any(phi < 0):
        raise ValueError("broadcast powers must be non-negative")
    F = np.atleast_2d(np.asarray(fading, dtype=float))
    gains = ch.gains[:, n].copy()
    gains[n] = 0.0
    received = F @ (gains * phi)
    if noise_draw is None:
        # |Y|^2 - sigma2 is the signal part exactly; skip the round trip
        return float(-np.mean(received) / q_n)
    received = received + sigma2 * np.asarray(noise_draw, dtype=float)
    return float(-(np.mean(received) - sigma2) / q_n)


def over_the_air_price_sums(inst: SchedulingInstance, p, rng: np.random.Generator,
                            symbols: int = 10_000, noisy: bool = False) -> np.ndarray:
    """Estimated ``c`` for all nodes using unit-mean Rayleigh power draws.

    ``noisy`` adds exponential fluctuations of the receiver noise power on
    top of the fading; by default the noise power is the constant ``sigma2``.
    """
    phi = broadcast_powers(inst, p)
    q_hat = measured_success(inst, p)
    K = inst.size
    out = np.empty(K)
    for n in range(K):
        F = rng.exponential(1.0, size=(symbols, K))
        noise = rng.exponential(1.0, size=symbols) if noisy else None
        out[n] = aggregate_prices_over_air(inst.channel, phi, F, n, q_hat[n],
                                           sigma2=inst.channel.noise[n], noise_draw=noise)
    return out


def exact_over_the_air_sums(inst: SchedulingInstance, p) -> np.ndarray:
    """Mean-fading price sums ``-(1/q_hat_n) sum_m G[m, n] phi_m``."""
    phi = broadcast_powers(inst, p)
    q_hat = measured_success(inst, p)
    return -(inst._cross * phi[:, None]).sum(axis=0) / q_hat


# -- random instances ------------------------------------------------------

def random_instance(rng: np.random.Generator, n_nodes: int) -> SchedulingInstance:
    """Random instance with ``n_nodes`` transmitters, each with its own receiver.

    Transmitter ``n`` is node ``n`` and its receiver is node ``n_nodes + n``,
    so every link is interfered by every other transmitter.
    """
    N = 2 * n_nodes
    G = rng.uniform(0.05, 0.5, size=(N, N))
    for n in range(n_nodes):
        G[n_nodes + n, n] = rng.uniform(0.8, 2.0)
    np.fill_diagonal(G, 0.0)
    p_min = np.full(N, 0.1)
    p_max = np.full(N, 1.0)
    p_min[:n_nodes] = rng.uniform(0.05, 0.2, size=n_nodes)
    p_max[:n_nodes] = rng.uniform(2.0, 10.0, size=n_nodes)
    topo = NetworkTopology(gains=G, noise=rng.uniform(0.05, 0.5, size=N), p_min=p_min, p_max=p_max)
    links = [Link(n, n_nodes + n) for n in range(n_nodes)]
    return SchedulingInstance(topo, links, weights=rng.uniform(0.5, 2.0, size=n_nodes),
                              rates=rng.uniform(0.3, 2.0, size=n_nodes))
