"""
Brute-force goodput regions.

A region is sampled by sweeping a grid of feasible power vectors and
recording, per link, the best achievable goodput over the finite rate set.
With a per-link continuation probability ``delta`` (an erroneous packet is
dropped with probability ``1 - delta``) the per-link objective becomes
``mu * (1 - delta * (1 - q))``: ``delta = 1`` is pure ARQ, ``delta = 0``
always drops and the region degenerates to the box ``[0, max rate]^L``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import LinkChannel, RateSet

HULL_TOL = 1e-9


@dataclass
class DroppingProfile:
    """Per-link continuation probabilities; ``1 - delta`` is the dropping probability."""

    delta: np.ndarray

    def __post_init__(self):
        self.delta = np.atleast_1d(np.asarray(self.delta, dtype=float))
        if np.any((self.delta < 0) | (self.delta > 1)):
            raise ValueError("continuation probabilities must lie in [0, 1]")

    @classmethod
    def uniform(cls, value: float, n_links: int) -> "DroppingProfile":
        return cls(np.full(n_links, float(value)))


@dataclass
class PowerGrid:
    """Feasible power vectors to sweep.

    ``kind="box"``: every link power on ``points`` uniform values in
    ``[lower, upper]`` (per link).  ``kind="simplex"``: same per-axis values
    but only vectors with ``sum(p) <= total``, for a single transmitter
    splitting its power budget.
    """

    lower: np.ndarray
    upper: np.ndarray
    points: int = 50
    kind: str = "box"
    total: float | None = None

    def __post_init__(self):
        self.lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if self.lower.shape != self.upper.shape:
            raise ValueError("lower and upper bounds must have the same shape")
        if np.any(self.lower <= 0) or np.any(self.upper < self.lower):
            raise ValueError("need 0 < lower <= upper on every axis")
        if self.points < 2:
            raise ValueError("a power grid needs at least 2 points per axis")
        if self.kind not in ("box", "simplex"):
            raise ValueError(f"unknown grid kind {self.kind!r}")
        if self.kind == "simplex" and self.total is None:
            raise ValueError("simplex grid needs a total power budget")

    @property
    def dim(self) -> int:
        return self.lower.size

    def axes(self):
        return [np.linspace(lo, hi, self.points) for lo, hi in zip(self.lower, self.upper)]

    def vectors(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        P = np.stack([m.ravel() for m in mesh], axis=1)
        if self.kind == "simplex":
            P = P[P.sum(axis=1) <= self.total * (1 + 1e-12)]
        return P


@dataclass
class GoodputRegion:
    """Sampled goodput points plus, for two links, their convex hull."""

    raw_points: np.ndarray
    powers: np.ndarray
    rates: np.ndarray
    hull: np.ndarray | None = field(default=None)

    @property
    def link_count(self) -> int:
        return self.raw_points.shape[1]


def success_grid(ch: LinkChannel, P: np.ndarray, mu) -> np.ndarray:
    """Success probability of every link for every row of ``P``.

    ``mu`` is a common rate or one rate per link.
    """
    return np.exp(log_success_grid(ch, P, mu))


def log_success_grid(ch: LinkChannel, P: np.ndarray, mu) -> np.ndarray:
    gamma = np.broadcast_to(np.expm1(np.asarray(mu, dtype=float)), (ch.link_count,))
    G = ch.gains
    direct = np.diag(G)
    signal = P * direct  # (K, L)
    # interference ratio[k, l, j] = gamma_l G_lj p_j / (G_ll p_l)
    cross = G - np.diag(direct)
    ratio = gamma[None, :, None] * (P[:, None, :] * cross[None, :, :]) / signal[:, :, None]
    return -ch.noise * gamma / signal - np.log1p(ratio).sum(axis=2)


def enumerate_region(ch: LinkChannel, rates: RateSet, grid: PowerGrid,
                     delta: DroppingProfile | None = None) -> GoodputRegion:
    """Sample the achievable goodput set over ``grid``.

    For each power vector and link the rate maximizing
    ``mu * (1 - delta * (1 - q))`` is picked from ``rates`` (ties to the
    smallest rate).
    """
    if len(rates) == 0:
        raise ValueError("empty rate set")
    L = ch.link_count
    if grid.dim != L:
        raise ValueError(f"grid has {grid.dim} axes for {L} links")
    d = np.ones(L) if delta is None else np.broadcast_to(delta.delta, (L,))
    P = grid.vectors()
    best = np.full(P.shape, -1.0)
    best_mu = np.zeros(P.shape)
    for mu in rates:
        q = success_grid(ch, P, mu)
        val = mu * (1.0 - d * (1.0 - q))
        better = val > best
        best[better] = val[better]
        best_mu[better] = mu
    region = GoodputRegion(raw_points=best, powers=P, rates=best_mu)
    if L == 2:
        region.hull = convex_hull_2d(best)
    return region


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull_2d(points) -> np.ndarray:
    """Counter-clockwise hull of a goodput cloud closed towards the origin.

    The origin and the projections of every point on both axes are added
    first, since time-sharing with silence is always feasible.  Collinear
    boundary points are dropped.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] < 1 or pts.shape[1] != 2:
        raise ValueError("need at least one 2-D point")
    zeros = np.zeros(len(pts))
    aug = np.vstack([pts, np.c_[pts[:, 0], zeros], np.c_[zeros, pts[:, 1]], [[0.0, 0.0]]])
    uniq = sorted(set(map(tuple, aug)))
    if len(uniq) <= 2:
        return np.array(uniq)
    lower, upper = [], []
    for p in uniq:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(uniq):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def hull_area(hull: np.ndarray) -> float:
    if len(hull) < 3:
        return 0.0
    x, y = hull[:, 0], hull[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def staircase_area(points) -> float:
    """Area of the union of the boxes ``[0, g1] x [0, g2]`` (the downward closure)."""
    pts = np.asarray(points, dtype=float)
    order = np.argsort(-pts[:, 0], kind="stable")
    area, ymax = 0.0, 0.0
    xs = pts[order, 0]
    ys = pts[order, 1]
    for i in range(len(xs)):
        x_next = xs[i + 1] if i + 1 < len(xs) else 0.0
        ymax = max(ymax, ys[i])
        area += (xs[i] - x_next) * ymax
    return area


def contains(region: GoodputRegion, point, tol: float = HULL_TOL) -> bool:
    """Is ``point`` inside (or on) the region's convex hull?"""
    if region.hull is None:
        raise ValueError("region has no hull; hulls exist only for two links")
    return hull_contains(region.hull, point, tol)


def hull_contains(hull: np.ndarray, point, tol: float = HULL_TOL) -> bool:
    x = np.asarray(point, dtype=float)
    if np.any(x < -tol):
        return False
    h = np.asarray(hull, dtype=float)
    if len(h) == 1:
        return bool(np.all(np.abs(x - h[0]) <= tol))
    if len(h) == 2:
        a, b = h
        ab = b - a
        L2 = np.dot(ab, ab)
        # subnormal segments square to zero; treat them as a point
        t = 0.0 if L2 == 0 else np.clip(np.dot(x - a, ab) / L2, 0.0, 1.0)
        return bool(np.linalg.norm(a + t * ab - x) <= tol)
    for i in range(len(h)):
        a, b = h[i], h[(i + 1) % len(h)]
        if _cross(a, b, x) < -tol * np.linalg.norm(b - a):
            return False
    return True


def dominated(region: GoodputRegion, point, tol: float = HULL_TOL) -> bool:
    """Membership by dominance for any link count: some sample is componentwise >= point."""
    x = np.asarray(point, dtype=float)
    if np.any(x < -tol):
        return False
    return bool(np.any(np.all(region.raw_points >= x - tol, axis=1)))
