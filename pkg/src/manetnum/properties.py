"""
Randomized checks of the structural properties of the success function
(P1-P5) and of the maximum-goodput function (P'1-P'4).

Every check evaluates the defining inequality on concrete numbers and
records the slack; a report with ``violations == 0`` is a passing run.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .channel import LinkChannel, RateSet, max_goodput, success_probability

#: Monotonicity is "strict" when the log-domain increment exceeds this.
STRICT_MARGIN = 1e-12
#: Constant-differences checks must hold to this absolute level.
EXACT_TOL = 1e-12
RATE_RANGE = (0.1, 3.0)


@dataclass
class PropertyReport:
    property_id: str
    samples: int = 0
    violations: int = 0
    worst_margin: float = np.inf
    note: str = ""

    def record(self, slack: float, ok: bool):
        self.samples += 1
        if not ok:
            self.violations += 1
        self.worst_margin = min(self.worst_margin, float(slack))

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def as_row(self):
        return [self.property_id, self.samples, self.violations, self.worst_margin]


def random_link_channel(rng: np.random.Generator, n_links: int) -> LinkChannel:
    """Random interference-coupled channel: every link hears every other one."""
    G = rng.uniform(0.05, 1.0, size=(n_links, n_links))
    np.fill_diagonal(G, rng.uniform(0.5, 2.0, size=n_links))
    noise = rng.uniform(0.05, 1.0, size=n_links)
    return LinkChannel(G, noise)


def _log_uniform(rng, lo, hi, size=None):
    return np.exp(rng.uniform(np.log(lo), np.log(hi), size=size))


def _ordered_pair(rng, draw):
    """Two draws ``a < b`` that are not numerically indistinguishable."""
    while True:
        a, b = sorted((draw(), draw()))
        if b > a * (1 + 1e-3):
            return a, b


def check_success_properties(topo: LinkChannel | None = None, sample_count: int = 1000,
                             seed: int = 0, tolerance: float = 1e-9,
                             p_bounds: tuple = (0.1, 10.0),
                             success_fn: Callable | None = None) -> list[PropertyReport]:
    """Sample random operating points and test P1-P5.

    With ``topo=None`` each sample draws a fresh random channel with 2-5
    links.  ``success_fn(ch, p, l, mu)`` replaces the closed form, which is
    how mutation tests inject a broken success function.
    """
    if sample_count < 1 or tolerance <= 0:
        raise ValueError("sample_count must be >= 1 and tolerance > 0")
    q = success_fn or success_probability
    rng = np.random.default_rng(seed)
    lo, hi = p_bounds

    def logq(ch, p, l, mu):
        return float(np.log(q(ch, p, l, mu)))

    reports = {k: PropertyReport(k) for k in ("P1", "P2", "P3", "P4", "P5")}
    const_checks = 0
    for _ in range(sample_count):
        ch = topo if topo is not None else random_link_channel(rng, int(rng.integers(2, 6)))
        L = ch.link_count
        p = _log_uniform(rng, lo, hi, size=L)
        mu = rng.uniform(*RATE_RANGE)
        l = int(rng.integers(L))
        others = [j for j in range(L) if j != l]
        pw = lambda: _log_uniform(rng, lo, hi)

        # P1: increasing in own power, log-concave
        a, b = _ordered_pair(rng, pw)
        pa, pb = p.copy(), p.copy()
        pa[l], pb[l] = a, b
        inc = logq(ch, pb, l, mu) - logq(ch, pa, l, mu)
        pm = p.copy()
        pm[l] = 0.5 * (a + b)
        conc = logq(ch, pm, l, mu) - 0.5 * (logq(ch, pa, l, mu) + logq(ch, pb, l, mu))
        reports["P1"].record(min(inc - STRICT_MARGIN, conc),
                             inc > STRICT_MARGIN and conc >= -tolerance)

        # P2: decreasing and convex in an interferer's power
        k = int(rng.choice(others))
        a, b = _ordered_pair(rng, pw)
        pa, pb, pm = p.copy(), p.copy(), p.copy()
        pa[k], pb[k], pm[k] = a, b, 0.5 * (a + b)
        dec = logq(ch, pa, l, mu) - logq(ch, pb, l, mu)
        conv = 0.5 * (q(ch, pa, l, mu) + q(ch, pb, l, mu)) - q(ch, pm, l, mu)
        reports["P2"].record(min(dec - STRICT_MARGIN, conv),
                             dec > STRICT_MARGIN and conv >= -tolerance)

        # P3: decreasing in rate
        m1, m2 = _ordered_pair(rng, lambda: rng.uniform(*RATE_RANGE))
        dec = logq(ch, p, l, m1) - logq(ch, p, l, m2)
        reports["P3"].record(dec - STRICT_MARGIN, dec > STRICT_MARGIN)

        # P4: increasing differences of log q in (own power, rate)
        a, b = _ordered_pair(rng, pw)
        pa, pb = p.copy(), p.copy()
        pa[l], pb[l] = a, b
        diff = (logq(ch, pb, l, m2) - logq(ch, pa, l, m2)) - (logq(ch, pb, l, m1) - logq(ch, pa, l, m1))
        reports["P4"].record(diff, diff >= -tolerance)

        # P5: increasing differences in (own power, interferer power) ...
        a, b = _ordered_pair(rng, pw)
        c, d = _ordered_pair(rng, pw)

        def at(i, vi, j, vj):
            x = p.copy()
            x[i], x[j] = vi, vj
            return logq(ch, x, l, mu)

        diff = (at(l, b, k, d) - at(l, a, k, d)) - (at(l, b, k, c) - at(l, a, k, c))
        reports["P5"].record(diff, diff >= -tolerance)
        # ... and constant differences between two interferers
        if len(others) >= 2:
            i, j = rng.choice(others, size=2, replace=False)
            diff = (at(i, b, j, d) - at(i, a, j, d)) - (at(i, b, j, c) - at(i, a, j, c))
            const_checks += 1
            reports["P5"].record(-abs(diff), abs(diff) <= EXACT_TOL)

    reports["P5"].note = f"{const_checks} constant-difference checks at |d| <= {EXACT_TOL:g}"
    return list(reports.values())


@dataclass
class PowerSweep:
    """One power axis swept over ascending ``values`` with the rest fixed at ``base``."""

    axis: int
    values: np.ndarray
    base: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.base = np.asarray(self.base, dtype=float)
        if self.values.size < 10:
            raise ValueError("a sweep needs at least 10 grid points")
        if np.any(np.diff(self.values) <= 0):
            raise ValueError("sweep values must be strictly ascending")


def goodput_sweep(ch: LinkChannel, rates: RateSet, sweep: PowerSweep, link: int):
    """Maximum goodput and maximizing rate of ``link`` along a sweep."""
    g = np.empty(sweep.values.size)
    mu_bar = np.empty(sweep.values.size)
    for i, v in enumerate(sweep.values):
        p = sweep.base.copy()
        p[sweep.axis] = v
        g[i], mu_bar[i] = max_goodput(ch, p, link, rates)
    return g, mu_bar


def check_goodput_properties(ch: LinkChannel, rates: RateSet, sweeps: Sequence[PowerSweep],
                             link: int = 0, tolerance: float = 1e-9) -> list[PropertyReport]:
    """Check P'1-P'4 pointwise along each sweep.

    A sweep over the observed link's own power exercises P'1 and P'3,
    a sweep over another link's power exercises P'2 and P'4.  Rates come
    from a finite set, so P'3/P'4 are checked on the resulting staircase.
    """
    reports = {k: PropertyReport(k) for k in ("P'1", "P'2", "P'3", "P'4")}
    for sw in sweeps:
        g, mu_bar = goodput_sweep(ch, rates, sw, link)
        x = sw.values
        steps = np.diff(g)
        rate_steps = np.diff(mu_bar)
        if sw.axis == link:
            for s in steps:
                reports["P'1"].record(s - STRICT_MARGIN, s > STRICT_MARGIN)
            for s in rate_steps:
                reports["P'3"].record(s, s >= 0)
        else:
            for s in steps:
                reports["P'2"].record(-s - STRICT_MARGIN, -s > STRICT_MARGIN)
            for i in range(1, x.size - 1):
                theta = (x[i + 1] - x[i]) / (x[i + 1] - x[i - 1])
                slack = theta * g[i - 1] + (1 - theta) * g[i + 1] - g[i]
                reports["P'2"].record(slack, slack >= -tolerance)
            for s in rate_steps:
                reports["P'4"].record(0.0 - s, s <= 0)
    for k in ("P'3", "P'4"):
        reports[k].note = "finite rate set: monotone staircase"
    return list(reports.values())
