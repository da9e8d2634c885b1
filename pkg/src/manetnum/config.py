"""
YAML experiment configuration.

Top-level keys::

    scenario: props | region | game | num | sim | figures
    seed: 0                        # optional, the command line wins
    topology:
      nodes: 3                     # required
      gains: [[0, 1, 1], ...]      # N x N, gains[i][j] = gain from j to i; default all ones
      noise: 1.0                   # scalar or per node
      p_min: 0.1                   # scalar or per node, must be > 0
      p_max: 10.0
      same_node_interference: false
    links: [[0, 2], [1, 2]]        # active links (props, region, game, fixed sim policy)
    rates: [0.4, 0.8] | {start: 0.4, stop: 2.0, step: 0.4}
    weights: [1.0, 1.0]            # one per link (game)
    flows:                         # num and sim
      - {source: 0, destination: 2, weight: 1.0, offset: 0.0}
    props:   {samples, tolerance, sweep_points, sweep_min, sweep_max, fixed_power}
    region:  {points, deltas, sum_power}
    game:    {tol, max_iters, oracle, oracle_grid, over_the_air, symbols, link_rates}
    num:     {stepsize, iterations, scheduler, goodput_mode, rate_cap}
    sim:     {slots, scale, base_rates, policy, arrivals, powers, delta, threshold}
    figures: {sweep_points, region_points, num_iterations}

Missing sections take the defaults below.  Every problem found is
reported, not just the first.
"""

from __future__ import annotations

import copy
import hashlib
from dataclasses import dataclass, field

import numpy as np
import yaml

from .channel import Link, NetworkTopology, RateSet
from .num import CommodityFlow, UtilitySpec

SCENARIOS = ("props", "region", "game", "num", "sim", "figures")

SECTION_DEFAULTS = {
    "props": {"samples": 1000, "tolerance": 1e-9, "sweep_points": 200,
              "sweep_min": 0.1, "sweep_max": 20.0, "fixed_power": 5.0},
    "region": {"points": 50, "deltas": [1.0, 0.5, 0.0], "sum_power": None},
    "game": {"tol": 1e-7, "max_iters": 200, "oracle": True, "oracle_grid": 20,
             "over_the_air": False, "symbols": 10000, "link_rates": None},
    "num": {"stepsize": 0.05, "iterations": 1000, "scheduler": "game",
            "goodput_mode": "expected", "rate_cap": 10.0},
    "sim": {"slots": 50000, "scale": 1.0, "base_rates": None, "policy": "fixed",
            "arrivals": "poisson", "powers": None, "delta": 1.0, "threshold": 1e-3},
    "figures": {"sweep_points": 200, "region_points": 50, "num_iterations": 2000},
}
TOP_KEYS = {"scenario", "seed", "topology", "links", "rates", "weights", "flows"} | set(SECTION_DEFAULTS)
TOPOLOGY_KEYS = {"nodes", "gains", "noise", "p_min", "p_max", "same_node_interference"}
FLOW_KEYS = {"source", "destination", "weight", "offset"}
DEFAULT_RATES = {"start": 0.4, "stop": 2.0, "step": 0.4}


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists every problem found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class ExperimentConfig:
    scenario: str
    topology: NetworkTopology | None
    links: list
    rates: RateSet
    weights: np.ndarray | None
    flows: list
    same_node_interference: bool = False
    seed: int | None = None
    sections: dict = field(default_factory=dict)
    digest: str = ""

    def section(self, name: str) -> dict:
        return self.sections[name]


def _vector(value, n, name, errors):
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        errors.append(f"{name}: not numeric")
        return None
    if arr.ndim == 0:
        return np.full(n, float(arr))
    if arr.shape != (n,):
        errors.append(f"{name}: dimension mismatch, expected {n} values, got shape {arr.shape}")
        return None
    return arr


def _parse_rates(raw, errors):
    try:
        if raw is None:
            return RateSet.arange(**DEFAULT_RATES)
        if isinstance(raw, dict):
            extra = set(raw) - {"start", "stop", "step"}
            for k in sorted(extra):
                errors.append(f"rates: unknown key '{k}'")
            return RateSet.arange(float(raw["start"]), float(raw["stop"]), float(raw["step"]))
        return RateSet(tuple(raw))
    except (KeyError, TypeError, ValueError) as exc:
        errors.append(f"rates: {exc}")
        return None


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate YAML text; raises :class:`ConfigError` listing all problems."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([f"malformed YAML: {exc}"]) from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(["top level must be a mapping"])
    errors: list[str] = []
    for k in sorted(set(raw) - TOP_KEYS, key=str):
        errors.append(f"unknown key '{k}'")

    scenario = raw.get("scenario")
    if scenario not in SCENARIOS:
        errors.append(f"scenario: must be one of {', '.join(SCENARIOS)}, got {scenario!r}")

    seed = raw.get("seed")
    if seed is not None and (not isinstance(seed, int) or seed < 0):
        errors.append("seed: must be a non-negative integer")

    sections = {}
    for name, defaults in SECTION_DEFAULTS.items():
        sec = raw.get(name) or {}
        if not isinstance(sec, dict):
            errors.append(f"{name}: must be a mapping")
            sec = {}
        for k in sorted(set(sec) - set(defaults), key=str):
            errors.append(f"{name}: unknown key '{k}'")
        merged = copy.deepcopy(defaults)
        merged.update({k: v for k, v in sec.items() if k in defaults})
        sections[name] = merged

    topo, same_node, n = None, False, None
    t = raw.get("topology")
    if t is None:
        if scenario not in ("figures", "props"):
            errors.append("topology: required section missing")
    elif not isinstance(t, dict):
        errors.append("topology: must be a mapping")
    else:
        for k in sorted(set(t) - TOPOLOGY_KEYS, key=str):
            errors.append(f"topology: unknown key '{k}'")
        n = t.get("nodes")
        if not isinstance(n, int) or n < 2:
            errors.append("topology.nodes: need an integer >= 2")
            n = None
        same_node = bool(t.get("same_node_interference", False))
        if n is not None:
            gains = t.get("gains")
            if gains is None:
                G = np.ones((n, n)) - np.eye(n)
            else:
                try:
                    G = np.asarray(gains, dtype=float)
                except (TypeError, ValueError):
                    G = None
                    errors.append("topology.gains: not a numeric matrix")
                if G is not None and G.shape != (n, n):
                    errors.append(f"topology.gains: dimension mismatch, expected {n}x{n}, got shape {G.shape}")
                    G = None
                elif G is not None and (not np.all(np.isfinite(G)) or np.any(G < 0)):
                    errors.append("topology.gains: must be finite and non-negative")
                    G = None
            noise = _vector(t.get("noise", 1.0), n, "topology.noise", errors)
            p_min = _vector(t.get("p_min", 0.1), n, "topology.p_min", errors)
            p_max = _vector(t.get("p_max", 10.0), n, "topology.p_max", errors)
            if noise is not None and np.any(noise < 0):
                errors.append("topology.noise: must be non-negative")
            if p_min is not None and np.any(p_min <= 0):
                errors.append("topology.p_min: P_min must be > 0 for every node")
            if p_min is not None and p_max is not None and np.any(p_max < p_min):
                errors.append("topology.p_max: P_max must be >= P_min for every node")
            if not any(e.startswith("topology.") for e in errors):
                topo = NetworkTopology(G, noise, p_min, p_max)

    links = []
    for i, pair in enumerate(raw.get("links") or []):
        try:
            b, e = (int(v) for v in pair)
            if n is not None and not (0 <= b < n and 0 <= e < n):
                raise ValueError("node id out of range")
            links.append(Link(b, e))
        except (TypeError, ValueError) as exc:
            errors.append(f"links[{i}]: {exc}")

    rates = _parse_rates(raw.get("rates"), errors)

    weights = raw.get("weights")
    if weights is not None:
        weights = _vector(weights, len(links), "weights", errors)
        if weights is not None and np.any(weights < 0):
            errors.append("weights: must be non-negative")

    flows = []
    for i, f in enumerate(raw.get("flows") or []):
        if not isinstance(f, dict):
            errors.append(f"flows[{i}]: must be a mapping")
            continue
        for k in sorted(set(f) - FLOW_KEYS, key=str):
            errors.append(f"flows[{i}]: unknown key '{k}'")
        try:
            s, d = int(f["source"]), int(f["destination"])
            if n is not None and not (0 <= s < n and 0 <= d < n):
                raise ValueError("flow references a node outside the topology")
            flows.append(CommodityFlow(s, d, UtilitySpec(float(f.get("weight", 1.0)),
                                                         float(f.get("offset", 0.0)))))
        except (KeyError, TypeError, ValueError) as exc:
            errors.append(f"flows[{i}]: {exc}")

    if scenario in ("region", "game") and not links:
        errors.append(f"links: scenario '{scenario}' needs at least one link")
    if scenario in ("num", "sim") and not flows:
        errors.append(f"flows: scenario '{scenario}' needs at least one flow")
    if scenario == "sim":
        sim = sections["sim"]
        if sim["base_rates"] is None or len(sim["base_rates"]) != len(flows):
            errors.append("sim.base_rates: need one base arrival rate per flow")
        if sim["policy"] == "fixed" and (sim["powers"] is None or len(sim["powers"]) != len(links)):
            errors.append("sim.powers: fixed policy needs one power per link")
    if errors:
        raise ConfigError(errors)

    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    return ExperimentConfig(scenario, topo, links, rates, weights, flows, same_node,
                            seed, sections, digest)
