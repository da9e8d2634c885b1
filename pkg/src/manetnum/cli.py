"""
Command line driver: ``manetnum SCENARIO --config FILE --seed N --out DIR``.

Every scenario writes CSV files (header row, floats in ``repr`` form) and
one ``<name>.manifest.json`` beside each of them.  Exit status is 0 on
success, 1 on invalid input and 2 when a scheduling game fails to
converge within its iteration budget.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .channel import Link, LinkChannel, NetworkTopology, RateSet, max_goodput, success_probabilities
from .config import SCENARIOS, ConfigError, ExperimentConfig, parse_config
from .game import (SchedulingInstance, brute_force_schedule, kkt_residual,
                   over_the_air_price_sums, run_table1)
from .num import link_rates, num_loop, stand_in_four_node_topology
from .properties import PowerSweep, check_goodput_properties, check_success_properties, goodput_sweep
from .queues import DropPolicy, ScheduledLink, run_stability_experiment
from .region import DroppingProfile, PowerGrid, enumerate_region
from .seeding import derive_rng

log = logging.getLogger(__name__)

EXIT_OK, EXIT_INVALID, EXIT_NONCONVERGED = 0, 1, 2


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


class OutputWriter:
    """Writes CSVs plus manifests into ``out`` and remembers what it wrote."""

    def __init__(self, out: Path, scenario: str, seed: int, config_digest: str):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.meta = {"scenario": scenario, "seed": int(seed), "config_sha256": config_digest,
                     "versions": {"manetnum": __version__, "numpy": np.__version__,
                                  "scipy": scipy.__version__, "python": platform.python_version()}}
        self.written = []

    def csv(self, name: str, header, rows):
        path = self.out / f"{name}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        manifest = dict(self.meta, file=path.name, sha256=digest)
        (self.out / f"{name}.manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        self.written.append(path)
        return path


# -- scenarios ---------------------------------------------------------------

def _property_rows(reports):
    return [r.as_row() + [r.note] for r in reports]


PROPERTY_HEADER = ["property", "samples", "violations", "worst_margin", "note"]


def run_props(cfg: ExperimentConfig, seed: int, w: OutputWriter) -> int:
    sec = cfg.section("props")
    sub_seed = int(derive_rng(seed, "props").integers(2 ** 32))
    reports = check_success_properties(None, sec["samples"], sub_seed, sec["tolerance"])
    if cfg.topology is not None and len(cfg.links) >= 2:
        ch = cfg.topology.link_channel(cfg.links, cfg.same_node_interference)
        values = np.linspace(sec["sweep_min"], sec["sweep_max"], sec["sweep_points"])
        base = np.full(len(cfg.links), float(sec["fixed_power"]))
        sweeps = [PowerSweep(0, values, base), PowerSweep(1, values, base)]
        reports += check_goodput_properties(ch, cfg.rates, sweeps, link=0, tolerance=sec["tolerance"])
        rows = []
        for sw in sweeps:
            g, mu = goodput_sweep(ch, cfg.rates, sw, 0)
            rows += [[sw.axis, v, gi, mi] for v, gi, mi in zip(sw.values, g, mu)]
        w.csv("goodput_sweep", ["swept_link", "power", "max_goodput", "best_rate"], rows)
    w.csv("props", PROPERTY_HEADER, _property_rows(reports))
    return EXIT_OK


def _write_region(w: OutputWriter, name: str, ch: LinkChannel, rates: RateSet, grid: PowerGrid, deltas):
    raw_rows, hull_rows = [], []
    L = ch.link_count
    for dv in deltas:
        reg = enumerate_region(ch, rates, grid, DroppingProfile.uniform(dv, L))
        for p, g, mu in zip(reg.powers, reg.raw_points, reg.rates):
            raw_rows.append([dv, *p, *g, *mu])
        if reg.hull is not None:
            hull_rows += [[dv, i, *v] for i, v in enumerate(reg.hull)]
    idx = range(1, L + 1)
    w.csv(f"{name}_raw", ["delta", *(f"p{i}" for i in idx), *(f"g{i}" for i in idx),
                          *(f"mu{i}" for i in idx)], raw_rows)
    if L == 2:
        w.csv(f"{name}_hull", ["delta", "vertex", "g1", "g2"], hull_rows)


def run_region(cfg: ExperimentConfig, seed: int, w: OutputWriter) -> int:
    sec = cfg.section("region")
    topo = cfg.topology
    ch = topo.link_channel(cfg.links, cfg.same_node_interference)
    origins = [l.origin for l in cfg.links]
    if sec["sum_power"] is None:
        grid = PowerGrid(topo.p_min[origins], topo.p_max[origins], sec["points"])
    else:
        grid = PowerGrid(topo.p_min[origins], topo.p_max[origins], sec["points"], "simplex",
                         float(sec["sum_power"]))
    _write_region(w, "region", ch, cfg.rates, grid, sec["deltas"])
    return EXIT_OK


def _game_instance(cfg: ExperimentConfig) -> SchedulingInstance:
    sec = cfg.section("game")
    if sec["link_rates"] is not None:
        mus = np.asarray(sec["link_rates"], dtype=float)
    else:
        R = link_rates(cfg.topology, cfg.rates)
        mus = np.array([R[l.origin, l.end] for l in cfg.links])
    weights = cfg.weights if cfg.weights is not None else np.ones(len(cfg.links))
    return SchedulingInstance(cfg.topology, cfg.links, weights, mus)


def run_game(cfg: ExperimentConfig, seed: int, w: OutputWriter) -> int:
    sec = cfg.section("game")
    inst = _game_instance(cfg)
    estimator = None
    if sec["over_the_air"]:
        rng = derive_rng(seed, "over_the_air")
        estimator = lambda p: over_the_air_price_sums(inst, p, rng, int(sec["symbols"]))
    res = run_table1(inst, max_iters=int(sec["max_iters"]), tol=float(sec["tol"]),
                     price_estimator=estimator)
    K = inst.size
    w.csv("game_trace", ["iteration", *(f"p{i + 1}" for i in range(K)),
                         *(f"c{i + 1}" for i in range(K)), "objective"],
          [[r.iteration, *r.powers, *r.sum_prices, r.objective] for r in res.trace])
    ne_obj = inst.objective(res.state.powers)
    if sec["oracle"]:
        _, oracle_obj = brute_force_schedule(inst, int(sec["oracle_grid"]), refine=True)
        gap = oracle_obj - ne_obj
    else:
        oracle_obj, gap = float("nan"), float("nan")
    kkt = kkt_residual(inst, res.state.powers).max_residual
    w.csv("game_summary", ["ne_objective", "oracle_objective", "gap", "kkt_residual",
                           "iterations", "converged"],
          [[ne_obj, oracle_obj, gap, kkt, res.iterations, res.converged]])
    return EXIT_OK if res.converged else EXIT_NONCONVERGED


def _num_rows(trace):
    T, N, D = trace.lam.shape
    flagged = set(trace.flagged)
    return [[t, *trace.lam[t].ravel(), *trace.x[t], trace.objective[t], int(t in flagged)]
            for t in range(T)]


def _num_header(trace):
    _, N, D = trace.lam.shape
    lam = [f"lambda_{n}_{d}" for n in range(N) for d in range(D)]
    return ["t", *lam, *(f"x{s + 1}" for s in range(trace.x.shape[1])), "objective", "flagged"]


def run_num(cfg: ExperimentConfig, seed: int, w: OutputWriter) -> int:
    sec = cfg.section("num")
    tr = num_loop(cfg.topology, cfg.flows, cfg.rates, scheduler=sec["scheduler"],
                  stepsize=float(sec["stepsize"]), iterations=int(sec["iterations"]), seed=seed,
                  goodput_mode=sec["goodput_mode"], rate_cap=float(sec["rate_cap"]))
    w.csv("num_trace", _num_header(tr), _num_rows(tr))
    return EXIT_OK


def fixed_schedule(topo: NetworkTopology, links, powers, rates: RateSet):
    """Links always on at ``powers``; each link uses its goodput-maximizing rate under that interference."""
    ch = topo.link_channel(links)
    p = np.asarray(powers, dtype=float)
    mus = [max_goodput(ch, p, l, rates)[1] for l in range(len(links))]
    q = success_probabilities(ch, p, mus)
    return [ScheduledLink(l, 0, m, float(pp)) for l, m, pp in zip(links, mus, p)], np.asarray(mus) * q


def run_sim(cfg: ExperimentConfig, seed: int, w: OutputWriter) -> int:
    sec = cfg.section("sim")
    sched = None
    if sec["policy"] == "fixed":
        sched, _ = fixed_schedule(cfg.topology, cfg.links, sec["powers"], cfg.rates)
    rep = run_stability_experiment(cfg.topology, cfg.flows, sec["base_rates"], float(sec["scale"]),
                                   policy=sec["policy"], fixed_schedule=sched, rates=cfg.rates,
                                   slots=int(sec["slots"]), seed=seed,
                                   drops=DropPolicy(sec["delta"]), distribution=sec["arrivals"],
                                   threshold=float(sec["threshold"]))
    D = rep.backlog.shape[1]
    w.csv("sim_trace", ["t", "total_backlog", *(f"backlog_c{d}" for d in range(D))],
          [[t, rep.total_backlog[t], *rep.backlog[t]] for t in range(len(rep.total_backlog))])
    c = rep.counters
    w.csv("sim_summary", ["slope", "threshold", "verdict", "mean_total_backlog", "attempts",
                          "errors", "drops", "sent", "delivered", "dropped"],
          [[rep.slope, rep.threshold, "stable" if rep.stable else "unstable",
            float(rep.mean_backlog.sum()), c.attempts, c.errors, c.drops, c.sent, c.delivered, c.dropped]])
    return EXIT_OK


# -- figures -----------------------------------------------------------------

FIG_RATES_SWEEP = RateSet.arange(0.4, 2.0, 0.4)
FIG4_RATES = RateSet.arange(0.4, 1.8, 0.4)
FIG5_RATES = RateSet((0.2, 0.4, 0.6))
FIG_REGION_PMIN = 0.01


def figure_sweep_channel() -> LinkChannel:
    """Two-user channel with unit gains and unit noise."""
    return LinkChannel(np.ones((2, 2)), 1.0)


def figure4_setup():
    """Two transmitters to one receiver, unit gains; ``(channel, grid_bounds)``."""
    topo = NetworkTopology(np.ones((3, 3)) - np.eye(3), 1.0, FIG_REGION_PMIN, [2.0, 3.0, 1.0])
    links = [Link(0, 2), Link(1, 2)]
    return topo.link_channel(links), np.array([FIG_REGION_PMIN] * 2), np.array([2.0, 3.0])


def figure5_channel() -> LinkChannel:
    """One transmitter serving two receivers; its own streams interfere."""
    return LinkChannel([[1.0, 0.5], [0.8, 1.0]], 1.0)


def run_figures(cfg: ExperimentConfig, seed: int, w: OutputWriter) -> int:
    sec = cfg.section("figures")
    n = int(sec["sweep_points"])
    ch = figure_sweep_channel()
    values = np.linspace(0.1, 20.0, n)
    summary = []
    for name, axis, fixed in (("fig2_own_power_sweep", 0, 5.0), ("fig3_interferer_sweep", 1, 25.0)):
        # the swept entry of base is overwritten along the sweep
        base = np.array([0.0, fixed]) if axis == 0 else np.array([fixed, 0.0])
        sw = PowerSweep(axis, values, base)
        g, mu = goodput_sweep(ch, FIG_RATES_SWEEP, sw, 0)
        w.csv(name, ["power", "max_goodput", "best_rate"], zip(values, g, mu))
        for r in check_goodput_properties(ch, FIG_RATES_SWEEP, [sw], link=0):
            if r.samples:
                summary.append([name, r.property_id, r.samples, r.violations, r.worst_margin])
    w.csv("fig23_properties", ["figure", "property", "samples", "violations", "worst_margin"], summary)

    pts = int(sec["region_points"])
    ch4, lo, hi = figure4_setup()
    _write_region(w, "fig4_region", ch4, FIG4_RATES, PowerGrid(lo, hi, pts), [1.0, 0.5, 0.0])
    grid5 = PowerGrid([FIG_REGION_PMIN] * 2, [10.0, 10.0], pts, "simplex", 10.0)
    _write_region(w, "fig5_region", figure5_channel(), FIG5_RATES, grid5, [1.0, 0.5, 0.0])

    topo, flows, rates = stand_in_four_node_topology()
    iters = int(sec["num_iterations"])
    rows = []
    for sched in ("oracle", "game"):
        tr = num_loop(topo, flows, rates, scheduler=sched, iterations=iters, seed=seed)
        w.csv(f"fig6_num_{sched}", _num_header(tr), _num_rows(tr))
        rows.append([sched, float(tr.objective.mean()), *tr.x.mean(axis=0),
                     *tr.lam[:, 0, :].mean(axis=0), len(tr.flagged)])
    w.csv("fig6_summary", ["scheduler", "mean_objective", "mean_x1", "mean_x2",
                           "mean_lambda_source_c0", "mean_lambda_source_c1", "flagged_iterations"], rows)
    return EXIT_OK


RUNNERS = {"props": run_props, "region": run_region, "game": run_game,
           "num": run_num, "sim": run_sim, "figures": run_figures}


def run_scenario(cfg: ExperimentConfig, seed: int, out) -> int:
    """Run ``cfg.scenario`` and write its artifacts; returns the exit status."""
    w = OutputWriter(Path(out), cfg.scenario, seed, cfg.digest)
    return RUNNERS[cfg.scenario](cfg, seed, w)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="manetnum", description=__doc__.strip().splitlines()[0])
    parser.add_argument("scenario", choices=SCENARIOS)
    parser.add_argument("--config", required=True, type=Path)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", required=True, type=Path)
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        text = args.config.read_text()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        cfg = parse_config(text)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    if cfg.scenario != args.scenario:
        print(f"error: config is for scenario '{cfg.scenario}', not '{args.scenario}'", file=sys.stderr)
        return EXIT_INVALID
    seed = args.seed if args.seed is not None else (cfg.seed or 0)
    if not 0 <= seed < 2 ** 64:
        print("error: seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_INVALID
    try:
        status = run_scenario(cfg, seed, args.out)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if status == EXIT_NONCONVERGED:
        print("error: scheduling game did not converge", file=sys.stderr)
    return status
