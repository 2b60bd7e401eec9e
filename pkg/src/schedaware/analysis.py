"""Correlation statistics and the experiment pipelines.

Three experiments are packaged here:

* the validation batch: random single-hop scenarios, rated and simulated,
  with ratings and baseline predictors correlated against the simulated
  RTS/ACK timeout fractions, plus the collision-cause histogram and the
  busy-time / normalized-throughput series;
* the routing comparison: SAR, shortest-path and interference-aware routes
  on a grid, each simulated at a range of sending rates.

Undefined quantities (0/0 ratios, constant series) are NaN and are
excluded from correlations; the number of samples used is always reported.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from multiprocessing import Pool
from typing import Optional, Sequence

import numpy as np

from . import config
from .contention import build_contention_graph, enumerate_mics
from .iblr import rate_links
from .macsim import CAUSES, MacParams, Route, SimStats, simulate, tally_records
from .routing import iar_baseline, random_connections, sar_search, shortest_path_baseline
from .scenario import (ActiveLink, RadioParams, Scenario, generate_random_topology, grid_topology,
                       make_scenario, random_single_hop_links)

log = logging.getLogger(__name__)

PREDICTORS = ("model", "interference", "busy_time", "sinr")
TARGETS = ("rts_timeout_frac", "ack_timeout_frac")
MODEL_FOR_TARGET = {"rts_timeout_frac": "rts_rating", "ack_timeout_frac": "ack_rating_vcs"}


# --- statistics ---------------------------------------------------------------

def _check_pair(xs, ys):
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("series must be one-dimensional and of equal length")
    if len(xs) < 3:
        raise ValueError("at least 3 samples are needed")
    return xs, ys


def pearson(xs, ys) -> float:
    """Pearson correlation; NaN (undefined) when either series is constant."""
    xs, ys = _check_pair(xs, ys)
    dx = xs - xs.mean()
    dy = ys - ys.mean()
    den = np.sqrt((dx * dx).sum() * (dy * dy).sum())
    if den == 0.0:
        return float("nan")
    return float(np.clip((dx * dy).sum() / den, -1.0, 1.0))


def average_ranks(xs) -> np.ndarray:
    """1-based ranks, ties sharing the mean of the ranks they span."""
    xs = np.asarray(xs, dtype=float)
    order = np.argsort(xs, kind="mergesort")
    ranks = np.empty(len(xs))
    sorted_x = xs[order]
    i = 0
    while i < len(xs):
        j = i
        while j + 1 < len(xs) and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(xs, ys) -> float:
    """Spearman rank correlation (Pearson of average ranks)."""
    xs, ys = _check_pair(xs, ys)
    return pearson(average_ranks(xs), average_ranks(ys))


def finite_pairs(xs, ys):
    """Drop positions where either series is NaN or infinite."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    ok = np.isfinite(xs) & np.isfinite(ys)
    return xs[ok], ys[ok]


# --- per-link predictors -----------------------------------------------------

def baseline_predictors(scenario: Scenario, links: Sequence[ActiveLink], sim: SimStats):
    """Interference level, destination busy time and SINR for every link.

    Interference is the summed power of all other active sources at the
    link's destination.
    """
    links = [ActiveLink(*l) for l in links]
    if tuple(links) != tuple(sim.links):
        raise ValueError("simulation stats were produced for a different link set")
    th = scenario.field.theta
    s = np.array([l.src for l in links], dtype=int)
    d = np.array([l.dst for l in links], dtype=int)
    at_d = th[np.ix_(s, d)]  # [m, l]: source m at destination l
    np.fill_diagonal(at_d, 0.0)
    interference = at_d.sum(axis=0)
    sinr = th[s, d] / (interference + scenario.radio.noise_floor)
    return interference, np.asarray(sim.busy_time_dst, dtype=float).copy(), sinr


def normalized_throughput(sim: SimStats, mac: MacParams = MacParams()) -> np.ndarray:
    """Observed over ideal throughput per link; NaN when the ideal is zero.

    The ideal is the lone-link saturation ceiling scaled by the share of
    time the source found the channel free.
    """
    ideal = mac.saturation_throughput() * (1.0 - np.asarray(sim.busy_time_src, dtype=float))
    out = np.full(len(ideal), np.nan)
    ok = ideal > 0
    out[ok] = np.maximum(sim.throughput[ok] / ideal[ok], 0.0)
    return out


# --- validation batch ----------------------------------------------------------

@dataclass
class CorrelationReport:
    """R and rho for each (predictor, target) pair over pooled links."""

    pearson: dict  # (predictor, target) -> float
    spearman: dict
    samples: dict  # target -> number of links with a defined target value

    def beats_baselines(self, target: str) -> bool:
        """Model rho strictly above every baseline rho (signed)."""
        rho = self.spearman[("model", target)]
        return bool(np.isfinite(rho) and all(rho > self.spearman[(p, target)]
                                               for p in PREDICTORS[1:]
                                               if np.isfinite(self.spearman[(p, target)])))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["target", "predictor", "pearson", "spearman", "samples"])
        for t in TARGETS:
            for p in PREDICTORS:
                name = MODEL_FOR_TARGET[t] if p == "model" else p
                w.writerow([t, name, repr(self.pearson[(p, t)]), repr(self.spearman[(p, t)]), self.samples[t]])
        return buf.getvalue()

    def to_text(self) -> str:
        lines = []
        for t in TARGETS:
            lines.append(f"{t} (n={self.samples[t]})")
            for p in PREDICTORS:
                name = MODEL_FOR_TARGET[t] if p == "model" else p
                lines.append(f"  {name:<16} R={self.pearson[(p, t)]:+.3f}  rho={self.spearman[(p, t)]:+.3f}")
        return "\n".join(lines) + "\n"


ROW_FIELDS = ("scenario", "seed", "link", "src", "dst", "rts_rating", "ack_rating", "ack_rating_vcs",
              "interference", "busy_time", "sinr", "rts_timeout_frac", "ack_timeout_frac",
              "timeout_frac", "throughput", "busy_time_src", "normalized_throughput")


@dataclass
class ExperimentResult:
    rows: list  # one dict per link, keys ROW_FIELDS
    histogram: dict
    intra: dict
    inter: dict
    intra_minimal: dict
    inter_minimal: dict
    skipped: int
    seeds: list = field(default_factory=list)
    cts_lost: int = 0  # CTS frames lost at their addressee
    rts_timeouts: int = 0

    @property
    def cts_loss_share(self) -> float:
        """Share of RTS timeouts explained by a lost CTS rather than a missing one."""
        return self.cts_lost / self.rts_timeouts if self.rts_timeouts else float("nan")

    @staticmethod
    def _share(intra: dict, inter: dict) -> float:
        a, b = sum(intra.values()), sum(inter.values())
        return a / (a + b) if a + b else float("nan")

    @property
    def intra_share(self) -> float:
        """Share of attributed collisions with an interferer in a common MICS."""
        return self._share(self.intra, self.inter)

    @property
    def intra_share_minimal(self) -> float:
        """Same, using only the minimal culprit subset of each collision."""
        return self._share(self.intra_minimal, self.inter_minimal)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def capacity_series(self):
        """(timeout fraction, normalized throughput) over links where both are defined."""
        return finite_pairs(self.column("timeout_frac"), self.column("normalized_throughput"))

    def rows_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(ROW_FIELDS)
        for r in self.rows:
            w.writerow([repr(r[k]) if isinstance(r[k], float) else r[k] for k in ROW_FIELDS])
        return buf.getvalue()

    def histogram_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["cause", "count", "intra_mics", "inter_mics", "intra_mics_minimal", "inter_mics_minimal"])
        for c in CAUSES:
            w.writerow([c, self.histogram[c], self.intra[c], self.inter[c],
                        self.intra_minimal[c], self.inter_minimal[c]])
        w.writerow(["skipped", self.skipped, "", "", "", ""])
        return buf.getvalue()

    def series_csv(self) -> str:
        """Busy time vs throughput and timeout% vs normalized throughput, per link."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scenario", "link", "busy_time_src", "throughput", "timeout_pct", "normalized_throughput"])
        for r in self.rows:
            w.writerow([r["scenario"], r["link"], repr(r["busy_time_src"]), repr(r["throughput"]),
                        repr(100.0 * r["timeout_frac"]), repr(r["normalized_throughput"])])
        return buf.getvalue()


def correlate(result: ExperimentResult) -> CorrelationReport:
    cols = {"interference": "interference", "busy_time": "busy_time", "sinr": "sinr"}
    R, rho, n = {}, {}, {}
    for t in TARGETS:
        ys = result.column(t)
        ok = np.isfinite(ys)
        n[t] = int(ok.sum())
        for p in PREDICTORS:
            xs = result.column(MODEL_FOR_TARGET[t] if p == "model" else cols[p])
            if n[t] >= 3:
                R[(p, t)] = pearson(xs[ok], ys[ok])
                rho[(p, t)] = spearman(xs[ok], ys[ok])
            else:
                R[(p, t)] = rho[(p, t)] = float("nan")
    return CorrelationReport(R, rho, n)


@dataclass(frozen=True)
class BatchParams:
    n_nodes: int = config.VALIDATION_NODES
    area: float = config.VALIDATION_AREA_M
    n_links: int = config.VALIDATION_LINKS
    duration: float = 30.0
    mics_mode: str = "auto"
    mics_limit: int = config.HEURISTIC_MICS_LIMIT
    radio: RadioParams = RadioParams()
    mac: MacParams = MacParams()


def build_validation_scenario(seed: int, params: BatchParams):
    """Random topology plus single-hop links drawn from the same seed."""
    topo = generate_random_topology(params.n_nodes, (params.area, params.area), seed)
    sc = make_scenario(topo, params.radio, seed=seed)
    links = random_single_hop_links(sc.field, sc.radio, params.n_links, np.random.default_rng(seed))
    return sc, links


def _run_scenario(args):
    idx, seed, params = args
    sc, links = build_validation_scenario(seed, params)
    graph = build_contention_graph(links, sc.field, sc.radio)
    mics = enumerate_mics(graph, limit=params.mics_limit, seed=seed, mode=params.mics_mode)
    ratings = rate_links(mics, sc.field, sc.radio)
    res = simulate(sc, links=links, mac=params.mac, duration=params.duration, seed=seed, mics=mics)
    st = res.stats
    hist_min = tally_records(res.records, mics, minimal=True)
    interference, busy, sinr = baseline_predictors(sc, links, st)
    norm = normalized_throughput(st, params.mac)
    rows = []
    for i, l in enumerate(links):
        rows.append({
            "scenario": idx, "seed": seed, "link": i, "src": l.src, "dst": l.dst,
            "rts_rating": float(ratings.rts[i]), "ack_rating": float(ratings.ack[i]),
            "ack_rating_vcs": float(ratings.ack_vcs[i]),
            "interference": float(interference[i]), "busy_time": float(busy[i]), "sinr": float(sinr[i]),
            "rts_timeout_frac": float(st.rts_timeout_frac[i]), "ack_timeout_frac": float(st.ack_timeout_frac[i]),
            "timeout_frac": float(st.timeout_frac[i]), "throughput": float(st.throughput[i]),
            "busy_time_src": float(st.busy_time_src[i]), "normalized_throughput": float(norm[i]),
        })
    return (rows, st.histogram, st.intra, st.inter, hist_min[1], hist_min[2], st.skipped,
            int(st.cts_lost.sum()), int(st.rts_timeouts.sum()))


def _pick_seeds(seeds: Sequence[int], params: BatchParams) -> list[int]:
    """Replace seeds whose scenario has fewer than 3 feasible links with the next unused seed."""
    used = set(seeds)
    out = []
    for s in seeds:
        cand = s
        while len(build_validation_scenario(cand, params)[1]) < 3:
            nxt = cand + 1
            while nxt in used:
                nxt += 1
            log.warning("seed %d yields fewer than 3 links; using seed %d", cand, nxt)
            used.add(nxt)
            cand = nxt
        out.append(cand)
    return out


def run_validation_batch(n_scenarios: int = 10, params: BatchParams = BatchParams(),
                         seeds: Optional[Sequence[int]] = None, workers: int = 1):
    """Rate and simulate ``n_scenarios`` random scenarios; returns (CorrelationReport, ExperimentResult)."""
    if n_scenarios < 1:
        raise ValueError("n_scenarios must be >= 1")
    seeds = list(range(1, n_scenarios + 1)) if seeds is None else list(seeds)
    if len(seeds) != n_scenarios:
        raise ValueError("one seed per scenario is required")
    seeds = _pick_seeds(seeds, params)
    jobs = [(k, s, params) for k, s in enumerate(seeds)]
    if workers > 1:
        with Pool(workers) as pool:
            parts = pool.map(_run_scenario, jobs)
    else:
        parts = [_run_scenario(j) for j in jobs]
    rows = []
    tallies = [{c: 0 for c in CAUSES} for _ in range(5)]
    skipped = cts_lost = rts_timeouts = 0
    for part in parts:
        rows += part[0]
        for acc, h in zip(tallies, part[1:6]):
            for c in CAUSES:
                acc[c] += h.get(c, 0)
        skipped += part[6]
        cts_lost += part[7]
        rts_timeouts += part[8]
    result = ExperimentResult(rows, *tallies, skipped=skipped, seeds=seeds, cts_lost=cts_lost,
                              rts_timeouts=rts_timeouts)
    return correlate(result), result


# --- routing comparison ---------------------------------------------------------

ROUTERS = ("SAR", "SP", "IAR")


@dataclass(frozen=True)
class CompareParams:
    grid: int = config.GRID_SIDE
    spacing: float = config.GRID_SPACING_M
    connections: int = 4
    min_hops: int = 2
    rates: tuple = (None,)  # bits/s per connection; None = saturated
    duration: float = 30.0
    rating_threshold: float = config.RATING_THRESHOLD
    max_configs: int = config.MAX_CONFIGS
    slack: int = config.HOP_SLACK
    radio: RadioParams = RadioParams()
    mac: MacParams = MacParams()


@dataclass
class CompareResult:
    rows: list  # dicts: seed, router, rate, cim, throughput, delivered, queue_drops

    def total(self, router: str, rate=None) -> float:
        return float(sum(r["throughput"] for r in self.rows if r["router"] == router and r["rate"] == rate))

    def mean_cim(self, router: str) -> float:
        cims = {r["seed"]: r["cim"] for r in self.rows if r["router"] == router}
        return float(np.mean(list(cims.values())))

    def rates(self) -> list:
        seen = []
        for r in self.rows:
            if r["rate"] not in seen:
                seen.append(r["rate"])
        return seen

    def table(self) -> str:
        """Aggregate throughput per sending rate plus ratios to the baselines."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["rate", "SAR", "SP", "IAR", "SAR/SP", "SAR/IAR"])
        for rate in self.rates():
            t = {k: self.total(k, rate) for k in ROUTERS}
            w.writerow(["saturated" if rate is None else repr(float(rate)), repr(t["SAR"]), repr(t["SP"]),
                        repr(t["IAR"]), repr(_safe_div(t["SAR"], t["SP"])), repr(_safe_div(t["SAR"], t["IAR"]))])
        w.writerow(["mean_cim", repr(self.mean_cim("SAR")), repr(self.mean_cim("SP")), repr(self.mean_cim("IAR")),
                    "", ""])
        return buf.getvalue()

    def rows_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        keys = ("seed", "router", "rate", "cim", "throughput", "delivered", "queue_drops", "paths")
        w.writerow(keys)
        for r in self.rows:
            w.writerow([("saturated" if r[k] is None else repr(float(r[k]))) if k == "rate"
                        else repr(r[k]) if isinstance(r[k], float) else r[k] for k in keys])
        return buf.getvalue()


def _safe_div(a: float, b: float) -> float:
    return a / b if b else float("nan")


def grid_connections(scenario: Scenario, seed: int, params: CompareParams):
    rate = params.rates[0] if params.rates[0] is not None else params.mac.saturation_throughput()
    return random_connections(scenario, params.connections, np.random.default_rng(seed), rate,
                              params.min_hops)


def route_all(scenario: Scenario, connections, params: CompareParams, seed: int = 0):
    sar = sar_search(scenario, connections, params.rating_threshold, params.max_configs,
                     params.slack, seed=seed)
    return {"SAR": sar.best, "SP": shortest_path_baseline(scenario, connections),
            "IAR": iar_baseline(scenario, connections, params.slack)}, sar


def _compare_seed(args):
    seed, params = args
    sc = make_scenario(grid_topology(params.grid, params.spacing), params.radio, seed=seed)
    conns = grid_connections(sc, seed, params)
    cfgs, _ = route_all(sc, conns, params, seed)
    rows = []
    for rate in params.rates:
        for name in ROUTERS:
            cfg = cfgs[name]
            res = simulate(sc, routes=[Route(p, rate) for p in cfg.paths], mac=params.mac,
                           duration=params.duration, seed=seed)
            st = res.stats
            rows.append({"seed": seed, "router": name, "rate": rate, "cim": float(cfg.cim),
                         "throughput": float(st.flow_throughput.sum()),
                         "delivered": int(st.flow_delivered.sum()),
                         "queue_drops": int(st.flow_queue_drops.sum()),
                         "paths": " / ".join("-".join(str(v) for v in p) for p in cfg.paths)})
    return rows


def run_routing_comparison(seeds: Sequence[int], params: CompareParams = CompareParams(),
                           workers: int = 1) -> CompareResult:
    """Route each seed's random grid connections with SAR, SP and IAR and simulate every rate."""
    if not seeds:
        raise ValueError("at least one seed is required")
    jobs = [(s, params) for s in seeds]
    if workers > 1:
        with Pool(workers) as pool:
            parts = pool.map(_compare_seed, jobs)
    else:
        parts = [_compare_seed(j) for j in jobs]
    return CompareResult([r for p in parts for r in p])
