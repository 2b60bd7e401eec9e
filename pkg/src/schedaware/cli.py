"""Command-line driver.

Subcommands: gen, rate, simulate, validate, route, compare.  Every output
file starts with a ``#`` line recording the effective configuration, and
all randomness comes from explicit seeds, so reruns with the same flags
rewrite identical bytes.

Exit codes: 0 success, 1 invalid input or other failure, 2 usage error,
3 unreadable or malformed file, 4 infeasible routing.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import config
from .analysis import BatchParams, CompareParams, pearson, run_routing_comparison, run_validation_batch
from .contention import build_contention_graph, enumerate_mics, format_family
from .iblr import rate_links
from .macsim import MacParams, Route, simulate
from .routing import (RoutingError, iar_baseline, random_connections, sar_search,
                      shortest_path_baseline)
from .scenario import (ActiveLink, RadioParams, ScenarioFormatError, generate_random_topology,
                       grid_topology, link_feasible, load_scenario, make_scenario,
                       random_single_hop_links, save_scenario)

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_FILE, EXIT_INFEASIBLE = 0, 1, 2, 3, 4

# flags that do not change any output content
_NOT_RECORDED = {"out_dir", "out", "workers", "func", "verbose"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def parse_seeds(text: str) -> list[int]:
    """'3', '1,4,9' or an inclusive range '1..5'."""
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            seeds = list(range(int(lo), int(hi) + 1))
        else:
            seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed list {text!r}") from None
    if not seeds:
        raise argparse.ArgumentTypeError("seed list is empty")
    return seeds


def parse_rates(text: str) -> tuple:
    out = []
    for part in text.split(","):
        part = part.strip()
        if part in ("saturated", "sat"):
            out.append(None)
            continue
        try:
            value = float(part)
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid rate {part!r}") from None
        if not value > 0:
            raise argparse.ArgumentTypeError("rates must be positive")
        out.append(value)
    if not out:
        raise argparse.ArgumentTypeError("rate list is empty")
    return tuple(out)


def _radio_flags(p):
    g = p.add_argument_group("radio")
    g.add_argument("--tx-power", type=float, default=config.TX_POWER_MW, help="mW")
    g.add_argument("--rx-sensitivity", type=float, default=config.RX_SENSITIVITY_MW, help="mW")
    g.add_argument("--noise-floor", type=float, default=config.NOISE_FLOOR_MW, help="mW")
    g.add_argument("--sinr-threshold", type=float, default=config.SINR_THRESHOLD, help="linear ratio")
    g.add_argument("--path-loss-exponent", type=float, default=config.PATH_LOSS_EXPONENT)


def _mac_flags(p):
    g = p.add_argument_group("mac")
    g.add_argument("--data-bytes", type=int, default=config.DATA_BYTES)
    g.add_argument("--queue-limit", type=int, default=config.QUEUE_LIMIT)
    g.add_argument("--cw-min", type=int, default=config.CW_MIN)
    g.add_argument("--cw-max", type=int, default=config.CW_MAX)
    g.add_argument("--no-rts-cts", action="store_true", help="basic access (DATA/ACK only)")
    g.add_argument("--no-eifs", action="store_true")
    g.add_argument("--no-cts-carrier-sense", action="store_true",
                   help="answer RTS even when the responder senses a busy channel")


def _mics_flags(p):
    g = p.add_argument_group("mics")
    g.add_argument("--mics-mode", choices=("auto", "exact", "heuristic"), default="auto")
    g.add_argument("--mics-limit", type=int, default=config.HEURISTIC_MICS_LIMIT)
    g.add_argument("--mics-seed", type=int, default=0)


def _search_flags(p):
    g = p.add_argument_group("search")
    g.add_argument("--threshold", type=float, default=config.RATING_THRESHOLD)
    g.add_argument("--max-configs", type=int, default=config.MAX_CONFIGS)
    g.add_argument("--slack", type=int, default=config.HOP_SLACK, help="extra hops over the BFS length")


def _radio(a) -> RadioParams:
    return RadioParams(a.tx_power, a.rx_sensitivity, a.sinr_threshold, a.noise_floor, a.path_loss_exponent)


def _mac(a) -> MacParams:
    return MacParams(data_size=a.data_bytes, queue_limit=a.queue_limit, cw_min=a.cw_min, cw_max=a.cw_max,
                     rts_cts_enabled=not a.no_rts_cts, eifs_enabled=not a.no_eifs,
                     cts_physical_cs=not a.no_cts_carrier_sense)


def _header(a) -> str:
    items = []
    for k in sorted(vars(a)):
        if k in _NOT_RECORDED:
            continue
        v = getattr(a, k)
        if isinstance(v, (list, tuple)):
            v = ",".join("saturated" if x is None else repr(x) for x in v)
        elif isinstance(v, float):
            v = repr(v)
        items.append(f"{k}={v}")
    return f"# schedaware {a.command} " + " ".join(items) + "\n"


def _write(path: Path, header: str, body: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(header + body)


def _out_dir(a) -> Path:
    d = Path(a.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _load(path: str):
    try:
        return load_scenario(path)
    except OSError as exc:
        raise FileNotFoundError(f"cannot read {path}: {exc.strerror or exc}") from None


# --- subcommands -----------------------------------------------------------------

def cmd_gen(a) -> None:
    radio = _radio(a)
    mac = _mac(a)
    if a.grid is not None:
        topo = grid_topology(a.grid, a.spacing)
        sc = make_scenario(topo, radio, seed=a.seed)
        rate = a.rate if a.rate is not None else mac.saturation_throughput()
        conns = random_connections(sc, a.connections, np.random.default_rng(a.seed), rate, a.min_hops)
    else:
        topo = generate_random_topology(a.nodes, (a.area, a.area), a.seed)
        sc = make_scenario(topo, radio, seed=a.seed)
        links = random_single_hop_links(sc.field, radio, a.links, np.random.default_rng(a.seed))
        rate = a.rate if a.rate is not None else mac.saturation_throughput()
        conns = [(l.src, l.dst, rate) for l in links]
    sc = make_scenario(topo, radio, conns, seed=a.seed)
    out = Path(a.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_scenario(sc, out)
    text = out.read_text()
    first, rest = text.split("\n", 1)
    out.write_text(first + "\n" + _header(a) + rest)


def _scenario_links(sc) -> list[ActiveLink]:
    links = list(dict.fromkeys(sc.links))
    for l in links:
        if not link_feasible(sc.field, sc.radio, l.src, l.dst):
            raise ValueError(f"connection {l} is not a feasible one-hop link; route it first and pass --routes")
    if not links:
        raise ValueError("the scenario has no connections")
    return links


def cmd_rate(a) -> None:
    sc = _load(a.scenario)
    links = _scenario_links(sc)
    graph = build_contention_graph(links, sc.field, sc.radio)
    mics = enumerate_mics(graph, limit=a.mics_limit, seed=a.mics_seed, mode=a.mics_mode)
    ratings = rate_links(mics, sc.field, sc.radio)
    d = _out_dir(a)
    h = _header(a)
    _write(d / "ratings.csv", h, ratings.to_csv())
    _write(d / "mics.txt", h, format_family(mics.links, mics.sets, list(mics.mu)))


def _read_routes(path: str, rate) -> list[Route]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FileNotFoundError(f"cannot read {path}: {exc.strerror or exc}") from None
    routes = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            nodes = tuple(int(v) for v in line.split(":", 1)[-1].split())
        except ValueError:
            raise ScenarioFormatError(f"{path} line {lineno}: expected a node path") from None
        if len(nodes) < 2:
            raise ScenarioFormatError(f"{path} line {lineno}: a path needs at least two nodes")
        routes.append(Route(nodes, rate))
    if not routes:
        raise ScenarioFormatError(f"{path}: no paths found")
    return routes


def cmd_simulate(a) -> None:
    sc = _load(a.scenario)
    mac = _mac(a)
    mics = None
    if a.routes:
        res = simulate(sc, routes=_read_routes(a.routes, a.rate), mac=mac, duration=a.duration,
                       seed=a.seed, trace=a.trace)
    else:
        links = _scenario_links(sc)
        graph = build_contention_graph(links, sc.field, sc.radio)
        mics = enumerate_mics(graph, limit=a.mics_limit, seed=a.mics_seed, mode=a.mics_mode)
        res = simulate(sc, links=links, mac=mac, duration=a.duration, seed=a.seed, mics=mics, trace=a.trace)
    d = _out_dir(a)
    h = _header(a)
    st = res.stats
    _write(d / "sim_links.csv", h, st.link_csv())
    _write(d / "sim_histogram.csv", h, st.histogram_csv() + f"skipped,{st.skipped},,\n")
    flows = "flow,delivered_packets,throughput,queue_drops\n" + "".join(
        f"{k},{int(st.flow_delivered[k])},{float(st.flow_throughput[k])!r},{int(st.flow_queue_drops[k])}\n"
        for k in range(len(st.flow_delivered)))
    _write(d / "sim_flows.csv", h, flows)
    if a.trace:
        _write(d / "trace.txt", h, "\n".join(res.trace) + "\n")


def cmd_validate(a) -> None:
    seeds = a.seeds if a.seeds is not None else list(range(1, a.scenarios + 1))
    if len(seeds) != a.scenarios:
        raise ValueError(f"--seeds lists {len(seeds)} seeds but --scenarios is {a.scenarios}")
    params = BatchParams(a.nodes, a.area, a.links, a.duration, a.mics_mode, a.mics_limit, _radio(a), _mac(a))
    report, result = run_validation_batch(a.scenarios, params, seeds, workers=a.workers)
    d = _out_dir(a)
    h = _header(a)
    tout, norm = result.capacity_series()
    cap_r = pearson(tout, norm) if len(tout) >= 3 else float("nan")
    summary = (report.to_text()
               + f"seeds used: {','.join(str(s) for s in result.seeds)}\n"
               + f"intra-MICS share (all interferers): {result.intra_share!r}\n"
               + f"intra-MICS share (minimal culprits): {result.intra_share_minimal!r}\n"
               + f"records without attribution: {result.skipped}\n"
               + f"CTS frames lost: {result.cts_lost} of {result.rts_timeouts} RTS timeouts "
               + f"(share {result.cts_loss_share!r})\n"
               + f"timeout% vs normalized throughput: R={cap_r!r} (n={len(tout)})\n")
    _write(d / "validation_report.txt", h, summary)
    _write(d / "correlations.csv", h, report.to_csv())
    _write(d / "validation_links.csv", h, result.rows_csv())
    _write(d / "cause_histogram.csv", h, result.histogram_csv())
    _write(d / "capacity_series.csv", h, result.series_csv())


def cmd_route(a) -> None:
    sc = _load(a.scenario)
    if not sc.connections:
        raise ValueError("the scenario has no connections to route")
    d = _out_dir(a)
    h = _header(a)
    methods = ("sar", "sp", "iar") if a.method == "all" else (a.method,)
    for m in methods:
        if m == "sar":
            res = sar_search(sc, sc.connections, a.threshold, a.max_configs, a.slack,
                             a.mics_mode, a.mics_limit, a.mics_seed)
            cfg = res.best
            _write(d / "sar_search.log", h, res.log_text())
        elif m == "sp":
            cfg = shortest_path_baseline(sc, sc.connections)
        else:
            cfg = iar_baseline(sc, sc.connections, a.slack)
        _write(d / f"{m}_paths.txt", h, f"# cim={cfg.cim!r} objective={cfg.objective_value!r}\n" + cfg.paths_text())
        _write(d / f"{m}_flows.csv", h, cfg.flows_csv())


def cmd_compare(a) -> None:
    params = CompareParams(a.grid, a.spacing, a.connections, a.min_hops, a.rates, a.duration,
                           a.threshold, a.max_configs, a.slack, _radio(a), _mac(a))
    result = run_routing_comparison(a.seeds, params, workers=a.workers)
    d = _out_dir(a)
    h = _header(a)
    _write(d / "compare_table.csv", h, result.table())
    _write(d / "compare_runs.csv", h, result.rows_csv())


# --- parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="schedaware", description="Scheduling-aware link rating, MAC simulation and routing.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    g = sub.add_parser("gen", help="write a scenario file")
    g.add_argument("-o", "--out", default="scenario.txt")
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("--nodes", type=int, default=config.VALIDATION_NODES)
    g.add_argument("--area", type=float, default=config.VALIDATION_AREA_M, help="square side in metres")
    g.add_argument("--links", type=int, default=config.VALIDATION_LINKS, help="random one-hop links")
    g.add_argument("--grid", type=int, default=None, help="grid side; switches to multi-hop connections")
    g.add_argument("--spacing", type=float, default=config.GRID_SPACING_M)
    g.add_argument("--connections", type=int, default=4)
    g.add_argument("--min-hops", type=int, default=2)
    g.add_argument("--rate", type=float, default=None, help="connection rate in bits/s")
    _radio_flags(g)
    _mac_flags(g)
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("rate", help="rate the scenario's one-hop links")
    r.add_argument("scenario")
    r.add_argument("--out-dir", default=".")
    _mics_flags(r)
    r.set_defaults(func=cmd_rate)

    s = sub.add_parser("simulate", help="simulate the scenario's links or a set of routes")
    s.add_argument("scenario")
    s.add_argument("--out-dir", default=".")
    s.add_argument("--duration", type=float, default=10.0, help="simulated seconds")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--routes", default=None, help="paths file written by 'route'")
    s.add_argument("--rate", type=float, default=None, help="per-route rate in bits/s (default saturated)")
    s.add_argument("--trace", action="store_true")
    _mac_flags(s)
    _mics_flags(s)
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("validate", help="correlate ratings with simulated timeouts")
    v.add_argument("--out-dir", default=".")
    v.add_argument("--scenarios", type=int, default=10)
    v.add_argument("--seeds", type=parse_seeds, default=None)
    v.add_argument("--nodes", type=int, default=config.VALIDATION_NODES)
    v.add_argument("--area", type=float, default=config.VALIDATION_AREA_M)
    v.add_argument("--links", type=int, default=config.VALIDATION_LINKS)
    v.add_argument("--duration", type=float, default=30.0)
    v.add_argument("--workers", type=int, default=1)
    _radio_flags(v)
    _mac_flags(v)
    _mics_flags(v)
    v.set_defaults(func=cmd_validate)

    ro = sub.add_parser("route", help="route the scenario's connections")
    ro.add_argument("scenario")
    ro.add_argument("--out-dir", default=".")
    ro.add_argument("--method", choices=("sar", "sp", "iar", "all"), default="all")
    _search_flags(ro)
    _mics_flags(ro)
    ro.set_defaults(func=cmd_route)

    c = sub.add_parser("compare", help="SAR vs shortest-path vs interference-aware routing on a grid")
    c.add_argument("--out-dir", default=".")
    c.add_argument("--grid", type=int, default=config.GRID_SIDE)
    c.add_argument("--spacing", type=float, default=config.GRID_SPACING_M)
    c.add_argument("--connections", type=int, default=4)
    c.add_argument("--min-hops", type=int, default=2)
    c.add_argument("--seeds", type=parse_seeds, default=parse_seeds("1..5"))
    c.add_argument("--rates", type=parse_rates, default=(None,), help="comma list of bits/s or 'saturated'")
    c.add_argument("--duration", type=float, default=30.0)
    c.add_argument("--workers", type=int, default=1)
    _radio_flags(c)
    _mac_flags(c)
    _search_flags(c)
    c.set_defaults(func=cmd_compare)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"schedaware: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.func(args)
    except (FileNotFoundError, ScenarioFormatError, IsADirectoryError, PermissionError) as exc:
        print(f"schedaware: {exc}", file=sys.stderr)
        return EXIT_FILE
    except RoutingError as exc:
        print(f"schedaware: infeasible routing: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except Exception as exc:  # noqa: BLE001 - every failure becomes one diagnostic line
        print(f"schedaware: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
