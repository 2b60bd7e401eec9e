"""Integer multi-commodity-flow routing and scheduling-aware route search.

Every connection is routed on a single path (integral flow).  The exact
solver enumerates each connection's simple paths within its hop budget and
assigns them jointly by depth-first branch-and-bound.  Connections and
their paths are explored in lexicographic order, and only strictly better
solutions replace the incumbent, so among optimal assignments the
lexicographically smallest path list wins.

Scheduling-aware routing (SAR) repeatedly rates the active links of a
configuration, picks the worst link and branches on mutual-exclusion
constraints against each of its conflicting links.
"""

from __future__ import annotations

import csv
import heapq
import io
import itertools
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import config
from .contention import build_contention_graph, enumerate_mics
from .iblr import LinkRatings, cim, rate_links
from .scenario import ActiveLink, Connection, Scenario, feasible_links

log = logging.getLogger(__name__)

OBJECTIVES = ("min-signal", "min-interference")


class RoutingError(ValueError):
    """No feasible routing (disconnected pair or over-constrained problem)."""


def _pair(a: ActiveLink, b: ActiveLink) -> tuple[ActiveLink, ActiveLink]:
    return (a, b) if a <= b else (b, a)


def bfs_distances(n: int, links: Iterable[ActiveLink], target: int) -> np.ndarray:
    """Hop distance from every node to ``target`` (-1 when unreachable)."""
    rev: list[list[int]] = [[] for _ in range(n)]
    for s, d in links:
        rev[d].append(s)
    dist = np.full(n, -1, dtype=int)
    dist[target] = 0
    q = deque([target])
    while q:
        u = q.popleft()
        for v in rev[u]:
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                q.append(v)
    return dist


def enumerate_paths(n: int, links: Sequence[ActiveLink], src: int, dst: int, max_hops: int,
                    limit: Optional[int] = None) -> list[tuple[int, ...]]:
    """Simple paths src -> dst with at most ``max_hops`` hops, in lexicographic node order."""
    adj: list[list[int]] = [[] for _ in range(n)]
    for s, d in links:
        adj[s].append(d)
    for a in adj:
        a.sort()
    dist = bfs_distances(n, links, dst)
    out: list[tuple[int, ...]] = []
    if dist[src] < 0 or dist[src] > max_hops:
        return out
    path = [src]
    on_path = {src}

    def rec(u: int):
        if limit is not None and len(out) >= limit:
            return
        if u == dst:
            out.append(tuple(path))
            return
        hops = len(path) - 1
        for v in adj[u]:
            if v in on_path or dist[v] < 0 or hops + 1 + dist[v] > max_hops:
                continue
            path.append(v)
            on_path.add(v)
            rec(v)
            path.pop()
            on_path.discard(v)

    rec(src)
    return out


def path_links(path: Sequence[int]) -> tuple[ActiveLink, ...]:
    return tuple(ActiveLink(a, b) for a, b in zip(path, path[1:]))


def protocol_conflicts(links: Sequence[ActiveLink], scenario: Scenario) -> np.ndarray:
    """Protocol-model conflict matrix: some endpoint of one link carrier-senses an endpoint of the other.

    Links sharing a node always conflict.
    """
    th = scenario.field.theta
    thr = scenario.radio.cs_threshold
    ends = np.array([[l.src, l.dst] for l in links], dtype=int).reshape(-1, 2)
    m = len(links)
    hear = th >= thr
    np.fill_diagonal(hear, True)  # shared node
    hear = hear | hear.T
    out = np.zeros((m, m), dtype=bool)
    for a in range(2):
        for b in range(2):
            out |= hear[np.ix_(ends[:, a], ends[:, b])]
    np.fill_diagonal(out, False)
    return out


@dataclass(frozen=True, eq=False)
class FlowProblem:
    """Single-path MCF instance.

    ``exclusions`` are link pairs that may not both carry flow (of any
    connection).  ``conflict`` is only needed for the min-interference
    objective: a symmetric boolean matrix over ``links``.
    """

    n_nodes: int
    links: tuple[ActiveLink, ...]
    connections: tuple[Connection, ...]
    hop_budget: tuple[int, ...]
    exclusions: frozenset = frozenset()
    objective: str = "min-signal"
    conflict: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "links", tuple(ActiveLink(*l) for l in self.links))
        object.__setattr__(self, "connections", tuple(Connection(*c) for c in self.connections))
        object.__setattr__(self, "exclusions", frozenset(_pair(ActiveLink(*a), ActiveLink(*b))
                                                         for a, b in self.exclusions))
        if self.objective not in OBJECTIVES:
            raise ValueError(f"unknown objective {self.objective!r}")
        if len(self.hop_budget) != len(self.connections):
            raise ValueError("one hop budget per connection is required")
        known = set(self.links)
        for a, b in self.exclusions:
            if a not in known or b not in known:
                raise ValueError(f"exclusion ({a}, {b}) refers to a link outside the graph")
        for c in self.connections:
            c.validate(self.n_nodes)
        if self.objective == "min-interference":
            if self.conflict is None or self.conflict.shape != (len(self.links),) * 2:
                raise ValueError("min-interference needs a conflict matrix over the graph links")

    def with_exclusions(self, exclusions: Iterable) -> "FlowProblem":
        return FlowProblem(self.n_nodes, self.links, self.connections, self.hop_budget,
                           frozenset(exclusions), self.objective, self.conflict)


@dataclass(eq=False)
class RoutingConfig:
    connections: tuple[Connection, ...]
    paths: tuple[tuple[int, ...], ...]
    objective: str
    objective_value: float
    n_nodes: int
    ratings: Optional[LinkRatings] = None
    cim: Optional[float] = None

    @property
    def y(self) -> tuple[frozenset, ...]:
        """Per connection, the links carrying its flow (y = 1)."""
        return tuple(frozenset(path_links(p)) for p in self.paths)

    @property
    def x(self) -> tuple[dict, ...]:
        """Per connection, flow in bits/s on each used link."""
        return tuple({l: c.rate for l in path_links(p)} for c, p in zip(self.connections, self.paths))

    @property
    def signal(self) -> np.ndarray:
        """S_i: total in + out flow carried by every node."""
        s = np.zeros(self.n_nodes)
        for c, p in zip(self.connections, self.paths):
            for a, b in zip(p, p[1:]):
                s[a] += c.rate
                s[b] += c.rate
        return s

    @property
    def active_links(self) -> tuple[ActiveLink, ...]:
        return tuple(sorted({l for p in self.paths for l in path_links(p)}))

    def verify(self, problem: FlowProblem, tol: float = 1e-9) -> None:
        """Re-check bounds, flow conservation, integrality, exclusions and hop budgets."""
        graph = set(problem.links)
        if len(self.paths) != len(problem.connections):
            raise AssertionError("one path per connection expected")
        for k, (c, p) in enumerate(zip(problem.connections, self.paths)):
            if p[0] != c.src or p[-1] != c.dst:
                raise AssertionError(f"connection {k} path does not join its endpoints")
            if len(set(p)) != len(p):
                raise AssertionError(f"connection {k} path is not simple")
            if len(p) - 1 > problem.hop_budget[k]:
                raise AssertionError(f"connection {k} exceeds its hop budget")
            flows = {}
            for l in path_links(p):
                if l not in graph:
                    raise AssertionError(f"link {l} is not in the graph")
                flows[l] = flows.get(l, 0.0) + c.rate
            for l, xv in flows.items():
                if not (-tol <= xv <= c.rate + tol):
                    raise AssertionError(f"bounds violated on {l}")
                if abs(xv - c.rate) > tol:  # x = r * y with y = 1
                    raise AssertionError(f"integrality violated on {l}")
            demand = np.zeros(self.n_nodes)
            for (a, b), xv in flows.items():
                demand[a] += xv
                demand[b] -= xv
            want = np.zeros(self.n_nodes)
            want[c.src] += c.rate
            want[c.dst] -= c.rate
            if np.abs(demand - want).max() > tol:
                raise AssertionError(f"flow conservation violated for connection {k}")
        active = set(self.active_links)
        for a, b in problem.exclusions:
            if a in active and b in active:
                raise AssertionError(f"exclusion ({a}, {b}) violated")
        expected = self.signal
        if abs(evaluate_objective(problem, self.paths) - self.objective_value) > tol * max(1.0, abs(self.objective_value)):
            raise AssertionError("objective value mismatch")
        if (expected < -tol).any():
            raise AssertionError("negative node signal")

    def paths_text(self) -> str:
        lines = []
        for k, (c, p) in enumerate(zip(self.connections, self.paths)):
            lines.append(f"{k} {c.src} {c.dst} {c.rate!r}: " + " ".join(str(v) for v in p))
        return "\n".join(lines) + "\n"

    def flows_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["connection", "src", "dst", "flow"])
        for k, (c, p) in enumerate(zip(self.connections, self.paths)):
            for l in path_links(p):
                w.writerow([k, l.src, l.dst, repr(float(c.rate))])
        return buf.getvalue()


def evaluate_objective(problem: FlowProblem, paths: Sequence[Sequence[int]]) -> float:
    if problem.objective == "min-signal":
        return float(sum(2.0 * c.rate * (len(p) - 1) for c, p in zip(problem.connections, paths)))
    index = {l: i for i, l in enumerate(problem.links)}
    chosen = sorted({index[l] for p in paths for l in path_links(p)})
    sub = problem.conflict[np.ix_(chosen, chosen)]
    return float(sub.sum())


def solve_mcf(problem: FlowProblem, path_limit: Optional[int] = None) -> Optional[RoutingConfig]:
    """Optimal single-path routing, or ``None`` when no assignment is feasible."""
    n_conn = len(problem.connections)
    index = {l: i for i, l in enumerate(problem.links)}
    cands: list[list[tuple[tuple[int, ...], np.ndarray]]] = []
    for c, hb in zip(problem.connections, problem.hop_budget):
        paths = enumerate_paths(problem.n_nodes, problem.links, c.src, c.dst, hb, path_limit)
        if not paths:
            return None
        cands.append([(p, np.array(sorted({index[l] for l in path_links(p)}), dtype=int)) for p in paths])

    m = len(problem.links)
    excl = np.zeros((m, m), dtype=bool)
    for a, b in problem.exclusions:
        excl[index[a], index[b]] = excl[index[b], index[a]] = True
    has_excl = bool(problem.exclusions)

    # drop paths that violate an exclusion on their own
    for k in range(n_conn):
        if has_excl:
            cands[k] = [(p, ids) for p, ids in cands[k] if not excl[np.ix_(ids, ids)].any()]
        if not cands[k]:
            return None

    if problem.objective == "min-signal":
        costs = [[2.0 * c.rate * (len(p) - 1) for p, _ in cs] for c, cs in zip(problem.connections, cands)]
        floor = [min(cs) for cs in costs]
        tail = np.concatenate([np.cumsum(floor[::-1])[::-1], [0.0]])

        def step_cost(k, j, chosen_mask, conf_count):
            return costs[k][j]
    else:
        conf = problem.conflict.astype(np.int64)
        self_cost = []
        for cs in cands:
            self_cost.append([float(conf[np.ix_(ids, ids)].sum()) for _, ids in cs])
        floor = [min(sc) for sc in self_cost]
        tail = np.concatenate([np.cumsum(floor[::-1])[::-1], [0.0]])

        def step_cost(k, j, chosen_mask, conf_count):
            ids = cands[k][j][1]
            new = ids[~chosen_mask[ids]]
            if not len(new):
                return 0.0
            # pairs between new links and chosen ones count twice (both degrees), plus pairs among new
            return float(2 * conf_count[new].sum() + conf[np.ix_(new, new)].sum())

    best = [np.inf, None]
    chosen_mask = np.zeros(m, dtype=bool)
    conf_count = np.zeros(m, dtype=np.int64)
    blocked = np.zeros(m, dtype=np.int64)  # how many chosen links exclude each link
    picks: list[int] = []

    def rec(k: int, cost: float):
        if k == n_conn:
            if cost < best[0]:
                best[0] = cost
                best[1] = list(picks)
            return
        for j, (p, ids) in enumerate(cands[k]):
            if has_excl and blocked[ids].any():
                continue
            inc = step_cost(k, j, chosen_mask, conf_count)
            if cost + inc + tail[k + 1] >= best[0]:
                continue
            new = ids[~chosen_mask[ids]]
            chosen_mask[new] = True
            if problem.objective != "min-signal":
                conf_count[:] += conf[:, new].sum(axis=1)
            if has_excl:
                blocked[:] += excl[:, new].sum(axis=1)
            picks.append(j)
            rec(k + 1, cost + inc)
            picks.pop()
            if has_excl:
                blocked[:] -= excl[:, new].sum(axis=1)
            if problem.objective != "min-signal":
                conf_count[:] -= conf[:, new].sum(axis=1)
            chosen_mask[new] = False
            if best[0] <= tail[0]:
                return  # global lower bound reached: nothing later can be strictly better

    rec(0, 0.0)
    if best[1] is None:
        return None
    paths = tuple(cands[k][j][0] for k, j in enumerate(best[1]))
    return RoutingConfig(problem.connections, paths, problem.objective,
                         evaluate_objective(problem, paths), problem.n_nodes)


# --- problem construction and baselines --------------------------------------

def hop_budgets(scenario: Scenario, connections: Sequence[Connection], slack: int = config.HOP_SLACK,
                links: Optional[Sequence[ActiveLink]] = None) -> tuple[int, ...]:
    links = feasible_links(scenario.field, scenario.radio) if links is None else links
    out = []
    for k, c in enumerate(connections):
        dist = bfs_distances(scenario.n, links, c.dst)
        if dist[c.src] < 0:
            raise RoutingError(f"connection {k} ({c.src}->{c.dst}) is disconnected")
        out.append(int(dist[c.src]) + slack)
    return tuple(out)


def build_problem(scenario: Scenario, connections: Sequence[Connection], objective: str = "min-signal",
                  slack: int = config.HOP_SLACK) -> FlowProblem:
    connections = tuple(Connection(*c) for c in connections)
    if not connections:
        raise RoutingError("no connections to route")
    links = tuple(feasible_links(scenario.field, scenario.radio))
    budgets = hop_budgets(scenario, connections, slack, links)
    conflict = protocol_conflicts(links, scenario) if objective == "min-interference" else None
    return FlowProblem(scenario.n, links, connections, budgets, frozenset(), objective, conflict)


def rate_config(cfg: RoutingConfig, scenario: Scenario, mics_mode: str = "auto",
                mics_limit: int = config.HEURISTIC_MICS_LIMIT, seed: int = 0) -> RoutingConfig:
    """Attach IBLR ratings and CIM, treating every active link as saturated."""
    links = cfg.active_links
    graph = build_contention_graph(links, scenario.field, scenario.radio)
    mics = enumerate_mics(graph, limit=mics_limit, seed=seed, mode=mics_mode)
    cfg.ratings = rate_links(mics, scenario.field, scenario.radio)
    cfg.cim = cim(cfg.ratings)
    return cfg


def shortest_path_baseline(scenario: Scenario, connections: Sequence[Connection], rate: bool = True) -> RoutingConfig:
    """Independent BFS shortest path per connection, lexicographically smallest among equals."""
    connections = tuple(Connection(*c) for c in connections)
    links = feasible_links(scenario.field, scenario.radio)
    paths = []
    for k, c in enumerate(connections):
        dist = bfs_distances(scenario.n, links, c.dst)
        if dist[c.src] < 0:
            raise RoutingError(f"connection {k} ({c.src}->{c.dst}) is disconnected")
        p = enumerate_paths(scenario.n, links, c.src, c.dst, int(dist[c.src]), limit=1)[0]
        paths.append(p)
    problem = FlowProblem(scenario.n, tuple(links), connections,
                          tuple(len(p) - 1 for p in paths), frozenset(), "min-signal")
    cfg = RoutingConfig(connections, tuple(paths), "min-signal", evaluate_objective(problem, paths), scenario.n)
    return rate_config(cfg, scenario) if rate else cfg


def iar_baseline(scenario: Scenario, connections: Sequence[Connection], slack: int = config.HOP_SLACK,
                 rate: bool = True) -> RoutingConfig:
    """Interference-aware MCF: minimise the protocol-model conflict degree of the chosen links."""
    problem = build_problem(scenario, connections, "min-interference", slack)
    cfg = solve_mcf(problem)
    if cfg is None:
        raise RoutingError("no feasible routing")
    return rate_config(cfg, scenario) if rate else cfg


@dataclass
class SearchResult:
    best: RoutingConfig
    initial: RoutingConfig
    evaluated: list = field(default_factory=list)  # RoutingConfig in evaluation order
    log: list = field(default_factory=list)
    stop_reason: str = ""

    def log_text(self) -> str:
        return "\n".join(self.log) + ("\n" if self.log else "")


def _config_key(cfg: RoutingConfig):
    return (cfg.cim, cfg.paths)


def sar_search(scenario: Scenario, connections: Sequence[Connection],
               rating_threshold: float = config.RATING_THRESHOLD, max_configs: int = config.MAX_CONFIGS,
               slack: int = config.HOP_SLACK, mics_mode: str = "auto",
               mics_limit: int = config.HEURISTIC_MICS_LIMIT, seed: int = 0,
               max_solves: Optional[int] = None) -> SearchResult:
    """Best-first branch-and-bound over link-exclusion constraints; returns the minimum-CIM configuration.

    ``max_configs`` bounds the number of distinct configurations rated.
    Different constraint sets often lead back to an already rated
    configuration; those repeats reuse the cached rating, still branch, and
    are bounded separately by ``max_solves`` (default 20 x ``max_configs``).
    """
    if not 0 < rating_threshold <= 1:
        raise ValueError("rating_threshold must lie in (0, 1]")
    if max_configs < 1:
        raise ValueError("max_configs must be >= 1")
    max_solves = 20 * max_configs if max_solves is None else max_solves
    base = build_problem(scenario, connections, "min-signal", slack)
    counter = itertools.count()
    frontier = [(0.0, next(counter), frozenset())]
    seen = {frozenset()}
    rated: dict[tuple, RoutingConfig] = {}
    evaluated: list[RoutingConfig] = []
    lines: list[str] = []
    stop = "frontier exhausted"
    initial = None
    solves = 0
    while frontier:
        if len(evaluated) >= max_configs:
            stop = "budget reached"
            break
        if solves >= max_solves:
            stop = "solve budget reached"
            break
        _, _, excl = heapq.heappop(frontier)
        problem = base.with_exclusions(excl)
        cfg = solve_mcf(problem)
        solves += 1
        if cfg is None:
            lines.append(f"constraints={len(excl)} infeasible")
            continue
        cfg.verify(problem)
        known = rated.get(cfg.paths)
        if known is None:
            rate_config(cfg, scenario, mics_mode, mics_limit, seed)
            rated[cfg.paths] = cfg
            evaluated.append(cfg)
            if initial is None:
                initial = cfg
        else:
            cfg = known
        r = cfg.ratings
        worst = np.maximum(r.rts, r.ack_vcs)
        lines.append(f"constraints={len(excl)} cim={cfg.cim!r} objective={cfg.objective_value!r} "
                     f"max_rating={float(worst.max())!r}" + (" repeat" if known is not None else ""))
        if (worst < rating_threshold).all():
            stop = "ratings below threshold"
            break
        top = int(np.flatnonzero(worst == worst.max())[0])  # links are sorted: lexicographic tie-break
        link = r.links[top]
        for j in sorted(r.conflicts(top)):
            child = excl | {_pair(link, r.links[j])}
            if child not in seen:
                seen.add(child)
                heapq.heappush(frontier, (cfg.cim, next(counter), child))
    if initial is None:
        raise RoutingError("no feasible initial routing configuration")
    best = min(evaluated, key=_config_key)
    lines.append(f"stop: {stop}; evaluated={len(evaluated)} best_cim={best.cim!r}")
    return SearchResult(best, initial, evaluated, lines, stop)


def random_connections(scenario: Scenario, count: int, rng: np.random.Generator, rate: float,
                       min_hops: int = 2) -> tuple[Connection, ...]:
    """Connections between distinct, unused node pairs at least ``min_hops`` apart."""
    links = feasible_links(scenario.field, scenario.radio)
    used: set[int] = set()
    out: list[Connection] = []
    tries = 0
    while len(out) < count:
        tries += 1
        if tries > 10000:
            raise RoutingError("could not place the requested connections")
        s, d = (int(v) for v in rng.choice(scenario.n, size=2, replace=False))
        if s in used or d in used:
            continue
        hops = bfs_distances(scenario.n, links, d)[s]
        if hops < min_hops:
            continue
        used.update((s, d))
        out.append(Connection(s, d, rate))
    return tuple(out)
