"""Contention graph over active links and MICS / EMICS enumeration.

Two active links are *concurrent* when neither source carrier-senses the
other, so the MAC cannot stop them from transmitting at the same time.  A
MICS is a maximal clique of the concurrency graph; an EMICS is a maximal
subset of a MICS whose DATA transfers can all succeed together under
cumulative interference.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from . import config
from .scenario import ActiveLink, RadioParams, SignalField


class MicsCapExceeded(ValueError):
    """Exact enumeration was requested for more links than the configured cap."""


def can_coexist(field: SignalField, params: RadioParams, l1: ActiveLink, l2: ActiveLink) -> bool:
    """True when neither link's source carrier-senses the other's.

    Links sharing a node are never concurrent (half-duplex radios).
    """
    if l1 == l2:
        raise ValueError("can_coexist needs two distinct links")
    if {l1.src, l1.dst} & {l2.src, l2.dst}:
        return False
    theta = field.theta
    thr = params.cs_threshold
    return bool(theta[l2.src, l1.src] < thr and theta[l1.src, l2.src] < thr)


@dataclass(frozen=True, eq=False)
class ContentionGraph:
    links: tuple[ActiveLink, ...]
    concurrent: np.ndarray  # symmetric bool (L, L)

    def neighbors(self, i: int) -> set[int]:
        return set(np.flatnonzero(self.concurrent[i]).tolist())

    @property
    def edge_count(self) -> int:
        return int(self.concurrent.sum()) // 2


def build_contention_graph(links: Sequence[ActiveLink], field: SignalField,
                           params: RadioParams) -> ContentionGraph:
    links = tuple(ActiveLink(*l) for l in links)
    if len(set(links)) != len(links):
        raise ValueError("duplicate active links")
    n = len(links)
    adj = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for j in range(i + 1, n):
            adj[i, j] = adj[j, i] = can_coexist(field, params, links[i], links[j])
    adj.setflags(write=False)
    return ContentionGraph(links, adj)


@dataclass(frozen=True, eq=False)
class MicsFamily:
    """All MICS over a link set with activation probabilities.

    ``sets`` holds sorted tuples of link ids (indices into ``links``), in
    canonical sorted order; ``membership[i]`` lists the indices of the sets
    containing link ``i``.
    """

    links: tuple[ActiveLink, ...]
    sets: tuple[tuple[int, ...], ...]
    mu: np.ndarray
    membership: tuple[tuple[int, ...], ...]

    @classmethod
    def from_sets(cls, links: Sequence[ActiveLink], sets: Iterable[Iterable[int]]) -> "MicsFamily":
        canon = sorted({tuple(sorted(s)) for s in sets})
        sizes = np.array([len(s) for s in canon], dtype=float)
        mu = sizes / sizes.sum() if len(canon) else sizes
        members: list[list[int]] = [[] for _ in links]
        for k, s in enumerate(canon):
            for i in s:
                members[i].append(k)
        mu.setflags(write=False)
        return cls(tuple(links), tuple(canon), mu, tuple(tuple(m) for m in members))

    def __len__(self):
        return len(self.sets)

    def sigma(self, i: int) -> float:
        """Probability that some MICS containing link ``i`` is active."""
        return float(sum(self.mu[k] for k in self.membership[i]))

    def share_mics(self, i: int, j: int) -> bool:
        return not set(self.membership[i]).isdisjoint(self.membership[j])


def _bron_kerbosch(adj: list[set[int]]) -> list[tuple[int, ...]]:
    """Maximal cliques via Bron-Kerbosch with Tomita pivoting (iterative)."""
    cliques = []
    stack = [([], set(range(len(adj))), set())]
    while stack:
        r, p, x = stack.pop()
        if not p:
            if not x:
                cliques.append(tuple(sorted(r)))
            continue
        pivot = max(p | x, key=lambda u: (len(adj[u] & p), -u))
        for v in sorted(p - adj[pivot], reverse=True):
            stack.append((r + [v], p & adj[v], x & adj[v]))
            p = p - {v}
            x = x | {v}
    return cliques


def enumerate_mics_exact(graph: ContentionGraph, cap: int = config.EXACT_MICS_CAP) -> MicsFamily:
    n = len(graph.links)
    if n > cap:
        raise MicsCapExceeded(f"{n} active links exceeds the exact-mode cap of {cap}")
    if n == 0:
        return MicsFamily.from_sets((), ())
    adj = [graph.neighbors(i) for i in range(n)]
    return MicsFamily.from_sets(graph.links, _bron_kerbosch(adj))


def enumerate_mics_heuristic(graph: ContentionGraph, limit: int = config.HEURISTIC_MICS_LIMIT,
                             seed: int = 0, patience: int = 3) -> MicsFamily:
    """Randomised greedy maximal-clique growth.

    Each round grows one clique from every link (uncovered links first), adding
    random candidates until none remain.  The first round guarantees every
    link is covered, so a ``limit`` below the number of links needed for
    coverage is overridden by coverage.  Later rounds stop after ``patience``
    rounds produce nothing new, or when ``limit`` sets are known.
    """
    if limit < 1:
        raise ValueError("limit must be >= 1")
    n = len(graph.links)
    rng = np.random.default_rng(seed)
    adj = [graph.neighbors(i) for i in range(n)]
    found: set[tuple[int, ...]] = set()
    covered = np.zeros(n, dtype=bool)

    def grow(start: int) -> tuple[int, ...]:
        clique = [start]
        cand = sorted(adj[start])
        while cand:
            v = cand[int(rng.integers(len(cand)))]
            clique.append(v)
            cand = [u for u in cand if u in adj[v]]
        return tuple(sorted(clique))

    for v in range(n):
        if covered[v]:
            continue
        c = grow(v)
        found.add(c)
        covered[list(c)] = True
    idle = 0
    while len(found) < limit and idle < patience and n:
        before = len(found)
        for v in rng.permutation(n):
            found.add(grow(int(v)))
            if len(found) >= limit:
                break
        idle = idle + 1 if len(found) == before else 0
    return MicsFamily.from_sets(graph.links, found)


def enumerate_mics(graph: ContentionGraph, cap: int = config.EXACT_MICS_CAP,
                   limit: int = config.HEURISTIC_MICS_LIMIT, seed: int = 0,
                   mode: str = "auto") -> MicsFamily:
    """Exact enumeration up to ``cap`` links, heuristic above (``mode='auto'``)."""
    if mode == "exact" or (mode == "auto" and len(graph.links) <= cap):
        return enumerate_mics_exact(graph, cap=max(cap, len(graph.links)) if mode == "exact" else cap)
    if mode not in ("auto", "heuristic"):
        raise ValueError(f"unknown MICS mode {mode!r}")
    return enumerate_mics_heuristic(graph, limit=limit, seed=seed)


# --- EMICS ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EmicsFamily:
    links: tuple[ActiveLink, ...]
    sets: tuple[tuple[int, ...], ...]
    parent: tuple[int, ...]  # index of one MICS containing each EMICS
    membership: tuple[tuple[int, ...], ...]


class _EmicsChecker:
    """Evaluates the EMICS admission conditions for subsets of links."""

    def __init__(self, links: Sequence[ActiveLink], field: SignalField, params: RadioParams):
        th = field.theta
        s = np.array([l.src for l in links], dtype=int)
        d = np.array([l.dst for l in links], dtype=int)
        # at_d[l, m]: strongest of m's two endpoints as heard at l's receiver
        # (theta[i, j] is i's power at j, so the m index goes first)
        self.at_d = np.maximum(th[np.ix_(s, d)], th[np.ix_(d, d)]).T
        self.at_s = np.maximum(th[np.ix_(s, s)], th[np.ix_(d, s)]).T
        np.fill_diagonal(self.at_d, 0.0)
        np.fill_diagonal(self.at_s, 0.0)
        self.sig_d = th[s, d]
        self.sig_s = th[d, s]
        self.W = params.noise_floor
        self.T_rx = params.rx_sensitivity
        self.T_sinr = params.sinr_threshold

    def ok(self, idx: Sequence[int]) -> bool:
        if len(idx) <= 1:
            return True
        idx = np.asarray(idx)
        nd = self.at_d[np.ix_(idx, idx)].sum(axis=1)
        ns = self.at_s[np.ix_(idx, idx)].sum(axis=1)
        return bool(np.all(nd + self.W < self.T_rx)
                    and np.all(self.sig_d[idx] / (nd + self.W) >= self.T_sinr)
                    and np.all(self.sig_s[idx] / (ns + self.W) >= self.T_sinr))

    def maximal_subsets(self, members: Sequence[int]) -> list[tuple[int, ...]]:
        members = list(members)
        out: list[tuple[int, ...]] = []

        def rec(i: int, cur: list[int], excluded: list[int]):
            rest = members[i:]
            if self.ok(cur + rest):
                full = cur + rest
                if all(not self.ok(full + [e]) for e in excluded):
                    out.append(tuple(sorted(full)))
                return
            x = members[i]
            if self.ok(cur + [x]):
                rec(i + 1, cur + [x], excluded)
            rec(i + 1, cur, excluded + [x])

        if members:
            rec(0, [], [])
        return out


def emics_conditions_hold(subset: Sequence[int], links: Sequence[ActiveLink],
                          field: SignalField, params: RadioParams) -> bool:
    """Direct loop evaluation of EMICS conditions 2-4 for one subset."""
    th = field.theta
    W = params.noise_floor
    for a in subset:
        s, d = links[a]
        at_d = sum(max(th[links[b].src, d], th[links[b].dst, d]) for b in subset if b != a)
        at_s = sum(max(th[links[b].src, s], th[links[b].dst, s]) for b in subset if b != a)
        if not (at_d + W < params.rx_sensitivity):
            return False
        if not (th[s, d] / (at_d + W) >= params.sinr_threshold):
            return False
        if not (th[d, s] / (at_s + W) >= params.sinr_threshold):
            return False
    return True


def enumerate_emics(mics: MicsFamily, field: SignalField, params: RadioParams) -> EmicsFamily:
    checker = _EmicsChecker(mics.links, field, params)
    parent_of: dict[tuple[int, ...], int] = {}
    for k, c in enumerate(mics.sets):
        for sub in checker.maximal_subsets(c):
            parent_of.setdefault(sub, k)
    sets = tuple(sorted(parent_of))
    members: list[list[int]] = [[] for _ in mics.links]
    for k, s in enumerate(sets):
        for i in s:
            members[i].append(k)
    return EmicsFamily(mics.links, sets, tuple(parent_of[s] for s in sets),
                       tuple(tuple(m) for m in members))


def format_family(links: Sequence[ActiveLink], sets: Sequence[Sequence[int]],
                  weights: Optional[Sequence[float]] = None) -> str:
    """One set per line: sorted link ids, then the links themselves."""
    lines = []
    for k, s in enumerate(sets):
        ids = " ".join(str(i) for i in sorted(s))
        desc = " ".join(str(links[i]) for i in sorted(s))
        w = f" mu={weights[k]!r}" if weights is not None else ""
        lines.append(f"{ids} | {desc}{w}")
    return "\n".join(lines) + ("\n" if lines else "")
