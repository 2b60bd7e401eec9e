"""Interaction-based link ratings.

For every active link this module predicts how often its RTS (``rts``) and
its DATA/ACK exchange (``ack`` / ``ack_vcs``) will time out, from the MICS it
belongs to and the received-power matrix.  The scalar functions follow the
definitions one link at a time; :func:`rate_links` computes the same
quantities for a whole link set with array operations.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction
from math import comb
from typing import Iterable, Optional, Sequence

import numpy as np

from .contention import EmicsFamily, MicsFamily, enumerate_emics
from .scenario import ActiveLink, RadioParams, SignalField


def p_exact(k: int) -> float:
    """Probability that exactly ``k`` competitors start before a given link."""
    if k < 0:
        raise ValueError("k must be >= 0")
    return 1.0 / (k + 1)


def p_at_least_one(k: int) -> float:
    """Probability that at least one of ``k`` competitors starts first."""
    if k < 0:
        raise ValueError("k must be >= 0")
    return k / (k + 1)


def p_at_least_one_series(k: int) -> float:
    """Inclusion-exclusion form of :func:`p_at_least_one`, summed exactly."""
    if k < 0:
        raise ValueError("k must be >= 0")
    total = sum(Fraction((-1) ** (i - 1) * comb(k, i), i + 1) for i in range(1, k + 1))
    return float(total)


# --- per-link definitions ---------------------------------------------------

def _sinr_broken(params, sig: float, interference: float) -> bool:
    return sig / (interference + params.noise_floor) < params.sinr_threshold


def unsafe_links(C: Iterable[ActiveLink], link: ActiveLink, field: SignalField,
                 params: RadioParams) -> set[ActiveLink]:
    """Members of ``C`` that can keep the link's receiver busy or break its RTS."""
    th = field.theta
    s, d = link
    out = set()
    for other in C:
        if other == link:
            continue
        p = th[other.src, d]
        if p >= params.cs_threshold or _sinr_broken(params, th[s, d], p):
            out.add(other)
    return out


def _family_index(mics, link: ActiveLink) -> int:
    try:
        return mics.links.index(link)
    except ValueError:
        raise ValueError(f"link {link} is not in the family") from None


def _sets_of(mics: MicsFamily, i: int) -> list[list[ActiveLink]]:
    return [[mics.links[j] for j in mics.sets[k]] for k in mics.membership[i]]


def rts_rating(link: ActiveLink, mics: MicsFamily, field: SignalField, params: RadioParams) -> float:
    i = _family_index(mics, link)
    groups = _sets_of(mics, i)
    if not groups:
        raise ValueError(f"link {link} belongs to no MICS")
    return sum(p_at_least_one(len(unsafe_links(C, link, field, params))) for C in groups) / len(groups)


def corruptor_sets(link: ActiveLink, mics: MicsFamily, field: SignalField, params: RadioParams):
    """Links whose RTS, CTS or ACK can corrupt this link's DATA at its receiver.

    Returns ``(K, K_cts, K_ack)``; the three sets are disjoint by construction.
    """
    th = field.theta
    s, d = link
    i = _family_index(mics, link)
    co = {mics.links[j] for k in mics.membership[i] for j in mics.sets[k]} - {link}
    sig = th[s, d]
    K = {o for o in co if _sinr_broken(params, sig, th[o.src, d])}
    K_cts = {o for o in co - K
             if th[s, o.dst] < params.cs_threshold and _sinr_broken(params, sig, th[o.dst, d])}
    K_ack = {o for o in co - K - K_cts
             if not _sinr_broken(params, th[o.src, o.dst], th[s, o.dst])
             and _sinr_broken(params, sig, th[o.dst, d])}
    return K, K_cts, K_ack


def indirect_interference(C: Iterable[ActiveLink], mu_c: float, link: ActiveLink,
                          field: SignalField, params: RadioParams):
    """Sub-sensitivity co-members ``I``, their worst-case summed power ``eta``
    at the receiver, and the resulting corruption mass ``nu``."""
    th = field.theta
    s, d = link
    W = params.noise_floor
    I = {o for o in C if o != link
         and th[o.src, d] + W < params.rx_sensitivity and th[o.dst, d] + W < params.rx_sensitivity}
    eta = float(sum(max(th[o.src, d], th[o.dst, d]) for o in I))
    nu = mu_c * p_exact(len(I)) if _sinr_broken(params, th[s, d], eta) else 0.0
    return I, eta, nu


def max_parallel_interference(a: int, link: ActiveLink, emics: EmicsFamily, field: SignalField) -> float:
    """Largest summed source power at node ``a`` over the EMICS containing the link.

    The link's own source is left out of the sum.
    """
    i = _family_index(emics, link)
    if not emics.membership[i]:
        raise ValueError(f"link {link} belongs to no EMICS")
    th = field.theta
    best = 0.0
    for k in emics.membership[i]:
        total = sum(th[emics.links[j].src, a] for j in emics.sets[k] if j != i)
        best = max(best, total)
    return float(best)


def vcs_indicator(a: int, link: ActiveLink, emics: EmicsFamily, field: SignalField,
                  params: RadioParams) -> int:
    """1 when node ``a`` can decode the link's RTS or CTS over parallel DATA traffic."""
    th = field.theta
    strongest = max(th[link.src, a], th[link.dst, a])
    if not strongest > params.rx_sensitivity:
        return 0
    P = max_parallel_interference(a, link, emics, field)
    return int(strongest / (P + params.noise_floor) >= params.sinr_threshold)


def ack_rating(link: ActiveLink, mics: MicsFamily, field: SignalField, params: RadioParams,
               use_vcs: bool = True, emics: Optional[EmicsFamily] = None) -> float:
    i = _family_index(mics, link)
    K, K_cts, K_ack = corruptor_sets(link, mics, field, params)
    if use_vcs:
        if emics is None:
            emics = enumerate_emics(mics, field, params)
        K = {o for o in K if vcs_indicator(o.src, link, emics, field, params) == 0}
        K_cts = {o for o in K_cts if vcs_indicator(o.dst, link, emics, field, params) == 0}
    sigma = mics.sigma(i)
    if sigma <= 0:
        raise ValueError(f"link {link} belongs to no MICS")
    total = 0.0
    for k in mics.membership[i]:
        C = {mics.links[j] for j in mics.sets[k]}
        n = len(K & C) + len(K_cts & C) + len(K_ack & C)
        _, _, nu = indirect_interference(C, float(mics.mu[k]), link, field, params)
        total += float(mics.mu[k]) * p_at_least_one(n) + nu
    return total / sigma


# --- whole-configuration rating ----------------------------------------------

@dataclass(frozen=True, eq=False)
class LinkRatings:
    """Ratings and conflict sets for every link of a MICS family.

    Conflict sets hold link indices into ``links``.
    """

    links: tuple[ActiveLink, ...]
    rts: np.ndarray
    ack: np.ndarray
    ack_vcs: np.ndarray
    sigma: np.ndarray
    n_mics: np.ndarray
    unsafe: tuple[frozenset, ...]  # union over MICS of the unsafe sets
    K: tuple[frozenset, ...]
    K_cts: tuple[frozenset, ...]
    K_ack: tuple[frozenset, ...]
    K_vcs: tuple[frozenset, ...]
    K_cts_vcs: tuple[frozenset, ...]

    def __len__(self):
        return len(self.links)

    def index(self, link: ActiveLink) -> int:
        return self.links.index(link)

    def conflicts(self, i: int) -> frozenset:
        """Links whose activity drives link ``i`` into RTS or ACK timeouts."""
        return self.unsafe[i] | self.K_vcs[i] | self.K_cts_vcs[i] | self.K_ack[i]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["link", "src", "dst", "rts_rating", "ack_rating", "ack_rating_vcs", "sigma", "n_mics"])
        for i, l in enumerate(self.links):
            w.writerow([i, l.src, l.dst, repr(float(self.rts[i])), repr(float(self.ack[i])),
                        repr(float(self.ack_vcs[i])), repr(float(self.sigma[i])), int(self.n_mics[i])])
        return buf.getvalue()


def _pairwise(links: Sequence[ActiveLink], field: SignalField, params: RadioParams):
    th = field.theta
    W, T_rx, T = params.noise_floor, params.rx_sensitivity, params.sinr_threshold
    s = np.array([l.src for l in links], dtype=int)
    d = np.array([l.dst for l in links], dtype=int)
    sig = th[s, d][:, None]  # victim signal, row = victim
    src_at_d = th[np.ix_(s, d)].T  # [l, m] = power of m's source at l's receiver
    dst_at_d = th[np.ix_(d, d)].T
    own_src_at_dst = th[np.ix_(s, d)]  # [l, m] = power of l's source at m's receiver
    m_sig = th[s, d][None, :]
    unsafe = (src_at_d >= T_rx - W) | (sig / (src_at_d + W) < T)
    K = sig / (src_at_d + W) < T
    cts = (own_src_at_dst < T_rx - W) & (sig / (dst_at_d + W) < T)
    ack = (m_sig / (own_src_at_dst + W) >= T) & (sig / (dst_at_d + W) < T)
    indirect = (src_at_d + W < T_rx) & (dst_at_d + W < T_rx)
    eta_w = np.maximum(src_at_d, dst_at_d)
    for a in (unsafe, K, cts, ack, indirect):
        np.fill_diagonal(a, False)
    return unsafe, K, cts, ack, indirect, eta_w


def _parallel_power(emics: EmicsFamily, field: SignalField, nodes: np.ndarray) -> np.ndarray:
    """``P[l, a]`` for each link l and each node in ``nodes``."""
    L = len(emics.links)
    s = np.array([l.src for l in emics.links], dtype=int)
    Me = np.zeros((len(emics.sets), L))
    for k, c in enumerate(emics.sets):
        Me[k, list(c)] = 1.0
    src_at = field.theta[np.ix_(s, nodes)]  # (L, A)
    totals = Me @ src_at  # (E, A)
    P = np.zeros((L, len(nodes)))
    for l in range(L):
        ks = list(emics.membership[l])
        P[l] = (totals[ks] - src_at[l][None, :]).max(axis=0)
    return np.maximum(P, 0.0)


def rate_links(mics: MicsFamily, field: SignalField, params: RadioParams,
               emics: Optional[EmicsFamily] = None) -> LinkRatings:
    links = mics.links
    L = len(links)
    if L == 0:
        e = np.zeros(0)
        return LinkRatings((), e, e, e, e, np.zeros(0, dtype=int), (), (), (), (), (), ())
    if emics is None:
        emics = enumerate_emics(mics, field, params)
    th = field.theta
    W, T_rx, T = params.noise_floor, params.rx_sensitivity, params.sinr_threshold
    unsafe, Kc, cts_c, ack_c, indirect, eta_w = _pairwise(links, field, params)

    Mb = np.zeros((len(mics.sets), L))
    for k, c in enumerate(mics.sets):
        Mb[k, list(c)] = 1.0
    co = (Mb.T @ Mb) > 0
    np.fill_diagonal(co, False)
    K = co & Kc
    K_cts = co & ~K & cts_c
    K_ack = co & ~K & ~K_cts & ack_c

    # VCS filtering: corruptor m is dropped when its source (RTS) or its
    # destination (CTS) can decode the victim's control frames.
    s = np.array([l.src for l in links], dtype=int)
    d = np.array([l.dst for l in links], dtype=int)
    nodes = np.unique(np.concatenate([s, d]))
    col = {int(a): j for j, a in enumerate(nodes)}
    P = _parallel_power(emics, field, nodes)  # (L, A)

    def beta(a_nodes: np.ndarray) -> np.ndarray:
        # beta[l, m] for node a = a_nodes[m] against victim l
        cols = np.array([col[int(a)] for a in a_nodes])
        strongest = np.maximum(th[np.ix_(s, a_nodes)], th[np.ix_(d, a_nodes)])
        return (strongest > T_rx) & (strongest / (P[:, cols] + W) >= T)

    K_vcs = K & ~beta(s)
    K_cts_vcs = K_cts & ~beta(d)

    mu = np.asarray(mics.mu)
    sigma = Mb.T @ mu
    n_mics = Mb.sum(axis=0).astype(int)

    def p_vec(counts):
        return counts / (counts + 1.0)

    u_count = Mb @ unsafe.T  # [k, l]
    rts = (Mb * p_vec(u_count)).sum(axis=0) / n_mics

    i_count = (Mb @ indirect.T).astype(int)
    eta = Mb @ (indirect * eta_w).T
    sig = th[s, d]
    broken = sig[None, :] / (eta + W) < T
    nu = np.where(broken, mu[:, None] / (i_count + 1), 0.0) * Mb

    def ack_score(sets_sum: np.ndarray) -> np.ndarray:
        counts = Mb @ sets_sum.T
        per_set = mu[:, None] * p_vec(counts) * Mb + nu
        return per_set.sum(axis=0) / sigma

    ack = ack_score((K | K_cts | K_ack).astype(float))
    ack_vcs = ack_score((K_vcs | K_cts_vcs | K_ack).astype(float))

    unsafe_union = co & unsafe

    def rows(a):
        return tuple(frozenset(np.flatnonzero(r).tolist()) for r in a)

    return LinkRatings(links, rts, ack, ack_vcs, sigma, n_mics, rows(unsafe_union), rows(K),
                       rows(K_cts), rows(K_ack), rows(K_vcs), rows(K_cts_vcs))


def cim(ratings: LinkRatings) -> float:
    """Mean over links of the average of the RTS and (VCS-aware) ACK ratings."""
    if len(ratings) == 0:
        raise ValueError("CIM is undefined for an empty link set")
    return float(np.mean((ratings.rts + ratings.ack_vcs) / 2.0))
