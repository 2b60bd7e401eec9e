"""Discrete-event IEEE 802.11 DCF simulator with an SINR-threshold receiver.

The simulator runs DIFS + binary exponential backoff, RTS/CTS/DATA/ACK (or
basic DATA/ACK access), NAV from overheard control frames, and decides every
reception by the SINR over the frame's whole airtime.  Time is kept in
integer nanoseconds so that runs are bit-for-bit reproducible.

Failures of RTS and DATA frames at their intended receiver, and CTS
responses suppressed by carrier sense, are logged as
:class:`CollisionRecord` entries with the links whose transmissions caused
them.
"""

from __future__ import annotations

import csv
import heapq
import io
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from . import config
from .contention import MicsFamily
from .scenario import ActiveLink, Scenario, link_feasible

log = logging.getLogger(__name__)

CAUSES = ("RTS-A", "RTS-I", "DATA-A", "DATA-I", "CTS-PCS", "CTS-VCS")

RTS, CTS, DATA, ACK = "RTS", "CTS", "DATA", "ACK"

# MAC states
IDLE, CONTEND, SENDING, WAIT_CTS, WAIT_ACK, RESPONDING = range(6)

# event kinds
_TX_START, _TX_END, _BACKOFF, _TIMEOUT, _NAV_END, _GEN, _NAV_CHECK = range(7)


@dataclass(frozen=True)
class MacParams:
    """802.11 timing and framing.  Durations in microseconds, sizes in bytes."""

    slot_time: float = config.SLOT_TIME_US
    sifs: float = config.SIFS_US
    difs: float = config.DIFS_US
    phy_header: float = config.PHY_HEADER_US
    cw_min: int = config.CW_MIN
    cw_max: int = config.CW_MAX
    short_retry_limit: int = config.SHORT_RETRY_LIMIT
    long_retry_limit: int = config.LONG_RETRY_LIMIT
    bit_rate: float = config.BIT_RATE
    rts_size: int = config.RTS_BYTES
    cts_size: int = config.CTS_BYTES
    ack_size: int = config.ACK_BYTES
    data_size: int = config.DATA_BYTES
    rts_cts_enabled: bool = True
    eifs_enabled: bool = True
    cts_physical_cs: bool = True  # suppress CTS when the responder senses a busy channel
    queue_limit: int = config.QUEUE_LIMIT

    def __post_init__(self):
        for name in ("slot_time", "sifs", "difs", "bit_rate", "rts_size", "cts_size",
                     "ack_size", "data_size", "queue_limit"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.phy_header < 0:
            raise ValueError("phy_header must be non-negative")
        for cw in (self.cw_min, self.cw_max):
            if cw < 1 or (cw + 1) & cw:
                raise ValueError("contention windows must be powers of two minus one")
        if self.cw_min > self.cw_max:
            raise ValueError("cw_min must not exceed cw_max")
        if self.short_retry_limit < 1 or self.long_retry_limit < 1:
            raise ValueError("retry limits must be >= 1")

    def airtime(self, nbytes: int) -> float:
        """Frame duration in microseconds."""
        return self.phy_header + nbytes * 8 * 1e6 / self.bit_rate

    @property
    def eifs(self) -> float:
        """Deferral after sensing a frame that could not be decoded."""
        return self.sifs + self.airtime(self.ack_size) + self.difs

    def saturation_throughput(self) -> float:
        """Throughput (bits/s) of a lone saturated link: one exchange per mean cycle."""
        cycle = self.difs + self.cw_min / 2 * self.slot_time + self.airtime(self.data_size) + self.airtime(self.ack_size)
        if self.rts_cts_enabled:
            cycle += self.airtime(self.rts_size) + self.airtime(self.cts_size) + 3 * self.sifs
        else:
            cycle += self.sifs
        return self.data_size * 8 / (cycle * 1e-6)


class Route(NamedTuple):
    """A multi-hop flow.  ``rate`` is bits/s; ``None`` means a saturated source."""

    path: tuple[int, ...]
    rate: Optional[float] = None


class CollisionRecord(NamedTuple):
    """One failed RTS/DATA reception or suppressed CTS.

    ``interferers`` lists every link transmitting at the moment of failure;
    ``culprits`` is the smallest strongest-first subset of them that alone
    explains the failure.
    """

    time: float  # seconds
    victim: ActiveLink
    frame: str
    cause: str
    interferers: tuple[ActiveLink, ...]
    culprits: tuple[ActiveLink, ...] = ()


@dataclass
class SimStats:
    links: tuple[ActiveLink, ...]
    duration: float
    bit_rate: float
    data_size: int
    rts_attempts: np.ndarray
    rts_timeouts: np.ndarray
    data_attempts: np.ndarray
    ack_timeouts: np.ndarray
    successes: np.ndarray
    retry_drops: np.ndarray
    delivered_bits: np.ndarray
    busy_time_src: np.ndarray
    busy_time_dst: np.ndarray
    cts_lost: np.ndarray
    ack_lost: np.ndarray
    flow_delivered: np.ndarray  # packets reaching each flow's destination
    flow_queue_drops: np.ndarray
    histogram: dict = field(default_factory=dict)
    intra: dict = field(default_factory=dict)
    inter: dict = field(default_factory=dict)
    skipped: int = 0

    @property
    def rts_timeout_frac(self) -> np.ndarray:
        return _ratio(self.rts_timeouts, self.rts_attempts)

    @property
    def ack_timeout_frac(self) -> np.ndarray:
        return _ratio(self.ack_timeouts, self.data_attempts)

    @property
    def timeout_frac(self) -> np.ndarray:
        """Share of all MAC transmissions (RTS and DATA) that timed out."""
        return _ratio(self.rts_timeouts + self.ack_timeouts, self.rts_attempts + self.data_attempts)

    @property
    def throughput(self) -> np.ndarray:
        return self.delivered_bits / self.duration

    @property
    def flow_throughput(self) -> np.ndarray:
        return self.flow_delivered * self.data_size * 8 / self.duration

    def link_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["link", "src", "dst", "rts_attempts", "rts_timeouts", "data_attempts", "ack_timeouts",
                    "rts_timeout_frac", "ack_timeout_frac", "delivered_bits", "throughput",
                    "busy_time_src", "busy_time_dst"])
        for i, l in enumerate(self.links):
            w.writerow([i, l.src, l.dst, int(self.rts_attempts[i]), int(self.rts_timeouts[i]),
                        int(self.data_attempts[i]), int(self.ack_timeouts[i]),
                        repr(float(self.rts_timeout_frac[i])), repr(float(self.ack_timeout_frac[i])),
                        int(self.delivered_bits[i]), repr(float(self.throughput[i])),
                        repr(float(self.busy_time_src[i])), repr(float(self.busy_time_dst[i]))])
        return buf.getvalue()

    def histogram_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["cause", "count", "intra_mics", "inter_mics"])
        for c in CAUSES:
            w.writerow([c, self.histogram.get(c, 0), self.intra.get(c, 0), self.inter.get(c, 0)])
        return buf.getvalue()


def _ratio(num, den):
    """Elementwise num/den; NaN where nothing was attempted (undefined ratio)."""
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    out = np.full_like(num, np.nan)
    np.divide(num, den, out=out, where=den > 0)
    return out


@dataclass
class SimResult:
    stats: SimStats
    records: list
    trace: Optional[list] = None


def classify_collision(frame: str, interference_at_arrival: bool = False,
                       nav_active: bool = False, receiver_busy: bool = False) -> str:
    """Cause category for a failed RTS/DATA reception or a suppressed CTS.

    For suppressed CTS responses pass ``nav_active`` / ``receiver_busy``; NAV
    takes precedence.  Otherwise the frame kind and whether the interfering
    energy was already present when its first bit arrived decide between the
    ``-A`` (arrival) and ``-I`` (intermediate) variants.
    """
    if nav_active:
        return "CTS-VCS"
    if receiver_busy:
        return "CTS-PCS"
    if frame not in (RTS, DATA):
        raise ValueError(f"no collision category for {frame} frames")
    return f"{frame}-{'A' if interference_at_arrival else 'I'}"


def attribute_mics(record: CollisionRecord, mics: MicsFamily, minimal: bool = False) -> Optional[str]:
    """'intra' when an interferer shares a MICS with the victim, else 'inter'.

    With ``minimal`` the record's culprit subset is used instead of the full
    interferer set.  Returns ``None`` (record skipped) when the victim or an
    interferer is not part of the family, or when there is no interferer.
    """
    others = record.culprits if minimal else record.interferers
    if not others:
        return None
    try:
        v = mics.links.index(record.victim)
        others = [mics.links.index(l) for l in others]
    except ValueError:
        return None
    return "intra" if any(mics.share_mics(v, o) for o in others) else "inter"


def tally_records(records: Sequence[CollisionRecord], mics: Optional[MicsFamily], minimal: bool = False):
    """Histogram over causes plus intra/inter split and skipped-record count."""
    hist = {c: 0 for c in CAUSES}
    intra = {c: 0 for c in CAUSES}
    inter = {c: 0 for c in CAUSES}
    skipped = 0
    for r in records:
        hist[r.cause] += 1
        if mics is None:
            continue
        where = attribute_mics(r, mics, minimal)
        if where is None:
            skipped += 1
        elif where == "intra":
            intra[r.cause] += 1
        else:
            inter[r.cause] += 1
    return hist, intra, inter, skipped


# --- simulator internals ------------------------------------------------------

class _Frame:
    __slots__ = ("kind", "src", "dst", "link", "pkt", "nav", "end")

    def __init__(self, kind, src, dst, link, pkt, nav):
        self.kind = kind
        self.src = src
        self.dst = dst
        self.link = link
        self.pkt = pkt
        self.nav = nav
        self.end = 0


class _Node:
    __slots__ = ("mac", "queue", "saturated", "rr", "current", "cw", "short_retry", "long_retry",
                 "bo_slots", "bo_start", "bo_time", "bo_token", "timer_token", "peer", "peer_link",
                 "pending_rts", "pending_data", "nav_token", "nav_link", "rx_start", "idle_since", "last_rx", "garbled")

    def __init__(self, cw_min):
        self.mac = IDLE
        self.queue = deque()
        self.saturated = []  # flow ids this node originates at saturation
        self.rr = 0
        self.current = None  # (flow, seq, hop)
        self.cw = cw_min
        self.short_retry = 0
        self.long_retry = 0
        self.bo_slots = 0
        self.bo_start = None
        self.bo_time = None
        self.bo_token = 0
        self.timer_token = 0
        self.peer = -1
        self.peer_link = -1
        self.pending_rts = False
        self.pending_data = False
        self.nav_token = 0
        self.nav_link = -1
        self.rx_start = -1  # time the last frame was acquired
        self.idle_since = 0
        self.last_rx = {}
        self.garbled = False  # last sensed frame was not decoded: defer for EIFS


class _Sim:
    def __init__(self, scenario: Scenario, flows: list[Route], mac: MacParams, duration: float,
                 seed: int, trace: bool):
        self.mac = mac
        self.rng = np.random.default_rng(seed)
        radio = scenario.radio
        nodes = sorted({v for f in flows for v in f.path})
        self.nodes = nodes
        self.local = {v: i for i, v in enumerate(nodes)}
        m = len(nodes)
        self.theta = np.ascontiguousarray(scenario.field.theta[np.ix_(nodes, nodes)])
        self.W = radio.noise_floor
        self.T_rx = radio.rx_sensitivity
        self.T = radio.sinr_threshold
        self.cs = radio.cs_threshold

        # links keep first-appearance order so stats line up with the caller's list
        hops = list(dict.fromkeys((f.path[h], f.path[h + 1]) for f in flows for h in range(len(f.path) - 1)))
        self.links = tuple(ActiveLink(s, d) for s, d in hops)
        self.link_id = {l: i for i, l in enumerate(self.links)}
        self.flows = [Route(tuple(self.local[v] for v in f.path), f.rate) for f in flows]
        self.flow_link = [[self.link_id[ActiveLink(f.path[h], f.path[h + 1])] for h in range(len(f.path) - 1)]
                          for f in flows]
        L = len(self.links)
        self.ls = np.array([self.local[l.src] for l in self.links], dtype=int)
        self.ld = np.array([self.local[l.dst] for l in self.links], dtype=int)

        ns = 1000
        self.end_time = int(round(duration * 1e9))
        self.slot = int(round(mac.slot_time * ns))
        self.sifs = int(round(mac.sifs * ns))
        self.difs = int(round(mac.difs * ns))
        self.eifs = int(round(mac.eifs * ns)) if mac.eifs_enabled else self.difs
        self.air = {k: int(round(mac.airtime(b) * ns)) for k, b in
                    ((RTS, mac.rts_size), (CTS, mac.cts_size), (DATA, mac.data_size), (ACK, mac.ack_size))}
        a = self.air
        self.nav_dur = {
            RTS: 3 * self.sifs + a[CTS] + a[DATA] + a[ACK],
            CTS: 2 * self.sifs + a[DATA] + a[ACK],
            DATA: 0,  # NAV comes from RTS/CTS only
            ACK: 0,
        }
        self.rts_mode = mac.rts_cts_enabled

        self.node = [_Node(mac.cw_min) for _ in range(m)]
        self.txing = np.zeros(m, dtype=bool)
        self.tx_frame: list[Optional[_Frame]] = [None] * m
        self.power = np.zeros(m)
        self.lock_src = np.full(m, -1, dtype=int)
        self.lock_sig = np.zeros(m)
        self.lock_start = np.zeros(m, dtype=np.int64)
        self.lock_ok = np.zeros(m, dtype=bool)
        self.lock_frame: list[Optional[_Frame]] = [None] * m
        self.idle = np.ones(m, dtype=bool)
        self.nav_until = np.zeros(m, dtype=np.int64)

        self.events = []
        self.seq = 0
        self.now = 0
        self.trace = [] if trace else None
        self.records: list[CollisionRecord] = []

        # statistics
        z = lambda: np.zeros(L, dtype=np.int64)
        self.rts_attempts, self.rts_timeouts = z(), z()
        self.data_attempts, self.ack_timeouts = z(), z()
        self.successes, self.retry_drops = z(), z()
        self.cts_lost, self.ack_lost = z(), z()
        self.busy_src = np.zeros(L)
        self.busy_dst = np.zeros(L)
        self.busy_flags = (np.zeros(L, dtype=bool), np.zeros(L, dtype=bool))
        self.last_change = 0
        self.flow_delivered = np.zeros(len(flows), dtype=np.int64)
        self.flow_queue_drops = np.zeros(len(flows), dtype=np.int64)
        self.flow_seq = [0] * len(flows)

        for fid, f in enumerate(self.flows):
            src = self.node[f.path[0]]
            if f.rate is None:
                src.saturated.append(fid)
            else:
                self._push(0, _GEN, fid, None)

    # -- event plumbing
    def _push(self, t, kind, a, b):
        self.seq += 1
        heapq.heappush(self.events, (t, self.seq, kind, a, b))

    def _log(self, *parts):
        if self.trace is not None:
            self.trace.append(" ".join([str(self.now)] + [str(p) for p in parts]))

    def run(self):
        for i, n in enumerate(self.node):
            if n.saturated:
                self._new_packet(i)
        ev = self.events
        end = self.end_time
        while ev:
            t, _, kind, a, b = heapq.heappop(ev)
            if t > end:
                break
            self.now = t
            if kind == _TX_END:
                self._tx_end(a, b)
            elif kind == _BACKOFF:
                if b == self.node[a].bo_token and self.node[a].mac == CONTEND:
                    self._backoff_done(a)
            elif kind == _TX_START:
                self._tx_start(a, b)
            elif kind == _TIMEOUT:
                if b == self.node[a].timer_token:
                    self._timeout(a)
            elif kind == _NAV_END:
                self._refresh_idle()
            elif kind == _NAV_CHECK:
                self._nav_check(a, b)
            elif kind == _GEN:
                self._generate(a)
        self.now = end
        self._account_busy()
        for i, n in enumerate(self.node):
            if n.pending_rts:
                self.rts_attempts[n.peer_link] -= 1
            if n.pending_data:
                self.data_attempts[n.peer_link] -= 1

    # -- traffic
    def _generate(self, fid):
        f = self.flows[fid]
        src = f.path[0]
        n = self.node[src]
        pkt = (fid, self.flow_seq[fid], 0)
        self.flow_seq[fid] += 1
        if len(n.queue) < self.mac.queue_limit:
            n.queue.append(pkt)
            if n.mac == IDLE:
                self._new_packet(src)
        else:
            self.flow_queue_drops[fid] += 1
        interval = int(round(self.mac.data_size * 8 / f.rate * 1e9))
        self._push(self.now + max(interval, 1), _GEN, fid, None)

    def _next_packet(self, n: _Node):
        sources = len(n.saturated) + 1
        for k in range(sources):
            slot = (n.rr + k) % sources
            if slot == 0:
                if n.queue:
                    n.rr = (slot + 1) % sources
                    return n.queue.popleft()
            else:
                fid = n.saturated[slot - 1]
                n.rr = (slot + 1) % sources
                pkt = (fid, self.flow_seq[fid], 0)
                self.flow_seq[fid] += 1
                return pkt
        return None

    def _new_packet(self, i):
        """Pick the next packet (if any) and start contending for it."""
        n = self.node[i]
        n.current = self._next_packet(n)
        if n.current is None:
            n.mac = IDLE
            return
        n.short_retry = n.long_retry = 0
        n.bo_slots = int(self.rng.integers(0, n.cw + 1))
        self._contend(i)

    def _contend(self, i):
        n = self.node[i]
        n.mac = CONTEND
        n.bo_start = None
        if self.idle[i]:
            self._start_countdown(i)

    def _start_countdown(self, i):
        n = self.node[i]
        start = max(self.now, n.idle_since + (self.eifs if n.garbled else self.difs))
        n.bo_start = start
        n.bo_time = start + n.bo_slots * self.slot
        n.bo_token += 1
        self._push(n.bo_time, _BACKOFF, i, n.bo_token)

    def _freeze(self, i, cancel=False):
        n = self.node[i]
        if n.bo_start is None:
            return
        if n.bo_time <= self.now:
            if cancel:
                n.bo_slots = 0
                n.bo_start = None
                n.bo_token += 1
            return  # otherwise it expires this instant and transmits in the same slot
        elapsed = self.now - n.bo_start
        if elapsed > 0:
            n.bo_slots -= elapsed // self.slot
        n.bo_start = None
        n.bo_token += 1

    def _link_of(self, i, pkt):
        fid, _, hop = pkt
        return self.flow_link[fid][hop]

    def _backoff_done(self, i):
        n = self.node[i]
        n.bo_start = None
        fid, _, hop = n.current
        nxt = self.flows[fid].path[hop + 1]
        link = self.flow_link[fid][hop]
        n.peer, n.peer_link = nxt, link
        n.mac = SENDING
        if self.rts_mode:
            n.pending_rts = True
            self.rts_attempts[link] += 1
            self._tx_start(i, _Frame(RTS, i, nxt, link, n.current, self.nav_dur[RTS]))
        else:
            n.pending_data = True
            self.data_attempts[link] += 1
            self._tx_start(i, _Frame(DATA, i, nxt, link, n.current, self.nav_dur[DATA]))

    # -- physical layer
    def _account_busy(self):
        dt = self.now - self.last_change
        if dt > 0:
            fs, fd = self.busy_flags
            self.busy_src += dt * fs
            self.busy_dst += dt * fd
        self.last_change = self.now

    def _update_power(self):
        tx = np.flatnonzero(self.txing)
        if len(tx):
            self.power = self.theta[tx].sum(axis=0)
        else:
            self.power = np.zeros(len(self.node))
        th, ls, ld = self.theta, self.ls, self.ld
        other_at_s = self.power[ls] - self.txing[ld] * th[ld, ls]
        other_at_d = self.power[ld] - self.txing[ls] * th[ls, ld]
        self.busy_flags = (other_at_s >= self.cs, other_at_d >= self.cs)

    def _present(self, j, exclude=-1):
        """Transmitters whose frames are on the air at j now (not ending this instant)."""
        return [t for t in np.flatnonzero(self.txing)
                if t != j and t != exclude and self.tx_frame[t].end > self.now]

    def _culprits(self, j, signal_src, threshold_fn):
        """Smallest set of strongest concurrent transmitters that explains a failure at j."""
        tx = self._present(j, signal_src)
        tx.sort(key=lambda t: (-self.theta[t, j], t))
        acc = 0.0
        chosen = []
        for t in tx:
            chosen.append(t)
            acc += self.theta[t, j]
            if threshold_fn(acc):
                break
        return tuple(sorted({self.links[self.tx_frame[t].link] for t in chosen}))

    def _record(self, j, frame, cause, culprits, interferers=None):
        victim = self.links[frame.link]
        if interferers is None:
            interferers = tuple(sorted({self.links[self.tx_frame[t].link] for t in self._present(j, frame.src)}
                                       - {victim}))
        culprits = tuple(c for c in culprits if c != victim)
        self.records.append(CollisionRecord(self.now / 1e9, victim, frame.kind, cause, interferers, culprits))
        self._log("COLLISION", cause, victim, " ".join(map(str, interferers)))

    def _sinr_culprits(self, j, frame):
        sig = self.theta[frame.src, j]
        return self._culprits(j, frame.src, lambda acc: sig / (self.W + acc) < self.T)

    def _tx_start(self, i, frame):
        n = self.node[i]
        if self.txing[i]:
            raise RuntimeError("node already transmitting")
        self._account_busy()
        frame.end = self.now + self.air[frame.kind]
        self.tx_frame[i] = frame
        self.txing[i] = True
        self._log("TX_START", self.nodes[i], frame.kind, self.links[frame.link])
        if frame.kind == DATA and self.rts_mode:
            n.pending_data = True
            self.data_attempts[frame.link] += 1
        # half duplex: anything being received here is lost
        if self.lock_src[i] >= 0:
            self.lock_ok[i] = False
            n.garbled = True
        self._update_power()

        W, T = self.W, self.T
        power = self.power
        row = self.theta[i]
        locked = self.lock_src >= 0
        # receivers already locked on another frame: does this break them?
        hit = locked & self.lock_ok
        if hit.any():
            bad = np.flatnonzero(hit & (self.lock_sig / (W + power - self.lock_sig) < T))
            for j in bad:
                self.lock_ok[j] = False
                lf = self.lock_frame[j]
                if lf.dst == j:
                    if lf.kind in (RTS, DATA):
                        # an interferer starting together with the frame counts as present on arrival
                        stage = "A" if self.lock_start[j] == self.now else "I"
                        self._record(j, lf, f"{lf.kind}-{stage}", self._sinr_culprits(j, lf))
                    elif lf.kind == CTS:
                        self.cts_lost[lf.link] += 1
                    else:
                        self.ack_lost[lf.link] += 1
        # new receptions of this frame
        free = ~locked & ~self.txing & (row >= self.T_rx)
        if free.any():
            ok = free & (row / (W + power - row) >= T)
            for j in np.flatnonzero(ok):
                self.lock_src[j] = i
                self.lock_sig[j] = row[j]
                self.lock_start[j] = self.now
                self.node[j].rx_start = self.now
                self.lock_ok[j] = True
                self.lock_frame[j] = frame
        d = frame.dst
        if self.lock_src[d] != i and not self.txing[d]:
            # addressed frame could not be acquired at its receiver
            if frame.kind in (RTS, DATA):
                if self.lock_src[d] >= 0:
                    culprits = (self.links[self.lock_frame[d].link],)
                else:
                    culprits = self._sinr_culprits(d, frame)
                self._record(d, frame, f"{frame.kind}-A", culprits)
            elif frame.kind == CTS:
                self.cts_lost[frame.link] += 1
            else:
                self.ack_lost[frame.link] += 1
        self._refresh_idle()
        self._push(frame.end, _TX_END, i, frame)

    def _tx_end(self, i, frame):
        n = self.node[i]
        self._account_busy()
        self.txing[i] = False
        self.tx_frame[i] = None
        self._update_power()
        self._log("TX_END", self.nodes[i], frame.kind, self.links[frame.link])
        receivers = np.flatnonzero(self.lock_src == i)
        for j in receivers:
            ok = self.lock_ok[j]
            self.lock_src[j] = -1
            self.lock_frame[j] = None
            self.lock_ok[j] = False
            if ok:
                self._deliver(j, frame)
            else:
                self.node[j].garbled = True  # acquired but not decoded: EIFS
        # sender-side follow-up
        if frame.kind == RTS:
            n.mac = WAIT_CTS
            self._set_timer(i, self.sifs + self.air[CTS] + self.slot)
        elif frame.kind == DATA:
            n.mac = WAIT_ACK
            self._set_timer(i, self.sifs + self.air[ACK] + self.slot)
        else:
            self._resume(i)
        self._refresh_idle()

    def _refresh_idle(self):
        now = self.now
        idle = ~self.txing & (self.power < self.cs) & (self.nav_until <= now)
        changed = np.flatnonzero(idle != self.idle)
        if not len(changed):
            return
        self.idle = idle
        for j in changed:
            n = self.node[j]
            if idle[j]:
                n.idle_since = now
                if n.mac == CONTEND:
                    self._start_countdown(j)
            elif n.mac == CONTEND:
                self._freeze(j)

    def _set_nav(self, j, frame):
        until = frame.end + frame.nav
        if until > self.nav_until[j]:
            n = self.node[j]
            self.nav_until[j] = until
            n.nav_link = frame.link
            n.nav_token += 1
            self._push(until, _NAV_END, j, None)
            if frame.kind == RTS:
                # NAV reset: drop an RTS reservation if no frame follows it
                self._push(self.now + 2 * self.sifs + self.air[CTS] + 2 * self.slot, _NAV_CHECK, j,
                           (n.nav_token, self.now))

    def _nav_check(self, j, tag):
        n = self.node[j]
        token, since = tag
        if token == n.nav_token and n.rx_start <= since and self.nav_until[j] > self.now:
            self.nav_until[j] = self.now
            n.nav_link = -1
            self._refresh_idle()

    def _set_timer(self, i, delay):
        n = self.node[i]
        n.timer_token += 1
        self._push(self.now + delay, _TIMEOUT, i, n.timer_token)

    # -- MAC layer
    def _deliver(self, j, frame):
        n = self.node[j]
        n.garbled = False
        self._log("RX", self.nodes[j], frame.kind, self.links[frame.link])
        if frame.dst != j:
            if frame.nav:
                self._set_nav(j, frame)
            return
        kind = frame.kind
        if kind == RTS:
            if n.mac not in (IDLE, CONTEND):
                self._record(j, frame, "CTS-PCS", ())
                return
            if self.nav_until[j] > self.now:
                nav_link = self.node[j].nav_link
                setter = (self.links[nav_link],) if nav_link >= 0 else ()
                self._record(j, frame, "CTS-VCS", setter, setter)
                return
            if self.mac.cts_physical_cs and self.theta[self._present(j), j].sum() >= self.cs:
                culprits = self._culprits(j, -1, lambda acc: acc >= self.cs)
                self._record(j, frame, "CTS-PCS", culprits)
                return
            self._respond(j, _Frame(CTS, j, frame.src, frame.link, frame.pkt, self.nav_dur[CTS]))
        elif kind == CTS:
            if n.mac == WAIT_CTS and frame.link == n.peer_link:
                n.timer_token += 1
                n.pending_rts = False
                n.mac = SENDING
                self._push(self.now + self.sifs, _TX_START, j,
                           _Frame(DATA, j, frame.src, frame.link, n.current, self.nav_dur[DATA]))
        elif kind == DATA:
            if n.mac in (IDLE, CONTEND):
                self._receive_packet(j, frame)
                self._respond(j, _Frame(ACK, j, frame.src, frame.link, frame.pkt, 0))
        elif kind == ACK:
            if n.mac == WAIT_ACK and frame.link == n.peer_link:
                n.timer_token += 1
                self._success(j)

    def _respond(self, j, frame):
        """Send CTS/ACK after SIFS without carrier sensing."""
        n = self.node[j]
        if n.mac == CONTEND:
            self._freeze(j, cancel=True)
        n.mac = RESPONDING
        n.peer, n.peer_link = frame.dst, frame.link
        self._push(self.now + self.sifs, _TX_START, j, frame)

    def _receive_packet(self, j, frame):
        fid, seq, hop = frame.pkt
        key = frame.link
        if self.node[j].last_rx.get(key) == (fid, seq):
            return  # retransmission of a packet already received
        self.node[j].last_rx[key] = (fid, seq)
        f = self.flows[fid]
        if hop + 2 == len(f.path):
            self.flow_delivered[fid] += 1
            return
        n = self.node[j]
        if len(n.queue) < self.mac.queue_limit:
            n.queue.append((fid, seq, hop + 1))
        else:
            self.flow_queue_drops[fid] += 1

    def _resume(self, i):
        """Return to contention (or idle) after finishing a responder role."""
        n = self.node[i]
        n.peer = n.peer_link = -1
        if n.current is not None:
            self._contend(i)
        else:
            self._new_packet(i)

    def _success(self, i):
        n = self.node[i]
        link = n.peer_link
        n.pending_data = False
        self.successes[link] += 1
        n.cw = self.mac.cw_min
        n.current = None
        n.peer = n.peer_link = -1
        self._new_packet(i)

    def _timeout(self, i):
        n = self.node[i]
        mac = self.mac
        link = n.peer_link
        if n.mac == WAIT_CTS:
            n.pending_rts = False
            self.rts_timeouts[link] += 1
            n.short_retry += 1
            give_up = n.short_retry >= mac.short_retry_limit
        elif n.mac == WAIT_ACK:
            n.pending_data = False
            self.ack_timeouts[link] += 1
            n.long_retry += 1
            give_up = n.long_retry >= mac.long_retry_limit
        else:
            return
        self._log("TIMEOUT", self.nodes[i], "CTS" if n.mac == WAIT_CTS else "ACK", self.links[link])
        n.peer = n.peer_link = -1
        if give_up:
            self.retry_drops[link] += 1
            n.cw = mac.cw_min
            n.current = None
            self._new_packet(i)
            return
        n.cw = min(2 * (n.cw + 1) - 1, mac.cw_max)
        n.bo_slots = int(self.rng.integers(0, n.cw + 1))
        self._contend(i)

    def stats(self, duration: float) -> SimStats:
        dur_ns = self.end_time
        data_bits = self.mac.data_size * 8
        return SimStats(
            links=self.links, duration=duration, bit_rate=self.mac.bit_rate, data_size=self.mac.data_size,
            rts_attempts=self.rts_attempts, rts_timeouts=self.rts_timeouts,
            data_attempts=self.data_attempts, ack_timeouts=self.ack_timeouts,
            successes=self.successes, retry_drops=self.retry_drops, delivered_bits=self.successes * data_bits,
            busy_time_src=self.busy_src / dur_ns, busy_time_dst=self.busy_dst / dur_ns,
            cts_lost=self.cts_lost, ack_lost=self.ack_lost,
            flow_delivered=self.flow_delivered, flow_queue_drops=self.flow_queue_drops,
        )


def simulate(scenario: Scenario, links: Optional[Sequence[ActiveLink]] = None,
             routes: Optional[Sequence[Route]] = None, mac: MacParams = MacParams(),
             duration: float = 10.0, seed: int = 0, mics: Optional[MicsFamily] = None,
             trace: bool = False) -> SimResult:
    """Run the MAC simulation.

    Pass either ``links`` (each a saturated one-hop flow) or ``routes``
    (multi-hop flows, relayed hop by hop through finite queues).  When a MICS
    family over the same links is given, collision records are split into
    intra- and inter-MICS counts.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    if (links is None) == (routes is None):
        raise ValueError("pass exactly one of links or routes")
    if links is not None:
        flows = [Route((l[0], l[1]), None) for l in links]
    else:
        flows = [Route(tuple(r[0]), r[1] if len(r) > 1 else None) for r in routes]
    if not flows:
        raise ValueError("no traffic to simulate")
    for f in flows:
        for s, d in zip(f.path, f.path[1:]):
            if not link_feasible(scenario.field, scenario.radio, s, d):
                raise ValueError(f"link {s}->{d} is not feasible")
    sim = _Sim(scenario, flows, mac, duration, seed, trace)
    sim.run()
    stats = sim.stats(duration)
    stats.histogram, stats.intra, stats.inter, stats.skipped = tally_records(sim.records, mics)
    return SimResult(stats, sim.records, sim.trace)
