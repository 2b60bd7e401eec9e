"""Topologies, power-law propagation, radio parameters and scenario files."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

import numpy as np

from . import config


class ScenarioFormatError(ValueError):
    """Raised when a scenario file cannot be parsed or is inconsistent."""


@dataclass(frozen=True)
class RadioParams:
    """Radio constants, all powers in linear mW.

    ``rx_sensitivity`` doubles as the carrier-sense reference: a node treats
    the channel as busy once the received signal power reaches
    ``rx_sensitivity - noise_floor``.
    """

    tx_power: float = config.TX_POWER_MW
    rx_sensitivity: float = config.RX_SENSITIVITY_MW
    sinr_threshold: float = config.SINR_THRESHOLD
    noise_floor: float = config.NOISE_FLOOR_MW
    path_loss_exponent: float = config.PATH_LOSS_EXPONENT

    def __post_init__(self):
        for name in ("tx_power", "rx_sensitivity", "sinr_threshold", "noise_floor", "path_loss_exponent"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")
        if self.sinr_threshold < 1:
            raise ValueError("sinr_threshold must be >= 1")
        if self.noise_floor >= self.rx_sensitivity:
            raise ValueError("noise_floor must be below rx_sensitivity")
        if self.path_loss_exponent < 2:
            raise ValueError("path_loss_exponent must be >= 2")

    @property
    def cs_threshold(self) -> float:
        """Signal power (excluding noise) at which carrier sense reports busy."""
        return self.rx_sensitivity - self.noise_floor


@dataclass(frozen=True, eq=False)
class Topology:
    positions: np.ndarray  # (n, 2) metres
    area: tuple[float, float]

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 2:
            raise ValueError("positions must be an (n, 2) array")
        if len(pos) < 2:
            raise ValueError("a topology needs at least two nodes")
        w, h = self.area
        if not (w > 0 and h > 0):
            raise ValueError("area must have positive dimensions")
        if (pos < 0).any() or (pos[:, 0] > w).any() or (pos[:, 1] > h).any():
            raise ValueError("all positions must lie inside the area")
        if len(np.unique(pos, axis=0)) != len(pos):
            raise ValueError("topology contains coincident nodes")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "area", (float(w), float(h)))

    @property
    def n(self) -> int:
        return len(self.positions)

    def distances(self) -> np.ndarray:
        diff = self.positions[:, None, :] - self.positions[None, :, :]
        return np.hypot(diff[..., 0], diff[..., 1])

    def __eq__(self, other):
        if not isinstance(other, Topology):
            return NotImplemented
        return self.area == other.area and np.array_equal(self.positions, other.positions)


@dataclass(frozen=True, eq=False)
class SignalField:
    """Received-power matrix: ``theta[i, j]`` is the power at j when i transmits."""

    theta: np.ndarray

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float)
        if theta.ndim != 2 or theta.shape[0] != theta.shape[1]:
            raise ValueError("theta must be a square matrix")
        if not np.isfinite(theta).all():
            raise ValueError("theta must be finite")
        if (theta < 0).any():
            raise ValueError("theta entries must be non-negative")
        if np.any(np.diag(theta) != 0):
            raise ValueError("theta diagonal must be zero")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    @property
    def n(self) -> int:
        return self.theta.shape[0]

    def __getitem__(self, key):
        return self.theta[key]

    def __eq__(self, other):
        if not isinstance(other, SignalField):
            return NotImplemented
        return np.array_equal(self.theta, other.theta)


class ActiveLink(NamedTuple):
    src: int
    dst: int

    def __str__(self):
        return f"{self.src}->{self.dst}"


class Connection(NamedTuple):
    src: int
    dst: int
    rate: float  # bits/s

    def validate(self, n: int):
        if self.src == self.dst:
            raise ValueError(f"connection {self} has src == dst")
        if not (0 <= self.src < n and 0 <= self.dst < n):
            raise ValueError(f"connection {self} references a node outside 0..{n - 1}")
        if not self.rate > 0:
            raise ValueError(f"connection {self} must have a positive rate")


@dataclass(frozen=True, eq=False)
class Scenario:
    topology: Optional[Topology]
    radio: RadioParams
    field: SignalField
    connections: tuple[Connection, ...] = ()
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "connections", tuple(Connection(*c) for c in self.connections))
        if self.topology is not None and self.topology.n != self.field.n:
            raise ScenarioFormatError(
                f"signal field has dimension {self.field.n} but topology has {self.topology.n} nodes")
        for c in self.connections:
            c.validate(self.field.n)

    @property
    def n(self) -> int:
        return self.field.n

    @property
    def links(self) -> list[ActiveLink]:
        return [ActiveLink(c.src, c.dst) for c in self.connections]

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        return (self.topology == other.topology and self.radio == other.radio
                and self.field == other.field and self.connections == other.connections
                and self.seed == other.seed)


def generate_random_topology(n: int, area: tuple[float, float], seed: int) -> Topology:
    if n < 2:
        raise ValueError("n must be >= 2")
    w, h = area
    rng = np.random.default_rng(seed)
    pos = np.column_stack([rng.uniform(0.0, w, n), rng.uniform(0.0, h, n)])
    return Topology(pos, (w, h))


def grid_topology(side: int, spacing: float) -> Topology:
    """Square ``side`` x ``side`` grid; node ``r * side + c`` sits at column c, row r."""
    if side < 2:
        raise ValueError("grid side must be >= 2")
    coords = [(c * spacing, r * spacing) for r in range(side) for c in range(side)]
    extent = (side - 1) * spacing
    return Topology(np.array(coords, dtype=float), (extent, extent))


def compute_signal_field(topology: Topology, params: RadioParams) -> SignalField:
    dist = topology.distances()
    np.fill_diagonal(dist, np.inf)
    if (dist == 0).any():
        raise ValueError("coincident nodes")
    theta = params.tx_power / dist**params.path_loss_exponent
    np.fill_diagonal(theta, 0.0)
    return SignalField(theta)


def link_feasible(field: SignalField, params: RadioParams, s: int, d: int) -> bool:
    if s == d:
        raise ValueError("link endpoints must differ")
    p = field.theta[s, d]
    return bool(p >= params.rx_sensitivity and p / params.noise_floor >= params.sinr_threshold)


def feasible_links(field: SignalField, params: RadioParams) -> list[ActiveLink]:
    """All directed feasible links, sorted."""
    theta = field.theta
    ok = (theta >= params.rx_sensitivity) & (theta / params.noise_floor >= params.sinr_threshold)
    np.fill_diagonal(ok, False)
    return [ActiveLink(int(s), int(d)) for s, d in zip(*np.nonzero(ok))]


def random_single_hop_links(field: SignalField, params: RadioParams, count: int,
                            rng: np.random.Generator) -> list[ActiveLink]:
    """Pick up to ``count`` feasible links whose endpoints are all distinct nodes."""
    order = rng.permutation(field.n)
    used: set[int] = set()
    links = []
    for s in order:
        if len(links) == count:
            break
        s = int(s)
        if s in used:
            continue
        nbrs = [d for d in range(field.n)
                if d != s and d not in used and link_feasible(field, params, s, d)]
        if not nbrs:
            continue
        d = int(nbrs[rng.integers(len(nbrs))])
        used.update((s, d))
        links.append(ActiveLink(s, d))
    return links


def make_scenario(topology: Topology, radio: RadioParams = RadioParams(),
                  connections: Sequence = (), seed: int = 0) -> Scenario:
    return Scenario(topology, radio, compute_signal_field(topology, radio), tuple(connections), seed)


# --- scenario files ---------------------------------------------------------

_MAGIC = "# schedaware-scenario 1"
_RADIO_KEYS = ("tx_power", "rx_sensitivity", "sinr_threshold", "noise_floor", "path_loss_exponent")
_DBM_KEYS = ("tx_power", "rx_sensitivity", "noise_floor")


def save_scenario(scenario: Scenario, path) -> None:
    lines = [_MAGIC, f"seed = {scenario.seed}", f"nodes = {scenario.n}"]
    for key in _RADIO_KEYS:
        lines.append(f"{key} = {getattr(scenario.radio, key)!r}")
    topo = scenario.topology
    if topo is not None:
        lines.append(f"area = {topo.area[0]!r} {topo.area[1]!r}")
        lines.append("[positions]")
        lines += [f"{x!r} {y!r}" for x, y in topo.positions.tolist()]
    else:
        lines.append("[theta]")
        lines += [" ".join(repr(v) for v in row) for row in scenario.field.theta.tolist()]
    lines.append("[connections]")
    lines += [f"{c.src} {c.dst} {c.rate!r}" for c in scenario.connections]
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_float(text: str, what: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ScenarioFormatError(f"{what}: cannot parse {text!r} as a number") from None


def load_scenario(path) -> Scenario:
    text = Path(path).read_text()
    header: dict[str, str] = {}
    sections: dict[str, list[str]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if current not in ("positions", "theta", "connections"):
                raise ScenarioFormatError(f"line {lineno}: unknown section [{current}]")
            sections[current] = []
        elif current is None:
            if "=" not in line:
                raise ScenarioFormatError(f"line {lineno}: expected 'key = value', got {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            header[key] = value
        else:
            sections[current].append(line)

    radio_kwargs = {}
    for key in _RADIO_KEYS:
        if key in header:
            radio_kwargs[key] = _parse_float(header[key], key)
        elif key in _DBM_KEYS and f"{key}_dbm" in header:
            radio_kwargs[key] = config.dbm_to_mw(_parse_float(header[f"{key}_dbm"], f"{key}_dbm"))
    try:
        radio = RadioParams(**radio_kwargs)
    except ValueError as exc:
        raise ScenarioFormatError(f"radio parameters: {exc}") from None

    seed = int(_parse_float(header.get("seed", "0"), "seed"))
    n = int(_parse_float(header["nodes"], "nodes")) if "nodes" in header else None

    topology = None
    if "positions" in sections:
        rows = [r.split() for r in sections["positions"]]
        if any(len(r) != 2 for r in rows):
            raise ScenarioFormatError("positions: every row needs exactly two coordinates")
        pos = np.array([[_parse_float(v, "positions") for v in r] for r in rows])
        if n is not None and len(pos) != n:
            raise ScenarioFormatError(f"positions: expected {n} rows, found {len(pos)}")
        if "area" in header:
            parts = header["area"].split()
            if len(parts) != 2:
                raise ScenarioFormatError("area: expected 'width height'")
            area = (_parse_float(parts[0], "area"), _parse_float(parts[1], "area"))
        else:
            area = (float(pos[:, 0].max()), float(pos[:, 1].max()))
        try:
            topology = Topology(pos, area)
        except ValueError as exc:
            raise ScenarioFormatError(f"positions: {exc}") from None
        field = compute_signal_field(topology, radio)
    elif "theta" in sections:
        rows = [[_parse_float(v, "theta") for v in r.split()] for r in sections["theta"]]
        if n is not None and len(rows) != n:
            raise ScenarioFormatError(f"theta: expected {n} rows, found {len(rows)}")
        if any(len(r) != len(rows) for r in rows):
            raise ScenarioFormatError("theta: matrix must be square")
        try:
            field = SignalField(np.array(rows, dtype=float))
        except ValueError as exc:
            raise ScenarioFormatError(f"theta: {exc}") from None
    else:
        raise ScenarioFormatError("scenario needs a [positions] or [theta] section")

    connections = []
    for r in sections.get("connections", []):
        parts = r.split()
        if len(parts) != 3:
            raise ScenarioFormatError(f"connections: expected 'src dst rate', got {r!r}")
        connections.append(Connection(int(_parse_float(parts[0], "connections")),
                                      int(_parse_float(parts[1], "connections")),
                                      _parse_float(parts[2], "connections")))
    try:
        return Scenario(topology, radio, field, tuple(connections), seed)
    except ValueError as exc:
        raise ScenarioFormatError(f"connections: {exc}") from None
