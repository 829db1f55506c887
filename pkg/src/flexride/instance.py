"""Benchmark instance parsing, mode configuration, and serialization.

Instances follow the classic dial-a-ride text layout: a header line
``|K| n T M L`` followed by one line per node ``id x y service load e l``.
Node 0 is the origin depot, nodes ``1..n`` are pickups, ``n+1..2n`` the
matching dropoffs, and ``2n+1`` the destination depot (synthesized as a copy
of node 0 when the file omits it).  Travel time and cost are the Euclidean
distances between coordinates, kept as floats.

Modes:

* ``c``   - deterministic, all windows hard.
* ``tf``  - a seeded fraction of service nodes gets soft windows (late
            service allowed up to the horizon at a linear penalty).
* ``r``   - pickup loads become uncertain with bounded support, capacity may
            be overridden.
* ``tfr`` - both of the above.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

DEPOT_ORIGIN = "depot-origin"
PICKUP = "pickup"
DROPOFF = "dropoff"
DEPOT_DESTINATION = "depot-destination"

MODES = ("c", "tf", "r", "tfr")


class ParseError(ValueError):
    """Malformed instance text."""


class ConfigError(ValueError):
    """Inconsistent mode configuration."""


@dataclass(frozen=True)
class Node:
    id: int
    x: float
    y: float
    service_duration: float
    load: float
    earliest: float
    latest: float
    kind: str
    flexible: bool = False

    def __post_init__(self) -> None:
        if self.earliest > self.latest + 1e-9:
            raise ParseError(f"node {self.id}: earliest {self.earliest} > latest {self.latest}")
        if self.kind in (DEPOT_ORIGIN, DEPOT_DESTINATION):
            if self.load != 0:
                raise ParseError(f"node {self.id}: depot load must be 0, got {self.load}")
            if self.flexible:
                raise ParseError(f"node {self.id}: depot nodes are never flexible")


@dataclass(frozen=True)
class UncertainLoad:
    """Pickup load known through its mean and bounded support [lo, hi]."""

    mean: float
    lo: float
    hi: float

    def __post_init__(self) -> None:
        if not self.lo <= self.mean <= self.hi:
            raise ConfigError(f"support [{self.lo}, {self.hi}] must contain the mean {self.mean}")

    @property
    def width(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class ModeConfig:
    mode: str = "c"
    flex_ratio: float = 0.0
    psi: float = 0.01
    capacity_override: Optional[float] = None
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}, expected one of {MODES}")
        if not 0.0 <= self.flex_ratio <= 1.0:
            raise ConfigError(f"flex_ratio must lie in [0, 1], got {self.flex_ratio}")
        if self.mode in ("c", "r") and self.flex_ratio != 0.0:
            raise ConfigError(f"mode {self.mode!r} requires flex_ratio 0")
        if not 0.0 < self.psi < 1.0:
            raise ConfigError(f"psi must lie in (0, 1), got {self.psi}")

    @property
    def robust(self) -> bool:
        return self.mode in ("r", "tfr")

    @property
    def flexible(self) -> bool:
        return self.mode in ("tf", "tfr")


@dataclass(frozen=True)
class Instance:
    """Immutable problem data; safe to share across workers."""

    name: str
    vehicles: int
    capacity: float
    requests: int
    horizon: float
    max_ride: tuple[float, ...]
    nodes: tuple[Node, ...]
    travel_time: np.ndarray
    travel_cost: np.ndarray
    uncertain: Optional[tuple[UncertainLoad, ...]] = None
    delay_rate: float = 1.0
    mode: str = "c"

    def __post_init__(self) -> None:
        n = self.requests
        if len(self.nodes) != 2 * n + 2:
            raise ParseError(f"expected {2 * n + 2} nodes for {n} requests, got {len(self.nodes)}")
        if self.uncertain is not None and len(self.uncertain) != n:
            raise ParseError(f"expected {n} uncertain loads, got {len(self.uncertain)}")
        self.travel_time.setflags(write=False)
        self.travel_cost.setflags(write=False)

    # -- indices ----------------------------------------------------------
    @property
    def origin(self) -> int:
        return 0

    @property
    def destination(self) -> int:
        return 2 * self.requests + 1

    def pickup(self, request: int) -> int:
        return request + 1

    def dropoff(self, request: int) -> int:
        return self.requests + request + 1

    def request_of(self, node: int) -> Optional[int]:
        """Request index (0-based) of a service node, None for depots."""
        if 1 <= node <= self.requests:
            return node - 1
        if self.requests < node <= 2 * self.requests:
            return node - self.requests - 1
        return None

    def is_pickup(self, node: int) -> bool:
        return 1 <= node <= self.requests

    def is_dropoff(self, node: int) -> bool:
        return self.requests < node <= 2 * self.requests

    def load_of(self, request: int) -> UncertainLoad:
        """Uncertain load of a request; zero-width in deterministic modes."""
        if self.uncertain is not None:
            return self.uncertain[request]
        booked = self.nodes[self.pickup(request)].load
        return UncertainLoad(booked, booked, booked)

    def upper_time(self, node: int) -> float:
        """Effective latest start of service: horizon for flexible nodes."""
        nd = self.nodes[node]
        return self.horizon if nd.flexible else nd.latest

    # -- serialization ----------------------------------------------------
    def to_json(self) -> str:
        payload = {
            "name": self.name,
            "vehicles": self.vehicles,
            "capacity": self.capacity,
            "requests": self.requests,
            "horizon": self.horizon,
            "max_ride": list(self.max_ride),
            "delay_rate": self.delay_rate,
            "mode": self.mode,
            "nodes": [
                {
                    "id": nd.id,
                    "x": nd.x,
                    "y": nd.y,
                    "service": nd.service_duration,
                    "load": nd.load,
                    "earliest": nd.earliest,
                    "latest": nd.latest,
                    "kind": nd.kind,
                    "flexible": nd.flexible,
                }
                for nd in self.nodes
            ],
            "uncertain": None
            if self.uncertain is None
            else [[w.mean, w.lo, w.hi] for w in self.uncertain],
            "travel_time": self.travel_time.tolist(),
            "travel_cost": self.travel_cost.tolist(),
        }
        return json.dumps(payload, sort_keys=True, indent=2)

    @staticmethod
    def from_json(text: str) -> "Instance":
        data = json.loads(text)
        nodes = tuple(
            Node(
                id=nd["id"],
                x=nd["x"],
                y=nd["y"],
                service_duration=nd["service"],
                load=nd["load"],
                earliest=nd["earliest"],
                latest=nd["latest"],
                kind=nd["kind"],
                flexible=nd["flexible"],
            )
            for nd in data["nodes"]
        )
        uncertain = data["uncertain"]
        return Instance(
            name=data["name"],
            vehicles=data["vehicles"],
            capacity=data["capacity"],
            requests=data["requests"],
            horizon=data["horizon"],
            max_ride=tuple(data["max_ride"]),
            nodes=nodes,
            travel_time=np.array(data["travel_time"], dtype=float),
            travel_cost=np.array(data["travel_cost"], dtype=float),
            uncertain=None if uncertain is None else tuple(UncertainLoad(*w) for w in uncertain),
            delay_rate=data["delay_rate"],
            mode=data["mode"],
        )

    def to_text(self) -> str:
        """Emit the whitespace benchmark format (header + one line per node)."""
        lines = [
            f"{self.vehicles} {self.requests} {_fmt(self.horizon)} "
            f"{_fmt(self.capacity)} {_fmt(self.max_ride[0])}"
        ]
        for nd in self.nodes:
            lines.append(
                f"{nd.id} {_fmt(nd.x)} {_fmt(nd.y)} {_fmt(nd.service_duration)} "
                f"{_fmt(nd.load)} {_fmt(nd.earliest)} {_fmt(nd.latest)}"
            )
        return "\n".join(lines) + "\n"


def _fmt(value: float) -> str:
    if value == int(value):
        return str(int(value))
    return repr(float(value))


def _euclidean_matrix(nodes: Sequence[Node]) -> np.ndarray:
    xs = np.array([nd.x for nd in nodes])
    ys = np.array([nd.y for nd in nodes])
    return np.hypot(xs[:, None] - xs[None, :], ys[:, None] - ys[None, :])


def parse_instance(text: str, name: str = "instance") -> Instance:
    """Parse benchmark text into an :class:`Instance`.

    Accepts both node layouts: ``0..2n+1`` or ``0..2n`` with the destination
    depot cloned from the origin.  The header's second field may count
    requests or service nodes; whichever makes the line count consistent
    wins.  Depot windows are tightened to the service nodes they bracket:
    origin ``[min pickup earliest, T]``, destination ``[min dropoff
    latest, T]``.
    """
    rows = [ln.strip() for ln in text.splitlines()]
    rows = [ln for ln in rows if ln and not ln.startswith("#")]
    if not rows:
        raise ParseError("empty instance text")

    header = rows[0].split()
    if len(header) < 5:
        raise ParseError(f"malformed header {rows[0]!r}: expected '|K| n T M L'")
    try:
        vehicles = int(header[0])
        count_field = int(header[1])
        horizon = float(header[2])
        capacity = float(header[3])
        ride_limit = float(header[4])
    except ValueError as exc:
        raise ParseError(f"malformed header {rows[0]!r}: {exc}") from None

    node_lines = len(rows) - 1
    n = _request_count(count_field, node_lines)

    raw = []
    for lineno, ln in enumerate(rows[1 : 2 * n + 2 + 1], start=2):
        parts = ln.split()
        if len(parts) < 7:
            raise ParseError(f"line {lineno}: expected 7 fields 'id x y service load e l', got {ln!r}")
        try:
            raw.append(tuple(float(p) for p in parts[:7]))
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None

    if len(raw) == 2 * n + 1:
        d = raw[0]
        raw.append((2 * n + 1, d[1], d[2], d[3], d[4], d[5], d[6]))

    nodes: list[Node] = []
    for idx, (nid, x, y, service, load, e, l) in enumerate(raw):
        if int(nid) != idx:
            raise ParseError(f"line {idx + 2}: node id {int(nid)} out of order, expected {idx}")
        if idx == 0:
            kind = DEPOT_ORIGIN
        elif idx <= n:
            kind = PICKUP
        elif idx <= 2 * n:
            kind = DROPOFF
        else:
            kind = DEPOT_DESTINATION
        if kind in (DEPOT_ORIGIN, DEPOT_DESTINATION):
            load = 0.0
        nodes.append(Node(idx, x, y, service, load, e, l, kind))

    for i in range(1, n + 1):
        if abs(nodes[i].load + nodes[i + n].load) > 1e-9:
            raise ParseError(
                f"line {i + n + 2}: dropoff load {nodes[i + n].load} does not mirror "
                f"pickup load {nodes[i].load} of request {i}"
            )
        if nodes[i].load < 0:
            raise ParseError(f"line {i + 2}: pickup load must be nonnegative, got {nodes[i].load}")

    origin_e = min((nodes[i].earliest for i in range(1, n + 1)), default=nodes[0].earliest)
    dest_e = min((nodes[i + n].latest for i in range(1, n + 1)), default=nodes[-1].earliest)
    nodes[0] = replace(nodes[0], earliest=min(origin_e, horizon), latest=horizon)
    nodes[-1] = replace(nodes[-1], earliest=min(dest_e, horizon), latest=horizon)

    tt = _euclidean_matrix(nodes)
    return Instance(
        name=name,
        vehicles=vehicles,
        capacity=capacity,
        requests=n,
        horizon=horizon,
        max_ride=tuple([ride_limit] * n),
        nodes=tuple(nodes),
        travel_time=tt,
        travel_cost=tt.copy(),
    )


def _request_count(count_field: int, node_lines: int) -> int:
    """Resolve the header count against the actual number of node lines."""
    if node_lines in (2 * count_field + 1, 2 * count_field + 2):
        return count_field
    if count_field % 2 == 0 and node_lines in (count_field + 1, count_field + 2):
        return count_field // 2
    raise ParseError(
        f"node count mismatch: header count {count_field} is inconsistent "
        f"with {node_lines} node lines"
    )


def parse_uncertainty_sidecar(text: str, inst: Instance) -> tuple[UncertainLoad, ...]:
    """Parse a sidecar file with one line per pickup: ``id mean lo hi``."""
    loads: dict[int, UncertainLoad] = {}
    for lineno, ln in enumerate(text.splitlines(), start=1):
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        parts = ln.split()
        if len(parts) != 4:
            raise ParseError(f"sidecar line {lineno}: expected 'id mean lo hi', got {ln!r}")
        nid = int(parts[0])
        if not inst.is_pickup(nid):
            raise ParseError(f"sidecar line {lineno}: node {nid} is not a pickup")
        loads[nid] = UncertainLoad(float(parts[1]), float(parts[2]), float(parts[3]))
    missing = [i for i in range(1, inst.requests + 1) if i not in loads]
    if missing:
        raise ParseError(f"sidecar is missing pickups {missing}")
    return tuple(loads[i] for i in range(1, inst.requests + 1))


def apply_mode(
    inst: Instance,
    cfg: ModeConfig,
    uncertain: Optional[tuple[UncertainLoad, ...]] = None,
) -> Instance:
    """Return a copy of ``inst`` configured for the requested mode.

    Flexible-node selection draws exactly ``round(flex_ratio * 2n)`` service
    nodes uniformly without replacement from a generator seeded with
    ``cfg.rng_seed``, so the same seed always yields the same set.
    """
    n = inst.requests
    nodes = [replace(nd, flexible=False) for nd in inst.nodes]

    if cfg.flexible and cfg.flex_ratio > 0.0:
        k = int(round(cfg.flex_ratio * 2 * n))
        rng = np.random.default_rng(cfg.rng_seed)
        chosen = rng.choice(np.arange(1, 2 * n + 1), size=k, replace=False)
        for idx in sorted(int(i) for i in chosen):
            nodes[idx] = replace(nodes[idx], flexible=True)

    loads: Optional[tuple[UncertainLoad, ...]] = None
    capacity = inst.capacity
    if cfg.robust:
        if uncertain is not None:
            loads = uncertain
        else:
            loads = tuple(
                UncertainLoad(nd.load, nd.load - 1.0, nd.load + 1.0)
                for nd in nodes[1 : n + 1]
            )
        if cfg.capacity_override is not None:
            capacity = cfg.capacity_override
        gamma = _gamma(cfg.psi)
        worst = max(w.mean + gamma * (w.hi - w.lo) for w in loads)
        if capacity < worst:
            raise ConfigError(
                f"capacity {capacity} is below the largest single inflated load "
                f"{worst:.6g}; the heaviest request can never be served robustly"
            )
    elif cfg.capacity_override is not None:
        capacity = cfg.capacity_override

    return replace(
        inst,
        nodes=tuple(nodes),
        uncertain=loads,
        capacity=capacity,
        mode=cfg.mode,
    )


def _gamma(psi: float) -> float:
    return math.sqrt(math.log(1.0 / psi) / 2.0)


def tighten_windows(inst: Instance) -> Instance:
    """Tighten hard time windows to their implied bounds.

    Every bound added here is implied by the chain, precedence, ride-time,
    and horizon constraints together with the triangle inequality, so the
    set of feasible trips and all schedule costs are unchanged; only the
    search space shrinks.  Latest times of flexible nodes are never touched
    (they anchor the delay penalty), and earliest times may rise for any
    node since the implied lower bound binds anyway.
    """
    n = inst.requests
    nodes = list(inst.nodes)
    tt = inst.travel_time
    dest = inst.destination
    horizon = inst.horizon

    def eff_latest(nd: Node) -> float:
        return horizon if nd.flexible else nd.latest

    for r in range(n):
        p, d = inst.pickup(r), inst.dropoff(r)
        np_, nd_ = nodes[p], nodes[d]
        ride = inst.max_ride[r]
        # earliest: reachability from depot, then pickup -> dropoff chain,
        # then ride-time back onto the pickup
        e_p = max(np_.earliest, nodes[0].earliest + nodes[0].service_duration + float(tt[0, p]))
        e_d = max(nd_.earliest, e_p + np_.service_duration + float(tt[p, d]))
        e_p = max(e_p, e_d - ride)
        # latest start: horizon exit, dropoff deadline back onto the pickup
        l_d = min(eff_latest(nd_), horizon - nd_.service_duration - float(tt[d, dest]))
        l_p = min(eff_latest(np_), l_d - np_.service_duration - float(tt[p, d]))
        if e_p > l_p + 1e-9 or e_d > l_d + 1e-9:
            # structurally unservable; keep the original windows and let the
            # solver flag the request through its dummy column
            continue
        # flexible latest times anchor the delay penalty and stay put; their
        # implied earliest rise is capped to keep earliest <= latest
        nodes[p] = replace(
            np_,
            earliest=min(e_p, np_.latest) if np_.flexible else e_p,
            latest=np_.latest if np_.flexible else l_p,
        )
        nodes[d] = replace(
            nd_,
            earliest=min(e_d, nd_.latest) if nd_.flexible else e_d,
            latest=nd_.latest if nd_.flexible else l_d,
        )

    return replace(inst, nodes=tuple(nodes))
