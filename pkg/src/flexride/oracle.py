"""Brute-force exact solver for tiny instances.

Enumerates every precedence-valid node sequence, certifies each with an
independent delay-search scheduler, then solves the set-partitioning step by
exhaustive combination.  Deliberately shares no scheduling code with the
labeling path: waiting decisions are explored as per-pickup delay floors
raised by exact residuals (delaying anything but a pickup can never help,
because only a later pickup start shrinks that request's ride time).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from flexride import robustness
from flexride.instance import Instance, apply_mode
from flexride.pricing import Trip
from flexride.search import SolveConfig

SIZE_GUARD = 6
_EPS = 1e-9


class OracleSizeError(ValueError):
    """Instance too large for exhaustive enumeration."""


@dataclass
class OracleResult:
    objective: float
    feasible: bool
    routes: list[list[int]]
    unserved: list[int]


def _delay_search(inst: Instance, seq: list[int]) -> Optional[tuple[list[float], float]]:
    """Cheapest feasible start times for ``seq`` via per-pickup delay floors.

    Starts from the everything-as-early-as-possible schedule; whenever a
    ride-time limit breaks, raises a floor under that pickup's start by the
    exact residual and resweeps.  Delaying anything else can never help, so
    the walk ends on the minimal (hence cheapest) feasible schedule, or
    proves there is none.  Caps cannot cycle: every raise is forced.
    """
    rides = sum(1 for v in seq if inst.is_dropoff(v))
    floors: dict[int, float] = {}
    pos = {v: k for k, v in enumerate(seq)}

    for _ in range(20 * (rides + 1)):
        times: list[float] = []
        for k, v in enumerate(seq):
            nd = inst.nodes[v]
            t = max(nd.earliest, floors.get(v, -math.inf))
            if k > 0:
                prev = seq[k - 1]
                t = max(t, times[-1] + inst.nodes[prev].service_duration + inst.travel_time[prev, v])
            cap = inst.horizon if nd.flexible else nd.latest
            if t > cap + _EPS:
                return None
            times.append(t)

        worst_req = None
        worst_violation = 0.0
        for v in seq:
            if inst.is_dropoff(v):
                req = inst.request_of(v)
                p = inst.pickup(req)
                if p in pos:
                    violation = (times[pos[v]] - times[pos[p]]) - inst.max_ride[req]
                    if violation > max(worst_violation, _EPS):
                        worst_violation = violation
                        worst_req = req
        if worst_req is None:
            cost = 0.0
            for v, t in zip(seq, times):
                nd = inst.nodes[v]
                if nd.flexible and t > nd.latest:
                    cost += inst.delay_rate * (t - nd.latest)
            return times, cost
        p = inst.pickup(worst_req)
        floors[p] = times[pos[p]] + worst_violation
    return None


def _sequence_ok(inst: Instance, seq: list[int], psi: float) -> Optional[float]:
    """Minimal cost of the complete trip ``seq``, or None if infeasible."""
    sched = _delay_search(inst, seq)
    if sched is None:
        return None
    _times, delay_cost = sched
    open_reqs: set[int] = set()
    for v in seq[1:-1]:
        req = inst.request_of(v)
        if inst.is_pickup(v):
            open_reqs.add(req)
        else:
            open_reqs.discard(req)
        loads = [inst.load_of(r) for r in open_reqs]
        if robustness.violation_probability(loads, inst.capacity) > psi + 1e-12:
            return None
    travel = sum(inst.travel_cost[a, b] for a, b in zip(seq, seq[1:]))
    return float(travel) + delay_cost


def enumerate_trips(inst: Instance, cfg: SolveConfig, pre_applied: bool = False) -> list[Trip]:
    """All feasible robust trips, each with its exact minimal cost."""
    if inst.requests > SIZE_GUARD:
        raise OracleSizeError(
            f"{inst.requests} requests exceed the brute-force guard of {SIZE_GUARD}"
        )
    applied = inst if pre_applied else apply_mode(inst, cfg.mode_config())
    trips: list[Trip] = []
    n = applied.requests

    def prefix_viable(seq: list[int], opened: frozenset[int]) -> bool:
        # Constraints only accumulate along a sequence, so an unschedulable
        # or over-risk prefix can be pruned outright.
        if _delay_search(applied, seq) is None:
            return False
        loads = [applied.load_of(r) for r in opened]
        return robustness.violation_probability(loads, applied.capacity) <= cfg.psi + 1e-12

    def recurse(seq: list[int], opened: frozenset[int], closed: frozenset[int]) -> None:
        if closed and not opened:
            full = seq + [applied.destination]
            cost = _sequence_ok(applied, full, cfg.psi)
            if cost is not None:
                covered = 0
                for r in closed:
                    covered |= 1 << r
                trips.append(Trip(tuple(full), cost, covered, True, 0.0))
        for r in range(n):
            if r in closed:
                continue
            if r in opened:
                nxt_seq = seq + [applied.dropoff(r)]
                if prefix_viable(nxt_seq, opened - {r}):
                    recurse(nxt_seq, opened - {r}, closed | {r})
            else:
                nxt_seq = seq + [applied.pickup(r)]
                if prefix_viable(nxt_seq, opened | {r}):
                    recurse(nxt_seq, opened | {r}, closed)

    recurse([applied.origin], frozenset(), frozenset())
    trips.sort(key=lambda t: t.sequence)
    return trips


def solve_exact(inst: Instance, cfg: SolveConfig, uncertain=None) -> OracleResult:
    """Minimum-cost exact cover of all requests by at most |K| trips."""
    applied = apply_mode(inst, cfg.mode_config(), uncertain)
    trips = enumerate_trips(applied, cfg, pre_applied=True)
    n = applied.requests
    full_mask = (1 << n) - 1

    by_first: dict[int, list[Trip]] = {r: [] for r in range(n)}
    for trip in trips:
        first = (trip.covered & -trip.covered).bit_length() - 1
        by_first[first].append(trip)

    best: dict = {"value": math.inf, "trips": None}

    def cover(mask: int, used: int, cost: float, chosen: list[Trip]) -> None:
        if cost >= best["value"] - 1e-12:
            return
        if mask == full_mask:
            best["value"] = cost
            best["trips"] = list(chosen)
            return
        if used == applied.vehicles:
            return
        first = 0
        while mask >> first & 1:
            first += 1
        for trip in by_first[first]:
            if trip.covered & mask:
                continue
            chosen.append(trip)
            cover(mask | trip.covered, used + 1, cost + trip.cost, chosen)
            chosen.pop()

    cover(0, 0, 0.0, [])
    if best["trips"] is None:
        return OracleResult(math.inf, False, [], list(range(n)))
    return OracleResult(
        best["value"], True, [list(t.sequence) for t in best["trips"]], []
    )
