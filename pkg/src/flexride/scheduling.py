"""Exact service-time scheduling for a fixed node sequence.

All timing constraints of a trip are difference constraints (chain travel,
window bounds, ride-time limits), so the feasible schedule set is closed
under componentwise minimum and, when nonempty, has a unique least element.
Delay penalties are nondecreasing in every start time, hence that least
schedule is also the cheapest one.  ``least_schedule`` computes it by
monotone fixpoint propagation: start everything as early as windows allow,
push pickups up whenever a ride-time limit forces it, and re-propagate until
stable or some hard upper bound breaks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from flexride.instance import Instance

_EPS = 1e-9


@dataclass
class Schedule:
    """Least feasible schedule of a sequence, or the reason there is none."""

    feasible: bool
    starts: tuple[float, ...]
    delay_cost: float
    reason: str = ""


def least_schedule(inst: Instance, seq: Sequence[int]) -> Schedule:
    """Least (hence cheapest) feasible schedule of ``seq``.

    ``seq`` is any prefix of a trip starting at the origin depot.  Ride-time
    limits are enforced for requests whose pickup and dropoff both appear.
    Returns an infeasible ``Schedule`` when no start times satisfy the
    chain, windows, and ride-time system.
    """
    m = len(seq)
    lo = [inst.nodes[v].earliest for v in seq]
    hi = [inst.upper_time(v) for v in seq]
    gap = [
        inst.nodes[seq[k]].service_duration + inst.travel_time[seq[k], seq[k + 1]]
        for k in range(m - 1)
    ]

    pos = {v: k for k, v in enumerate(seq)}
    rides: list[tuple[int, int, float]] = []  # (pickup pos, dropoff pos, limit)
    for k, v in enumerate(seq):
        if inst.is_dropoff(v):
            req = inst.request_of(v)
            p = pos.get(inst.pickup(req))
            if p is not None:
                rides.append((p, k, inst.max_ride[req]))

    # In a feasible system every ride edge re-fires at most once per push of
    # an interleaved ride, so (R+1)^2 passes reach the fixpoint; a system
    # still moving after that contains an upward cycle and is infeasible.
    t = list(lo)
    for _ in range((len(rides) + 1) ** 2 + 3):
        changed = False
        for k in range(m - 1):
            need = t[k] + gap[k]
            if need > t[k + 1] + _EPS:
                t[k + 1] = need
                changed = True
        for p, d, limit in rides:
            need = t[d] - limit
            if need > t[p] + _EPS:
                t[p] = need
                changed = True
        if not changed:
            break
        if any(t[k] > hi[k] + _EPS for k in range(m)):
            break

    for k in range(m):
        if t[k] > hi[k] + _EPS:
            return Schedule(False, tuple(t), 0.0, reason=f"window:{seq[k]}")
    for k in range(m - 1):
        if t[k] + gap[k] > t[k + 1] + _EPS:
            return Schedule(False, tuple(t), 0.0, reason=f"ride-time:{seq[k + 1]}")
    for p, d, limit in rides:
        if t[d] - t[p] > limit + _EPS:
            return Schedule(False, tuple(t), 0.0, reason=f"ride-time:{seq[d]}")

    return Schedule(True, tuple(t), _delay_cost(inst, seq, t))


def _delay_cost(inst: Instance, seq: Sequence[int], starts: Sequence[float]) -> float:
    total = 0.0
    for v, t in zip(seq, starts):
        nd = inst.nodes[v]
        if nd.flexible and t > nd.latest:
            total += inst.delay_rate * (t - nd.latest)
    return total


def travel_cost(inst: Instance, seq: Sequence[int]) -> float:
    return float(sum(inst.travel_cost[a, b] for a, b in zip(seq, seq[1:])))


def validate_trip(
    inst: Instance,
    seq: Sequence[int],
    psi: Optional[float] = None,
) -> tuple[bool, str]:
    """Replay a complete trip against every feasibility condition.

    Checks structure (depot endpoints, pickup-before-dropoff pairing,
    elementarity), the scheduling system, and, when ``psi`` is given, the
    capacity-risk bound at every node.  Independent of how the trip was
    produced; used as the admission gate for priced columns.
    """
    if len(seq) < 3:
        return False, "structure: trip serves no request"
    if seq[0] != inst.origin or seq[-1] != inst.destination:
        return False, "structure: trip must run depot to depot"
    interior = list(seq[1:-1])
    if any(v in (inst.origin, inst.destination) for v in interior):
        return False, "structure: depot revisited"
    if len(set(interior)) != len(interior):
        return False, "structure: node revisited"
    seen_pick = set()
    for v in interior:
        req = inst.request_of(v)
        if inst.is_pickup(v):
            seen_pick.add(req)
        elif req not in seen_pick:
            return False, f"precedence: dropoff of request {req} before its pickup"
    closed = {inst.request_of(v) for v in interior if inst.is_dropoff(v)}
    if seen_pick != closed:
        return False, "structure: open request at trip end"

    sched = least_schedule(inst, seq)
    if not sched.feasible:
        return False, sched.reason

    if psi is not None:
        from flexride import robustness

        open_reqs: set[int] = set()
        for v in interior:
            req = inst.request_of(v)
            if inst.is_pickup(v):
                open_reqs.add(req)
            else:
                open_reqs.discard(req)
            loads = [inst.load_of(r) for r in open_reqs]
            if robustness.violation_probability(loads, inst.capacity) > psi + 1e-12:
                return False, f"capacity-risk: node {v}"
    return True, ""


def trip_cost(inst: Instance, seq: Sequence[int]) -> float:
    """True composite cost of a trip: travel plus minimal delay penalties."""
    sched = least_schedule(inst, seq)
    if not sched.feasible:
        raise ValueError(f"cannot cost infeasible sequence {list(seq)}: {sched.reason}")
    return travel_cost(inst, seq) + sched.delay_cost
