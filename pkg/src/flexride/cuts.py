"""Separation of robust capacity cuts, infeasible path cuts, and two-path cuts.

All separation is heuristic (bounded subset enumeration over the fractional
support); correctness of the solver never depends on finding every violated
inequality, only on every emitted one being valid for integral solutions
built from feasible robust trips.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

from flexride import robustness
from flexride.instance import Instance
from flexride.master import MasterState, Row, arc_flows
from flexride.robustness import RobustParams
from flexride.scheduling import least_schedule

VIOLATION_TOL = 1e-4
MAX_CAPACITY_SUBSET = 8
MAX_PATH_ARCS = 6
MAX_TWOPATH_SUBSET = 6
_PROBE_BUDGET = 20_000
_FLOW_TOL = 1e-6


@dataclass(frozen=True)
class Cut:
    """A valid inequality over column arc incidences.

    ``support`` is a frozenset of nodes (crossing cuts: coefficient counts
    arcs with exactly one endpoint inside) or a tuple of arcs (path cuts:
    coefficient counts listed arcs used).  ``rhs`` is 2*kappa for robust
    capacity cuts, |P|-1 for path cuts, and 4 for two-path cuts.
    """

    kind: str
    support: object
    sense: str
    rhs: float

    def to_row(self) -> Row:
        return Row(kind=self.kind, sense=self.sense, rhs=self.rhs, support=self.support)


def _crossing_value(state: MasterState, nodes: frozenset[int]) -> float:
    total = 0.0
    for col, weight in zip(state.columns, state.lam):
        if weight <= _FLOW_TOL or col.dummy:
            continue
        count = sum(1 for (i, j) in col.arcs if (i in nodes) != (j in nodes))
        total += weight * count
    return total


def _request_adjacency(state: MasterState, inst: Instance) -> dict[int, dict[int, float]]:
    """Weighted request graph: flow on arcs joining nodes of two requests."""
    adj: dict[int, dict[int, float]] = {r: {} for r in range(inst.requests)}
    for (i, j), flow in arc_flows(state).items():
        ri, rj = inst.request_of(i), inst.request_of(j)
        if ri is None or rj is None or ri == rj:
            continue
        adj[ri][rj] = adj[ri].get(rj, 0.0) + flow
        adj[rj][ri] = adj[rj].get(ri, 0.0) + flow
    return adj


def _components(adj: dict[int, dict[int, float]]) -> list[list[int]]:
    seen: set[int] = set()
    comps = []
    for start in sorted(adj):
        if start in seen or not adj[start]:
            continue
        comp = []
        stack = [start]
        while stack:
            r = stack.pop()
            if r in seen:
                continue
            seen.add(r)
            comp.append(r)
            stack.extend(sorted(adj[r]))
        comps.append(sorted(comp))
    return comps


def _grown_candidates(
    adj: dict[int, dict[int, float]], seeds: list[int], cap: int
) -> list[frozenset[int]]:
    out = []
    for seed in seeds:
        current = {seed}
        out.append(frozenset(current))
        while len(current) < cap:
            frontier = {
                r: sum(adj[s].get(r, 0.0) for s in current)
                for r in adj
                if r not in current and any(r in adj[s] for s in current)
            }
            if not frontier:
                break
            nxt = max(sorted(frontier), key=lambda r: frontier[r])
            current.add(nxt)
            out.append(frozenset(current))
    return out


def _existing(state: MasterState, cut: Cut) -> Row | None:
    for row in state.rows:
        if row.kind == cut.kind and row.support == cut.support and row.rhs == cut.rhs:
            return row
    return None


def separate_robust_capacity(
    state: MasterState, inst: Instance, params: RobustParams
) -> list[Cut]:
    """Crossing cuts over pickup-node sets with right-hand side 2*kappa."""
    adj = _request_adjacency(state, inst)
    candidates: set[frozenset[int]] = set()
    for comp in _components(adj):
        if 1 <= len(comp) <= MAX_CAPACITY_SUBSET:
            candidates.add(frozenset(comp))
    heavy = sorted(
        range(inst.requests), key=lambda r: -inst.load_of(r).mean
    )[: min(inst.requests, 6)]
    for cand in _grown_candidates(adj, heavy, MAX_CAPACITY_SUBSET):
        candidates.add(cand)

    cuts = []
    for subset in sorted(candidates, key=sorted):
        loads = [inst.load_of(r) for r in subset]
        kappa = robustness.kappa_psi(loads, inst.capacity, params)
        rhs = 2.0 * kappa
        nodes = frozenset(inst.pickup(r) for r in subset)
        value = _crossing_value(state, nodes)
        if value < rhs - VIOLATION_TOL:
            cut = Cut("robust-capacity", nodes, ">=", rhs)
            if _reactivate_or_new(state, cut):
                cuts.append(cut)
    return cuts


def _reactivate_or_new(state: MasterState, cut: Cut) -> bool:
    row = _existing(state, cut)
    if row is None:
        return True
    if not row.active:
        row.active = True
        row.slack_age = 0
    return False


def separate_infeasible_path(state: MasterState, inst: Instance) -> list[Cut]:
    """Forbid fractional-support subpaths no feasible trip can contain."""
    flows = {a: f for a, f in arc_flows(state).items() if f > 1e-3}
    succs: dict[int, list[int]] = {}
    for (i, j) in sorted(flows):
        succs.setdefault(i, []).append(j)

    cuts: list[Cut] = []
    seen_paths: set[tuple] = set()
    budget = [50_000]

    def extend_path(path: list[int]) -> None:
        budget[0] -= 1
        if len(cuts) >= 20 or budget[0] <= 0:
            return
        arcs = tuple(zip(path, path[1:]))
        if len(arcs) >= 2 and arcs not in seen_paths:
            seen_paths.add(arcs)
            if _fragment_infeasible(inst, path):
                value = sum(flows.get(a, 0.0) for a in arcs)
                rhs = float(len(arcs) - 1)
                if value > rhs + VIOLATION_TOL:
                    cut = Cut("infeasible-path", arcs, "<=", rhs)
                    if _reactivate_or_new(state, cut):
                        cuts.append(cut)
                return  # minimal infeasible fragment; longer ones are dominated
        if len(path) - 1 >= MAX_PATH_ARCS:
            return
        for nxt in succs.get(path[-1], []):
            if nxt in path or nxt in (inst.origin, inst.destination):
                continue
            extend_path(path + [nxt])

    for start in sorted(succs):
        if start == inst.destination:
            continue
        extend_path([start])
    return cuts


def _fragment_infeasible(inst: Instance, path: list[int]) -> bool:
    """True when no feasible trip can traverse ``path`` consecutively."""
    for k, v in enumerate(path):
        if inst.is_dropoff(v):
            req = inst.request_of(v)
            if inst.pickup(req) in path[k + 1 :]:
                return True  # dropoff before its own pickup
    sched = least_schedule(inst, path)
    return not sched.feasible


def separate_two_path(
    state: MasterState, inst: Instance, params: RobustParams
) -> list[Cut]:
    """Crossing >= 4 for request sets no single robust trip can serve."""
    adj = _request_adjacency(state, inst)
    candidates: set[frozenset[int]] = set()
    for comp in _components(adj):
        for size in (2, 3):
            if len(comp) >= size:
                for combo in combinations(comp, size):
                    candidates.add(frozenset(combo))
    for cand in _grown_candidates(adj, sorted(adj), MAX_TWOPATH_SUBSET):
        if len(cand) >= 2:
            candidates.add(cand)

    cuts = []
    for subset in sorted(candidates, key=sorted):
        if len(subset) > MAX_TWOPATH_SUBSET:
            continue
        nodes = frozenset(
            node for r in subset for node in (inst.pickup(r), inst.dropoff(r))
        )
        value = _crossing_value(state, nodes)
        if value >= 4.0 - VIOLATION_TOL:
            continue
        if _single_trip_can_serve(inst, subset, params):
            continue
        cut = Cut("two-path", nodes, ">=", 4.0)
        if _reactivate_or_new(state, cut):
            cuts.append(cut)
    return cuts


def _single_trip_can_serve(
    inst: Instance, requests: frozenset[int], params: RobustParams
) -> bool:
    """Depth-first probe for one robust trip covering all of ``requests``.

    Returns True when a feasible trip exists or the search budget runs out
    (giving up must err on the side of not cutting).
    """
    reqs = sorted(requests)
    budget = [_PROBE_BUDGET]

    def feasible_from(seq: list[int], opened: set[int], closed: set[int]) -> bool:
        budget[0] -= 1
        if budget[0] <= 0:
            return True  # inconclusive: treat as servable
        if len(closed) == len(reqs):
            full = [inst.origin] + seq + [inst.destination]
            sched = least_schedule(inst, full)
            return sched.feasible
        for r in reqs:
            if r in closed:
                continue
            if r in opened:
                nxt = inst.dropoff(r)
                new_opened, new_closed = opened - {r}, closed | {r}
            else:
                nxt = inst.pickup(r)
                new_opened, new_closed = opened | {r}, closed
                loads = [inst.load_of(o) for o in new_opened]
                if robustness.violation_probability(loads, inst.capacity) > params.psi + 1e-12:
                    continue
            cand = [inst.origin] + seq + [nxt]
            if not least_schedule(inst, cand).feasible:
                continue
            if feasible_from(seq + [nxt], new_opened, new_closed):
                return True
        return False

    return feasible_from([], set(), set())
