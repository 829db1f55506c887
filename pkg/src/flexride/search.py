"""Branch-and-cut-and-price tree search.

Each tree node owns a row set (inherited cuts plus its branching rows) over
the shared column pool.  Node evaluation runs column generation to
convergence (heuristic pricing pass first, exact pass as certificate), then
separates cuts, then branches: on the fractional fleet size when possible,
otherwise on the crossing flow of a node subset.  Nodes are explored best
bound first, ties broken deeper first; all tie-breaking is deterministic so
a fixed seed reproduces the identical report.
"""

from __future__ import annotations

import heapq
import json
import math
import time
from dataclasses import dataclass, field
from typing import Optional

from flexride import cuts as cuts_mod
from flexride import master as master_mod
from flexride.instance import Instance, ModeConfig, apply_mode, tighten_windows
from flexride.master import MasterState, Row
from flexride.pricing import HEURISTIC_COLUMN_CAP, STANDARD, Pricer, TimeLimitReached
from flexride.robustness import RobustParams
from flexride.scheduling import least_schedule
from flexride.simplex import InfeasibleLP

_EPS = 1e-6
_BRANCH_WINDOW = (1.1, 1.9)


@dataclass
class SolveConfig:
    mode: str = "c"
    flex_ratio: float = 0.0
    psi: float = 0.01
    capacity_override: Optional[float] = None
    rng_seed: int = 0
    dominance: str = STANDARD
    time_limit: float = 3600.0
    node_limit: int = 1_000_000

    def mode_config(self) -> ModeConfig:
        return ModeConfig(
            mode=self.mode,
            flex_ratio=self.flex_ratio,
            psi=self.psi,
            capacity_override=self.capacity_override,
            rng_seed=self.rng_seed,
        )


@dataclass
class Route:
    sequence: list[int]
    times: list[float]
    delays: list[float]


@dataclass
class SolveReport:
    instance: str
    mode: str
    psi: float
    flex_ratio: float
    objective: float
    optimal: bool
    feasible: bool
    gap: float
    vehicles_used: int
    routes: list[Route]
    unserved: list[int]
    labels_explored: int
    cuts_added: int
    nodes_explored: int
    wall_seconds: float
    dominance: str
    seed: int

    def to_dict(self) -> dict:
        return {
            "instance": self.instance,
            "mode": self.mode,
            "psi": self.psi,
            "flex_ratio": self.flex_ratio,
            "objective": None if math.isinf(self.objective) else round(self.objective, 9),
            "optimal": self.optimal,
            "feasible": self.feasible,
            "gap": round(self.gap, 9),
            "vehicles_used": self.vehicles_used,
            "routes": [
                {
                    "sequence": r.sequence,
                    "times": [round(t, 9) for t in r.times],
                    "delays": [round(d, 9) for d in r.delays],
                }
                for r in self.routes
            ],
            "unserved": self.unserved,
            "labels_explored": self.labels_explored,
            "cuts_added": self.cuts_added,
            "nodes_explored": self.nodes_explored,
            "wall_seconds": self.wall_seconds,
            "dominance": self.dominance,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


@dataclass(order=True)
class BnBNode:
    sort_key: tuple = field(init=False, repr=False)
    id: int = field(compare=False)
    parent: Optional[int] = field(compare=False, default=None)
    depth: int = field(compare=False, default=0)
    lower_bound: float = field(compare=False, default=-math.inf)
    state: Optional[MasterState] = field(compare=False, default=None)
    status: str = field(compare=False, default="open")

    def __post_init__(self) -> None:
        self.sort_key = (self.lower_bound, -self.depth, self.id)


def choose_branch(state: MasterState) -> Optional[tuple[Row, Row]]:
    """Pick the branching disjunction for a fractional LP solution.

    Prefers the fleet count when fractional; otherwise searches node subsets
    whose crossing flow is nearest 1.5 inside the branching window, falling
    back to any subset (or single arc) with fractional crossing.  Returns
    None when the solution is integral.
    """
    lam = state.lam
    if lam is None:
        raise ValueError("solve the LP before branching")
    if master_mod.is_integral(lam):
        return None

    fleet_activity = float(
        sum(w for col, w in zip(state.columns, lam) if not col.dummy and w > _EPS)
    )
    frac = fleet_activity - math.floor(fleet_activity)
    if _EPS < frac < 1.0 - _EPS:
        lo = float(math.floor(fleet_activity))
        return (
            Row("fleet-branch", "<=", lo),
            Row("fleet-branch", ">=", lo + 1.0),
        )

    flows = master_mod.arc_flows(state)
    inst = state.inst
    service = lambda v: v not in (inst.origin, inst.destination)
    frac_arcs = sorted(
        (a for a, f in flows.items() if _EPS < f < 1.0 - _EPS),
        key=lambda a: (abs(flows[a] - 0.5), a),
    )

    best: Optional[tuple[float, frozenset[int]]] = None
    fallback: Optional[tuple[float, frozenset[int]]] = None
    seen: set[frozenset[int]] = set()
    for arc in frac_arcs[:12]:
        subset = {v for v in arc if service(v)}
        if not subset:
            continue
        for _ in range(6):
            key = frozenset(subset)
            if key in seen:
                break
            seen.add(key)
            crossing = _crossing_of(state, key)
            cfrac = crossing - math.floor(crossing)
            if _EPS < cfrac < 1.0 - _EPS:
                if _BRANCH_WINDOW[0] <= crossing <= _BRANCH_WINDOW[1]:
                    if best is None or abs(crossing - 1.5) < abs(best[0] - 1.5):
                        best = (crossing, key)
                elif fallback is None:
                    fallback = (crossing, key)
            grown = _grow_subset(state, subset, flows)
            if grown is None:
                break
            subset = grown

    chosen = best or fallback
    if chosen is not None:
        crossing, subset = chosen
        lo = float(math.floor(crossing))
        return (
            Row("arc-branch", "<=", lo, support=subset),
            Row("arc-branch", ">=", lo + 1.0, support=subset),
        )

    # Last resort: branch on the most fractional single arc's usage.
    if frac_arcs:
        arc = frac_arcs[0]
        return (
            Row("infeasible-path", "<=", 0.0, support=(arc,)),
            Row("infeasible-path", ">=", 1.0, support=(arc,)),
        )
    raise AssertionError("fractional LP solution without a branchable quantity")


def _crossing_of(state: MasterState, nodes: frozenset[int]) -> float:
    total = 0.0
    for col, w in zip(state.columns, state.lam):
        if w <= _EPS or col.dummy:
            continue
        total += w * sum(1 for (i, j) in col.arcs if (i in nodes) != (j in nodes))
    return total


def _grow_subset(
    state: MasterState, subset: set[int], flows: dict[tuple[int, int], float]
) -> Optional[set[int]]:
    inst = state.inst
    weights: dict[int, float] = {}
    for (i, j), f in flows.items():
        if (i in subset) != (j in subset):
            outside = j if i in subset else i
            if outside in (inst.origin, inst.destination):
                continue
            weights[outside] = weights.get(outside, 0.0) + f
    if not weights:
        return None
    nxt = max(sorted(weights), key=lambda v: weights[v])
    return subset | {nxt}


class _Budget:
    def __init__(self, seconds: float):
        self.start = time.monotonic()
        self.deadline = self.start + seconds

    @property
    def exceeded(self) -> bool:
        return time.monotonic() > self.deadline

    @property
    def elapsed(self) -> float:
        return time.monotonic() - self.start


def solve_bcp(
    inst: Instance,
    cfg: SolveConfig,
    uncertain=None,
) -> SolveReport:
    """Solve the configured instance to proven optimality (or budget limit)."""
    applied = tighten_windows(apply_mode(inst, cfg.mode_config(), uncertain))
    params = RobustParams(cfg.psi)
    pricer = Pricer(applied, psi=cfg.psi, dominance=cfg.dominance)
    budget = _Budget(cfg.time_limit)

    labels_total = 0
    cuts_total = 0
    nodes_explored = 0
    limit_hit = False

    root = master_mod.init_master(applied, cfg.psi)
    incumbent_value, incumbent_cols = _initial_incumbent(root)
    # gentle starting price keeps the bootstrap duals near real route costs
    singles = [col.cost for col in root.columns if not col.dummy]
    if singles:
        root.dummy_cost = min(root.big_cost, 4.0 * max(singles))

    counter = 1
    heap: list[BnBNode] = [BnBNode(id=0, parent=None, depth=0, lower_bound=-math.inf, state=root)]
    best_open_bound = -math.inf

    while heap:
        node = heapq.heappop(heap)
        if node.lower_bound >= incumbent_value - _EPS:
            node.status = "pruned"
            continue
        if nodes_explored >= cfg.node_limit or budget.exceeded:
            heapq.heappush(heap, node)
            limit_hit = True
            break
        nodes_explored += 1
        state = node.state

        try:
            outcome = _evaluate_node(state, pricer, params, budget, cfg)
        except TimeLimitReached:
            heapq.heappush(heap, node)
            limit_hit = True
            break
        except InfeasibleLP:
            node.status = "pruned"
            continue
        labels_total += outcome["labels"]
        cuts_total += outcome["cuts"]
        if outcome.get("timed_out"):
            heapq.heappush(heap, node)
            limit_hit = True
            break

        bound = outcome["objective"]
        node.lower_bound = bound
        if bound >= incumbent_value - _EPS:
            node.status = "pruned"
            continue

        branch = choose_branch(state)
        if branch is None:
            node.status = "integral"
            chosen = [
                (col, w) for col, w in zip(state.columns, state.lam) if w > 0.5
            ]
            value = sum(col.cost for col, _ in chosen)
            if value < incumbent_value - _EPS:
                incumbent_value = value
                incumbent_cols = [col for col, _ in chosen]
            continue

        node.status = "branched"
        for row in branch:
            child_state = state.copy_for_child()
            child_state.rows.append(row)
            heapq.heappush(
                heap,
                BnBNode(
                    id=counter,
                    parent=node.id,
                    depth=node.depth + 1,
                    lower_bound=bound,
                    state=child_state,
                ),
            )
            counter += 1

    if limit_hit:
        open_bounds = [n.lower_bound for n in heap]
        optimal = False
        if open_bounds and min(open_bounds) > -math.inf:
            best_open_bound = min(open_bounds)
            gap = max(0.0, (incumbent_value - best_open_bound) / max(abs(incumbent_value), 1e-9))
        else:
            gap = 1.0  # no usable bound was proven before the limit
    else:
        optimal = True
        gap = 0.0

    return _build_report(applied, cfg, incumbent_value, incumbent_cols, optimal, gap,
                         labels_total, cuts_total, nodes_explored, budget.elapsed)


def _evaluate_node(
    state: MasterState,
    pricer: Pricer,
    params: RobustParams,
    budget: _Budget,
    cfg: SolveConfig,
) -> dict:
    """Column generation to convergence, then cut separation, repeated.

    Dummy prices ramp toward their full penalty only while dummies stay in
    the basis; intermediate LP values are relaxation bounds, and the value
    finally returned comes from a converged LP that is either dummy-free or
    already at full dummy price, so it is exact for this node.
    """
    labels = 0
    cuts_added = 0
    while True:
        # -- cheap column generation: depth-first passes under a label
        # budget, ramping dummy prices while dummies linger
        while True:
            objective, lam, duals = master_mod.solve_lp(state)
            if budget.exceeded:
                return {"objective": objective, "labels": labels, "cuts": cuts_added, "timed_out": True}
            result = pricer.price(
                duals,
                column_cap=HEURISTIC_COLUMN_CAP,
                label_budget=30_000,
                deadline=budget.deadline,
            )
            labels += result.labels_explored
            if result.trips:
                master_mod.add_columns(state, result.trips)
                continue
            if state.dummy_active() and state.dummy_cost < state.big_cost:
                state.dummy_cost = min(state.dummy_cost * 2.0, state.big_cost)
                continue
            break

        # -- separation on the heuristically converged LP; exact
        # certification is only paid for once no more cuts bite
        new_cuts: list[cuts_mod.Cut] = []
        new_cuts += cuts_mod.separate_robust_capacity(state, state.inst, params)
        new_cuts += cuts_mod.separate_infeasible_path(state, state.inst)
        new_cuts += cuts_mod.separate_two_path(state, state.inst, params)
        if new_cuts:
            for cut in sorted(new_cuts, key=lambda c: (c.kind, str(sorted(map(str, c.support))), c.rhs)):
                master_mod.add_row(state, cut.to_row())
                cuts_added += 1
            continue

        result = pricer.price(duals, deadline=budget.deadline)
        labels += result.labels_explored
        if result.trips:
            master_mod.add_columns(state, result.trips)
            continue
        return {"objective": objective, "labels": labels, "cuts": cuts_added}


def _initial_incumbent(state: MasterState) -> tuple[float, list]:
    """Greedy start: singleton trips for the first |K| requests, dummies for the rest."""
    inst = state.inst
    singles = {col.coverage.bit_length() - 1: col for col in state.columns if not col.dummy}
    dummies = {col.coverage.bit_length() - 1: col for col in state.columns if col.dummy}
    chosen = []
    used = 0
    for r in range(inst.requests):
        if r in singles and used < inst.vehicles:
            chosen.append(singles[r])
            used += 1
        else:
            chosen.append(dummies[r])
    return sum(col.cost for col in chosen), chosen


def _build_report(
    applied: Instance,
    cfg: SolveConfig,
    incumbent_value: float,
    incumbent_cols: list,
    optimal: bool,
    gap: float,
    labels_total: int,
    cuts_total: int,
    nodes_explored: int,
    wall: float,
) -> SolveReport:
    routes = []
    unserved: list[int] = []
    for col in incumbent_cols:
        if col.dummy:
            unserved.append(col.coverage.bit_length() - 1)
            continue
        seq = list(col.trip.sequence)
        sched = least_schedule(applied, seq)
        delays = []
        for v, t in zip(seq, sched.starts):
            nd = applied.nodes[v]
            delays.append(max(0.0, t - nd.latest) if nd.flexible else 0.0)
        routes.append(Route(seq, list(sched.starts), delays))
    routes.sort(key=lambda r: r.sequence)

    feasible = not unserved
    objective = incumbent_value if feasible else math.inf
    return SolveReport(
        instance=applied.name,
        mode=cfg.mode,
        psi=cfg.psi,
        flex_ratio=cfg.flex_ratio,
        objective=objective,
        optimal=optimal,
        feasible=feasible,
        gap=gap,
        vehicles_used=len(routes),
        routes=routes,
        unserved=sorted(unserved),
        labels_explored=labels_total,
        cuts_added=cuts_total,
        nodes_explored=nodes_explored,
        wall_seconds=wall,
        dominance=cfg.dominance,
        seed=cfg.rng_seed,
    )
