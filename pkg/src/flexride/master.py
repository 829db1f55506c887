"""Restricted master problem: set partitioning over the column pool.

One equality row per request, one fleet row, plus dynamic cut and branching
rows, solved by the embedded bounded simplex.  Dummy columns (one per
request, priced at four orders of magnitude above the largest arc cost) keep
every node's LP feasible, playing the role of an always-available
third-party vehicle.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from flexride import simplex
from flexride.instance import Instance
from flexride.pricing import Trip
from flexride.scheduling import trip_cost, validate_trip

INTEGRALITY_TOL = 1e-6
_SLACK_TOL = 1e-7
CUT_AGE_LIMIT = 20


@dataclass
class DualPrices:
    """Dual information a pricing round needs, pre-digested.

    ``arc_adjust[i, j]`` folds every active arc-priced row (cuts and arc-flow
    branches) into the arc so label extension can subtract it on the fly;
    ``trip_credit`` folds the fleet row and fleet-count branch rows, which
    price every real column identically.
    """

    request_duals: np.ndarray
    vehicle_dual: float
    cut_duals: list[float]
    branch_duals: list[float]
    trip_credit: float
    arc_adjust: np.ndarray
    has_arc_adjustments: bool


@dataclass
class Row:
    """A dynamic LP row: cut or branching constraint.

    ``support`` is a frozenset of nodes for crossing rows (coefficient =
    number of column arcs with exactly one endpoint inside) or a tuple of
    arcs for path rows (coefficient = number of listed arcs used).  Fleet
    rows have coefficient 1 for every real column.
    """

    kind: str  # robust-capacity | infeasible-path | two-path | fleet-branch | arc-branch
    sense: str  # "<=" or ">="
    rhs: float
    support: object = None
    active: bool = True
    slack_age: int = 0

    def coefficient(self, col: "Column") -> float:
        if col.dummy:
            return 0.0
        if self.kind == "fleet-branch":
            return 1.0
        if self.kind == "infeasible-path":
            return float(sum(1 for a in col.arcs if a in self.support))
        return float(sum(1 for (i, j) in col.arcs if (i in self.support) != (j in self.support)))

    def is_arc_priced(self) -> bool:
        return self.kind != "fleet-branch"


@dataclass
class Column:
    cost: float
    coverage: int  # bitmask over requests
    arcs: tuple[tuple[int, int], ...]
    trip: Optional[Trip] = None
    dummy: bool = False

    def covers(self, request: int) -> bool:
        return bool(self.coverage >> request & 1)


@dataclass
class MasterState:
    inst: Instance
    psi: float
    columns: list[Column] = field(default_factory=list)
    rows: list[Row] = field(default_factory=list)
    unservable: list[int] = field(default_factory=list)
    objective: float = float("nan")
    lam: Optional[np.ndarray] = None
    duals: Optional[DualPrices] = None
    big_cost: float = 0.0
    # LP price charged for dummy columns.  Solvers may start it low and ramp
    # it toward big_cost while dummies stay active: any value below big_cost
    # yields a relaxation, so LP objectives remain valid lower bounds, and a
    # dummy-free converged LP already equals the full-price optimum.
    dummy_cost: float = 0.0
    _sequences: set = field(default_factory=set)

    def active_rows(self) -> list[Row]:
        return [r for r in self.rows if r.active]

    def dummy_active(self, tol: float = INTEGRALITY_TOL) -> bool:
        if self.lam is None:
            return True
        return any(
            col.dummy and w > tol for col, w in zip(self.columns, self.lam)
        )

    def copy_for_child(self) -> "MasterState":
        """Share the column pool, duplicate the row set for a tree child."""
        child = MasterState(self.inst, self.psi)
        child.columns = self.columns
        child.rows = [
            Row(r.kind, r.sense, r.rhs, r.support, r.active, r.slack_age) for r in self.rows
        ]
        child.unservable = self.unservable
        child.big_cost = self.big_cost
        child.dummy_cost = self.dummy_cost
        child._sequences = self._sequences
        return child


def init_master(inst: Instance, psi: float) -> MasterState:
    """Seed the pool with feasible singleton trips plus one dummy per request."""
    state = MasterState(inst, psi)
    state.big_cost = 1e4 * float(inst.travel_cost.max())
    state.dummy_cost = state.big_cost
    for r in range(inst.requests):
        seq = (inst.origin, inst.pickup(r), inst.dropoff(r), inst.destination)
        ok, _reason = validate_trip(inst, seq, psi)
        if ok:
            cost = trip_cost(inst, seq)
            trip = Trip(seq, cost, 1 << r, True, 0.0)
            _append(state, Column(cost, 1 << r, tuple(zip(seq, seq[1:])), trip))
        else:
            state.unservable.append(r)
    for r in range(inst.requests):
        state.columns.append(Column(state.big_cost, 1 << r, (), trip=None, dummy=True))
    return state


def _append(state: MasterState, col: Column) -> bool:
    key = tuple(a for a, _ in col.arcs) + (col.arcs[-1][1],) if col.arcs else ()
    if key in state._sequences:
        return False
    state._sequences.add(key)
    state.columns.append(col)
    return True


def add_columns(state: MasterState, trips: Sequence[Trip]) -> int:
    """Validate and add priced trips; duplicates are ignored. Returns count added."""
    added = 0
    for trip in trips:
        ok, reason = validate_trip(state.inst, trip.sequence, state.psi)
        if not ok:
            raise ValueError(f"priced trip {trip.sequence} fails replay validation: {reason}")
        true_cost = trip_cost(state.inst, trip.sequence)
        if abs(true_cost - trip.cost) > 1e-6:
            raise ValueError(
                f"priced trip {trip.sequence} cost {trip.cost} disagrees with replay {true_cost}"
            )
        col = Column(trip.cost, trip.covered, tuple(zip(trip.sequence, trip.sequence[1:])), trip)
        if _append(state, col):
            added += 1
    return added


def add_row(state: MasterState, row: Row) -> None:
    state.rows.append(row)


def solve_lp(state: MasterState) -> tuple[float, np.ndarray, DualPrices]:
    """Solve the LP relaxation; returns (objective, lambda, duals).

    Raises :class:`flexride.simplex.InfeasibleLP` when branching rows make
    the node empty.
    """
    inst = state.inst
    n = inst.requests
    cols = state.columns
    extra = state.active_rows()
    m = n + 1 + len(extra)

    A = np.zeros((m, len(cols)))
    b = np.zeros(m)
    senses: list[str] = []
    for r in range(n):
        b[r] = 1.0
        senses.append("=")
    for j, col in enumerate(cols):
        for r in range(n):
            if col.covers(r):
                A[r, j] = 1.0
        if not col.dummy:
            A[n, j] = 1.0
    b[n] = inst.vehicles
    senses.append("<=")
    for k, row in enumerate(extra):
        i = n + 1 + k
        b[i] = row.rhs
        senses.append(row.sense)
        for j, col in enumerate(cols):
            coeff = row.coefficient(col)
            if coeff:
                A[i, j] = coeff

    # No explicit upper bounds: every column covers a request, so the
    # partition equalities already imply lambda <= 1.  Explicit bounds would
    # let optimal columns sit nonbasic at the bound with negative reduced
    # cost, and column generation could then never certify convergence.
    c = np.array([state.dummy_cost if col.dummy else col.cost for col in cols])
    ub = np.full(len(cols), np.inf)
    sol = simplex.solve(c, A, senses, b, ub)

    state.objective = sol.objective
    state.lam = sol.x
    request_duals = sol.duals[:n].copy()
    vehicle_dual = float(sol.duals[n])

    arc_adjust = np.zeros_like(inst.travel_cost)
    trip_credit = vehicle_dual
    cut_duals: list[float] = []
    branch_duals: list[float] = []
    size = arc_adjust.shape[0]
    for k, row in enumerate(extra):
        dual = float(sol.duals[n + 1 + k])
        if row.kind in ("robust-capacity", "infeasible-path", "two-path"):
            cut_duals.append(dual)
        else:
            branch_duals.append(dual)
        if row.kind == "fleet-branch":
            trip_credit += dual
        elif dual:
            if row.kind == "infeasible-path":
                for (i, j) in row.support:
                    arc_adjust[i, j] += dual
            else:
                inside = np.zeros(size, dtype=bool)
                inside[list(row.support)] = True
                crossing = inside[:, None] != inside[None, :]
                arc_adjust[crossing] += dual

        # activity aging for cut rows
        value = float(A[n + 1 + k] @ sol.x)
        tight = abs(value - row.rhs) <= _SLACK_TOL
        if row.kind in ("robust-capacity", "infeasible-path", "two-path"):
            row.slack_age = 0 if tight else row.slack_age + 1
            if row.slack_age > CUT_AGE_LIMIT:
                row.active = False

    duals = DualPrices(
        request_duals=request_duals,
        vehicle_dual=vehicle_dual,
        cut_duals=cut_duals,
        branch_duals=branch_duals,
        trip_credit=trip_credit,
        arc_adjust=arc_adjust,
        has_arc_adjustments=bool(np.any(arc_adjust)),
    )
    state.duals = duals
    return sol.objective, sol.x, duals


def is_integral(lam: np.ndarray, tol: float = INTEGRALITY_TOL) -> bool:
    return bool(np.all(np.abs(lam - np.round(lam)) <= tol))


def arc_flows(state: MasterState) -> dict[tuple[int, int], float]:
    """Aggregate fractional arc usage of the current LP solution."""
    flows: dict[tuple[int, int], float] = {}
    for col, weight in zip(state.columns, state.lam):
        if weight <= INTEGRALITY_TOL or col.dummy:
            continue
        for arc in col.arcs:
            flows[arc] = flows.get(arc, 0.0) + float(weight)
    return flows


def dump_lp(state: MasterState) -> str:
    """Row/column text dump for external cross-checking."""
    lines = [f"minimize {len(state.columns)} columns, requests={state.inst.requests}"]
    for j, col in enumerate(state.columns):
        kind = "dummy" if col.dummy else "trip"
        seq = "-" if col.trip is None else ",".join(map(str, col.trip.sequence))
        lines.append(f"col {j} {kind} cost={col.cost:.6f} cover={col.coverage:b} seq={seq}")
    lines.append(f"fleet <= {state.inst.vehicles}")
    for row in state.rows:
        status = "active" if row.active else "inactive"
        lines.append(f"row {row.kind} {row.sense} {row.rhs} {status} support={row.support}")
    return "\n".join(lines)
