"""Forward labeling for the elementary shortest-path pricing problem.

Labels grow depot-to-depot paths one node at a time while tracking reduced
cost, the least feasible schedule of the visited prefix, open and served
requests, and the capacity-risk bound of the onboard set.  Appending a
dropoff whose ride-time limit breaks under the current schedule triggers an
exact reschedule (the pickup is delayed by the minimal amount, see
:mod:`flexride.scheduling`); the label is rejected only when no schedule
exists, so per-sequence feasibility and cost match the brute-force oracle.

Two dominance rules are available.  The standard rule compares labels with
identical open-request sets.  The probabilistic rule relaxes the open sets
to subset inclusion and additionally requires the dominating label to carry
no more capacity risk, pruning riskier labels early.  When any active cut or
branching row prices individual arcs, the probabilistic relaxation is not
safe for exactness and the rule falls back to open-set equality for that
pricing round.
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass, field
from typing import Optional, TYPE_CHECKING

from flexride import robustness
from flexride.instance import Instance
from flexride.scheduling import least_schedule, _delay_cost

if TYPE_CHECKING:  # pragma: no cover
    from flexride.master import DualPrices

_EPS = 1e-9
RC_TOLERANCE = 1e-6
HEURISTIC_COLUMN_CAP = 50

STANDARD = "standard"
PROBABILISTIC = "probabilistic"
NO_DOMINANCE = "off"


class TimeLimitReached(RuntimeError):
    """Raised when a solve exceeds its wall-clock budget."""


@dataclass(frozen=True)
class Trip:
    """A priced column: depot-to-depot sequence with its true cost."""

    sequence: tuple[int, ...]
    cost: float
    covered: int  # bitmask over requests
    robust: bool
    max_gamma: float

    def covers(self, request: int) -> bool:
        return bool(self.covered >> request & 1)

    def covered_requests(self) -> list[int]:
        return [r for r in range(self.covered.bit_length()) if self.covered >> r & 1]

    def arcs(self) -> list[tuple[int, int]]:
        return list(zip(self.sequence, self.sequence[1:]))


@dataclass(slots=True)
class OpenEntry:
    """Bookkeeping for one open (picked, not yet dropped) request."""

    req: int
    pos: int  # position of the pickup in the label's sequence
    dist: float  # minimum elapsed service+travel from the pickup to the current node
    pmax: float  # upper bound on how late the pickup could start


@dataclass(slots=True)
class Label:
    node: int
    reduced_cost: float
    earliest: float  # start of service at the current node (least schedule)
    seq: tuple[int, ...]
    times: tuple[float, ...]  # least schedule of seq
    served: int  # bitmask
    open: int  # bitmask
    open_entries: tuple[OpenEntry, ...]
    gamma: float
    max_gamma: float
    travel: float
    accumulated_delay_cost: float
    latest_start: float = 0.0  # upper bound on delaying service at the current node
    future_gain: float = 0.0  # optimistic reduced-cost gain of requests not yet touched
    open_dropin: float = 0.0  # cheapest-in-arc costs still owed to open dropoffs
    predecessor: Optional["Label"] = None
    dead: bool = field(default=False, compare=False)

    def entry_for(self, req: int) -> OpenEntry:
        for e in self.open_entries:
            if e.req == req:
                return e
        raise KeyError(req)

    def pickup_time(self, req: int) -> float:
        return self.times[self.entry_for(req).pos]


@dataclass
class RejectionLog:
    window: int = 0
    ride_time: int = 0
    capacity_risk: int = 0
    elementarity: int = 0
    horizon: int = 0
    bound: int = 0  # completion bound proves no negative trip can follow


@dataclass
class PricingResult:
    trips: list[Trip]
    reduced_costs: list[float]
    labels_explored: int
    rejections: RejectionLog


def dominates(a: Label, b: Label, rule: str, inst: Instance) -> bool:
    """Whether label ``a`` dominates label ``b`` under the given rule."""
    if a.node != b.node:
        raise ValueError(f"dominance compares labels at one node, got {a.node} and {b.node}")
    if rule == NO_DOMINANCE:
        return False
    if rule == STANDARD:
        if a.open != b.open:
            return False
    elif rule == PROBABILISTIC:
        if a.open & ~b.open:
            return False
        if a.gamma > b.gamma + _EPS:
            return False
    else:
        raise ValueError(f"unknown dominance rule {rule!r}")
    if a.reduced_cost > b.reduced_cost + _EPS:
        return False
    if a.earliest > b.earliest + _EPS:
        return False
    if a.served & ~b.served:
        return False
    for ea in a.open_entries:
        eb = b.entry_for(ea.req)
        limit = inst.max_ride[ea.req]
        if ea.pmax < eb.pmax - _EPS:  # admissible dropoff deadline must be no tighter
            return False
        pa = a.times[ea.pos]
        pb = b.times[eb.pos]
        if pa < pb - _EPS:  # a must have consumed no more of the ride budget
            return False
        if pa + limit - a.earliest < pb + limit - b.earliest - _EPS:  # remaining slack
            return False
    return True


class Pricer:
    """Forward labeling engine bound to one configured instance."""

    def __init__(
        self,
        inst: Instance,
        psi: float = 0.01,
        dominance: str = STANDARD,
        rc_tolerance: float = RC_TOLERANCE,
    ):
        self.inst = inst
        self.psi = psi
        self.dominance = dominance
        self.rc_tolerance = rc_tolerance
        self._loads = [inst.load_of(r) for r in range(inst.requests)]
        self._gamma_memo: dict[int, float] = {0: 0.0}
        # plain-float copies: the label loop is pure Python and numpy
        # scalar boxing dominates otherwise
        self._tt = inst.travel_time.tolist()
        self._tc = inst.travel_cost.tolist()
        self._service = [nd.service_duration for nd in inst.nodes]
        self._earliest = [nd.earliest for nd in inst.nodes]
        self._upper = [inst.upper_time(v) for v in range(len(inst.nodes))]
        # latest clock at which a request's pickup can still be entered
        self._latest_entry = []
        for r in range(inst.requests):
            p, d = inst.pickup(r), inst.dropoff(r)
            chain = self._service[p] + self._tt[p][d]
            self._latest_entry.append(
                min(
                    self._upper[p],
                    self._upper[d] - chain,
                    inst.horizon - self._tt[d][inst.destination] - self._service[d] - chain,
                )
            )
        # node kind tables: 0 depot, 1 pickup, 2 dropoff
        n = inst.requests
        self._kind = [0] * (2 * n + 2)
        self._req_of = [-1] * (2 * n + 2)
        for r in range(n):
            self._kind[inst.pickup(r)] = 1
            self._kind[inst.dropoff(r)] = 2
            self._req_of[inst.pickup(r)] = r
            self._req_of[inst.dropoff(r)] = r
        self._flexible = [nd.flexible for nd in inst.nodes]
        self._latest = [nd.latest for nd in inst.nodes]
        self._ride = list(inst.max_ride)
        self._drop_node = [inst.dropoff(r) for r in range(n)]
        # ingredients of the unavoidable-lateness term in the completion
        # bound: serving request r no earlier than clock t costs at least
        # delay_rate * (excess over each flexible latest time)
        self._chain = [
            self._service[r + 1] + self._tt[r + 1][self._drop_node[r]] for r in range(n)
        ]

    # -- label construction -------------------------------------------------

    def _root(self, duals: "DualPrices") -> Label:
        inst = self.inst
        e0 = inst.nodes[inst.origin].earliest
        return Label(
            node=inst.origin,
            reduced_cost=-duals.trip_credit,
            earliest=e0,
            seq=(inst.origin,),
            times=(e0,),
            served=0,
            open=0,
            open_entries=(),
            gamma=0.0,
            max_gamma=0.0,
            travel=0.0,
            accumulated_delay_cost=0.0,
            latest_start=inst.horizon,
            future_gain=self._total_gain,
            open_dropin=0.0,
        )

    def _prepare_bounds(self) -> None:
        """Per-pricing-call optimistic completion bound ingredients.

        Every node a suffix visits consumes one incoming arc, so a valid
        lower bound on any completion charges each visited node its cheapest
        effective incoming arc and credits each future pickup its dual.
        Pruning on this bound never discards a trip with negative reduced
        cost, it only skips labels that provably cannot produce one.
        """
        inst = self.inst
        n = inst.requests
        size = 2 * n + 2
        eff = [
            [self._tc[u][v] - self._arc_adj[u][v] for v in range(size)]
            for u in range(size)
        ]
        inmin = [
            min(eff[u][v] for u in range(size) if u != v and u != inst.destination)
            for v in range(size)
        ]
        self._raw_gain = [
            inmin[inst.pickup(r)] + inmin[inst.dropoff(r)] - self._req_duals[r]
            for r in range(n)
        ]
        self._gain = [min(0.0, g) for g in self._raw_gain]
        self._inmin_drop = [inmin[inst.dropoff(r)] for r in range(n)]
        self._total_gain = sum(self._gain)
        self._dest_in = inmin[inst.destination]

    def extend(
        self,
        lab: Label,
        nxt: int,
        duals: "DualPrices",
        log: Optional[RejectionLog] = None,
    ) -> Optional[Label]:
        """Extend ``lab`` to node ``nxt``; None when the extension is rejected."""
        inst = self.inst
        u = lab.node
        kind = self._kind[nxt]
        req = self._req_of[nxt]
        dest = inst.destination

        if nxt == dest:
            if lab.open or not lab.served:
                return self._reject(log, "elementarity")
        elif kind == 1:
            if (lab.served | lab.open) >> req & 1:
                return self._reject(log, "elementarity")
        else:  # dropoff
            if not lab.open >> req & 1:
                return self._reject(log, "elementarity")

        gap = self._service[u] + self._tt[u][nxt]
        arrival = lab.earliest + gap
        if arrival < self._earliest[nxt]:
            arrival = self._earliest[nxt]
        if arrival > self._upper[nxt] + _EPS:
            return self._reject(log, "window")

        seq = lab.seq + (nxt,)
        times = lab.times + (arrival,)
        repaired = False
        latest_start = self._upper[nxt]
        if kind == 2:
            entry = lab.entry_for(req)
            ride_cap = self._ride[req]
            latest_start = min(latest_start, entry.pmax + ride_cap)
            if arrival - lab.times[entry.pos] > ride_cap + _EPS:
                sched = least_schedule(inst, seq)
                if not sched.feasible:
                    reason = "window" if sched.reason.startswith("window") else "ride-time"
                    return self._reject(log, reason)
                times = sched.starts
                arrival = times[-1]
                repaired = True

        if nxt != dest:
            if arrival + self._service[nxt] + self._tt[nxt][dest] > inst.horizon + _EPS:
                return self._reject(log, "horizon")

        # carry open-request bookkeeping forward
        entries: list[OpenEntry] = []
        hi_v = self._upper[nxt]
        for e in lab.open_entries:
            if kind == 2 and e.req == req:
                continue
            dist = e.dist + gap
            pm = hi_v - dist
            entries.append(OpenEntry(e.req, e.pos, dist, pm if pm < e.pmax else e.pmax))

        open_mask = lab.open
        served_mask = lab.served
        gamma = lab.gamma
        if kind == 1:
            entries.append(OpenEntry(req, len(seq) - 1, 0.0, hi_v))
            open_mask |= 1 << req
            gamma = self._gamma_of(open_mask)
            if gamma > self.psi + 1e-12:
                return self._reject(log, "capacity-risk")
        elif kind == 2:
            open_mask &= ~(1 << req)
            served_mask |= 1 << req
            gamma = self._gamma_of(open_mask)

        # future dropoffs must still be reachable before their deadlines
        min_depart = arrival + self._service[nxt]
        row = self._tt[nxt]
        for e in entries:
            if min_depart + row[self._drop_node[e.req]] > e.pmax + self._ride[e.req] + _EPS:
                return self._reject(log, "ride-time")

        if repaired:
            delay = _delay_cost(inst, seq, times)
        else:
            late = arrival - self._latest[nxt] if self._flexible[nxt] else 0.0
            delay = lab.accumulated_delay_cost + (
                inst.delay_rate * late if late > 0.0 else 0.0
            )

        z = lab.reduced_cost
        z += self._tc[u][nxt] - self._arc_adj[u][nxt]
        z += delay - lab.accumulated_delay_cost
        future_gain = lab.future_gain
        open_dropin = lab.open_dropin
        if kind == 1:
            z -= self._req_duals[req]
            future_gain -= self._gain[req]
            open_dropin += self._inmin_drop[req]
        elif kind == 2:
            open_dropin -= self._inmin_drop[req]

        return Label(
            node=nxt,
            reduced_cost=z,
            earliest=arrival,
            seq=seq,
            times=times,
            served=served_mask,
            open=open_mask,
            open_entries=tuple(entries),
            gamma=gamma,
            max_gamma=max(lab.max_gamma, gamma),
            travel=lab.travel + self._tc[u][nxt],
            accumulated_delay_cost=delay,
            latest_start=latest_start,
            future_gain=future_gain,
            open_dropin=open_dropin,
            predecessor=lab,
        )

    def _gamma_of(self, open_mask: int) -> float:
        memo = self._gamma_memo
        got = memo.get(open_mask)
        if got is None:
            loads = [self._loads[r] for r in range(self.inst.requests) if open_mask >> r & 1]
            got = robustness.violation_probability(loads, self.inst.capacity)
            memo[open_mask] = got
        return got

    def _passes_bound(self, lab: Label) -> bool:
        """Optimistic completion bound: can this label still price negative?

        Charges every future node its cheapest effective incoming arc,
        credits future pickups their duals, and adds the unavoidable
        lateness of flexible requests reachable only late.  Pruning on it
        never discards a trip with negative reduced cost.
        """
        base = lab.reduced_cost + lab.open_dropin + self._dest_in
        if base + lab.future_gain > -self.rc_tolerance:
            return False
        min_depart = lab.earliest + self._service[lab.node]
        row = self._tt[lab.node]
        filtered = 0.0
        free = ~(lab.served | lab.open)
        gain = self._gain
        raw_gain = self._raw_gain
        latest_entry = self._latest_entry
        latest = self._latest
        flexible = self._flexible
        rate = self.inst.delay_rate
        for r in range(self.inst.requests):
            if not free >> r & 1:
                continue
            g = gain[r]
            if g >= 0.0:
                continue
            reach = min_depart + row[r + 1]
            if reach > latest_entry[r] + _EPS:
                continue
            late = 0.0
            p = r + 1
            if flexible[p] and reach > latest[p]:
                late += reach - latest[p]
            dnode = self._drop_node[r]
            drop_reach = reach + self._chain[r]
            if flexible[dnode] and drop_reach > latest[dnode]:
                late += drop_reach - latest[dnode]
            if late > 0.0:
                g = raw_gain[r] + rate * late
                if g >= 0.0:
                    continue
            filtered += g
        return base + filtered <= -self.rc_tolerance

    @staticmethod
    def _reject(log: Optional[RejectionLog], reason: str) -> None:
        if log is not None:
            key = reason.replace("-", "_")
            setattr(log, key, getattr(log, key) + 1)
        return None

    # -- search -------------------------------------------------------------

    def price(
        self,
        duals: "DualPrices",
        column_cap: Optional[int] = None,
        label_budget: Optional[int] = None,
        rule: Optional[str] = None,
        deadline: Optional[float] = None,
        trace: Optional[list] = None,
    ) -> PricingResult:
        """Run forward labeling; return negative-reduced-cost complete trips.

        ``column_cap`` turns the run into the heuristic early-exit pass:
        labels are then processed depth-first so complete trips surface
        quickly, and ``label_budget`` caps the exploration.  Without a cap
        the run is exhaustive in earliest-time order and its emptiness
        certifies that no negative-reduced-cost trip exists.
        ``deadline`` is an absolute ``time.monotonic()`` stamp.
        """
        inst = self.inst
        rule = rule if rule is not None else self.dominance
        if rule == PROBABILISTIC and duals.has_arc_adjustments:
            rule = STANDARD  # arc-priced rows make the subset relaxation unsafe
        self._arc_adj = duals.arc_adjust.tolist()
        self._req_duals = duals.request_duals.tolist()
        self._prepare_bounds()
        depth_first = column_cap is not None

        log = RejectionLog()
        n = inst.requests
        all_mask = (1 << n) - 1
        # labels grouped by (node, open set); dominance only relates labels
        # whose open sets are equal (standard) or nested (probabilistic)
        buckets: dict[int, dict[int, list[Label]]] = {v: {} for v in range(2 * n + 2)}
        queue: list[tuple[float, int, Label]] = []
        push = queue.append if depth_first else (lambda item: heapq.heappush(queue, item))
        counter = 0
        root = self._root(duals)
        push((root.times[-1], counter, root))
        labels_explored = 1

        found: list[tuple[float, Trip]] = []
        stop = False
        pops = 0

        while queue and not stop:
            lab = queue.pop()[2] if depth_first else heapq.heappop(queue)[2]
            if lab.dead:
                continue
            pops += 1
            if deadline is not None and pops % 128 == 0 and time.monotonic() > deadline:
                raise TimeLimitReached("pricing exceeded the time limit")
            if label_budget is not None and labels_explored > label_budget:
                break

            touched = lab.served | lab.open
            candidates = []
            depart = lab.earliest + self._service[lab.node]
            row = self._tt[lab.node]
            if touched != all_mask:
                free = all_mask & ~touched
                r = 0
                while free >> r:
                    if free >> r & 1 and depart + row[r + 1] <= self._latest_entry[r] + _EPS:
                        candidates.append(inst.pickup(r))
                    r += 1
            opened = lab.open
            r = 0
            while opened >> r:
                if opened >> r & 1:
                    candidates.append(inst.dropoff(r))
                r += 1
            if depth_first and len(candidates) > 1:
                # dive toward the locally most profitable extension first
                # (the stack pops the last append)
                adj = self._arc_adj[lab.node]
                rd = self._req_duals
                kind = self._kind
                req_of = self._req_of
                candidates.sort(
                    key=lambda v: row[v] - adj[v] - (rd[req_of[v]] if kind[v] == 1 else 0.0),
                    reverse=True,
                )

            for nxt in candidates:
                new = self.extend(lab, nxt, duals, log)
                if new is None:
                    continue
                if not self._passes_bound(new):
                    log.bound += 1
                    if trace is not None:
                        trace.append((nxt, new.reduced_cost, new.earliest, new.gamma, "bound"))
                    continue
                if not self._admit(new, buckets[nxt], rule):
                    if trace is not None:
                        trace.append((nxt, new.reduced_cost, new.earliest, new.gamma, "dominated"))
                    continue
                counter += 1
                push((new.earliest, counter, new))
                labels_explored += 1
                if trace is not None:
                    trace.append((nxt, new.reduced_cost, new.earliest, new.gamma, "admitted"))

            if not lab.open and lab.served:
                done = self.extend(lab, inst.destination, duals, log)
                if done is not None:
                    labels_explored += 1
                    if done.reduced_cost < -self.rc_tolerance:
                        trip = Trip(
                            sequence=done.seq,
                            cost=done.travel + done.accumulated_delay_cost,
                            covered=done.served,
                            robust=done.max_gamma <= self.psi + 1e-12,
                            max_gamma=done.max_gamma,
                        )
                        found.append((done.reduced_cost, trip))
                        if trace is not None:
                            trace.append(
                                (inst.destination, done.reduced_cost, done.earliest, done.gamma, "trip")
                            )
                        if column_cap is not None and len(found) >= column_cap:
                            stop = True

        found.sort(key=lambda rc_trip: (rc_trip[0], rc_trip[1].sequence))
        unique: dict[tuple[int, ...], tuple[float, Trip]] = {}
        for rc, trip in found:
            unique.setdefault(trip.sequence, (rc, trip))
        ordered = sorted(unique.values(), key=lambda rc_trip: (rc_trip[0], rc_trip[1].sequence))
        return PricingResult(
            trips=[t for _, t in ordered],
            reduced_costs=[rc for rc, _ in ordered],
            labels_explored=labels_explored,
            rejections=log,
        )

    def _admit(self, new: Label, node_masks: dict[int, list[Label]], rule: str) -> bool:
        """Bucket upkeep: insert ``new`` unless dominated; prune its losers.

        Buckets stay sorted by reduced cost, so the dominator scan stops at
        the first costlier label and the victim scan starts at the first one
        at least as costly.  Conditions mirror :func:`dominates`.
        """
        if rule == NO_DOMINANCE:
            node_masks.setdefault(new.open, []).append(new)
            return True
        eps = _EPS
        probabilistic = rule == PROBABILISTIC
        if probabilistic:
            groups = node_masks.items()
        else:
            got = node_masks.get(new.open)
            groups = ((new.open, got),) if got is not None else ()

        zn = new.reduced_cost
        en = new.earliest
        vn = new.served
        gn = new.gamma
        times_n = new.times

        for mask, labels in groups:
            if mask & ~new.open:
                continue  # not a subset of new's open set: cannot dominate it
            for old in labels:
                if old.reduced_cost > zn + eps:
                    break
                if old.earliest > en + eps or old.served & ~vn:
                    continue
                if probabilistic and old.gamma > gn + eps:
                    continue
                for eo in old.open_entries:
                    en_ = new.entry_for(eo.req)
                    po = old.times[eo.pos]
                    pn = times_n[en_.pos]
                    if (
                        eo.pmax < en_.pmax - eps
                        or po < pn - eps
                        or po - old.earliest < pn - en - eps
                    ):
                        break
                else:
                    return False  # dominated

        if probabilistic:
            victim_groups = node_masks.items()
        else:
            got = node_masks.get(new.open)
            victim_groups = ((new.open, got),) if got is not None else ()
        for mask, labels in victim_groups:
            if new.open & ~mask:
                continue
            lo, hi = 0, len(labels)
            while lo < hi:
                mid = (lo + hi) // 2
                if labels[mid].reduced_cost < zn - eps:
                    lo = mid + 1
                else:
                    hi = mid
            changed = False
            for idx in range(lo, len(labels)):
                old = labels[idx]
                if old.earliest < en - eps or vn & ~old.served:
                    continue
                if probabilistic and gn > old.gamma + eps:
                    continue
                for e in new.open_entries:
                    eo = old.entry_for(e.req)
                    pn = times_n[e.pos]
                    po = old.times[eo.pos]
                    if (
                        e.pmax < eo.pmax - eps
                        or pn < po - eps
                        or pn - en < po - old.earliest - eps
                    ):
                        break
                else:
                    old.dead = True
                    changed = True
            if changed:
                labels[:] = [old for old in labels if not old.dead]

        bucket = node_masks.setdefault(new.open, [])
        lo, hi = 0, len(bucket)
        while lo < hi:
            mid = (lo + hi) // 2
            if bucket[mid].reduced_cost < zn:
                lo = mid + 1
            else:
                hi = mid
        bucket.insert(lo, new)
        return True
