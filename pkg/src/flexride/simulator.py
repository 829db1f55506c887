"""Monte-Carlo evaluation of a solved plan under demand realizations.

Each scenario redraws every request's load as the booked amount plus a
random offset from a fixed menu (default {-1, 0, 1, 2, 3, 4}, equally
likely, clamped at zero).  Routes are replayed in planned order: a pickup
that would push the onboard total above capacity loses the whole request
(its dropoff service is skipped, the vehicle still drives the planned
sequence).  Dropoff loads mirror the realized pickup loads.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from flexride import robustness
from flexride.instance import Instance
from flexride.pricing import Trip
from flexride.search import SolveReport

DEFAULT_OFFSETS = (-1, 0, 1, 2, 3, 4)
DEFAULT_SCENARIOS = 50


@dataclass
class ScenarioResult:
    scenario_id: int
    served: list[int]
    lost: list[int]
    mileage: float
    travel_time: float
    waiting: float
    total_time: float
    load_trace: list[list[float]] = field(default_factory=list)


@dataclass
class SimulationSummary:
    scenarios: int
    seed: int
    sr_mean: float
    sr_std: float
    metrics_mean: dict
    metrics_std: dict
    results: list[ScenarioResult]

    def to_json(self) -> str:
        payload = {
            "scenarios": self.scenarios,
            "seed": self.seed,
            "sr_percent_mean": round(self.sr_mean, 9),
            "sr_percent_std": round(self.sr_std, 9),
            "mean": {k: round(v, 9) for k, v in sorted(self.metrics_mean.items())},
            "std": {k: round(v, 9) for k, v in sorted(self.metrics_std.items())},
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["scenario_id", "served", "lost", "TM", "T", "WT", "TT"])
        for r in self.results:
            writer.writerow(
                [
                    r.scenario_id,
                    len(r.served),
                    len(r.lost),
                    f"{r.mileage:.6f}",
                    f"{r.travel_time:.6f}",
                    f"{r.waiting:.6f}",
                    f"{r.total_time:.6f}",
                ]
            )
        return buf.getvalue()


def simulate(
    report: SolveReport,
    inst: Instance,
    scenarios: int = DEFAULT_SCENARIOS,
    seed: int = 0,
    offsets: Sequence[int] = DEFAULT_OFFSETS,
) -> SimulationSummary:
    """Replay the plan's routes under random load realizations.

    The plan is static: lost requests trigger no replanning, the vehicle
    keeps the planned node order and simply skips the lost request's
    service.  Fixed seed and single-threaded accumulation make the output
    bit-identical across runs.
    """
    if scenarios <= 0:
        raise ValueError("scenario count must be positive")
    if not report.routes:
        raise ValueError("report contains no routes to simulate")
    rng = np.random.default_rng(seed)
    offsets = np.asarray(list(offsets), dtype=float)

    booked = np.array(
        [inst.nodes[inst.pickup(r)].load for r in range(inst.requests)], dtype=float
    )

    results: list[ScenarioResult] = []
    for sid in range(scenarios):
        draw = rng.integers(0, len(offsets), size=inst.requests)
        realized = np.maximum(booked + offsets[draw], 0.0)
        res = _replay(inst, report, realized, sid)
        results.append(res)

    total = inst.requests  # pre-booked requests, planned or not
    sr = np.array([100.0 * len(r.served) / total for r in results]) if total else np.full(len(results), 100.0)
    tm = np.array([r.mileage for r in results])
    tt_travel = np.array([r.travel_time for r in results])
    wt = np.array([r.waiting for r in results])
    tt = np.array([r.total_time for r in results])
    return SimulationSummary(
        scenarios=scenarios,
        seed=seed,
        sr_mean=float(sr.mean()),
        sr_std=float(sr.std()),
        metrics_mean={"TM": float(tm.mean()), "T": float(tt_travel.mean()), "WT": float(wt.mean()), "TT": float(tt.mean())},
        metrics_std={"TM": float(tm.std()), "T": float(tt_travel.std()), "WT": float(wt.std()), "TT": float(tt.std())},
        results=results,
    )


def _replay(inst: Instance, report: SolveReport, realized: np.ndarray, sid: int) -> ScenarioResult:
    served: list[int] = []
    lost: list[int] = []
    mileage = 0.0
    travel_time = 0.0
    waiting = 0.0
    traces: list[list[float]] = []

    for route in report.routes:
        seq = route.sequence
        onboard = 0.0
        lost_here: set[int] = set()
        clock = inst.nodes[seq[0]].earliest
        last_service = inst.nodes[seq[0]].service_duration
        trace = [onboard]
        for prev, v in zip(seq, seq[1:]):
            mileage += float(inst.travel_cost[prev, v])
            travel_time += float(inst.travel_time[prev, v])
            arrival = clock + last_service + inst.travel_time[prev, v]
            req = inst.request_of(v)
            if req is None:
                clock = max(arrival, inst.nodes[v].earliest)
                last_service = inst.nodes[v].service_duration
            elif inst.is_pickup(v):
                if onboard + realized[req] > inst.capacity + 1e-9:
                    lost.append(req)
                    lost_here.add(req)
                    clock = arrival  # passes through, service skipped
                    last_service = 0.0
                else:
                    served.append(req)
                    start = max(arrival, inst.nodes[v].earliest)
                    waiting += start - arrival
                    onboard += float(realized[req])
                    clock = start
                    last_service = inst.nodes[v].service_duration
            else:
                if req in lost_here:
                    clock = arrival
                    last_service = 0.0
                else:
                    start = max(arrival, inst.nodes[v].earliest)
                    waiting += start - arrival
                    onboard -= float(realized[req])
                    clock = start
                    last_service = inst.nodes[v].service_duration
            trace.append(onboard)
        traces.append(trace)

    return ScenarioResult(
        scenario_id=sid,
        served=sorted(served),
        lost=sorted(lost),
        mileage=mileage,
        travel_time=travel_time,
        waiting=waiting,
        total_time=travel_time + waiting,
        load_trace=traces,
    )


def hoeffding_audit(
    inst: Instance,
    psi: float,
    trips: Sequence[Trip],
    samples: int = 100_000,
    seed: int = 0,
) -> list[dict]:
    """Empirical conservativeness check of accepted robust trips.

    Draws each pickup load independently uniform on its support and reports
    the fraction of samples in which any node's onboard total overflows
    capacity.  For a trip accepted at level ``psi`` this rate must stay
    below ``psi`` plus a three-sigma binomial margin.
    """
    rng = np.random.default_rng(seed)
    out = []
    for trip in trips:
        draws = {}
        for r in trip.covered_requests():
            w = inst.load_of(r)
            draws[r] = rng.uniform(w.lo, w.hi, size=samples) if w.hi > w.lo else np.full(samples, w.mean)
        overflow = np.zeros(samples, dtype=bool)
        onboard = np.zeros(samples)
        for v in trip.sequence[1:-1]:
            r = inst.request_of(v)
            if inst.is_pickup(v):
                onboard = onboard + draws[r]
            else:
                onboard = onboard - draws[r]
            overflow |= onboard > inst.capacity + 1e-12
        rate = float(overflow.mean())
        margin = 3.0 * math.sqrt(max(psi * (1.0 - psi), 1e-12) / samples)
        out.append(
            {
                "sequence": list(trip.sequence),
                "violation_rate": rate,
                "psi": psi,
                "margin": margin,
                "within_bound": rate <= psi + margin,
                "max_gamma": trip.max_gamma,
            }
        )
    return out


def worst_onboard_gamma(inst: Instance, trip: Trip, psi: float) -> float:
    """Largest capacity-risk bound along a trip (diagnostic helper)."""
    worst = 0.0
    open_reqs: set[int] = set()
    for v in trip.sequence[1:-1]:
        r = inst.request_of(v)
        if inst.is_pickup(v):
            open_reqs.add(r)
        else:
            open_reqs.discard(r)
        loads = [inst.load_of(q) for q in open_reqs]
        worst = max(worst, robustness.violation_probability(loads, inst.capacity))
    return worst
