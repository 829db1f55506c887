"""Shared fixtures and random-instance builders."""

from __future__ import annotations

import numpy as np
import pytest

from flexride.instance import Instance, parse_instance

TINY2 = """2 2 200 4 40
0 0 0 0 0 0 200
1 2 0 1 1 0 100
2 5 0 1 2 0 100
3 2 3 1 -1 0 180
4 5 3 1 -2 0 180
5 0 0 0 0 0 200
"""


def random_instance_text(
    n: int,
    vehicles: int,
    seed: int,
    capacity: int = 8,
    horizon: float = 240.0,
    max_ride: float = 60.0,
    tight_windows: bool = True,
) -> str:
    """Benchmark-style random instance: coordinates in [-10, 10]^2,
    one side of each request gets a tight window, loads 1..3.
    Windows are drawn so every request is serviceable on its own."""
    rng = np.random.default_rng(seed)
    lines = [f"{vehicles} {n} {horizon:g} {capacity} {max_ride:g}"]
    coords = rng.uniform(-10, 10, size=(2 * n + 2, 2))
    coords[0] = coords[-1] = rng.uniform(-5, 5, size=2)
    loads = rng.integers(1, 4, size=n)
    service = rng.integers(0, 3, size=2 * n + 2)

    def dist(a, b):
        return float(np.hypot(*(coords[a] - coords[b])))

    windows = []
    for r in range(n):
        p, d = r + 1, n + r + 1
        direct = service[p] + dist(p, d)
        wide = (0.0, horizon)
        if not tight_windows or direct > max_ride:
            windows.append((wide, wide))
            continue
        lead = dist(0, p) + service[p] + direct + 5.0
        tail = service[d] + dist(d, 2 * n + 1) + 5.0
        lo = min(lead, horizon - tail - 45.0)
        t0 = float(rng.uniform(lo, max(lo + 1.0, horizon - tail - 45.0)))
        tight = (t0, t0 + float(rng.uniform(15, 40)))
        if rng.random() < 0.5:  # outbound: tight dropoff
            windows.append((wide, tight))
        else:  # inbound: tight pickup
            windows.append((tight, wide))

    lines.append(f"0 {coords[0][0]:.4f} {coords[0][1]:.4f} 0 0 0 {horizon:g}")
    for r in range(n):
        e, l = windows[r][0]
        lines.append(
            f"{r + 1} {coords[r + 1][0]:.4f} {coords[r + 1][1]:.4f} "
            f"{service[r + 1]} {loads[r]} {e:.4f} {l:.4f}"
        )
    for r in range(n):
        e, l = windows[r][1]
        idx = n + r + 1
        lines.append(
            f"{idx} {coords[idx][0]:.4f} {coords[idx][1]:.4f} "
            f"{service[idx]} {-loads[r]} {e:.4f} {l:.4f}"
        )
    lines.append(f"{2 * n + 1} {coords[-1][0]:.4f} {coords[-1][1]:.4f} 0 0 0 {horizon:g}")
    return "\n".join(lines) + "\n"


def random_instance(n: int, vehicles: int, seed: int, **kwargs) -> Instance:
    return parse_instance(random_instance_text(n, vehicles, seed, **kwargs), name=f"rand{n}-{seed}")


def structured_instance_text(
    n: int,
    vehicles: int,
    seed: int,
    capacity: int = 6,
    horizon: float = 480.0,
    max_ride: float = 45.0,
) -> str:
    """Instance with a feasible cover by construction.

    Simulates one tour per vehicle over its share of the requests (respecting
    capacity and ride limits), then cuts each request's tight window around
    the simulated visit time.  The simulated plan is feasible, so the solver
    always has a dummy-free optimum to find."""
    rng = np.random.default_rng(seed)
    coords = rng.uniform(-10, 10, size=(2 * n + 2, 2))
    coords[0] = coords[-1] = rng.uniform(-3, 3, size=2)
    loads = rng.integers(1, min(4, capacity + 1), size=n)
    service = np.full(2 * n + 2, 3.0)
    service[0] = service[-1] = 0.0

    def dist(a, b):
        return float(np.hypot(*(coords[a] - coords[b])))

    groups = [list(range(g, n, vehicles)) for g in range(vehicles)]
    visit_time = {}
    # idle draws spread each tour over most of the horizon; temporally
    # spread windows are what keep benchmark-style instances tractable
    idle_cap = 0.5 * horizon * vehicles / n
    for group in groups:
        clock = float(rng.uniform(0, 20))
        here = 0
        onboard: list[int] = []
        pending = list(group)
        load = 0.0
        while pending or onboard:
            # close a request when its ride budget runs low, otherwise flip a coin
            must_close = None
            for r in onboard:
                d = n + r + 1
                if clock - visit_time[r + 1] + dist(here, d) + service[here] > max_ride - 8.0:
                    must_close = r
                    break
            if must_close is not None:
                nxt_req, is_pickup = must_close, False
            elif onboard and (not pending or len(onboard) >= 2 or rng.random() < 0.45):
                nxt_req, is_pickup = onboard[0], False
            else:
                nxt_req, is_pickup = pending[0], True
                if load + loads[nxt_req] > capacity:
                    nxt_req, is_pickup = onboard[0], False
            node = nxt_req + 1 if is_pickup else n + nxt_req + 1
            idle = float(rng.uniform(0, idle_cap)) if not onboard else float(rng.uniform(0, 3))
            clock += service[here] + dist(here, node) + idle
            visit_time[node] = clock
            if is_pickup:
                visit_time[nxt_req + 1] = clock
                onboard.append(nxt_req)
                pending.remove(nxt_req)
                load += loads[nxt_req]
            else:
                onboard.remove(nxt_req)
                load -= loads[nxt_req]
            here = node

    lines = [f"{vehicles} {n} {horizon:g} {capacity} {max_ride:g}"]
    lines.append(f"0 {coords[0][0]:.4f} {coords[0][1]:.4f} 0 0 0 {horizon:g}")
    rows = []
    for r in range(n):
        p, d = r + 1, n + r + 1
        tp, td = visit_time[p], visit_time[d]
        tight_pick = rng.random() < 0.5
        if tight_pick:
            wp = (max(0.0, tp - rng.uniform(5, 15)), min(horizon, tp + rng.uniform(5, 15)))
            wd = (0.0, horizon)
        else:
            wp = (0.0, horizon)
            wd = (max(0.0, td - rng.uniform(5, 15)), min(horizon, td + rng.uniform(5, 15)))
        rows.append((p, wp))
        rows.append((d, wd))
    for node, (e, l) in sorted(rows):
        r = node - 1 if node <= n else node - n - 1
        ld = loads[r] if node <= n else -loads[r]
        lines.append(
            f"{node} {coords[node][0]:.4f} {coords[node][1]:.4f} "
            f"{service[node]:g} {ld} {e:.4f} {l:.4f}"
        )
    lines.append(f"{2 * n + 1} {coords[-1][0]:.4f} {coords[-1][1]:.4f} 0 0 0 {horizon:g}")
    return "\n".join(lines) + "\n"


def structured_instance(n: int, vehicles: int, seed: int, **kwargs) -> Instance:
    return parse_instance(
        structured_instance_text(n, vehicles, seed, **kwargs), name=f"struct{n}-{seed}"
    )


@pytest.fixture
def tiny2() -> Instance:
    return parse_instance(TINY2, name="tiny2")
