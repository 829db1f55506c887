"""Bounded-support chance-constraint mathematics.

Demand at each pickup is known only through its mean and a bounded support
``[lo, hi]``.  The probability that the total onboard load exceeds the vehicle
capacity is bounded by the one-sided Hoeffding tail

    Gamma = exp(-2 * ((M - sum mu_j) / sum (hi_j - lo_j))^2),

and a trip is accepted as robust when ``Gamma <= psi``.  A linear surrogate,

    sum (mu_j + gamma * (hi_j - lo_j)) <= M   with  gamma = sqrt(ln(1/psi)/2),

is at least as strict as the exponential test and is what the capacity cuts
use.  Both forms degenerate gracefully for deterministic loads (``lo == hi``):
Gamma becomes the plain 0/1 capacity test.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, TYPE_CHECKING

if TYPE_CHECKING:  # pragma: no cover
    from flexride.instance import UncertainLoad


@dataclass(frozen=True)
class RobustParams:
    """Violation probability and its precomputed linearization coefficient."""

    psi: float
    gamma: float = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "gamma", gamma_coefficient(self.psi))


def gamma_coefficient(psi: float) -> float:
    """Coefficient ``sqrt(ln(1/psi)/2)`` of the linear capacity surrogate.

    Decreases monotonically in ``psi``; tends to 0 as ``psi`` approaches 1.
    """
    if not 0.0 < psi < 1.0:
        raise ValueError(f"violation probability must lie in (0, 1), got {psi}")
    return math.sqrt(math.log(1.0 / psi) / 2.0)


def inflated_onboard_sum(onboard: Iterable["UncertainLoad"], params: RobustParams) -> float:
    """Sum of mean loads inflated by ``gamma`` times each support width."""
    return sum(w.mean + params.gamma * (w.hi - w.lo) for w in onboard)


def violation_probability(onboard: Iterable["UncertainLoad"], capacity: float) -> float:
    """Hoeffding bound on ``P(total onboard load > capacity)``.

    Empty onboard set has violation probability 0.  When the mean demand
    already exceeds capacity the bound is taken as 1 (certain violation);
    the tail formula is only meaningful in the feasible-mean regime.
    A degenerate zero total support width reduces to the 0/1 capacity test.
    """
    loads = list(onboard)
    if not loads:
        return 0.0
    mean_sum = sum(w.mean for w in loads)
    width_sum = sum(w.hi - w.lo for w in loads)
    slack = capacity - mean_sum
    if slack < 0.0:
        return 1.0
    if width_sum <= 0.0:
        return 0.0
    ratio = slack / width_sum
    if ratio > 30.0:  # exp(-1800) underflows; squaring may overflow first
        return 0.0
    return math.exp(-2.0 * ratio * ratio)


def is_robust_feasible(
    onboard: Iterable["UncertainLoad"], capacity: float, params: RobustParams
) -> bool:
    """True iff the onboard set passes the chance constraint ``Gamma <= psi``."""
    return violation_probability(onboard, capacity) <= params.psi


def kappa_psi(
    request_set: Iterable["UncertainLoad"], capacity: float, params: RobustParams
) -> int:
    """Minimum vehicle-count coefficient for a request subset.

    Returns 1 when the whole subset can ride together within capacity at the
    accepted risk level (judged by the linear surrogate), 2 otherwise.
    """
    loads = list(request_set)
    if not loads:
        raise ValueError("kappa_psi requires a nonempty request set")
    if inflated_onboard_sum(loads, params) <= capacity:
        return 1
    return 2
