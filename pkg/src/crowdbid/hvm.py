"""Budget-utilisation search around the truthful mechanism.

The truthful mechanism spends well under its budget because of the
proportional-share stopping rule.  The search feeds it inflated *input*
budgets and keeps the one whose payments still fit in the *actual* budget:
first by doubling until payments overshoot, then by interpolating along the
payment curve inside the resulting bracket.  Every probe is a full
allocation-plus-payment run.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

from .model import AuctionInstance, AuctionOutcome
from .tvm import tvm_run

__all__ = [
    "BudgetBracket",
    "SearchLog",
    "exponential_bracket",
    "interpolate_next",
    "midpoint_next",
    "search_bracket",
    "find_bracket",
    "hvm_run",
    "binary_search_budget",
    "search_step",
]

BRACKET_CAP = 64


@dataclass
class BudgetBracket:
    b_min: float
    b_max: float
    p_min: float
    p_max: float
    probes: int
    status: str = "bracket"   # bracket | exact | saturated | infeasible

    @property
    def searchable(self) -> bool:
        return self.status == "bracket"


@dataclass
class SearchLog:
    probes: list[tuple[float, float]] = field(default_factory=list)
    b_star: Optional[float] = None
    tvm_evaluations: int = 0
    method: str = "interpolation"
    status: str = "bracket"
    bracket_probes: int = 0

    def is_monotone(self) -> bool:
        """Payments are non-decreasing in input budget across the probes."""
        pts = sorted(self.probes)
        return all(p0 <= p1 for (_, p0), (_, p1) in zip(pts, pts[1:]))

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "status": self.status,
            "b_star": self.b_star,
            "tvm_evaluations": self.tvm_evaluations,
            "bracket_probes": self.bracket_probes,
            "monotone": self.is_monotone(),
            "probes": [{"input_budget": b, "payment_sum": p} for b, p in self.probes],
        }


def search_step(budget: float) -> float:
    return max(1e-6 * budget, 1e-9)


def exponential_bracket(probe: Callable[[float], float], target: float,
                        cap: int = BRACKET_CAP) -> BudgetBracket:
    """Double the input budget from ``target`` until payments exceed ``target``.

    If the very first probe already overshoots, halve downwards instead.
    """
    b = float(target)
    p = probe(b)
    n = 1
    if p == target:
        return BudgetBracket(b, b, p, p, n, "exact")
    if p > target:
        hi, phi = b, p
        for _ in range(cap):
            b /= 2.0
            p = probe(b)
            n += 1
            if p <= target:
                return BudgetBracket(b, hi, p, phi, n, "bracket" if p < target else "exact")
            hi, phi = b, p
        return BudgetBracket(b, b, p, p, n, "infeasible")
    for _ in range(cap):
        lo, plo = b, p
        b *= 2.0
        p = probe(b)
        n += 1
        if p == target:
            return BudgetBracket(b, b, p, p, n, "exact")
        if p > target:
            return BudgetBracket(lo, b, plo, p, n)
    return BudgetBracket(b, b, p, p, n, "saturated")


def interpolate_next(bracket, target: float) -> float:
    """Input budget where the chord through the bracket ends reaches ``target``."""
    b_min, b_max, p_min, p_max = bracket[:4]
    if p_max == p_min:
        return midpoint_next(bracket, target)
    slope = (b_max - b_min) / (p_max - p_min)
    return min(max(b_min + (target - p_min) * slope, b_min), b_max)


def midpoint_next(bracket, target: float) -> float:
    b_min, b_max = bracket[:2]
    return b_min + (b_max - b_min) / 2.0


def bisection_probes(width: float, step: float) -> int:
    """Probes a midpoint search takes to empty a bracket of ``width``."""
    n = 0
    while width >= 0:
        width = width / 2.0 - step
        n += 1
    return n


def _bisection_slack(width: float, step: float) -> float:
    """Widest bracket that bisection still empties in as many probes as ``width``.

    After ``n`` halvings a bracket ``w`` has width ``w / 2**n - 2 * step * (1 - 2**-n)``;
    this solves for a final width of ``-step / 1000``, which leaves room for
    rounding in the bracket ends.
    """
    n = bisection_probes(width, step)
    return max(width, 2.0 * step * (2.0 ** n - 1.0) - 1e-3 * step * 2.0 ** n)


def search_bracket(probe: Callable[[float], float], bracket: BudgetBracket, target: float,
                   step: float, next_point=interpolate_next,
                   truncate: bool = True) -> list[tuple[float, float]]:
    """Shrink ``bracket`` around the largest input budget whose payments fit.

    After each probe the side it landed on moves one ``step`` past it and
    takes the probed payment sum as its new endpoint value.

    Proposed points are nudged toward the midpoint and then projected into a
    window around it (interpolate-truncate-project).  ``shadow`` is the width
    bisection would have after the same number of probes; keeping every
    probe within ``(shadow - width) / 2`` of the midpoint means the bracket is
    never wider than bisection's, so the loop never takes more probes.  With
    ``next_point=midpoint_next`` the projection is a no-op.
    """
    lo, hi, plo, phi = bracket.b_min, bracket.b_max, bracket.p_min, bracket.p_max
    shadow = _bisection_slack(hi - lo, step)
    kappa = 0.2 / shadow if truncate and shadow > 0 else 0.0
    probes = []
    while lo <= hi:
        width = hi - lo
        mid = lo + width / 2.0
        cur = next_point((lo, hi, plo, phi), target)
        gap = mid - cur
        nudge = kappa * width * width
        cur = mid if nudge >= abs(gap) else cur + math.copysign(nudge, gap)
        radius = max((shadow - width) / 2.0, 0.0)
        if abs(cur - mid) > radius:
            cur = mid + math.copysign(radius, cur - mid)
        cur = min(max(cur, lo), hi)
        p = probe(cur)
        probes.append((cur, p))
        if p > target:
            hi, phi = cur - step, p
        else:
            lo, plo = cur + step, p
        shadow = shadow / 2.0 - step
    return probes


class _Prober:
    """Runs and memoises full mechanism runs at given input budgets."""

    def __init__(self, instance: AuctionInstance, jobs: int):
        self.instance = instance
        self.jobs = jobs
        self.outcomes: dict[float, AuctionOutcome] = {}
        self.order: list[float] = []

    def __call__(self, b: float) -> float:
        if b not in self.outcomes:
            self.outcomes[b] = tvm_run(self.instance, self.jobs, input_budget=b)
            self.order.append(b)
        return self.outcomes[b].payments_total

    def best_feasible(self) -> Optional[AuctionOutcome]:
        B = self.instance.budget
        feasible = [(o.achieved_value, o.payments_total, -b, b)
                    for b, o in self.outcomes.items() if o.payments_total <= B]
        if not feasible:
            return None
        return self.outcomes[max(feasible)[3]]


def find_bracket(instance: AuctionInstance, jobs: int = 1) -> BudgetBracket:
    return exponential_bracket(_Prober(instance, jobs), instance.budget)


def _search(instance: AuctionInstance, jobs: int, next_point, method: str):
    prober = _Prober(instance, jobs)
    B = instance.budget
    bracket = exponential_bracket(prober, B)
    log = SearchLog(method=method, status=bracket.status, bracket_probes=bracket.probes)
    if bracket.searchable:
        search_bracket(prober, bracket, B, search_step(B), next_point)
    best = prober.best_feasible()
    if best is None:
        best = AuctionOutcome([], [], {}, 0.0, 0.0, input_budget=None)
    log.probes = [(b, prober.outcomes[b].payments_total) for b in prober.order]
    log.tvm_evaluations = len(prober.order)
    log.b_star = best.input_budget
    return best, log


def hvm_run(instance: AuctionInstance, jobs: int = 1) -> tuple[AuctionOutcome, SearchLog]:
    """Best feasible outcome over the searched input budgets.

    "Best" is the largest achieved value, then the largest payment sum; the
    first probe is the actual budget, so the result is never worse than a
    single run at the actual budget.
    """
    return _search(instance, jobs, interpolate_next, "interpolation")


def binary_search_budget(instance: AuctionInstance, jobs: int = 1) -> tuple[AuctionOutcome, SearchLog]:
    return _search(instance, jobs, midpoint_next, "binary")


def probe_bound(bracket: BudgetBracket, step: float) -> int:
    """Probe budget of a bisection over ``bracket`` at resolution ``step``."""
    width = bracket.b_max - bracket.b_min
    return max(1, math.ceil(math.log2(max(width, step) / step))) + 1
