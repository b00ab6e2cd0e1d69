"""Exact optimum by enumeration, and exhaustive property checks.

The optimum treats bids as costs: maximise ``V(T)`` subject to the bids of
``T`` summing to at most the budget.  Bid sums are compared with
:func:`math.fsum`, which rounds once, so feasibility of a subset does not
depend on the order in which it was reached.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .coverage import CoverageState, direct_coverage, total_value
from .hvm import hvm_run
from .model import AuctionInstance, AuctionOutcome
from .tvm import tvm_run

__all__ = [
    "APPROX_CONSTANT",
    "ENUMERATION_LIMIT",
    "OracleError",
    "OptimalSolution",
    "brute_force_optimal",
    "gray_code_optimal",
    "subset_value",
    "TruthfulnessReport",
    "truthfulness_sweep",
    "PropertyCheck",
    "BatteryReport",
    "property_battery",
]

APPROX_CONSTANT = (math.e - 1.0) / (3.0 * math.e)
ENUMERATION_LIMIT = 25
TIE_TOLERANCE = 1e-12


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class OptimalSolution:
    subset: tuple[int, ...]
    opt_value: float
    lambda_: float

    @property
    def bound(self) -> float:
        """Value the truthful mechanism is guaranteed to reach."""
        return (APPROX_CONSTANT - self.lambda_) * self.opt_value

    def to_dict(self) -> dict:
        return {"subset": list(self.subset), "opt_value": self.opt_value, "lambda": self.lambda_}


def subset_value(instance: AuctionInstance, ids) -> float:
    state = CoverageState.of(instance.grid, (instance.profile_of(k) for k in ids))
    return total_value(instance.values, state)


def _better(value, ids, best_value, best_ids) -> bool:
    if value > best_value + TIE_TOLERANCE:
        return True
    return abs(value - best_value) <= TIE_TOLERANCE and ids < best_ids


def _lambda(instance: AuctionInstance, opt: float) -> float:
    if opt <= 0 or instance.m == 0:
        return 0.0
    return max(subset_value(instance, [k]) for k in instance.ids.tolist()) / opt


def _check_size(instance: AuctionInstance, limit: int):
    if instance.m > limit:
        raise OracleError(f"{instance.m} bidders is too many to enumerate (limit {limit})")


def _solution(instance: AuctionInstance, ids: tuple[int, ...]) -> OptimalSolution:
    opt = subset_value(instance, ids)
    return OptimalSolution(ids, opt, _lambda(instance, opt))


def brute_force_optimal(instance: AuctionInstance, limit: int = ENUMERATION_LIMIT) -> OptimalSolution:
    """Best budget-feasible subset by depth-first inclusion over sorted ids.

    Coverage is kept on the flattened grid and updated in place on each
    profile's nonzero cells; values along a branch are sums of closed-form
    marginals.  A bidder is skipped when its bid does not fit, and a branch
    is abandoned when even adding every later bidder's stand-alone value
    (an upper bound, by submodularity) cannot reach the best value found.
    """
    _check_size(instance, limit)
    order = np.argsort(instance.ids, kind="stable")
    ids = [int(instance.ids[r]) for r in order]
    bids = [float(instance.bids[r]) for r in order]
    packed = instance.packed
    rows = [(packed.cells[packed.indptr[r]:packed.indptr[r + 1]],
             packed.probs[packed.indptr[r]:packed.indptr[r + 1]]) for r in order]
    V = instance.values.values.reshape(-1)
    w = np.zeros(instance.grid.cells)
    alone = [float(np.dot(V[c], p)) for c, p in rows]
    reach = np.concatenate([np.cumsum(alone[::-1])[::-1], [0.0]]) * (1 + 1e-9) + 1e-12
    B = instance.budget
    best = [0.0, ()]
    chosen_ids: list[int] = []
    chosen_bids: list[float] = []

    def visit(start: int, value: float):
        for k in range(start, len(ids)):
            if value + reach[k] < best[0] - TIE_TOLERANCE:
                return
            if math.fsum(chosen_bids + [bids[k]]) > B:
                continue
            cells, p = rows[k]
            old = w[cells]
            gain = float(np.dot(V[cells] * p, 1.0 - old))
            w[cells] = 1.0 - (1.0 - p) * (1.0 - old)
            chosen_ids.append(ids[k])
            chosen_bids.append(bids[k])
            here = tuple(chosen_ids)
            if _better(value + gain, here, best[0], best[1]):
                best[0], best[1] = value + gain, here
            visit(k + 1, value + gain)
            chosen_ids.pop()
            chosen_bids.pop()
            w[cells] = old

    visit(0, 0.0)
    return _solution(instance, best[1])


def gray_code_optimal(instance: AuctionInstance, limit: int = 12) -> OptimalSolution:
    """Second oracle: walk all subsets in reflected Gray-code order and
    evaluate each one with the direct product form."""
    _check_size(instance, limit)
    ids = sorted(instance.ids.tolist())
    m = len(ids)
    member = [False] * m
    best_value, best_ids = 0.0, ()
    V = instance.values.values
    for step in range(1, 2 ** m):
        flip = (step & -step).bit_length() - 1
        member[flip] = not member[flip]
        subset = tuple(ids[k] for k in range(m) if member[k])
        if math.fsum(instance.bid_of(k).bid for k in subset) > instance.budget:
            continue
        W = direct_coverage(instance.grid, [instance.profile_of(k) for k in subset])
        value = float(np.sum(V * W))
        if _better(value, subset, best_value, best_ids):
            best_value, best_ids = value, subset
    return _solution(instance, best_ids)


# -- truthfulness -------------------------------------------------------------

Mechanism = Union[str, Callable[[AuctionInstance], AuctionOutcome]]


def _resolve(mechanism: Mechanism) -> Callable[[AuctionInstance], AuctionOutcome]:
    if callable(mechanism):
        return mechanism
    if mechanism == "tvm":
        return tvm_run
    if mechanism == "hvm":
        return lambda inst: hvm_run(inst)[0]
    raise ValueError(f"unknown mechanism {mechanism!r}")


def _utility(outcome: AuctionOutcome, pid: int, cost: float) -> float:
    return outcome.rewards[pid] - cost if pid in outcome.rewards else 0.0


@dataclass
class TruthfulnessReport:
    mechanism: str
    grid_size: int
    # per bidder: largest u(misreport) - u(truth), and the bid that achieved it
    violations: dict[int, float] = field(default_factory=dict)
    witnesses: dict[int, float] = field(default_factory=dict)

    @property
    def max_violation(self) -> float:
        return max(self.violations.values(), default=0.0)

    def passed(self, tol: float = 1e-9) -> bool:
        return self.max_violation <= tol

    def to_dict(self) -> dict:
        return {
            "mechanism": self.mechanism,
            "grid_size": self.grid_size,
            "max_violation": self.max_violation,
            "violations": {str(k): v for k, v in self.violations.items()},
            "witnesses": {str(k): v for k, v in self.witnesses.items()},
        }


def misreport_grid(cost: float, grid_size: int) -> np.ndarray:
    """``grid_size`` evenly spaced bids in ``(0, 3 * cost]``."""
    return 3.0 * cost * np.arange(1, grid_size + 1) / grid_size


def truthfulness_sweep(instance: AuctionInstance, mechanism: Mechanism = "tvm",
                       grid_size: int = 50, max_bidders: int = 10) -> TruthfulnessReport:
    """For every bidder, rerun the mechanism at each misreport on the grid
    while everyone else bids their true cost."""
    if instance.m > max_bidders:
        raise OracleError(f"truthfulness sweep is limited to {max_bidders} bidders")
    if grid_size < 1:
        raise ValueError("grid_size must be >= 1")
    run = _resolve(mechanism)
    truthful = instance
    for bid, _ in instance.bidders:
        if bid.true_cost is None:
            raise OracleError(f"participant {bid.participant_id} has no true cost")
        truthful = truthful.with_bid(bid.participant_id, bid.true_cost)
    base = run(truthful)
    name = mechanism if isinstance(mechanism, str) else getattr(mechanism, "__name__", "custom")
    report = TruthfulnessReport(name, grid_size)
    for bid, _ in instance.bidders:
        pid, cost = bid.participant_id, bid.true_cost
        honest = _utility(base, pid, cost)
        worst, at = -math.inf, cost
        for x in misreport_grid(cost, grid_size):
            gap = _utility(run(truthful.with_bid(pid, float(x))), pid, cost) - honest
            if gap > worst:
                worst, at = gap, float(x)
        report.violations[pid] = worst
        report.witnesses[pid] = at
    return report


# -- property battery -----------------------------------------------------------

@dataclass
class PropertyCheck:
    name: str
    passed: bool
    hard: bool = True
    skipped: bool = False
    detail: str = ""
    witness: Optional[dict] = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class BatteryReport:
    checks: list[PropertyCheck]

    @property
    def passed(self) -> bool:
        return all(c.passed or not c.hard or c.skipped for c in self.checks)

    def failures(self) -> list[PropertyCheck]:
        return [c for c in self.checks if c.hard and not c.skipped and not c.passed]

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": [c.to_dict() for c in self.checks]}


MONOTONE_FACTORS = (0.25, 0.5, 0.9)


def _monotonicity(instance: AuctionInstance, outcome: AuctionOutcome) -> PropertyCheck:
    """A winner that bids lower still wins; a loser that bids higher still loses."""
    won = set(outcome.winners)
    for bid, _ in instance.bidders:
        pid = bid.participant_id
        factors = MONOTONE_FACTORS if pid in won else tuple(1.0 / f for f in MONOTONE_FACTORS)
        for f in factors:
            again = tvm_run(instance.with_bid(pid, bid.bid * f))
            if (pid in again.rewards) != (pid in won):
                return PropertyCheck("monotonicity", False, detail="win status flipped",
                                     witness={"participant": pid, "bid": bid.bid * f})
    return PropertyCheck("monotonicity", True)


def property_battery(instance: AuctionInstance, exact_limit: int = 15,
                     sweep_limit: int = 10, grid_size: int = 20) -> BatteryReport:
    tvm = tvm_run(instance)
    B = instance.budget
    checks = []

    total = math.fsum(tvm.rewards.values())
    checks.append(PropertyCheck(
        "tvm_budget_feasible", total <= B, detail=f"payments {total!r} vs budget {B!r}",
        witness=None if total <= B else {"payments_total": total}))

    short = {k: (r, instance.bid_of(k).bid) for k, r in tvm.rewards.items() if r < instance.bid_of(k).bid}
    checks.append(PropertyCheck(
        "tvm_individually_rational", not short,
        witness={str(k): {"reward": r, "bid": b} for k, (r, b) in short.items()} or None))

    checks.append(_monotonicity(instance, tvm))

    if instance.m <= exact_limit:
        opt = brute_force_optimal(instance)
        ok = tvm.achieved_value >= opt.bound
        checks.append(PropertyCheck(
            "tvm_approximation", ok,
            detail=f"value {tvm.achieved_value:.6g} vs bound {opt.bound:.6g} (lambda {opt.lambda_:.4g})",
            witness=None if ok else {"optimum": opt.to_dict(), "achieved": tvm.achieved_value}))
    else:
        checks.append(PropertyCheck("tvm_approximation", True, skipped=True,
                                    detail=f"more than {exact_limit} bidders"))

    hvm, log = hvm_run(instance)
    checks.append(PropertyCheck(
        "hvm_budget_feasible", hvm.payments_total <= B,
        detail=f"payments {hvm.payments_total!r} vs budget {B!r}"))
    ok = hvm.achieved_value >= tvm.achieved_value - 1e-12
    checks.append(PropertyCheck(
        "hvm_dominates_tvm", ok,
        detail=f"hvm {hvm.achieved_value:.6g} vs tvm {tvm.achieved_value:.6g}",
        witness=None if ok else {"b_star": log.b_star}))

    has_costs = all(b.true_cost is not None for b, _ in instance.bidders)
    if has_costs and instance.m <= sweep_limit:
        rep = truthfulness_sweep(instance, "tvm", grid_size, sweep_limit)
        checks.append(PropertyCheck(
            "tvm_truthful", rep.passed(), detail=f"max gain from misreporting {rep.max_violation:.3g}",
            witness=None if rep.passed() else rep.to_dict()))
        rep = truthfulness_sweep(instance, "hvm", grid_size, sweep_limit)
        checks.append(PropertyCheck(
            "hvm_truthful", rep.passed(), hard=False,
            detail=f"informational; max gain from misreporting {rep.max_violation:.3g}"))
    else:
        why = "missing true costs" if not has_costs else f"more than {sweep_limit} bidders"
        checks.append(PropertyCheck("tvm_truthful", True, skipped=True, detail=why))
        checks.append(PropertyCheck("hvm_truthful", True, hard=False, skipped=True, detail=why))
    return BatteryReport(checks)
