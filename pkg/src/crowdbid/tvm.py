"""Truthful greedy allocation with proportional-share stopping and
critical-value payments.

Allocation: repeatedly take the unconsidered bidder with the largest
marginal-value-per-bid ratio (ties to the lowest id).  It is accepted when

* its bid plus the bids already accepted fits in the input budget, and
* ``bid <= budget/2 * delta / (delta + sum of accepted marginals)``.

Either way it leaves the candidate pool, and the loop goes on until the pool
is empty.

Payment: for winner ``i`` the allocation is rerun without ``i``.  At every
position ``j`` of that rerun (plus one position past its end) ``i`` could have
displaced the ``j``-th winner while bidding at most
``nu_ij = delta_i * bid_j / delta_j`` and would have passed the share test
while bidding at most ``rho_ij``; the reward is ``max_j min(rho_ij, nu_ij)``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .coverage import CoverageState, PackedProfiles, total_value
from .model import AuctionInstance, AuctionOutcome

__all__ = [
    "Considered",
    "AllocationTrace",
    "tvm_allocate",
    "tvm_pay",
    "tvm_run",
    "critical_value_terms",
]


class Considered(NamedTuple):
    participant_id: int
    marginal: float
    ratio: float
    accepted: bool


class _Snapshot(NamedTuple):
    w: np.ndarray
    cand: np.ndarray
    delta: np.ndarray
    share_sum: float
    bid_sum: float


@dataclass
class AllocationTrace:
    winners: list[int]
    marginals: list[float]
    sum_of_bids: float
    considered_order: list[Considered]
    input_budget: float
    rows: list[int] = field(default_factory=list, repr=False)
    states: list[_Snapshot] = field(default_factory=list, repr=False)


def share_bound(budget: float, delta, share_sum: float):
    """Proportional-share cap ``budget/2 * delta / (delta + share_sum)``.

    Used verbatim by both the allocation test and the payment rule so the two
    agree bit for bit.
    """
    return 0.5 * budget * (delta / (share_sum + delta))


class _Greedy:
    """Mutable state of one allocation pass over a packed instance."""

    def __init__(self, packed: PackedProfiles, values_flat: np.ndarray, bids: np.ndarray,
                 ids: np.ndarray, budget: float, jobs: int = 1):
        self.packed = packed
        self.V = values_flat
        self.bids = bids
        self.ids = ids
        self.budget = float(budget)
        self.jobs = jobs

    def run(self, w, cand, delta, share_sum=0.0, bid_sum=0.0, *, track=None,
            stop=None, log=None, states=None):
        packed, bids, ids, budget = self.packed, self.bids, self.ids, self.budget
        gain = self.V * (1.0 - w)
        if delta is None:
            delta = packed.marginals(gain, self.jobs)
        winners, marginals, tracked = [], [], []
        while True:
            if track is not None:
                tracked.append(float(delta[track]))
                if stop is not None and stop(tracked[-1], share_sum):
                    break
            if states is not None:
                states.append(_Snapshot(w.copy(), cand.copy(), delta.copy(), share_sum, bid_sum))
            rows = np.flatnonzero(cand)
            if rows.size == 0:
                break
            d = delta[rows]
            b = bids[rows]
            rid = ids[rows]
            pos = d > 0
            ratio = np.zeros_like(d)
            ratio[pos] = d[pos] / b[pos]
            cap = np.zeros_like(d)
            cap[pos] = share_bound(budget, d[pos], share_sum)
            ok = pos & (b + bid_sum <= budget) & (b <= cap)
            if ok.any():
                okr = np.flatnonzero(ok)
                top = okr[ratio[okr] == ratio[okr].max()]
                a = top[np.argmin(rid[top])]
                before = (ratio > ratio[a]) | ((ratio == ratio[a]) & (rid < rid[a]))
                skipped = np.flatnonzero(before)
            else:
                a = None
                skipped = np.arange(rows.size)
            if log is not None:
                for s in skipped[np.lexsort((rid[skipped], -ratio[skipped]))]:
                    log.append(Considered(int(rid[s]), float(d[s]), float(ratio[s]), False))
                if a is not None:
                    log.append(Considered(int(rid[a]), float(d[a]), float(ratio[a]), True))
            cand[rows[skipped]] = False
            if a is None:
                break
            k = int(rows[a])
            cand[k] = False
            winners.append(k)
            marginals.append(float(d[a]))
            share_sum += float(d[a])
            bid_sum += float(b[a])
            packed.insert(self.V, w, gain, delta, k)
        return winners, marginals, tracked, bid_sum


def _engine(instance: AuctionInstance, input_budget: float, jobs: int) -> _Greedy:
    return _Greedy(instance.packed, instance.values.values.reshape(-1).astype(float),
                   instance.bids, instance.ids, input_budget, jobs)


def tvm_allocate(instance: AuctionInstance, input_budget: Optional[float] = None,
                 jobs: int = 1) -> AllocationTrace:
    budget = instance.budget if input_budget is None else float(input_budget)
    if not budget > 0:
        raise ValueError("input budget must be positive")
    eng = _engine(instance, budget, jobs)
    log: list[Considered] = []
    states: list[_Snapshot] = []
    w = np.zeros(instance.grid.cells)
    cand = np.ones(instance.m, dtype=bool)
    rows, marg, _, bid_sum = eng.run(w, cand, None, log=log, states=states)
    return AllocationTrace(
        winners=[int(instance.ids[r]) for r in rows],
        marginals=marg,
        sum_of_bids=bid_sum,
        considered_order=log,
        input_budget=budget,
        rows=rows,
        states=states,
    )


def critical_value_terms(own: list[float], rival_bids: list[float],
                         rival_marginals: list[float], budget: float) -> list[float]:
    """``min(rho_j, nu_j)`` for every position of the rerun without a winner.

    ``own[j]`` is the winner's marginal value given the first ``j`` rerun
    winners; it has one more entry than the rerun has winners, for the
    position past the end where only the share test applies.
    """
    n = len(rival_marginals)
    if len(own) != n + 1 or len(rival_bids) != n:
        raise ValueError("own marginals must cover every rerun position plus one")
    terms = []
    share_sum = 0.0
    for j in range(n + 1):
        d = own[j]
        if d > 0:
            rho = share_bound(budget, d, share_sum)
            nu = d * rival_bids[j] / rival_marginals[j] if j < n else math.inf
            terms.append(min(rho, nu))
        else:
            terms.append(0.0)
        if j < n:
            share_sum += rival_marginals[j]
    return terms


def _reward(instance, trace, eng, q) -> float:
    """Critical value of the winner accepted at position ``q``.

    The rerun without it matches the allocation up to ``q`` and resumes from
    the snapshot there.  ``rho`` never grows along the rerun, so the walk
    stops once ``rho`` cannot beat the best term found.
    """
    i = trace.rows[q]
    budget = eng.budget
    bids = instance.bids
    best = 0.0
    share_sum = 0.0
    for j in range(q):
        d = float(trace.states[j].delta[i])
        if d > 0:
            r = trace.rows[j]
            nu = d * float(bids[r]) / trace.marginals[j]
            best = max(best, min(share_bound(budget, d, share_sum), nu))
        share_sum += trace.marginals[j]

    def exhausted(d, s):
        return d <= 0 or share_bound(budget, d, s) <= best

    snap = trace.states[q]
    cand = snap.cand.copy()
    cand[i] = False
    rows, marg, tracked, _ = eng.run(snap.w.copy(), cand, snap.delta.copy(),
                                     snap.share_sum, snap.bid_sum, track=i, stop=exhausted)
    for t, d in enumerate(tracked):
        if d > 0:
            rho = share_bound(budget, d, share_sum)
            nu = d * float(bids[rows[t]]) / marg[t] if t < len(rows) else math.inf
            best = max(best, min(rho, nu))
        if t < len(rows):
            share_sum += marg[t]
    return best


def tvm_pay(instance: AuctionInstance, trace: AllocationTrace,
            input_budget: Optional[float] = None, jobs: int = 1) -> dict[int, float]:
    budget = trace.input_budget if input_budget is None else float(input_budget)
    if budget != trace.input_budget:
        raise ValueError("trace was computed for a different input budget")
    if len(trace.states) != len(trace.winners) + 1 or any(
            int(instance.ids[r]) != pid for r, pid in zip(trace.rows, trace.winners)):
        raise ValueError("trace does not belong to this instance")
    eng = _engine(instance, budget, 1)
    positions = range(len(trace.winners))
    if jobs > 1 and len(trace.winners) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rewards = list(pool.map(lambda q: _reward(instance, trace, eng, q), positions))
    else:
        rewards = [_reward(instance, trace, eng, q) for q in positions]
    return {pid: r for pid, r in zip(trace.winners, rewards)}


def outcome_value(instance: AuctionInstance, winners) -> float:
    state = CoverageState.of(instance.grid, (instance.profile_of(k) for k in winners))
    return total_value(instance.values, state)


def tvm_run(instance: AuctionInstance, jobs: int = 1,
            input_budget: Optional[float] = None) -> AuctionOutcome:
    trace = tvm_allocate(instance, input_budget, jobs)
    rewards = tvm_pay(instance, trace, jobs=jobs)
    return AuctionOutcome(
        winners=list(trace.winners),
        marginals=list(trace.marginals),
        rewards=rewards,
        achieved_value=outcome_value(instance, trace.winners),
        payments_total=math.fsum(rewards.values()) if rewards else 0.0,
        input_budget=trace.input_budget,
    )
