"""Simple comparison mechanisms.

Neither is truthful.  Both pay winners exactly their bids.

``greedy_bid_threshold`` ranks bidders once, by stand-alone value per unit
of bid, and walks that ranking while each bid stays below ``theta`` times
the bidder's current marginal value.  It ignores the budget unless
``budget_clamped`` is set.  ``random_selection`` adds bidders in a seeded
random order while their bids fit in the budget.
"""
from __future__ import annotations

import math

import numpy as np

from .coverage import (CoverageState, coverage_insert, marginal_value, marginal_value_batch,
                       total_value)
from .model import AuctionInstance, AuctionOutcome

__all__ = ["greedy_bid_threshold", "random_selection"]


def _first_price(instance: AuctionInstance, winners: list[int], marginals: list[float]) -> AuctionOutcome:
    rewards = {k: float(instance.bid_of(k).bid) for k in winners}
    state = CoverageState.of(instance.grid, (instance.profile_of(k) for k in winners))
    return AuctionOutcome(
        winners=winners,
        marginals=marginals,
        rewards=rewards,
        achieved_value=total_value(instance.values, state),
        payments_total=math.fsum(rewards.values()),
    )


def greedy_bid_threshold(instance: AuctionInstance, jobs: int = 1, theta: float = 1.0,
                         budget_clamped: bool = False) -> AuctionOutcome:
    if theta < 0:
        raise ValueError("theta must be non-negative")
    empty = CoverageState.empty(instance.grid)
    alone = marginal_value_batch(instance.values, empty, instance.profiles, jobs)
    ranking = sorted(instance.ids.tolist(), key=lambda k: (-alone[k] / instance.bid_of(k).bid, k))
    state = empty
    winners, marginals = [], []
    spent = 0.0
    for k in ranking:
        bid = instance.bid_of(k).bid
        delta = marginal_value(instance.values, state, instance.profile_of(k))
        if bid > theta * delta:
            break
        if budget_clamped and spent + bid > instance.budget:
            break
        state = coverage_insert(state, instance.profile_of(k))
        spent += bid
        winners.append(k)
        marginals.append(delta)
    return _first_price(instance, winners, marginals)


def random_selection(instance: AuctionInstance, seed) -> AuctionOutcome:
    order = np.random.default_rng(seed).permutation(instance.m)
    winners, marginals = [], []
    state = CoverageState.empty(instance.grid)
    spent = 0.0
    for r in order:
        k = int(instance.ids[r])
        bid = float(instance.bids[r])
        if spent + bid > instance.budget:
            break
        marginals.append(marginal_value(instance.values, state, instance.profile_of(k)))
        state = coverage_insert(state, instance.profile_of(k))
        spent += bid
        winners.append(k)
    return _first_price(instance, winners, marginals)
