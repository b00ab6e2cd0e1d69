"""Domain types for budget-feasible crowdsensing auctions.

A sensing area is an abstract grid of ``sectors`` x ``timesteps`` cells.
Every participant submits a bid and carries a mobility profile: the
probability of being in sector ``i`` at timestep ``j``.  All arrays are
stored with shape ``(sectors, timesteps)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

__all__ = [
    "GridSpec",
    "ValueMatrix",
    "MobilityProfile",
    "Bid",
    "AuctionInstance",
    "AuctionOutcome",
    "InstanceError",
    "validate_instance",
    "instance_to_dict",
    "instance_from_dict",
    "load_instance",
    "save_instance",
]

PROB_SLACK = 1e-9


class InstanceError(ValueError):
    """An auction instance violates one of its invariants.

    ``field`` names the offending part of the instance, e.g. ``"bidders[3].probs"``.
    """

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def _frozen_array(a) -> np.ndarray:
    arr = np.array(a, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class GridSpec:
    sectors: int
    timesteps: int

    @property
    def shape(self) -> tuple[int, int]:
        return (self.sectors, self.timesteps)

    @property
    def cells(self) -> int:
        return self.sectors * self.timesteps


@dataclass(frozen=True, eq=False)
class ValueMatrix:
    """Task values ``V[i, j]``; a zero entry means no task at that cell."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_array(self.values))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape


@dataclass(frozen=True, eq=False)
class MobilityProfile:
    participant_id: int
    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "participant_id", int(self.participant_id))
        object.__setattr__(self, "probs", _frozen_array(self.probs))


@dataclass(frozen=True)
class Bid:
    participant_id: int
    bid: float
    true_cost: Optional[float] = None


@dataclass(frozen=True, eq=False)
class AuctionInstance:
    grid: GridSpec
    values: ValueMatrix
    bidders: tuple[tuple[Bid, MobilityProfile], ...]
    budget: float

    def __post_init__(self):
        object.__setattr__(self, "bidders", tuple(tuple(b) for b in self.bidders))
        object.__setattr__(self, "budget", float(self.budget))

    @property
    def m(self) -> int:
        return len(self.bidders)

    @cached_property
    def ids(self) -> np.ndarray:
        ids = np.array([b.participant_id for b, _ in self.bidders], dtype=np.int64)
        ids.setflags(write=False)
        return ids

    @cached_property
    def bids(self) -> np.ndarray:
        bids = np.array([b.bid for b, _ in self.bidders], dtype=float)
        bids.setflags(write=False)
        return bids

    @property
    def profiles(self) -> list[MobilityProfile]:
        return [p for _, p in self.bidders]

    @cached_property
    def index(self) -> dict[int, int]:
        """participant_id -> row position."""
        return {int(pid): k for k, pid in enumerate(self.ids)}

    @cached_property
    def packed(self):
        from .coverage import PackedProfiles

        return PackedProfiles.from_profiles(self.profiles, self.grid)

    def bid_of(self, pid: int) -> Bid:
        return self.bidders[self.index[pid]][0]

    def profile_of(self, pid: int) -> MobilityProfile:
        return self.bidders[self.index[pid]][1]

    def _derive(self, bidders, budget=None, keep_packing=True) -> "AuctionInstance":
        inst = AuctionInstance(self.grid, self.values, bidders,
                               self.budget if budget is None else budget)
        if keep_packing and "packed" in self.__dict__:
            inst.__dict__["packed"] = self.__dict__["packed"]
        return inst

    def with_bid(self, pid: int, bid: float) -> "AuctionInstance":
        """Copy with participant ``pid`` declaring ``bid``; profiles are shared."""
        k = self.index[pid]
        old, prof = self.bidders[k]
        new = Bid(old.participant_id, float(bid), old.true_cost)
        bidders = self.bidders[:k] + ((new, prof),) + self.bidders[k + 1:]
        return self._derive(bidders)

    def with_budget(self, budget: float) -> "AuctionInstance":
        return self._derive(self.bidders, budget=budget)

    def without(self, pid: int) -> "AuctionInstance":
        k = self.index[pid]
        return self._derive(self.bidders[:k] + self.bidders[k + 1:], keep_packing=False)


@dataclass
class AuctionOutcome:
    winners: list[int]
    marginals: list[float]
    rewards: dict[int, float]
    achieved_value: float
    payments_total: float
    input_budget: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "winners": list(self.winners),
            "marginals": list(self.marginals),
            "rewards": {str(k): v for k, v in self.rewards.items()},
            "achieved_value": self.achieved_value,
            "payments_total": self.payments_total,
            "input_budget": self.input_budget,
        }

    def same_as(self, other: "AuctionOutcome") -> bool:
        """Bit-equality of winners, marginals and rewards."""
        return (self.winners == other.winners
                and self.marginals == other.marginals
                and self.rewards == other.rewards)


def validate_instance(instance: AuctionInstance) -> AuctionInstance:
    """Return ``instance`` unchanged, or raise :class:`InstanceError` naming
    the first violated invariant."""
    grid = instance.grid
    for name in ("sectors", "timesteps"):
        n = getattr(grid, name)
        if not isinstance(n, (int, np.integer)) or n < 1:
            raise InstanceError(f"grid.{name}", f"must be a positive integer, got {n!r}")
    V = instance.values.values
    if V.shape != grid.shape:
        raise InstanceError("values", f"shape {V.shape} does not match grid {grid.shape}")
    if not np.all(np.isfinite(V)) or np.any(V < 0):
        raise InstanceError("values", "entries must be finite and non-negative")
    if not (math.isfinite(instance.budget) and instance.budget > 0):
        raise InstanceError("budget", f"must be positive, got {instance.budget!r}")
    seen: set[int] = set()
    for k, (bid, prof) in enumerate(instance.bidders):
        where = f"bidders[{k}]"
        if bid.participant_id != prof.participant_id:
            raise InstanceError(f"{where}.id", "bid and profile ids differ")
        pid = bid.participant_id
        if not isinstance(pid, (int, np.integer)) or pid < 0:
            raise InstanceError(f"{where}.id", f"must be a non-negative integer, got {pid!r}")
        if pid in seen:
            raise InstanceError(f"{where}.id", f"duplicate participant id {pid}")
        seen.add(pid)
        if not (math.isfinite(bid.bid) and bid.bid > 0):
            raise InstanceError(f"{where}.bid", f"must be positive, got {bid.bid!r}")
        if bid.true_cost is not None and not (math.isfinite(bid.true_cost) and bid.true_cost > 0):
            raise InstanceError(f"{where}.true_cost", f"must be positive, got {bid.true_cost!r}")
        p = prof.probs
        if p.shape != grid.shape:
            raise InstanceError(f"{where}.probs", f"shape {p.shape} does not match grid {grid.shape}")
        if not np.all(np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
            raise InstanceError(f"{where}.probs", "probabilities must lie in [0, 1]")
        if np.any(p.sum(axis=0) > 1 + PROB_SLACK):
            raise InstanceError(f"{where}.probs", "per-timestep probability mass exceeds 1")
    return instance


# -- JSON instance files ---------------------------------------------------

def _rows(a: np.ndarray) -> list:
    return [[float(x) for x in row] for row in a]


def instance_to_dict(instance: AuctionInstance) -> dict:
    bidders = []
    for bid, prof in instance.bidders:
        entry = {"id": int(bid.participant_id), "bid": float(bid.bid)}
        if bid.true_cost is not None:
            entry["true_cost"] = float(bid.true_cost)
        entry["probs"] = _rows(prof.probs)
        bidders.append(entry)
    return {
        "sectors": instance.grid.sectors,
        "timesteps": instance.grid.timesteps,
        "budget": instance.budget,
        "values": _rows(instance.values.values),
        "bidders": bidders,
    }


def instance_from_dict(data: dict, validate: bool = True) -> AuctionInstance:
    try:
        grid = GridSpec(int(data["sectors"]), int(data["timesteps"]))
        shape = grid.shape

        def matrix(x, field):
            a = np.asarray(x, dtype=float)
            if a.ndim == 1 and a.size == grid.cells:
                a = a.reshape(shape)
            if a.shape != shape:
                raise InstanceError(field, f"expected {shape[0]}x{shape[1]} values, got shape {a.shape}")
            return a

        values = ValueMatrix(matrix(data["values"], "values"))
        bidders = []
        for k, b in enumerate(data["bidders"]):
            pid = int(b["id"])
            cost = b.get("true_cost")
            bid = Bid(pid, float(b["bid"]), None if cost is None else float(cost))
            bidders.append((bid, MobilityProfile(pid, matrix(b["probs"], f"bidders[{k}].probs"))))
        inst = AuctionInstance(grid, values, tuple(bidders), float(data["budget"]))
    except KeyError as exc:
        raise InstanceError(str(exc.args[0]), "missing field") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InstanceError):
            raise
        raise InstanceError("instance", str(exc)) from None
    return validate_instance(inst) if validate else inst


def save_instance(instance: AuctionInstance, path) -> None:
    # json writes floats with repr(), the shortest string that round-trips exactly
    Path(path).write_text(json.dumps(instance_to_dict(instance)) + "\n", encoding="utf-8")


def load_instance(path) -> AuctionInstance:
    return instance_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def make_instance(values, profiles: Sequence, bids: Sequence[float], budget: float,
                  ids: Optional[Iterable[int]] = None,
                  true_costs: Optional[Sequence[Optional[float]]] = None) -> AuctionInstance:
    """Build and validate an instance from plain arrays.

    ``profiles`` are ``(sectors, timesteps)`` arrays; 1-d inputs are read as a
    single timestep.
    """
    V = np.asarray(values, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    grid = GridSpec(int(V.shape[0]), int(V.shape[1]))
    ids = list(range(1, len(profiles) + 1)) if ids is None else [int(i) for i in ids]
    costs = [None] * len(profiles) if true_costs is None else list(true_costs)
    bidders = []
    for pid, p, b, c in zip(ids, profiles, bids, costs):
        p = np.asarray(p, dtype=float)
        if p.ndim == 1:
            p = p[:, None]
        bidders.append((Bid(pid, float(b), None if c is None else float(c)), MobilityProfile(pid, p)))
    return validate_instance(AuctionInstance(grid, ValueMatrix(V), tuple(bidders), budget))


__all__.append("make_instance")
