"""Synthetic bidder populations, trace ingestion and task-failure simulation.

The default population emulates taxi drivers on a 20x20 grid of city
blocks: each driver takes one trip whose length is Poisson distributed,
walks between neighbouring blocks, and is located with one block of
Gaussian uncertainty.  Costs are Gaussian with mean 0.5 and sd 0.15.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .coverage import CoverageState, total_value
from .model import (AuctionInstance, AuctionOutcome, Bid, GridSpec, MobilityProfile,
                    ValueMatrix, validate_instance)

__all__ = [
    "PopulationConfig",
    "Population",
    "TraceFile",
    "TraceError",
    "generate_population",
    "population_instance",
    "ingest_trace",
    "read_trace_csv",
    "write_trace_csv",
    "sector_weights_from_visits",
    "simulate_execution",
    "random_instance",
    "gaussian_blur",
]

MIN_BID = 0.01


class TraceError(ValueError):
    pass


@dataclass(frozen=True)
class PopulationConfig:
    sectors: int = 400
    timesteps: int = 12
    bidder_count: int = 100
    trip_duration_mean: float = 6.0
    bid_gap_mean: float = 3.0
    bid_mean: float = 0.5
    bid_sd: float = 0.15
    rng_seed: int = 0
    position_sigma: float = 1.0

    def __post_init__(self):
        side = math.isqrt(self.sectors)
        if self.sectors < 1 or side * side != self.sectors:
            raise ValueError(f"sectors must be a perfect square, got {self.sectors}")
        if self.timesteps < 1 or self.bidder_count < 0:
            raise ValueError("timesteps must be >= 1 and bidder_count >= 0")
        for name in ("trip_duration_mean", "bid_gap_mean", "bid_mean"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.bid_sd < 0 or self.position_sigma < 0:
            raise ValueError("standard deviations must be non-negative")

    @property
    def side(self) -> int:
        return math.isqrt(self.sectors)

    @classmethod
    def from_dict(cls, data: dict) -> "PopulationConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})

    @classmethod
    def from_json(cls, path) -> "PopulationConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Population:
    grid: GridSpec
    bidders: tuple[tuple[Bid, MobilityProfile], ...]
    paths: tuple[tuple[tuple[int, int], ...], ...]   # per bidder: (timestep, sector) pairs


def gaussian_blur(side: int, sector: int, sigma: float) -> np.ndarray:
    """Probability mass over a ``side x side`` grid centred on ``sector``.

    The kernel is truncated at three sigma and at the grid border, then
    renormalised to sum to one.
    """
    out = np.zeros(side * side)
    if sigma == 0:
        out[sector] = 1.0
        return out
    r0, c0 = divmod(sector, side)
    reach = int(math.ceil(3 * sigma))
    rows = np.arange(max(0, r0 - reach), min(side, r0 + reach + 1))
    cols = np.arange(max(0, c0 - reach), min(side, c0 + reach + 1))
    dr, dc = np.meshgrid(rows - r0, cols - c0, indexing="ij")
    k = np.exp(-(dr ** 2 + dc ** 2) / (2.0 * sigma ** 2))
    k /= k.sum()
    idx = (rows[:, None] * side + cols[None, :]).reshape(-1)
    out[idx] = k.reshape(-1)
    return out


def _walk(rng: np.random.Generator, side: int, start: int, steps: int) -> list[int]:
    moves = ((-1, 0), (1, 0), (0, -1), (0, 1))
    r, c = divmod(start, side)
    path = [start]
    for _ in range(steps - 1):
        options = [(r + dr, c + dc) for dr, dc in moves
                   if 0 <= r + dr < side and 0 <= c + dc < side]
        if options:
            r, c = options[rng.integers(len(options))]
        path.append(r * side + c)
    return path


def _sample_bid(rng: np.random.Generator, mean: float, sd: float) -> float:
    if sd == 0:
        return float(mean)
    while True:
        b = rng.normal(mean, sd)
        if b > MIN_BID:
            return float(b)


def generate_population(config: PopulationConfig) -> Population:
    """Draw one trip, one cost and one mobility profile per bidder.

    Each bidder uses its own generator seeded from ``(rng_seed, id)``, so the
    result does not depend on generation order.
    """
    side, z = config.side, config.timesteps
    grid = GridSpec(config.sectors, z)
    bidders, paths = [], []
    for pid in range(config.bidder_count):
        rng = np.random.default_rng([config.rng_seed, pid])
        duration = max(1, int(rng.poisson(config.trip_duration_mean)))
        t0 = min(int(rng.poisson(config.bid_gap_mean)), z - 1)
        duration = min(duration, z - t0)
        start = int(rng.integers(config.sectors))
        walk = _walk(rng, side, start, duration)
        probs = np.zeros(grid.shape)
        for step, sector in enumerate(walk):
            probs[:, t0 + step] = gaussian_blur(side, sector, config.position_sigma)
        cost = _sample_bid(rng, config.bid_mean, config.bid_sd)
        bidders.append((Bid(pid, cost, cost), MobilityProfile(pid, probs)))
        paths.append(tuple((t0 + s, sec) for s, sec in enumerate(walk)))
    return Population(grid, tuple(bidders), tuple(paths))


def population_instance(population: Population, budget: float,
                        values: Optional[ValueMatrix] = None) -> AuctionInstance:
    """Wrap a population as an auction; task values default to visit shares."""
    if values is None:
        values = sector_weights_from_visits([p for _, p in population.bidders], population.grid)
    return validate_instance(AuctionInstance(population.grid, values, population.bidders, budget))


# -- traces ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TraceFile:
    """Observations ``(participant_id, timestep, sector_id)`` sorted by id then timestep."""

    rows: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64).reshape(-1, 3)
        object.__setattr__(self, "rows", rows)

    def check(self, grid: GridSpec) -> "TraceFile":
        r = self.rows
        if r.size == 0:
            return self
        if np.any(r < 0):
            raise TraceError("negative id, timestep or sector")
        if np.any(r[:, 2] >= grid.sectors):
            raise TraceError(f"sector_id out of range (< {grid.sectors})")
        if np.any(r[:, 1] >= grid.timesteps):
            raise TraceError(f"timestep out of range (< {grid.timesteps})")
        key = r[:, 0] * (grid.timesteps + 1) + r[:, 1]
        if np.any(np.diff(key) < 0):
            raise TraceError("rows must be sorted by (participant_id, timestep)")
        return self


TRACE_HEADER = ["participant_id", "timestep", "sector_id"]


def read_trace_csv(path) -> TraceFile:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return TraceFile(np.zeros((0, 3)))
        if [h.strip() for h in header] != TRACE_HEADER:
            raise TraceError(f"expected header {','.join(TRACE_HEADER)}")
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 3:
                raise TraceError(f"line {lineno}: expected 3 fields, got {len(rec)}")
            try:
                rows.append([int(x) for x in rec])
            except ValueError:
                raise TraceError(f"line {lineno}: non-integer field") from None
    return TraceFile(np.array(rows, dtype=np.int64).reshape(-1, 3))


def write_trace_csv(trace: TraceFile, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        writer.writerows(trace.rows.tolist())


def ingest_trace(trace: TraceFile, grid: GridSpec, smoothing_sigma: float = 1.0) -> list[MobilityProfile]:
    """Turn observed positions into blurred mobility profiles.

    Several observations in one timestep are averaged; unobserved timesteps
    stay zero.
    """
    trace.check(grid)
    side = math.isqrt(grid.sectors)
    if smoothing_sigma > 0 and side * side != grid.sectors:
        raise TraceError("smoothing needs a square grid of sectors")
    profiles = []
    for pid in np.unique(trace.rows[:, 0]):
        obs = trace.rows[trace.rows[:, 0] == pid]
        probs = np.zeros(grid.shape)
        for t in np.unique(obs[:, 1]):
            secs = obs[obs[:, 1] == t, 2]
            col = np.zeros(grid.sectors)
            for s in secs:
                if smoothing_sigma > 0:
                    col += gaussian_blur(side, int(s), smoothing_sigma)
                else:
                    col[int(s)] += 1.0
            probs[:, t] = np.minimum(col / len(secs), 1.0)
        profiles.append(MobilityProfile(int(pid), probs))
    return profiles


def sector_weights_from_visits(source: Union[TraceFile, Sequence[MobilityProfile]],
                               grid: GridSpec) -> ValueMatrix:
    """Value of every sector = its share of all visits, repeated over timesteps.

    Profiles count expected visits (probability mass summed over time).
    """
    visits = np.zeros(grid.sectors)
    if isinstance(source, TraceFile):
        source.check(grid)
        np.add.at(visits, source.rows[:, 2], 1.0)
    else:
        for p in source:
            visits += p.probs.sum(axis=1)
    total = visits.sum()
    if not total > 0:
        raise ValueError("no visits to weight sectors by")
    share = visits / total
    return ValueMatrix(np.repeat(share[:, None], grid.timesteps, axis=1))


# -- execution -------------------------------------------------------------

def simulate_execution(outcome: AuctionOutcome, instance: AuctionInstance, tfp: float,
                       seed) -> float:
    """Value actually collected when each winner independently fails with
    probability ``tfp``.

    One uniform draw per winner; a winner fails when its draw is below
    ``tfp``, so for a fixed seed the survivors shrink as ``tfp`` grows.
    """
    if not 0.0 <= tfp <= 1.0:
        raise ValueError("tfp must lie in [0, 1]")
    draws = np.random.default_rng(seed).random(len(outcome.winners))
    alive = [k for k, u in zip(outcome.winners, draws) if u >= tfp]
    state = CoverageState.of(instance.grid, (instance.profile_of(k) for k in alive))
    return total_value(instance.values, state)


def random_instance(seed, m: int, sectors: int = 6, timesteps: int = 2,
                    budget: Optional[float] = None, bid_range=(0.2, 2.0)) -> AuctionInstance:
    """Small dense random instance for property checks; true cost = bid."""
    rng = np.random.default_rng(seed)
    raw = rng.random((m, sectors, timesteps)) ** 3
    mass = raw.sum(axis=1, keepdims=True)
    mass[mass == 0] = 1.0
    probs = raw / mass * rng.random((m, 1, timesteps))
    probs = np.clip(probs, 0.0, 1.0)
    bids = rng.uniform(*bid_range, size=m)
    if budget is None:
        lo = float(bids.min()) if m else 1.0
        hi = float(bids.sum()) if m else 1.0
        budget = float(rng.uniform(0.5 * lo, max(hi, lo)))
    V = ValueMatrix(rng.random((sectors, timesteps)))
    grid = GridSpec(sectors, timesteps)
    bidders = tuple((Bid(k, float(bids[k]), float(bids[k])), MobilityProfile(k, probs[k]))
                    for k in range(m))
    return validate_instance(AuctionInstance(grid, V, bidders, budget))
