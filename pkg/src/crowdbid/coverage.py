"""Coverage probabilities, total value and marginal gains.

``W(i, j, T) = 1 - prod_{k in T} (1 - p_k[i, j])`` is the probability that at
least one member of ``T`` is at sector ``i`` at timestep ``j``; the objective is
``V(T) = sum V[i, j] * W(i, j, T)``.  Coverage is grown one member at a time
with ``w' = 1 - (1 - p) * (1 - w)``.

Marginal gains are computed in closed form, ``sum V * p * (1 - w)``, over the
nonzero cells of each profile in a fixed order, so the result for a
(profile, coverage) pair does not depend on how profiles are batched.
:meth:`PackedProfiles.insert` keeps a whole vector of gains current while a
greedy pass grows the coverage; it agrees with the closed form to rounding.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .model import GridSpec, MobilityProfile, ValueMatrix

__all__ = [
    "CoverageState",
    "CoverageError",
    "PackedProfiles",
    "coverage_insert",
    "total_value",
    "marginal_value",
    "marginal_value_batch",
    "direct_coverage",
]


class CoverageError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CoverageState:
    w: np.ndarray
    members: frozenset

    @classmethod
    def empty(cls, grid: GridSpec) -> "CoverageState":
        w = np.zeros(grid.shape)
        w.setflags(write=False)
        return cls(w, frozenset())

    @classmethod
    def of(cls, grid: GridSpec, profiles: Iterable[MobilityProfile]) -> "CoverageState":
        state = cls.empty(grid)
        for p in profiles:
            state = coverage_insert(state, p)
        return state


def _check_shape(expected, got, what):
    if tuple(expected) != tuple(got):
        raise CoverageError(f"{what}: shape {tuple(got)} does not match {tuple(expected)}")


def coverage_insert(state: CoverageState, profile: MobilityProfile) -> CoverageState:
    if profile.participant_id in state.members:
        raise CoverageError(f"participant {profile.participant_id} is already covered")
    _check_shape(state.w.shape, profile.probs.shape, "profile")
    w = 1.0 - (1.0 - profile.probs) * (1.0 - state.w)
    w.setflags(write=False)
    return CoverageState(w, state.members | {profile.participant_id})


def total_value(values: ValueMatrix, state: CoverageState) -> float:
    _check_shape(values.shape, state.w.shape, "coverage")
    return float(np.sum(values.values * state.w))


def direct_coverage(grid: GridSpec, profiles: Sequence[MobilityProfile]) -> np.ndarray:
    """``1 - prod(1 - p)`` evaluated directly; reference for the recurrence."""
    if not profiles:
        return np.zeros(grid.shape)
    stack = np.stack([p.probs for p in profiles])
    return 1.0 - np.prod(1.0 - stack, axis=0)


class PackedProfiles:
    """Sparse row-per-participant storage of mobility profiles.

    Cells are flattened row-major (``i * timesteps + j``).  ``cell_ptr`` /
    ``cell_rows`` index which participants touch each cell.
    """

    def __init__(self, ids, indptr, cells, probs, n_cells):
        self.ids = np.asarray(ids, dtype=np.int64)
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.cells = np.asarray(cells, dtype=np.int64)
        self.probs = np.asarray(probs, dtype=float)
        self.n_cells = int(n_cells)
        self.m = len(self.ids)
        self.rows = np.repeat(np.arange(self.m), np.diff(self.indptr))
        order = np.argsort(self.cells, kind="stable")
        self.cell_rows = self.rows[order]
        self.cell_probs = self.probs[order]
        self.cell_ptr = np.searchsorted(self.cells[order], np.arange(self.n_cells + 1))

    @classmethod
    def from_profiles(cls, profiles: Sequence[MobilityProfile], grid: GridSpec) -> "PackedProfiles":
        indptr = [0]
        cells, probs = [], []
        for prof in profiles:
            flat = prof.probs.reshape(-1)
            nz = np.flatnonzero(flat)
            cells.append(nz)
            probs.append(flat[nz])
            indptr.append(indptr[-1] + nz.size)
        cat = (lambda xs, dt: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dt))
        return cls([p.participant_id for p in profiles], indptr,
                   cat(cells, np.int64), cat(probs, float), grid.cells)

    def entries(self, rows: np.ndarray) -> np.ndarray:
        """Entry positions of ``rows``, row by row in stored order."""
        rows = np.asarray(rows, dtype=np.int64)
        return _ranges(self.indptr[rows], self.indptr[rows + 1])

    def row_marginals(self, gain: np.ndarray, rows: np.ndarray) -> np.ndarray:
        """``sum_cells p * gain`` for each of ``rows``; ``gain = V * (1 - w)`` flattened."""
        rows = np.asarray(rows, dtype=np.int64)
        if rows.size == 0:
            return np.zeros(0)
        lens = self.indptr[rows + 1] - self.indptr[rows]
        e = self.entries(rows)
        local = np.repeat(np.arange(rows.size), lens)
        # bincount accumulates sequentially, so each row's sum depends only on its own entries
        return np.bincount(local, weights=self.probs[e] * gain[self.cells[e]], minlength=rows.size)

    def marginals(self, gain: np.ndarray, jobs: int = 1) -> np.ndarray:
        """Marginal gains of every row, split into ``jobs`` contiguous blocks."""
        if jobs <= 1 or self.m < 2 * jobs:
            return self.row_marginals(gain, np.arange(self.m))
        blocks = np.array_split(np.arange(self.m), jobs)
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(lambda r: self.row_marginals(gain, r), blocks))
        return np.concatenate(parts)

    def insert(self, values_flat: np.ndarray, w_flat: np.ndarray, gain: np.ndarray,
               delta: np.ndarray, row: int) -> None:
        """Add ``row`` to the coverage ``w_flat`` in place, keeping ``gain``
        (``V * (1 - w)``) and every row's marginal ``delta`` current.

        Each row sharing a cell loses ``p_row * gain * p_new`` there, which is
        exactly what the recurrence removes from its closed-form marginal.
        """
        sl = slice(self.indptr[row], self.indptr[row + 1])
        cells = self.cells[sl]
        if cells.size == 0:
            return
        p = self.probs[sl]
        drop = gain[cells] * p
        lo, hi = self.cell_ptr[cells], self.cell_ptr[cells + 1]
        ent = _ranges(lo, hi)
        delta -= np.bincount(self.cell_rows[ent],
                             weights=self.cell_probs[ent] * np.repeat(drop, hi - lo),
                             minlength=self.m)
        w_flat[cells] = 1.0 - (1.0 - p) * (1.0 - w_flat[cells])
        gain[cells] = values_flat[cells] * (1.0 - w_flat[cells])


def _ranges(starts: np.ndarray, stops: np.ndarray) -> np.ndarray:
    """Concatenation of ``arange(a, b)`` for each pair."""
    lens = stops - starts
    total = int(lens.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64)
    offsets = np.repeat(starts - np.cumsum(lens) + lens, lens)
    return offsets + np.arange(total)


def _gain(values: ValueMatrix, state: CoverageState) -> np.ndarray:
    _check_shape(values.shape, state.w.shape, "coverage")
    return (values.values * (1.0 - state.w)).reshape(-1)


def marginal_value_batch(values: ValueMatrix, state: CoverageState,
                         profiles: Sequence[MobilityProfile], jobs: int = 1) -> dict[int, float]:
    """Marginal value of each profile given ``state``; identical for any ``jobs``."""
    if jobs < 1:
        raise ValueError("jobs must be >= 1")
    if not profiles:
        return {}
    grid = GridSpec(*state.w.shape)
    for p in profiles:
        if p.participant_id in state.members:
            raise CoverageError(f"participant {p.participant_id} is already covered")
        _check_shape(state.w.shape, p.probs.shape, "profile")
    packed = PackedProfiles.from_profiles(profiles, grid)
    deltas = packed.marginals(_gain(values, state), jobs)
    return {int(pid): float(d) for pid, d in zip(packed.ids, deltas)}


def marginal_value(values: ValueMatrix, state: CoverageState, profile: MobilityProfile) -> float:
    return marginal_value_batch(values, state, [profile])[profile.participant_id]
