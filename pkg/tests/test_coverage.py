import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crowdbid.coverage import (CoverageError, CoverageState, PackedProfiles, coverage_insert,
                               direct_coverage, marginal_value, marginal_value_batch, total_value)
from crowdbid.model import GridSpec, MobilityProfile, ValueMatrix


def _profiles(rng, n, grid, density=0.5):
    out = []
    for k in range(n):
        raw = rng.random(grid.shape) * (rng.random(grid.shape) < density)
        mass = raw.sum(axis=0)
        mass[mass == 0] = 1.0
        out.append(MobilityProfile(k, raw / mass * rng.random(grid.timesteps)))
    return out


@st.composite
def coverage_cases(draw, max_profiles=8, max_side=10):
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    grid = GridSpec(draw(st.integers(1, max_side)), draw(st.integers(1, max_side)))
    n = draw(st.integers(0, max_profiles))
    return grid, ValueMatrix(rng.random(grid.shape)), _profiles(rng, n, grid)


class TestRecurrence:
    def test_example_single_insert(self, example):
        state = CoverageState.of(example.grid, [example.profile_of(2)])
        assert np.allclose(state.w[:, 0], [0.0, 0.8, 0.05, 0.15], rtol=0, atol=1e-15)
        assert state.members == frozenset({2})

    def test_two_members_by_hand(self, example):
        state = CoverageState.of(example.grid, [example.profile_of(1), example.profile_of(3)])
        # 1 - (1 - .2)(1 - .4), 1 - (.9)(.8), 1 - .7 * 1, 1 - .6 * .6
        assert np.allclose(state.w[:, 0], [0.52, 0.28, 0.3, 0.64], atol=1e-15)

    @settings(max_examples=200, deadline=None)
    @given(coverage_cases())
    def test_matches_direct_product(self, case):
        grid, _, profiles = case
        state = CoverageState.of(grid, profiles)
        assert np.max(np.abs(state.w - direct_coverage(grid, profiles)), initial=0.0) <= 1e-12

    @settings(max_examples=60, deadline=None)
    @given(coverage_cases(max_profiles=5), st.randoms(use_true_random=False))
    def test_insertion_order_does_not_matter(self, case, rnd):
        grid, values, profiles = case
        shuffled = list(profiles)
        rnd.shuffle(shuffled)
        a = CoverageState.of(grid, profiles)
        b = CoverageState.of(grid, shuffled)
        assert np.max(np.abs(a.w - b.w), initial=0.0) <= 1e-12
        assert abs(total_value(values, a) - total_value(values, b)) <= 1e-12

    def test_double_insert_rejected(self, example):
        state = CoverageState.of(example.grid, [example.profile_of(1)])
        with pytest.raises(CoverageError, match="already covered"):
            coverage_insert(state, example.profile_of(1))

    def test_shape_mismatch(self, example):
        with pytest.raises(CoverageError, match="shape"):
            coverage_insert(CoverageState.empty(GridSpec(2, 2)), example.profile_of(1))

    def test_state_is_immutable(self, example):
        state = CoverageState.of(example.grid, [example.profile_of(1)])
        with pytest.raises(ValueError):
            state.w[0, 0] = 0.0


class TestMarginals:
    def test_example_first_round(self, example):
        empty = CoverageState.empty(example.grid)
        got = marginal_value_batch(example.values, empty, example.profiles)
        # sum of V * p for each bidder on the empty set
        assert got[1] == pytest.approx(0.06 + 0.02 + 0.03 + 0.16, abs=1e-15)
        assert got[2] == pytest.approx(0.16 + 0.005 + 0.06, abs=1e-15)
        assert got[3] == pytest.approx(0.12 + 0.04 + 0.16, abs=1e-15)

    def test_example_after_bidder_two(self, example):
        state = CoverageState.of(example.grid, [example.profile_of(2)])
        assert marginal_value(example.values, state, example.profile_of(1)) == pytest.approx(0.2285, abs=1e-12)
        assert marginal_value(example.values, state, example.profile_of(3)) == pytest.approx(0.2640, abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(coverage_cases(max_profiles=6))
    def test_closed_form_equals_value_difference(self, case):
        grid, values, profiles = case
        if not profiles:
            return
        *base, new = profiles
        state = CoverageState.of(grid, base)
        after = coverage_insert(state, new)
        diff = total_value(values, after) - total_value(values, state)
        assert abs(marginal_value(values, state, new) - diff) <= 1e-12

    @settings(max_examples=100, deadline=None)
    @given(coverage_cases(max_profiles=6))
    def test_monotone_and_submodular(self, case):
        grid, values, profiles = case
        if len(profiles) < 2:
            return
        *rest, k = profiles
        small = CoverageState.of(grid, rest[: len(rest) // 2])
        large = CoverageState.of(grid, rest)
        d_small = marginal_value(values, small, k)
        d_large = marginal_value(values, large, k)
        assert d_large >= -1e-15
        assert d_small >= d_large - 1e-12

    def test_already_covered_profile_rejected(self, example):
        state = CoverageState.of(example.grid, [example.profile_of(1)])
        with pytest.raises(CoverageError):
            marginal_value(example.values, state, example.profile_of(1))

    def test_batch_is_identical_for_any_job_count(self):
        rng = np.random.default_rng(11)
        grid = GridSpec(30, 6)
        profiles = _profiles(rng, 40, grid, density=0.2)
        values = ValueMatrix(rng.random(grid.shape))
        state = CoverageState.of(grid, _profiles(np.random.default_rng(12), 1, grid))
        state = CoverageState(state.w, frozenset({-1}))
        ref = marginal_value_batch(values, state, profiles, jobs=1)
        for jobs in (2, 3, 8):
            assert marginal_value_batch(values, state, profiles, jobs=jobs) == ref

    def test_bad_jobs(self, example):
        with pytest.raises(ValueError, match="jobs"):
            marginal_value_batch(example.values, CoverageState.empty(example.grid), example.profiles, jobs=0)


class TestPackedInsert:
    """The in-place rank-one update against the closed form."""

    @settings(max_examples=60, deadline=None)
    @given(coverage_cases(max_profiles=8, max_side=6), st.data())
    def test_tracks_closed_form(self, case, data):
        grid, values, profiles = case
        if not profiles:
            return
        packed = PackedProfiles.from_profiles(profiles, grid)
        V = values.values.reshape(-1)
        w = np.zeros(grid.cells)
        gain = V * (1 - w)
        delta = packed.marginals(gain)
        order = data.draw(st.permutations(range(len(profiles))))
        for row in order:
            packed.insert(V, w, gain, delta, row)
            fresh = packed.marginals(V * (1 - w))
            assert np.max(np.abs(delta - fresh)) <= 1e-12
            assert np.array_equal(gain, V * (1 - w))
        direct = direct_coverage(grid, profiles).reshape(-1)
        assert np.max(np.abs(w - direct)) <= 1e-12

    def test_index_lists_every_entry(self):
        rng = np.random.default_rng(5)
        grid = GridSpec(7, 3)
        profiles = _profiles(rng, 9, grid, density=0.3)
        packed = PackedProfiles.from_profiles(profiles, grid)
        seen = set()
        for cell in range(grid.cells):
            for k in range(packed.cell_ptr[cell], packed.cell_ptr[cell + 1]):
                seen.add((int(packed.cell_rows[k]), cell))
        expected = {(r, c) for r, p in enumerate(profiles) for c in np.flatnonzero(p.probs.reshape(-1))}
        assert seen == expected

    def test_empty_profile_is_a_no_op(self):
        grid = GridSpec(2, 2)
        packed = PackedProfiles.from_profiles([MobilityProfile(0, np.zeros(grid.shape))], grid)
        w = np.zeros(4)
        delta = np.zeros(1)
        packed.insert(np.ones(4), w, np.ones(4), delta, 0)
        assert not w.any()


def test_direct_coverage_of_nothing():
    assert not direct_coverage(GridSpec(3, 2), []).any()


def test_permutations_of_three_by_hand(example):
    profiles = example.profiles
    values = set()
    for perm in itertools.permutations(profiles):
        values.add(round(total_value(example.values, CoverageState.of(example.grid, perm)), 12))
    assert len(values) == 1
