"""Tests for paintbox partitions, interval histories, and tagged paths."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from fragchain.core import (
    BudgetError,
    FrontierError,
    MassPartition,
    PreconditionError,
    RngStream,
    ValidationError,
)
from fragchain.engine import SimConfig, run
from fragchain.laws import lossy_binary, uniform_binary
from fragchain.partition import (
    IntervalFragmentation,
    PartitionOfN,
    PoissonAtom,
    TaggedPath,
    apply_atom,
    dump_partition,
    interval_history,
    jump_chain,
    paintbox,
    partition_process,
    tagged_path,
    time_change,
)


def exact_cfg(horizon: float, snapshot_times=()) -> SimConfig:
    return SimConfig(
        law=uniform_binary(),
        alpha=0.0,
        mode="exact",
        horizon=horizon,
        snapshot_times=tuple(snapshot_times),
    )


class TestPartitionOfN:
    def test_structure_and_accessors(self):
        part = PartitionOfN(n=5, blocks=((1, 3), (2,), (4, 5)))
        assert part.n_blocks() == 3
        assert part.block_of(3) == (1, 3)
        assert part.block_of(4) == (4, 5)
        assert part.as_lines() == ["1,3", "2", "4,5"]
        assert dump_partition(part) == "1,3\n2\n4,5\n"

    def test_rejects_bad_structures(self):
        with pytest.raises(ValidationError):
            PartitionOfN(n=3, blocks=((1, 2),))
        with pytest.raises(ValidationError):
            PartitionOfN(n=3, blocks=((1, 2), (2, 3)))
        with pytest.raises(ValidationError):
            PartitionOfN(n=3, blocks=((2, 3), (1,)))
        with pytest.raises(ValidationError):
            PartitionOfN(n=2, blocks=((2, 1), (2,)))

    def test_from_assignments_groups_and_singletons(self):
        part = PartitionOfN.from_assignments(["a", "b", "a", None, None])
        assert part.blocks == ((1, 3), (2,), (4,), (5,))

    def test_refines(self):
        coarse = PartitionOfN(n=4, blocks=((1, 2, 3), (4,)))
        fine = PartitionOfN(n=4, blocks=((1, 3), (2,), (4,)))
        assert fine.refines(coarse)
        assert not coarse.refines(fine)
        assert coarse.refines(coarse)

    @given(st.lists(st.integers(min_value=0, max_value=5) | st.none(), min_size=1, max_size=30))
    def test_from_assignments_always_partitions(self, keys):
        part = PartitionOfN.from_assignments(keys)
        members = sorted(i for block in part.blocks for i in block)
        assert members == list(range(1, len(keys) + 1))


class TestApplyAtom:
    def test_worked_example(self):
        state = MassPartition.from_sizes([2 / 3, 1 / 4, 1 / 12])
        atom = PoissonAtom(
            ratios=MassPartition.from_sizes([3 / 4, 1 / 4]), index=2, time=0.5
        )
        out = apply_atom(state, atom)
        expected = [2 / 3, 3 / 16, 1 / 12, 1 / 16]
        assert len(out) == 4
        for got, want in zip(out.sizes, expected):
            assert got == pytest.approx(want, rel=1e-12)

    def test_neutral_atom_keeps_state(self):
        state = MassPartition.from_sizes([0.6, 0.4])
        atom = PoissonAtom(ratios=MassPartition((0.0,)), index=1, time=1.0)
        out = apply_atom(state, atom)
        assert out.sizes == pytest.approx(state.sizes, rel=1e-15)

    def test_index_beyond_positive_terms_is_identity(self):
        state = MassPartition.from_sizes([0.6, 0.4])
        atom = PoissonAtom(
            ratios=MassPartition.from_sizes([0.5, 0.5]), index=3, time=1.0
        )
        assert apply_atom(state, atom) is state

    def test_index_must_be_positive(self):
        with pytest.raises(ValidationError):
            PoissonAtom(ratios=MassPartition((0.0,)), index=0, time=0.0)


class TestJumpChain:
    def test_matches_engine_moments(self):
        # E[sum X_i^2(1)] = exp(-1/3) and E[#fragments(1)] = e for the
        # uniform binary law; the jump-chain construction must agree.
        reps = 3000
        m2 = np.empty(reps)
        counts = np.empty(reps)
        for r in range(reps):
            _, state = jump_chain(uniform_binary(), 1.0, RngStream(910, r))
            m2[r] = math.fsum(x * x for x in state.sizes)
            counts[r] = len(state)
        se2 = m2.std(ddof=1) / math.sqrt(reps)
        sec = counts.std(ddof=1) / math.sqrt(reps)
        assert abs(m2.mean() - math.exp(-1 / 3)) < 4 * se2
        assert abs(counts.mean() - math.e) < 4 * sec

    def test_atoms_are_recorded_in_time_order(self):
        atoms, state = jump_chain(uniform_binary(), 2.0, RngStream(911, 0))
        times = [a.time for a in atoms]
        assert times == sorted(times)
        assert all(a.index >= 1 for a in atoms)
        assert state.total_mass == pytest.approx(1.0, abs=1e-9)

    def test_needs_finite_horizon(self):
        with pytest.raises(PreconditionError):
            jump_chain(uniform_binary(), math.inf, RngStream(912, 0))


class TestPaintbox:
    def test_single_mass_gives_one_block(self):
        part = paintbox(MassPartition((0.0,)), 8, RngStream(920, 0))
        assert part.blocks == ((1, 2, 3, 4, 5, 6, 7, 8),)

    def test_all_dust_gives_singletons(self):
        part = paintbox(MassPartition(()), 5, RngStream(921, 0))
        assert part.blocks == ((1,), (2,), (3,), (4,), (5,))

    def test_block_frequencies_recover_masses(self):
        s = MassPartition.from_sizes([1 / 2, 1 / 3])
        n = 10_000
        part = paintbox(s, n, RngStream(922, 0))
        by_size = sorted((len(b) for b in part.blocks), reverse=True)
        assert abs(by_size[0] / n - 1 / 2) < 0.02
        assert abs(by_size[1] / n - 1 / 3) < 0.02
        singletons = sum(1 for b in part.blocks if len(b) == 1)
        assert abs(singletons / n - 1 / 6) < 0.02

    @given(st.integers(min_value=0, max_value=2**31 - 1))
    @settings(max_examples=30, deadline=None)
    def test_blocks_always_cover_ground_set(self, seed):
        stream = RngStream(seed, 0)
        s = MassPartition.from_sizes([0.4, 0.3, 0.1])
        part = paintbox(s, 25, stream)
        members = sorted(i for block in part.blocks for i in block)
        assert members == list(range(1, 26))


class TestTaggedPath:
    def test_starts_at_unit_size(self):
        path = tagged_path(exact_cfg(5.0), 5.0, RngStream(930, 0))
        assert path.chi(0.0) == 1.0
        assert path.log_chi(0.0) == 0.0

    def test_path_is_non_increasing(self):
        for r in range(20):
            path = tagged_path(exact_cfg(4.0), 4.0, RngStream(931, r))
            grid = np.linspace(0.0, 4.0, 101)
            vals = [path.log_chi(t) for t in grid]
            assert all(a >= b for a, b in zip(vals, vals[1:]))

    def test_mean_matches_laplace_transform(self):
        # E[chi(3)] = exp(-3 kappa(2)) = exp(-1) for the uniform binary law.
        reps = 20_000
        vals = np.empty(reps)
        for r in range(reps):
            vals[r] = tagged_path(exact_cfg(3.0), 3.0, RngStream(932, r)).chi(3.0)
        se = vals.std(ddof=1) / math.sqrt(reps)
        assert abs(vals.mean() - math.exp(-1.0)) < 4 * se

    def test_mean_with_erosion(self):
        # Erosion c = 0.1 shifts kappa(2) to 1/3 + 0.2, so E[chi(3)] = e^{-1.6}.
        cfg = SimConfig(
            law=uniform_binary(), alpha=0.0, erosion=0.1, mode="exact", horizon=3.0
        )
        reps = 20_000
        vals = np.empty(reps)
        for r in range(reps):
            vals[r] = tagged_path(cfg, 3.0, RngStream(933, r)).chi(3.0)
        se = vals.std(ddof=1) / math.sqrt(reps)
        assert abs(vals.mean() - math.exp(-1.6)) < 4 * se

    def test_stationary_increments(self):
        reps = 5000
        first = np.empty(reps)
        second = np.empty(reps)
        for r in range(reps):
            path = tagged_path(exact_cfg(2.0), 2.0, RngStream(934, r))
            first[r] = path.log_chi(1.0)
            second[r] = path.log_chi(2.0) - path.log_chi(1.0)
        assert sps.ks_2samp(first, second).pvalue > 0.01

    def test_lossy_absorption_probability(self):
        # Each jump keeps the tag with probability 1/2, so survival to t
        # is exp(-t(1 - sigma(1))) = exp(-t/2).
        reps = 10_000
        alive = 0
        cfg = SimConfig(law=lossy_binary(), alpha=0.0, mode="exact", horizon=2.0)
        for r in range(reps):
            path = tagged_path(cfg, 2.0, RngStream(935, r))
            alive += path.log_chi(2.0) > -math.inf
        p = alive / reps
        se = math.sqrt(p * (1 - p) / reps)
        assert abs(p - math.exp(-1.0)) < 4 * se

    def test_requires_index_zero(self):
        cfg = SimConfig(law=uniform_binary(), alpha=1.0, mode="exact", horizon=1.0)
        with pytest.raises(PreconditionError):
            tagged_path(cfg, 1.0, RngStream(936, 0))

    def test_evaluation_outside_range_raises(self):
        path = tagged_path(exact_cfg(1.0), 1.0, RngStream(937, 0))
        with pytest.raises(FrontierError):
            path.log_chi(1.5)
        with pytest.raises(FrontierError):
            path.log_chi(-0.1)


class TestIntervalHistory:
    def test_matches_engine_bitwise_at_index_zero(self):
        cfg = exact_cfg(3.0, snapshot_times=(1.5, 3.0))
        for r in range(5):
            log = run(cfg, RngStream(940, r))
            hist = interval_history(uniform_binary(), 0.0, 3.0, RngStream(940, r))
            for t in (1.5, 3.0):
                assert hist.state_at(t).log_sizes == log.snapshots[t].partition.log_sizes

    def test_intervals_are_disjoint_and_nested(self):
        hist = interval_history(uniform_binary(), 0.0, 2.5, RngStream(941, 0))
        for t in (0.5, 1.5, 2.5):
            ivs = hist.intervals_at(t)
            for (a1, b1), (a2, b2) in zip(ivs, ivs[1:]):
                assert b1 <= a2 + 1e-12
            assert sum(b - a for a, b in ivs) <= 1.0 + 1e-9
        # every child interval sits inside its parent
        for i in range(1, len(hist)):
            p = hist.parent[i]
            assert hist.lo[i] >= hist.lo[p] - 1e-12
            child_hi = hist.lo[i] + math.exp(hist.log_size[i])
            parent_hi = hist.lo[p] + math.exp(hist.log_size[p])
            assert child_hi <= parent_hi + 1e-9

    def test_state_query_beyond_horizon_raises(self):
        hist = interval_history(uniform_binary(), 0.0, 1.0, RngStream(942, 0))
        with pytest.raises(FrontierError):
            hist.state_at(1.2)

    def test_event_budget_enforced(self):
        with pytest.raises(BudgetError):
            interval_history(
                uniform_binary(), 0.0, 20.0, RngStream(943, 0), event_budget=50
            )

    def test_negative_index_shatters_into_budget_error(self):
        with pytest.raises(BudgetError):
            interval_history(
                uniform_binary(), -1.0, 50.0, RngStream(944, 0), event_budget=20_000
            )


class TestPartitionProcess:
    def test_starts_as_single_block_and_refines(self):
        cfg = SimConfig(law=uniform_binary(), alpha=0.0, mode="exact", horizon=3.0, seed=7)
        parts = partition_process(cfg, 6, [0.0, 1.0, 2.0, 3.0])
        assert parts[0].blocks == ((1, 2, 3, 4, 5, 6),)
        for fine, coarse in zip(parts[1:], parts):
            assert fine.refines(coarse)

    def test_exchangeability_of_pair_blocks(self):
        # For three tags, the three one-pair partitions must be equally
        # likely; compare their counts with a chi-square test.
        pair_index = {(1, 2): 0, (1, 3): 1, (2, 3): 2}
        counts = [0, 0, 0]
        reps = 10_000
        cfg = SimConfig(law=uniform_binary(), alpha=0.0, mode="exact", horizon=1.0)
        for r in range(reps):
            part = partition_process(cfg, 3, [1.0], stream=RngStream(950, r))[0]
            sizes = sorted((len(b) for b in part.blocks), reverse=True)
            if sizes == [2, 1]:
                pair = next(b for b in part.blocks if len(b) == 2)
                counts[pair_index[pair]] += 1
        assert sum(counts) > 1000
        res = sps.chisquare(counts)
        assert res.pvalue > 0.01

    def test_rejects_erosion(self):
        cfg = SimConfig(
            law=uniform_binary(), alpha=0.0, erosion=0.1, mode="exact", horizon=1.0
        )
        with pytest.raises(PreconditionError):
            partition_process(cfg, 2, [0.5])

    def test_tag_partition_respects_dust(self):
        # Lossy law: half the mass leaves at every split, so by t = 3 most
        # tags should be dust singletons.
        cfg = SimConfig(law=lossy_binary(), alpha=0.0, mode="exact", horizon=3.0)
        singleton_frac = []
        for r in range(200):
            part = partition_process(cfg, 4, [3.0], stream=RngStream(951, r))[0]
            singles = sum(1 for b in part.blocks if len(b) == 1)
            singleton_frac.append(singles / 4)
        assert np.mean(singleton_frac) > 0.5


class TestTimeChange:
    def test_identity_at_index_zero_is_bitwise(self):
        hist = interval_history(uniform_binary(), 0.0, 2.0, RngStream(960, 0), n_tags=3)
        same = time_change(hist, 0.0)
        assert same.birth == hist.birth
        assert same.lifetime == hist.lifetime
        assert same.log_size is hist.log_size
        assert same.horizon >= hist.horizon

    def test_births_accumulate_exactly(self):
        hist = interval_history(uniform_binary(), 0.0, 2.0, RngStream(961, 0))
        tc = time_change(hist, 1.0)
        for i in range(1, len(tc)):
            p = tc.parent[i]
            assert tc.birth[i] == tc.birth[p] + tc.lifetime[p]

    def test_positive_index_extends_guarantee(self):
        # At index 1 every lifetime is at least its homogeneous draw, so a
        # history built to homogeneous time 1 covers index-1 time 1.
        for r in range(10):
            hist = interval_history(uniform_binary(), 0.0, 1.0, RngStream(962, r))
            tc = time_change(hist, 1.0)
            assert tc.horizon >= 1.0

    def test_requires_homogeneous_input(self):
        hist = interval_history(uniform_binary(), 1.0, 1.0, RngStream(963, 0))
        with pytest.raises(PreconditionError):
            time_change(hist, 0.5)

    def test_largest_fragment_matches_direct_engine(self):
        # Re-timed histories and direct index-1 runs must give the same
        # law for the largest fragment at t = 1.
        reps = 2000
        via_tc = np.empty(reps)
        direct = np.empty(reps)
        cfg = SimConfig(law=uniform_binary(), alpha=1.0, mode="exact", horizon=1.0,
                        snapshot_times=(1.0,))
        for r in range(reps):
            hist = interval_history(uniform_binary(), 0.0, 1.0, RngStream(964, r))
            tc = time_change(hist, 1.0)
            via_tc[r] = tc.state_at(1.0).largest
            direct[r] = run(cfg, RngStream(965, r)).snapshots[1.0].partition.largest
        assert sps.ks_2samp(via_tc, direct).pvalue > 0.01
