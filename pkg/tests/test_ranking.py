import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_instance
from teamrank.core import (
    ObjectRecord,
    ObjectSpace,
    TargetContext,
    diff,
    post_exchange_diff,
    team_from_records,
    truncated_distance,
    truncating_vector,
)
from teamrank.errors import DimensionMismatch, InvalidArgument, NotAMember, StaleIndex
from teamrank.nnindex import build_index
from teamrank.ranking import (
    NormalizedCandidate,
    brute_force_rank,
    normalized_candidate,
    odis,
    rtc_star_rank,
    verify_corollary,
    virtual_object,
)


def rec(rid, attrs, lam=1.0):
    return ObjectRecord(id=rid, label=rid, lam=lam, attrs=np.asarray(attrs, dtype=float))


def derived_instance():
    """Two members, two candidates, hand-enumerated pair distances."""
    r1 = rec("r1", [3, 1], lam=2.0)
    r2 = rec("r2", [9, 5], lam=1.0)
    p1 = rec("p1", [4, 6], lam=1.0)
    p2 = rec("p2", [1, 1], lam=1.0)
    space = ObjectSpace.from_records([p1, p2], ("x", "y"))
    team = team_from_records([r1, r2], team_id="C")
    target = TargetContext(team_id="T", aggregate=[10.0, 10.0])
    return space, team, target, np.array([1.0, 1.0])


class TestVirtualObject:
    def test_rate_vector_and_mask(self):
        space, team, target, w = derived_instance()
        v = virtual_object(team, target, team.member("r1"))
        assert np.array_equal(v.tv2, [0.0, 1.0])
        assert np.array_equal(v.values, [0.0, 2.5])
        assert not v.clipped

    def test_dominant_team_needs_nothing(self):
        team = team_from_records([rec("r", [10.0, 10.0])], team_id="C")
        target = TargetContext(team_id="T", aggregate=[3.0, 4.0])
        v = virtual_object(team, target, team.member("r"))
        assert np.array_equal(v.values, [0.0, 0.0])

    def test_negative_raw_value_is_clipped_and_flagged(self):
        team = team_from_records([rec("r", [-50.0])], team_id="C")
        target = TargetContext(team_id="T", aggregate=[-10.0])
        v = virtual_object(team, target, team.member("r"))
        assert np.array_equal(v.values, [0.0])
        assert v.clipped
        assert list(v.clipped_dims) == [True]

    def test_requires_membership(self):
        space, team, target, w = derived_instance()
        with pytest.raises(NotAMember):
            virtual_object(team, target, rec("outsider", [1, 1]))


class TestOdis:
    def test_identical_vectors(self):
        space, team, target, w = derived_instance()
        v = virtual_object(team, target, team.member("r1"))
        assert odis(v, NormalizedCandidate("self", v.values.copy()), w) == 0.0

    def test_dominating_candidate_is_at_zero(self):
        space, team, target, w = derived_instance()
        v = virtual_object(team, target, team.member("r1"))
        assert odis(v, normalized_candidate(rec("p1", [4, 6])), w) == 0.0

    def test_shortfall_only_counts_weak_dimensions(self):
        space, team, target, w = derived_instance()
        v = virtual_object(team, target, team.member("r1"))
        # candidate below the virtual object on the weak axis by 0.5
        value = odis(v, NormalizedCandidate("c", np.array([100.0, 2.0])), w)
        assert value == pytest.approx(0.5, abs=1e-12)

    def test_strong_dimension_surplus_never_counts(self):
        space, team, target, w = derived_instance()
        v = virtual_object(team, target, team.member("r1"))
        a = odis(v, NormalizedCandidate("c", np.array([0.0, 9.0])), w)
        b = odis(v, NormalizedCandidate("c", np.array([500.0, 9.0])), w)
        assert a == b == 0.0

    def test_monotone_in_candidate_rates(self):
        rng = np.random.default_rng(2)
        space, team, target, w = derived_instance()
        v = virtual_object(team, target, team.member("r1"))
        for _ in range(50):
            rates = rng.uniform(0, 4, size=2)
            bumped = rates + rng.uniform(0, 1, size=2)
            assert odis(v, NormalizedCandidate("a", bumped), w) <= odis(
                v, NormalizedCandidate("a", rates), w
            )

    def test_dimension_mismatch(self):
        space, team, target, w = derived_instance()
        v = virtual_object(team, target, team.member("r1"))
        with pytest.raises(DimensionMismatch):
            odis(v, NormalizedCandidate("c", np.array([1.0, 2.0, 3.0])), w)


class TestBruteForce:
    def test_full_hand_enumerated_order(self):
        space, team, target, w = derived_instance()
        recs = brute_force_rank(team, target, space, w, 4)
        expected = [
            ("r1", "p1", 0.0),
            ("r1", "p2", 3.0),
            ("r2", "p1", math.sqrt(18.0)),
            ("r2", "p2", 10.0),
        ]
        assert [(r.swap_out_id, r.swap_in_id, r.new_distance) for r in recs] == expected

    def test_identity_swap_is_the_only_pair_for_a_solo_team(self):
        solo = rec("r1", [3, 1], lam=2.0)
        space = ObjectSpace.from_records([solo], ("x", "y"))
        team = team_from_records([solo], team_id="C")
        target = TargetContext(team_id="T", aggregate=[4.0, 2.0])
        w = np.array([1.0, 1.0])
        gap = diff(target, team)
        before = truncated_distance(gap, truncating_vector(gap), w)
        recs = brute_force_rank(team, target, space, w, 5)
        assert [(r.swap_out_id, r.swap_in_id) for r in recs] == [("r1", "r1")]
        assert recs[0].new_distance == before

    def test_member_only_space_never_beats_nothing_but_can_reshuffle(self):
        # swapping one member for a copy of another is allowed and may win,
        # so the only guarantee is improvement over the initial distance
        r1 = rec("r1", [3, 1], lam=2.0)
        r2 = rec("r2", [9, 5], lam=1.0)
        space = ObjectSpace.from_records([r1, r2], ("x", "y"))
        team = team_from_records([r1, r2], team_id="C")
        target = TargetContext(team_id="T", aggregate=[13.0, 7.0])
        w = np.array([1.0, 1.0])
        gap = diff(target, team)
        before = truncated_distance(gap, truncating_vector(gap), w)
        recs = brute_force_rank(team, target, space, w, 4)
        assert recs[0].new_distance <= before
        assert ("r1", "r1") in [(r.swap_out_id, r.swap_in_id) for r in recs]

    def test_zero_top_k_rejected(self):
        space, team, target, w = derived_instance()
        with pytest.raises(InvalidArgument):
            brute_force_rank(team, target, space, w, 0)

    def test_all_minimum_ties_are_retrievable_in_id_order(self):
        twin_a = rec("pa", [4, 6])
        twin_b = rec("pb", [4, 6])
        space = ObjectSpace.from_records([twin_b, twin_a], ("x", "y"))
        team = team_from_records([rec("r1", [3, 1], lam=2.0)], team_id="C")
        target = TargetContext(team_id="T", aggregate=[5.0, 9.0])
        recs = brute_force_rank(team, target, space, [1.0, 1.0], 2)
        assert [(r.swap_out_id, r.swap_in_id) for r in recs] == [("r1", "pa"), ("r1", "pb")]
        assert recs[0].new_distance == recs[1].new_distance

    def test_block_accounting_does_not_change_results(self):
        inst = random_instance(99, n=60, m=4)
        plain = brute_force_rank(inst.team, inst.target, inst.space, inst.weights, 8)
        from teamrank.nnindex import IoStats

        io = IoStats()
        blocked = brute_force_rank(
            inst.team, inst.target, inst.space, inst.weights, 8, block_size=7, io=io
        )
        assert plain == blocked
        assert io.blocks_read == inst.team.size * -(-60 // 7)


class TestRtcStar:
    def test_matches_brute_force_on_derived_instance(self, tmp_path):
        space, team, target, w = derived_instance()
        with build_index(space, team, target, w, 1, tmp_path) as index:
            assert rtc_star_rank(team, target, space, w, index, 4) == brute_force_rank(
                team, target, space, w, 4
            )

    def test_singleton_space(self, tmp_path):
        only = rec("p1", [4, 6])
        space = ObjectSpace.from_records([only], ("x", "y"))
        team = team_from_records([rec("r1", [3, 1], lam=2.0), rec("r2", [9, 5])], team_id="C")
        target = TargetContext(team_id="T", aggregate=[10.0, 10.0])
        w = [1.0, 1.0]
        with build_index(space, team, target, w, 3, tmp_path) as index:
            recs = rtc_star_rank(team, target, space, w, index, 1)
        assert len(recs) == 1
        # the single candidate pairs with whichever member it helps most
        assert (recs[0].swap_out_id, recs[0].swap_in_id) == ("r1", "p1")
        assert recs[0].new_distance == 0.0

    def test_stale_index_detected(self, tmp_path):
        space, team, target, w = derived_instance()
        index = build_index(space, team, target, w, 1, tmp_path)
        with index:
            with pytest.raises(StaleIndex):
                rtc_star_rank(team, target, space, [2.0, 2.0], index, 2)
            other_target = TargetContext(team_id="T", aggregate=[11.0, 10.0])
            with pytest.raises(StaleIndex):
                rtc_star_rank(team, other_target, space, w, index, 2)

    @settings(max_examples=40)
    @given(st.integers(0, 10_000))
    def test_oracle_equivalence_on_random_instances(self, seed):
        import tempfile

        inst = random_instance(seed, n=int(20 + seed % 80))
        expected = brute_force_rank(inst.team, inst.target, inst.space, inst.weights, inst.top_k)
        with tempfile.TemporaryDirectory() as tmp:
            with build_index(
                inst.space, inst.team, inst.target, inst.weights, inst.block_size, tmp
            ) as index:
                got = rtc_star_rank(
                    inst.team, inst.target, inst.space, inst.weights, index, inst.top_k
                )
        assert got == expected

    def test_improvement_guarantee_when_members_in_space(self, tmp_path):
        for seed in range(15):
            inst = random_instance(seed, n=50, m=4)
            gap = diff(inst.target, inst.team)
            before = truncated_distance(gap, truncating_vector(gap), inst.weights)
            best = brute_force_rank(inst.team, inst.target, inst.space, inst.weights, 1)[0]
            assert best.new_distance <= before + 1e-9 * max(1.0, before)


class TestVerifyCorollary:
    def test_derived_pair(self):
        space, team, target, w = derived_instance()
        report = verify_corollary(team, target, team.member("r1"), space.record(0), w)
        assert report.dis_prime == 0.0
        assert report.odis == 0.0
        assert report.lambda_r == 2.0
        assert not report.strong_flip
        assert not report.clipped

    def test_identity_swap(self):
        space, team, target, w = derived_instance()
        member = team.member("r1")
        gap = diff(target, team)
        before = truncated_distance(gap, truncating_vector(gap), w)
        report = verify_corollary(team, target, member, member, w)
        assert report.dis_prime == pytest.approx(before, rel=1e-12)
        v = virtual_object(team, target, member)
        assert report.odis == pytest.approx(odis(v, normalized_candidate(member), w), rel=1e-12)
        assert not report.strong_flip

    def test_draining_a_strong_dimension_flips(self):
        member = rec("r", [8.0, 10.0])
        team = team_from_records([member], team_id="C")
        target = TargetContext(team_id="T", aggregate=[5.0, 10.0])
        cand = rec("p", [0.0, 20.0])
        report = verify_corollary(team, target, member, cand, [1.0, 1.0])
        assert report.strong_flip
        # the scaled identity is broken here: the key sees nothing on the
        # flipped dimension while the exact distance pays for it
        assert report.dis_prime == 5.0
        assert report.odis == 0.0

    def test_scaled_identity_holds_without_flip_or_clip(self):
        rng = np.random.default_rng(8)
        checked = 0
        for seed in range(12):
            inst = random_instance(seed, n=40, m=3)
            for member in inst.team.members:
                rows = rng.choice(len(inst.space), size=10, replace=False)
                for row in rows:
                    report = verify_corollary(
                        inst.team, inst.target, member, inst.space.record(int(row)), inst.weights
                    )
                    if report.strong_flip or report.clipped:
                        continue
                    checked += 1
                    assert abs(report.dis_prime - report.lambda_r * report.odis) <= 1e-9 * max(
                        1.0, report.dis_prime
                    )
        assert checked > 100


class TestDominatedVirtualObject:
    def test_dominating_candidate_closes_every_weak_dimension(self, tmp_path):
        for seed in (1, 5, 9):
            inst = random_instance(seed, n=40, m=3, inject_dominator=True)
            member = inst.team.members[0]
            v = virtual_object(inst.team, inst.target, member)
            dom = inst.space.record(inst.space.index_of("zzz-dominator"))
            assert odis(v, normalized_candidate(dom), inst.weights) == 0.0
            gap = diff(inst.target, inst.team)
            new_gap = post_exchange_diff(gap, member, dom)
            weak = gap >= 0.0
            assert np.all(new_gap[weak] <= 1e-9)
