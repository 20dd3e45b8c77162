from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from examiner import (
    AffineDecoder,
    ConfigError,
    DimensionMismatch,
    IdentityDecoder,
    KinematicTree,
    SearchSpace,
    SmoothDecoder,
    decode,
    default_tree,
    joint_schedule,
    sample_uniform,
    validate_pose,
)
from examiner import streams
from examiner.space import HOOK_REJECTED, JOINT_LIMIT, Joint


class TestDecode:
    def test_identity(self):
        pose = decode(IdentityDecoder(2), np.array([0.1, -0.2]))
        assert pose.tolist() == [0.1, -0.2]

    def test_affine_scaling(self):
        dec = AffineDecoder(2.0 * np.eye(3), np.zeros(3))
        pose = decode(dec, np.array([0.5, 0.5, 0.5]))
        assert pose.tolist() == [1.0, 1.0, 1.0]

    def test_affine_offset(self):
        dec = AffineDecoder(np.eye(2), np.array([1.0, -1.0]))
        assert decode(dec, np.zeros(2)).tolist() == [1.0, -1.0]

    def test_smooth_frozen_regression(self):
        # Reference evaluation of the stored seed-7 coefficients, frozen.
        dec = SmoothDecoder(seed=7, in_dims=2, out_dims=3, hidden_dims=8)
        expected = [0.1866469353876645, 0.2403831087562132, 0.03608018325806093]
        assert decode(dec, np.zeros(2)).tolist() == expected

    def test_smooth_matches_independent_reference(self):
        dec = SmoothDecoder(seed=7, in_dims=2, out_dims=3, hidden_dims=8)
        z = np.array([0.3, -1.2])
        rng = np.random.default_rng(7)
        w1 = rng.normal(0.0, 1.0 / np.sqrt(2), size=(8, 2))
        b1 = rng.normal(0.0, 0.1, size=8)
        w2 = rng.normal(0.0, 1.0 / np.sqrt(8), size=(3, 8))
        b2 = rng.normal(0.0, 0.1, size=3)
        ref = np.tanh(w2 @ np.tanh(w1 @ z + b1) + b2)
        assert decode(dec, z).tolist() == ref.tolist()

    def test_pure_and_deterministic(self):
        dec = SmoothDecoder(seed=3, in_dims=4, out_dims=6)
        z = np.linspace(-1, 1, 4)
        a, b = decode(dec, z), decode(dec, z)
        assert a.tolist() == b.tolist()
        again = SmoothDecoder(seed=3, in_dims=4, out_dims=6)
        assert decode(again, z).tolist() == a.tolist()

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            decode(IdentityDecoder(2), np.zeros(3))


class TestValidatePose:
    def test_midpoints_valid(self, triplet_tree):
        mid = (triplet_tree.limits_low + triplet_tree.limits_high) / 2
        verdict = validate_pose(mid, triplet_tree)
        assert verdict.valid and verdict.violated_dims == () and verdict.reason is None

    def test_one_dim_above_limit(self, triplet_tree):
        pose = np.zeros(3)
        pose[1] = triplet_tree.limits_high[1] + 0.01
        verdict = validate_pose(pose, triplet_tree)
        assert not verdict.valid
        assert verdict.violated_dims == (1,)
        assert verdict.reason == JOINT_LIMIT

    def test_hook_rejection(self, triplet_tree):
        verdict = validate_pose(np.zeros(3), triplet_tree, hook=lambda pose: False)
        assert not verdict.valid
        assert verdict.reason == HOOK_REJECTED
        assert verdict.violated_dims == ()

    def test_all_violations_listed(self, triplet_tree):
        verdict = validate_pose(np.full(3, 99.0), triplet_tree)
        assert verdict.violated_dims == (0, 1, 2)

    @given(
        pose=st.lists(st.floats(-4, 4), min_size=3, max_size=3),
        widen=st.floats(0, 3),
    )
    @settings(max_examples=50, deadline=None)
    def test_monotone_in_limits(self, pose, widen):
        # Widening the limits never flips valid -> invalid.
        narrow = KinematicTree.chain([3], -1.0, 1.0)
        wide = KinematicTree.chain([3], -1.0 - widen, 1.0 + widen)
        pose = np.asarray(pose)
        if validate_pose(pose, narrow).valid:
            assert validate_pose(pose, wide).valid


class TestSampleUniform:
    def test_degenerate_box(self):
        space = SearchSpace(np.zeros(3), np.full(3, 1e-12))
        z = sample_uniform(space, streams.stream(0, 1))
        assert np.all(np.abs(z) <= 1e-12)

    def test_deterministic_given_stream_state(self):
        space = SearchSpace.box(2, -2.0, 2.0)
        a = sample_uniform(space, streams.stream(9, 4))
        b = sample_uniform(space, streams.stream(9, 4))
        assert a.tolist() == b.tolist()

    def test_empirical_mean(self):
        # Law of large numbers at 1e5 draws on [-2, 2].
        space = SearchSpace.box(1, -2.0, 2.0)
        rng = streams.stream(11, 2)
        draws = np.array([sample_uniform(space, rng)[0] for _ in range(100_000)])
        assert abs(draws.mean()) <= 0.02

    @given(seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_always_inside_box(self, seed):
        space = SearchSpace(np.array([-1.0, 0.5]), np.array([-0.5, 2.0]))
        z = sample_uniform(space, np.random.default_rng(seed))
        assert space.contains(z)


class TestJointSchedule:
    def test_two_joint_chain(self):
        tree = KinematicTree.chain([3, 3])
        assert joint_schedule(tree) == [(0, "upper"), (0, "lower"), (1, "upper"), (1, "lower")]

    def test_default_tree_42_entries(self):
        schedule = joint_schedule(default_tree())
        assert len(schedule) == 42
        assert {j for j, _ in schedule} == set(range(21))

    def test_single_joint(self):
        assert len(joint_schedule(KinematicTree.chain([3]))) == 2

    def test_each_joint_exactly_twice(self):
        tree = default_tree()
        schedule = joint_schedule(tree)
        for j in range(tree.n_joints):
            assert sum(1 for jj, _ in schedule if jj == j) == 2


class TestKinematicTree:
    def test_default_tree_shape(self):
        tree = default_tree()
        assert tree.n_joints == 21
        assert tree.n_dims == 63
        assert all(len(j.dims) == 3 for j in tree.joints)

    def test_parent_must_precede_child(self):
        with pytest.raises(ConfigError):
            KinematicTree(
                (Joint("a", 1, (0, 1, 2)), Joint("b", None, (3, 4, 5))),
                np.full(6, -1.0), np.full(6, 1.0),
            )

    def test_dims_partition(self):
        with pytest.raises(ConfigError):
            KinematicTree(
                (Joint("a", None, (0, 1, 2)), Joint("b", 0, (2, 3, 4))),
                np.full(5, -1.0), np.full(5, 1.0),
            )

    def test_limit_ordering(self):
        with pytest.raises(ConfigError):
            KinematicTree.chain([3], 1.0, -1.0)

    def test_json_round_trip(self):
        tree = default_tree()
        again = KinematicTree.from_json_dict(tree.to_json_dict())
        assert again.to_json_dict() == tree.to_json_dict()


class TestSearchSpace:
    def test_rejects_inverted_bounds(self):
        with pytest.raises(ConfigError):
            SearchSpace(np.array([0.0, 1.0]), np.array([1.0, 1.0]))

    def test_clamp(self):
        space = SearchSpace.box(2, -1.0, 1.0)
        assert space.clamp(np.array([-5.0, 0.3])).tolist() == [-1.0, 0.3]
