import numpy as np
import pytest

from nightrider.camera import CamExtrinsics, CameraIntrinsics, DetectionBox, project
from nightrider.inekf import FilterState
from nightrider.lie import ExtendedPose, so3_exp
from nightrider.mapping import StreetlightCluster
from nightrider.recovery import (
    RecoveryParams,
    assignments,
    attempt_recovery,
    combination_count,
    is_lost,
)

INTR = CameraIntrinsics(fx=500.0, fy=500.0, cx=640.0, cy=360.0)
EXT = CamExtrinsics()


def test_is_lost_boundaries():
    params = RecoveryParams(lost_after=3.0)
    assert not is_lost(0.0, params)
    assert not is_lost(3.0, params)  # strict inequality at the boundary
    assert is_lost(3.0 + 1e-9, params)


def test_combination_count_matches_enumeration():
    for n in range(0, 5):
        for m in range(0, 5):
            combos = list(assignments(n, m))
            assert len(combos) == combination_count(n, m)
            assert len(set(combos)) == len(combos)
            for combo in combos:
                pos = [j for j in combo if j >= 0]
                assert len(pos) == len(set(pos))  # one-to-one over clusters


def test_assignments_lexicographic_none_first():
    assert list(assignments(1, 2)) == [(-1,), (0,), (1,)]
    assert list(assignments(2, 1)) == [(-1, -1), (-1, 0), (0, -1)]
    combos = list(assignments(3, 3))
    assert combos[0] == (-1, -1, -1)


def _planted_scene():
    truth = ExtendedPose(pos=np.array([0.0, 0.0, 1.0]))
    offsets = [
        [18.0, -6.0, 5.0],
        [24.0, 3.0, 6.0],
        [30.0, -2.0, 4.5],
        [27.0, 7.0, 5.5],
    ]
    clusters = [
        StreetlightCluster(i, truth.pos + np.asarray(off))
        for i, off in enumerate(offsets)
    ]
    dets = [
        DetectionBox(project(c.center, truth, EXT, INTR), np.array([10.0, 10.0]))
        for c in clusters
    ]
    return truth, clusters, dets


def _offset_state(truth):
    return FilterState(
        ExtendedPose(
            so3_exp(np.array([0.0, 0.0, 0.05])),
            np.zeros(3),
            truth.pos + np.array([1.2, -0.8, 0.3]),
        )
    )


def _loose_cov():
    P = np.eye(15) * 1e-4
    P[0:3, 0:3] = np.eye(3) * 0.02
    P[6:9, 6:9] = np.eye(3) * 4.0
    return P


def test_recovery_finds_planted_combination():
    truth, clusters, dets = _planted_scene()
    state = _offset_state(truth)
    P = _loose_cov()
    out = attempt_recovery(dets, clusters, state, P, RecoveryParams(), EXT, INTR)
    assert out is not None
    st, P2, ms = out
    assert ms.cluster_ids == [0, 1, 2, 3]
    assert np.linalg.norm(st.pose.pos - truth.pos) < 0.3
    assert np.linalg.norm(state.pose.pos - (truth.pos + [1.2, -0.8, 0.3])) < 1e-12


def test_recovery_does_not_mutate_inputs():
    truth, clusters, dets = _planted_scene()
    state = _offset_state(truth)
    P = _loose_cov()
    pos_before = state.pose.pos.copy()
    rot_before = state.pose.rot.copy()
    P_before = P.copy()
    attempt_recovery(dets, clusters, state, P, RecoveryParams(), EXT, INTR)
    np.testing.assert_array_equal(state.pose.pos, pos_before)
    np.testing.assert_array_equal(state.pose.rot, rot_before)
    np.testing.assert_array_equal(P, P_before)


def test_recovery_needs_more_than_two_matches():
    truth, clusters, dets = _planted_scene()
    state = _offset_state(truth)
    P = _loose_cov()
    out = attempt_recovery(dets[:2], clusters[:2], state, P, RecoveryParams(), EXT, INTR)
    assert out is None  # at most 2 positive matches possible


def test_recovery_rejects_expensive_scores():
    truth, clusters, dets = _planted_scene()
    # confident but badly wrong prior: the update cannot move the pose,
    # residuals stay large, every combination scores above threshold
    state = FilterState(
        ExtendedPose(pos=truth.pos + np.array([6.0, -5.0, 0.0]))
    )
    P = np.eye(15) * 1e-8
    out = attempt_recovery(dets, clusters, state, P, RecoveryParams(), EXT, INTR)
    assert out is None


def test_recovery_abandons_on_budget():
    truth, clusters, dets = _planted_scene()
    state = _offset_state(truth)
    P = _loose_cov()
    more = [
        StreetlightCluster(10 + i, truth.pos + np.array([20.0 + i, i - 5.0, 5.0]))
        for i in range(8)
    ]
    many_dets = dets + [
        DetectionBox(np.array([300.0 + 40 * i, 200.0]), np.array([10.0, 10.0]))
        for i in range(2)
    ]
    params = RecoveryParams(max_combinations=1000)
    assert combination_count(len(many_dets), len(clusters + more)) > 1000
    out = attempt_recovery(many_dets, clusters + more, state, P, params, EXT, INTR)
    assert out is None


def test_recovery_empty_inputs():
    truth, clusters, dets = _planted_scene()
    state = _offset_state(truth)
    P = _loose_cov()
    assert attempt_recovery([], clusters, state, P, RecoveryParams(), EXT, INTR) is None
    assert attempt_recovery(dets, [], state, P, RecoveryParams(), EXT, INTR) is None
