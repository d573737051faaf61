import itertools
import math

import numpy as np
import scipy.optimize

from nightrider.association import (
    MatchSet,
    ScoreParams,
    angle_gradients,
    associate,
    hungarian,
    pair_score,
    projection_jacobian,
    score_matrix,
    sigma_ang,
    sigma_proj,
)
from nightrider.camera import CamExtrinsics, CameraIntrinsics, DetectionBox, project
from nightrider.inekf import FilterState
from nightrider.lie import ExtendedPose, se23_exp, so3_exp
from nightrider.mapping import StreetlightCluster


INTR = CameraIntrinsics(fx=500.0, fy=500.0, cx=640.0, cy=360.0)
EXT = CamExtrinsics()


def _state_looking_down_x(rng=None, pos=(0.0, 0.0, 1.0)):
    return FilterState(ExtendedPose(pos=np.array(pos, dtype=float)))


def _random_pose_cov(rng, scale=1e-3):
    M = rng.normal(size=(15, 15))
    return M @ M.T * scale


def _cluster(cid, center):
    return StreetlightCluster(cid, np.asarray(center, dtype=float))


# ------------------------------------------------------------- sigma_proj


def test_sigma_proj_zero_cov_is_alpha_identity():
    st = _state_looking_down_x()
    S = sigma_proj(st, np.zeros((15, 15)), [20.0, 1.0, 5.0], EXT, INTR, alpha=4.0)
    np.testing.assert_allclose(S, 4.0 * np.eye(2), atol=1e-12)


def test_projection_jacobian_matches_finite_differences():
    rng = np.random.default_rng(50)
    h = 1e-6
    for _ in range(50):
        pose = se23_exp(
            np.concatenate([rng.normal(size=3) * 0.3, rng.normal(size=6) * 2.0])
        )
        st = FilterState(pose)
        C = pose.pos + pose.rot @ np.array([15.0, 0.0, 3.0]) + rng.normal(size=3)
        J = projection_jacobian(st, C, EXT, INTR)
        if J is None:
            continue
        J_fd = np.zeros((2, 6))
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            # rotation: body-frame (right) perturbation
            plus = FilterState(ExtendedPose(pose.rot @ so3_exp(e), pose.vel, pose.pos))
            minus = FilterState(ExtendedPose(pose.rot @ so3_exp(-e), pose.vel, pose.pos))
            J_fd[:, k] = (project(C, plus.pose, EXT, INTR) - project(C, minus.pose, EXT, INTR)) / (2 * h)
            # position: additive
            plus = FilterState(ExtendedPose(pose.rot, pose.vel, pose.pos + e))
            minus = FilterState(ExtendedPose(pose.rot, pose.vel, pose.pos - e))
            J_fd[:, 3 + k] = (project(C, plus.pose, EXT, INTR) - project(C, minus.pose, EXT, INTR)) / (2 * h)
        scale = max(np.abs(J).max(), 1.0)
        assert np.abs(J_fd - J).max() / scale < 1e-5


def test_sigma_proj_shrinks_with_range():
    # same position uncertainty, doubled distance: roughly quarter variance
    st = _state_looking_down_x()
    P = np.zeros((15, 15))
    P[6:9, 6:9] = np.eye(3) * 0.04
    near = sigma_proj(st, P, [20.0, 0.0, 4.0], EXT, INTR, alpha=0.0)
    far = sigma_proj(st, P, [40.0, 0.0, 7.0], EXT, INTR, alpha=0.0)
    ratio = np.trace(far) / np.trace(near)
    assert 0.15 < ratio < 0.4


# -------------------------------------------------------------- sigma_ang


def test_sigma_ang_floors_for_aligned_ray_and_zero_cov():
    st = _state_looking_down_x()
    C = np.array([25.0, 2.0, 6.0])
    pix = project(C, st.pose, EXT, INTR)
    var = sigma_ang(st, np.zeros((15, 15)), pix, C, EXT, INTR, alpha=4.0)
    assert var == 1e-12  # gradient of cos vanishes at the optimum


def test_sigma_ang_positive_off_axis():
    st = _state_looking_down_x()
    C = np.array([25.0, 2.0, 6.0])
    pix = project(C, st.pose, EXT, INTR) + np.array([40.0, -25.0])
    var = sigma_ang(st, np.eye(15) * 1e-4, pix, C, EXT, INTR, alpha=4.0)
    assert var > 1e-10


def test_angle_gradients_match_finite_differences():
    rng = np.random.default_rng(51)
    h = 1e-6
    checked = 0
    while checked < 40:
        pose = se23_exp(
            np.concatenate([rng.normal(size=3) * 0.3, rng.normal(size=6) * 2.0])
        )
        st = FilterState(pose)
        C = pose.pos + pose.rot @ np.array([18.0, 0.0, 4.0]) + rng.normal(size=3)
        pix_true = project(C, pose, EXT, INTR)
        if pix_true is None:
            continue
        pix = pix_true + rng.normal(size=2) * 30.0
        out = angle_gradients(st, pix, C, EXT, INTR)
        if out is None:
            continue
        checked += 1
        _, d_pixel, grad6 = out

        def cos_of(pose_, pix_):
            o = angle_gradients(FilterState(pose_), pix_, C, EXT, INTR)
            return o[0]

        fd_pix = np.zeros(3)
        for k in range(2):  # homogeneous third component has no effect path
            e = np.zeros(2)
            e[k] = h
            fd_pix[k] = (cos_of(pose, pix + e) - cos_of(pose, pix - e)) / (2 * h)
        # third homogeneous coordinate: perturb the ray directly
        assert np.abs(fd_pix[:2] - d_pixel[:2]).max() < 1e-5 * max(
            np.abs(d_pixel).max(), 1e-6
        ) + 1e-10

        fd6 = np.zeros(6)
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            p_plus = ExtendedPose(pose.rot @ so3_exp(e), pose.vel, pose.pos)
            p_minus = ExtendedPose(pose.rot @ so3_exp(-e), pose.vel, pose.pos)
            fd6[k] = (cos_of(p_plus, pix) - cos_of(p_minus, pix)) / (2 * h)
            q_plus = ExtendedPose(pose.rot, pose.vel, pose.pos + e)
            q_minus = ExtendedPose(pose.rot, pose.vel, pose.pos - e)
            fd6[3 + k] = (cos_of(q_plus, pix) - cos_of(q_minus, pix)) / (2 * h)
        scale = max(np.abs(grad6).max(), 1e-8)
        assert np.abs(fd6 - grad6).max() / scale < 1e-4


# -------------------------------------------------------------- pair_score


def test_pair_score_gates_range_and_behind():
    st = _state_looking_down_x()
    P = np.eye(15) * 1e-4
    params = ScoreParams()
    det = DetectionBox(np.array([640.0, 200.0]), np.array([10.0, 10.0]))
    assert pair_score(det, _cluster(0, [80.0, 0.0, 5.0]), st, P, params, EXT, INTR) == 0.0
    assert pair_score(det, _cluster(0, [-10.0, 0.0, 5.0]), st, P, params, EXT, INTR) == 0.0


def test_pair_score_prefers_nearby_detection():
    st = _state_looking_down_x()
    P = np.eye(15) * 1e-4
    params = ScoreParams()
    C = _cluster(0, [25.0, 1.0, 5.0])
    pix = project(C.center, st.pose, EXT, INTR)
    close = DetectionBox(pix + np.array([1.0, -1.0]), np.array([10.0, 10.0]))
    far = DetectionBox(pix + np.array([60.0, 45.0]), np.array([10.0, 10.0]))
    s_close = pair_score(close, C, st, P, params, EXT, INTR)
    s_far = pair_score(far, C, st, P, params, EXT, INTR)
    assert s_close > s_far
    assert s_close > 1.0  # a tight angular residual dominates the blend


def test_score_matrix_matches_pairwise_scores():
    rng = np.random.default_rng(52)
    st = FilterState(
        se23_exp(np.concatenate([rng.normal(size=3) * 0.2, rng.normal(size=6)]))
    )
    P = _random_pose_cov(rng)
    params = ScoreParams()
    clusters = []
    for i in range(8):
        offset = np.array([rng.uniform(8, 45), rng.uniform(-12, 12), rng.uniform(3, 7)])
        clusters.append(_cluster(i, st.pose.pos + st.pose.rot @ offset))
    dets = []
    for _ in range(6):
        pix = np.array([rng.uniform(0, 1280), rng.uniform(0, 720)])
        dets.append(DetectionBox(pix, np.array([10.0, 10.0])))
    S = score_matrix(dets, clusters, st, P, params, EXT, INTR)
    for i, d in enumerate(dets):
        for j, c in enumerate(clusters):
            np.testing.assert_allclose(
                S[i, j],
                pair_score(d, c, st, P, params, EXT, INTR),
                rtol=1e-9,
                atol=1e-300,
            )


# --------------------------------------------------------------- hungarian


def _brute_force_best(S):
    n, m = S.shape
    best = -math.inf
    for perm in itertools.permutations(range(m), n):
        total = sum(S[i, j] for i, j in enumerate(perm))
        best = max(best, total)
    return best


def test_hungarian_unique_best_pairing():
    S = np.array([[0.9, 0.1], [0.2, 0.8]])
    assert hungarian(S) == [0, 1]


def test_hungarian_matches_brute_force():
    rng = np.random.default_rng(53)
    for _ in range(300):
        n = rng.integers(1, 7)
        m = rng.integers(n, 9)
        S = rng.uniform(0.0, 1.0, size=(n, m))
        cols = hungarian(S)
        assert sorted(set(cols)) == sorted(cols)  # one-to-one
        total = sum(S[i, j] for i, j in enumerate(cols))
        np.testing.assert_allclose(total, _brute_force_best(S), rtol=1e-12)


def test_hungarian_agrees_with_scipy():
    rng = np.random.default_rng(54)
    for _ in range(200):
        n = rng.integers(1, 7)
        m = rng.integers(n, 10)
        S = rng.uniform(size=(n, m))
        cols = hungarian(S)
        rr, cc = scipy.optimize.linear_sum_assignment(S, maximize=True)
        mine = sum(S[i, j] for i, j in enumerate(cols))
        ref = S[rr, cc].sum()
        np.testing.assert_allclose(mine, ref, rtol=1e-12)


# --------------------------------------------------------------- associate


def _scene(rng, n_clusters=5):
    st = _state_looking_down_x()
    clusters = []
    for i in range(n_clusters):
        c = np.array([rng.uniform(12, 45), rng.uniform(-10, 10), rng.uniform(4, 7)])
        clusters.append(_cluster(i, c))
    return st, clusters


def test_associate_matches_obvious_scene():
    rng = np.random.default_rng(55)
    st, clusters = _scene(rng)
    P = np.eye(15) * 1e-5
    dets = []
    for c in clusters[:3]:
        pix = project(c.center, st.pose, EXT, INTR)
        dets.append(DetectionBox(pix + rng.normal(size=2) * 0.5, np.array([10.0, 10.0])))
    ms = associate(dets, clusters, st, P, ScoreParams(), EXT, INTR)
    assert ms.cluster_ids == [0, 1, 2]


def test_associate_leaves_stray_detection_unmatched():
    rng = np.random.default_rng(56)
    st, clusters = _scene(rng, n_clusters=2)
    P = np.eye(15) * 1e-5
    pix0 = project(clusters[0].center, st.pose, EXT, INTR)
    dets = [
        DetectionBox(pix0, np.array([10.0, 10.0])),
        DetectionBox(np.array([100.0, 650.0]), np.array([8.0, 8.0])),  # nothing there
    ]
    ms = associate(dets, clusters, st, P, ScoreParams(), EXT, INTR)
    assert ms.cluster_ids[0] == 0
    assert ms.cluster_ids[1] is None


def test_associate_never_reuses_a_cluster():
    rng = np.random.default_rng(57)
    st, clusters = _scene(rng, n_clusters=3)
    P = np.eye(15) * 1e-4
    pix = project(clusters[1].center, st.pose, EXT, INTR)
    dets = [
        DetectionBox(pix + np.array([0.5, 0.0]), np.array([10.0, 10.0])),
        DetectionBox(pix - np.array([0.5, 0.0]), np.array([10.0, 10.0])),
    ]
    ms = associate(dets, clusters, st, P, ScoreParams(), EXT, INTR)
    matched = ms.matched_ids()
    assert len(matched) == len(set(matched))


def test_associate_total_score_matches_exhaustive_search():
    rng = np.random.default_rng(58)
    params = ScoreParams()
    for _ in range(40):
        st, clusters = _scene(rng, n_clusters=int(rng.integers(1, 6)))
        P = _random_pose_cov(rng, scale=1e-3)
        n = int(rng.integers(1, 6))
        dets = []
        for _ in range(n):
            if rng.random() < 0.7 and clusters:
                c = clusters[rng.integers(len(clusters))]
                pix = project(c.center, st.pose, EXT, INTR)
                if pix is None:
                    pix = np.array([rng.uniform(0, 1280), rng.uniform(0, 720)])
                pix = pix + rng.normal(size=2) * 3.0
            else:
                pix = np.array([rng.uniform(0, 1280), rng.uniform(0, 720)])
            dets.append(DetectionBox(pix, np.array([10.0, 10.0])))

        S = score_matrix(dets, clusters, st, P, params, EXT, INTR)
        no_match = np.maximum(1.0 - S.sum(axis=1), 1e-12)

        # exhaustive: every one-to-one map detection -> cluster or None
        m = len(clusters)
        best = -math.inf

        def recurse(i, used, total):
            nonlocal best
            if i == n:
                best = max(best, total)
                return
            recurse(i + 1, used, total + no_match[i])
            for j in range(m):
                if j not in used:
                    recurse(i + 1, used | {j}, total + S[i, j])

        recurse(0, frozenset(), 0.0)

        ms = associate(dets, clusters, st, P, params, EXT, INTR)
        got = 0.0
        for i, cid in enumerate(ms.cluster_ids):
            if cid is None:
                got += no_match[i]
            else:
                got += S[i, [c.id for c in clusters].index(cid)]
        np.testing.assert_allclose(got, best, rtol=1e-9)


def test_associate_empty_inputs():
    st = _state_looking_down_x()
    P = np.eye(15)
    ms = associate([], [], st, P, ScoreParams(), EXT, INTR)
    assert ms.cluster_ids == []
    det = DetectionBox(np.array([640.0, 360.0]), np.array([10.0, 10.0]))
    ms = associate([det], [], st, P, ScoreParams(), EXT, INTR)
    assert ms.cluster_ids == [None]
