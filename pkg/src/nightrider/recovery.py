"""Tracking-failure detection and brute-force relocalization.

After a stretch with no accepted streetlight matches the filter is
declared lost.  Recovery enumerates every one-to-one mapping between the
current detections and nearby map clusters (each detection may also map
to nothing), applies the camera update for each candidate mapping, and
scores the result: reprojection residuals, planar position change, yaw
change, and a flat penalty per unmatched detection.  The cheapest
combination wins if it is cheap enough and matches more than two lights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .association import MatchSet
from .camera import apply_camera_update, project
from .inekf import UpdateRejected


@dataclass
class RecoveryParams:
    # gamma_pos must dominate gamma_neg for map layouts with repeating
    # spacing: a whole-pitch shift reprojects almost perfectly, so the
    # only thing that separates it from the truth is the size of the
    # position jump it needs.
    gamma_pos: float = 5.0  # per meter of x-y correction
    gamma_yaw: float = 5.0  # per radian of yaw correction
    gamma_neg: float = 12.0  # per unmatched detection
    th_score: float = 40.0
    lost_after: float = 3.0  # seconds without a positive match
    max_combinations: int = 20_000
    max_detections: int = 5  # keep the largest boxes beyond this


def is_lost(time_since_last_match, params):
    return time_since_last_match > params.lost_after


def combination_count(n, m):
    """Number of one-to-one detection-to-cluster maps allowing NONE."""
    return sum(
        math.comb(n, k) * math.perm(m, k) for k in range(min(n, m) + 1)
    )


def assignments(n, m):
    """All one-to-one maps of n detections onto m clusters or -1 (NONE).

    Lexicographic over the choice list [-1, 0, 1, ...] per detection, so
    enumeration order is deterministic and NONE-heavy maps come first.
    """
    used = set()
    cur = []

    def rec(i):
        if i == n:
            yield tuple(cur)
            return
        cur.append(-1)
        yield from rec(i + 1)
        cur.pop()
        for j in range(m):
            if j not in used:
                used.add(j)
                cur.append(j)
                yield from rec(i + 1)
                cur.pop()
                used.remove(j)

    yield from rec(0)


def _yaw(rot):
    return math.atan2(rot[1, 0], rot[0, 0])


def score_candidate(state_before, state_after, matches, clusters_by_id, ext, intr, params):
    """Punishment score of one candidate mapping after its update.

    Mean pixel reprojection residual of the matched pairs (0 when none),
    plus weighted planar translation, weighted yaw change, and the
    per-NONE penalty.  None when a matched cluster reprojects behind the
    camera, which disqualifies the combination.
    """
    residuals = []
    for det, cid in matches.positive_pairs():
        pix = project(clusters_by_id[cid].center, state_after.pose, ext, intr)
        if pix is None:
            return None
        residuals.append(np.linalg.norm(np.asarray(det.center) - pix))
    mean_resid = float(np.mean(residuals)) if residuals else 0.0

    dt_xy = float(
        np.linalg.norm((state_after.pose.pos - state_before.pose.pos)[:2])
    )
    d_rot = state_before.pose.rot.T @ state_after.pose.rot
    d_yaw = abs(_yaw(d_rot))
    n_neg = len(matches.cluster_ids) - matches.positive_count()
    return (
        mean_resid
        + params.gamma_pos * dt_xy
        + params.gamma_yaw * d_yaw
        + params.gamma_neg * n_neg
    )


def attempt_recovery(detections, clusters, state, P, params, ext, intr, pixel_sigma=2.0):
    """Try to relocalize; returns (state, P, MatchSet) or None.

    Inputs are never mutated: every candidate update runs on the pure
    filter-update path, and only the accepted result is returned.  A
    combination whose update is numerically rejected is skipped.  When
    the raw combination count exceeds the budget the problem is first
    shrunk deterministically: only the largest detection boxes are
    kept (big blobs are close and carry the most signal), then the
    farthest candidate clusters are dropped until the count fits.
    """
    if len(detections) > params.max_detections:
        order = sorted(
            range(len(detections)),
            key=lambda i: float(np.prod(detections[i].extents)),
            reverse=True,
        )
        detections = [detections[i] for i in order[: params.max_detections]]
    n, m = len(detections), len(clusters)
    if n == 0 or m == 0:
        return None
    if combination_count(n, m) > params.max_combinations:
        clusters = sorted(
            clusters,
            key=lambda c: float(np.linalg.norm(c.center - state.pose.pos)),
        )
        while m > 1 and combination_count(n, m) > params.max_combinations:
            m -= 1
        clusters = clusters[:m]

    clusters_by_id = {c.id: c for c in clusters}
    best = None
    for combo in assignments(n, m):
        ids = [clusters[j].id if j >= 0 else None for j in combo]
        ms = MatchSet(list(detections), ids, [0.0] * n)
        if ms.positive_count():
            try:
                st, Pc = apply_camera_update(
                    state, P, ms, clusters_by_id, ext, intr, pixel_sigma
                )
            except UpdateRejected:
                continue
        else:
            st, Pc = state, P
        score = score_candidate(state, st, ms, clusters_by_id, ext, intr, params)
        if score is None:
            continue
        if best is None or score < best[0]:
            best = (score, st, Pc, ms)

    if best is None:
        return None
    score, st, Pc, ms = best
    if score < params.th_score and ms.positive_count() > 2:
        return st, Pc.copy(), ms
    return None
