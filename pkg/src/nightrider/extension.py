"""Match extension from raw intensity images and degeneration handling.

The Hungarian association only sees detector output, which misses dim or
distant streetlights.  This module recovers those: bright pixels are
segmented into boxes, and unmatched map clusters within an extended range
are matched to boxes by projected-point containment.  A separate path
handles the straight-line degeneracy, where z, roll and pitch drift
accumulate until an off-line streetlight appears; those first off-line
clusters are matched through tall search rectangles instead of densities.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.ndimage

from .association import MatchSet
from .camera import DetectionBox, project

_EIGHT_CONN = np.ones((3, 3), dtype=bool)


def segment_boxes(image, th_int=220, min_area=4):
    """Bounding boxes of bright 8-connected components.

    Pixels strictly above th_int form the mask; components with fewer
    than min_area pixels are dropped.  Box centers are in (u, v) pixel
    coordinates, extents are (width, height).
    """
    img = np.asarray(image)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D intensity image, got shape {img.shape}")
    mask = img > th_int
    labels, count = scipy.ndimage.label(mask, structure=_EIGHT_CONN)
    if count == 0:
        return []
    sizes = np.bincount(labels.ravel())
    boxes = []
    for k, sl in enumerate(scipy.ndimage.find_objects(labels), start=1):
        if sizes[k] < min_area:
            continue
        rows, cols = sl
        center = np.array(
            [(cols.start + cols.stop - 1) / 2.0, (rows.start + rows.stop - 1) / 2.0]
        )
        extents = np.array(
            [float(cols.stop - cols.start), float(rows.stop - rows.start)]
        )
        boxes.append(DetectionBox(center, extents, source="segmentation"))
    return boxes


def _contains(box, pixel):
    half = box.extents / 2.0
    d = np.abs(np.asarray(pixel) - box.center)
    return d[0] <= half[0] and d[1] <= half[1]


def extend_matches(boxes, unmatched_clusters, state, ext, intr, max_range=80.0):
    """Match unmatched clusters to segmentation boxes by projected points.

    A cluster within max_range is a candidate for every box containing
    its projected center; the candidate ratio is the fraction of the
    cluster's points that project inside the box.  Conflicts resolve
    greedily by descending ratio, so each box and each cluster is used
    at most once.
    """
    pose = state.pose
    triples = []
    for c in unmatched_clusters:
        if np.linalg.norm(c.center - pose.pos) > max_range:
            continue
        center_px = project(c.center, pose, ext, intr)
        if center_px is None:
            continue
        points = c.points if c.points is not None and len(c.points) else [c.center]
        pixels = [project(p, pose, ext, intr) for p in points]
        pixels = [p for p in pixels if p is not None]
        if not pixels:
            continue
        for bi, box in enumerate(boxes):
            if not _contains(box, center_px):
                continue
            inside = sum(1 for p in pixels if _contains(box, p))
            ratio = inside / len(points)
            if ratio > 0.0:
                triples.append((ratio, c.id, bi, c, box))

    triples.sort(key=lambda t: (-t[0], t[1], t[2]))
    used_boxes = set()
    used_clusters = set()
    dets, ids, scores = [], [], []
    for ratio, cid, bi, cluster, box in triples:
        if bi in used_boxes or cid in used_clusters:
            continue
        used_boxes.add(bi)
        used_clusters.add(cid)
        dets.append(box)
        ids.append(cid)
        scores.append(float(ratio))
    return MatchSet(dets, ids, scores)


@dataclass
class DegenState:
    """Sliding-window record of matched streetlight centers.

    Tracks whether the recently observed streetlights lie on a single
    x-y line.  While they do, yaw/x/y stay observable but z, roll and
    pitch drift; the flag gates the corrective matching that runs when
    an off-line streetlight finally shows up.
    """

    horizon: float = 10.0
    th_line: float = 1.5
    degenerate: bool = False
    just_ended: bool = False
    window: list = field(default_factory=list)  # (t, cluster_id, center)
    line: tuple | None = None  # (centroid_xy, direction_xy)


def _fit_line_xy(centers):
    """Total-least-squares line through x-y points: (centroid, direction)."""
    pts = np.asarray(centers, dtype=float)[:, :2]
    centroid = pts.mean(axis=0)
    d = pts - centroid
    _, _, vt = np.linalg.svd(d, full_matrices=False)
    return centroid, vt[0]


def _perp_distance(center, line):
    centroid, direction = line
    d = np.asarray(center, dtype=float)[:2] - centroid
    return abs(d[0] * direction[1] - d[1] * direction[0])


def _unique_centers(window):
    by_id = {}
    for _, cid, center in window:
        by_id[cid] = center
    return list(by_id.values())


def update_degeneracy(degen, matched, t):
    """Advance the degeneracy state with this frame's positive matches.

    matched: iterable of (cluster_id, world center).  Entry requires at
    least two distinct clusters in the window, all within th_line of a
    fitted line.  Exit requires a newly matched center at least th_line
    off the line fitted before this call; just_ended marks that frame.
    """
    degen.just_ended = False
    new_entries = [(t, cid, np.asarray(c, dtype=float)) for cid, c in matched]

    if degen.degenerate and degen.line is not None:
        for _, _, center in new_entries:
            if _perp_distance(center, degen.line) >= degen.th_line:
                degen.degenerate = False
                degen.just_ended = True
                break

    degen.window.extend(new_entries)
    degen.window = [e for e in degen.window if e[0] >= t - degen.horizon]

    centers = _unique_centers(degen.window)
    if len(centers) >= 2:
        line = _fit_line_xy(centers)
        max_perp = max(_perp_distance(c, line) for c in centers)
        if degen.just_ended:
            degen.line = None  # stale once off-line evidence arrived
        elif max_perp < degen.th_line:
            degen.degenerate = True
            degen.line = line
        elif degen.degenerate:
            degen.line = line  # keep tracking the corridor while inside
    elif not degen.degenerate:
        degen.line = None
    return degen


def offline_candidates(clusters, degen):
    """Clusters lying at least th_line off the tracked corridor line."""
    if degen.line is None:
        return list(clusters)
    return [
        c for c in clusters if _perp_distance(c.center, degen.line) >= degen.th_line
    ]


def _rect_intersects(box, center_px, rect_w, rect_h):
    d = np.abs(box.center - center_px)
    return d[0] <= (rect_w + box.extents[0]) / 2.0 and d[1] <= (
        rect_h + box.extents[1]
    ) / 2.0


def degeneration_match(boxes, new_clusters, state, ext, intr, rect_w=30.0, rect_h=300.0):
    """Rectangle-gated matching for the first off-line streetlights.

    Accumulated z/roll/pitch drift shifts projections mostly vertically,
    so each cluster searches a tall rect_w x rect_h window around its
    projected center; among intersecting boxes the nearest center wins,
    greedily by ascending distance.
    """
    pose = state.pose
    triples = []
    for c in new_clusters:
        center_px = project(c.center, pose, ext, intr)
        if center_px is None:
            continue
        for bi, box in enumerate(boxes):
            if not _rect_intersects(box, center_px, rect_w, rect_h):
                continue
            dist = float(np.linalg.norm(box.center - center_px))
            triples.append((dist, c.id, bi, c, box))

    triples.sort(key=lambda t: (t[0], t[1], t[2]))
    used_boxes = set()
    used_clusters = set()
    dets, ids, scores = [], [], []
    for dist, cid, bi, cluster, box in triples:
        if bi in used_boxes or cid in used_clusters:
            continue
        used_boxes.add(bi)
        used_clusters.add(cid)
        dets.append(box)
        ids.append(cid)
        scores.append(dist)
    return MatchSet(dets, ids, scores)
