"""Pinhole camera geometry and bearing updates against mapped streetlights.

Frames: the body-to-camera extrinsics map body coordinates into the camera
frame (x_c = rot @ x_b + trans); the camera looks along its +z axis.  A
world point C with estimated pose (R, p) sits at

    Psi = R' (C - p)            (body frame)
    C_c = rot @ Psi + trans     (camera frame)

and the filter observes the normalized vector h = C_c / C_c[2], whose
pixel image is K @ h.  Measurements are compared in normalized coordinates
(both sides have third component 1, so innovations have a zero third row).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .inekf import invariant_update
from .lie import skew

Z_MIN = 0.01
_NOISE_FLOOR = 1e-12


@dataclass
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int = 1280
    height: int = 720

    @property
    def K(self):
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    @property
    def K_inv(self):
        return np.array(
            [
                [1.0 / self.fx, 0.0, -self.cx / self.fx],
                [0.0, 1.0 / self.fy, -self.cy / self.fy],
                [0.0, 0.0, 1.0],
            ]
        )

    def contains(self, pixel, margin=0.0):
        u, v = pixel
        return (
            margin <= u <= self.width - 1 - margin
            and margin <= v <= self.height - 1 - margin
        )


@dataclass
class CamExtrinsics:
    """Body-to-camera transform: x_c = rot @ x_b + trans."""

    rot: np.ndarray = field(
        default_factory=lambda: np.array(
            [[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]]
        )
    )
    trans: np.ndarray = field(default_factory=lambda: np.zeros(3))


@dataclass
class DetectionBox:
    """Axis-aligned bright-blob box: pixel center and (width, height)."""

    center: np.ndarray
    extents: np.ndarray
    source: str = "detector"


def camera_point(point_w, pose, ext):
    """World point expressed in the camera frame."""
    return ext.rot @ (pose.rot.T @ (np.asarray(point_w, dtype=float) - pose.pos)) + ext.trans


def project(point_w, pose, ext, intr):
    """Pixel projection of a world point, or None when behind the camera."""
    c = camera_point(point_w, pose, ext)
    if c[2] < Z_MIN:
        return None
    return np.array(
        [intr.fx * c[0] / c[2] + intr.cx, intr.fy * c[1] / c[2] + intr.cy]
    )


def back_project(pixel, intr):
    """Normalized ray K^-1 [u, v, 1] (third component 1)."""
    u, v = pixel
    return np.array([(u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0])


def camera_H(state, center_w, ext, intr):
    """Linearized bearing observation of a mapped streetlight center.

    Returns (H, h) where h is the predicted normalized observation and the
    model is z = y - h = -H [xi; zeta] + n.  Returns None when the point is
    behind the camera (no valid Jacobian).
    """
    pose = state.pose
    C = np.asarray(center_w, dtype=float)
    psi = pose.rot.T @ (C - pose.pos)
    c = ext.rot @ psi + ext.trans
    z_depth = c[2]
    if z_depth < Z_MIN:
        return None
    h = c / z_depth

    # d(normalize)/d(camera point): rows of ext.rot scaled by the depth
    row3 = ext.rot[2, :]  # third row: d z_depth / d psi
    H_i = -np.outer(c, row3) / z_depth**2 + ext.rot / z_depth

    D = np.zeros((3, 15))
    D[:, 0:3] = skew(C)
    D[:, 6:9] = -np.eye(3)
    H = H_i @ pose.rot.T @ D
    return H, h


def pixel_noise_cov(intr, pixel_sigma):
    """Normalized-coordinate noise for an isotropic pixel sigma.

    The pixel covariance diag(s^2, s^2, 0) maps through K^-1; the zero
    third row/column is regularized on the diagonal so stacked innovation
    covariances stay invertible.
    """
    Sc = np.diag([pixel_sigma**2, pixel_sigma**2, 0.0])
    Ki = intr.K_inv
    return Ki @ Sc @ Ki.T + np.eye(3) * _NOISE_FLOOR


def apply_camera_update(state, P, matches, clusters_by_id, ext, intr, pixel_sigma):
    """Stacked bearing update for all positive matches in a MatchSet.

    matches pairs detection boxes with cluster ids; each matched pair
    contributes a 3-row block (normalized observation minus prediction).
    Matches whose cluster sits behind the camera are dropped.  Returns
    (state, P) unchanged when nothing usable remains.
    """
    rows_H, rows_z, blocks_N = [], [], []
    noise = pixel_noise_cov(intr, pixel_sigma)
    for det, cluster_id in matches.positive_pairs():
        cluster = clusters_by_id[cluster_id]
        out = camera_H(state, cluster.center, ext, intr)
        if out is None:
            continue
        H, h = out
        y = back_project(det.center, intr)
        rows_H.append(H)
        rows_z.append(y - h)
        blocks_N.append(noise)
    if not rows_H:
        return state, P
    H = np.vstack(rows_H)
    z = np.concatenate(rows_z)
    n = len(blocks_N)
    N = np.zeros((3 * n, 3 * n))
    for i, blk in enumerate(blocks_N):
        N[3 * i : 3 * i + 3, 3 * i : 3 * i + 3] = blk
    return invariant_update(state, P, H, z, N)
