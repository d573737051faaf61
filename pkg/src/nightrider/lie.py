"""Rotation and extended-pose group operations.

Conventions used throughout the package:

* rotations are 3x3 orthonormal matrices with determinant +1,
* an extended pose bundles (R, v, p): attitude, world velocity, world
  position, embedded as the 5x5 matrix [[R, v, p], [0, 1, 0], [0, 0, 1]],
* tangent vectors stack [xi_R, xi_v, xi_p] in that order,
* the invariant error between an estimate and a reference is
  eta = X_est * X_ref^-1 (right-invariant form).

Small-angle branches switch at ``SMALL_ANGLE`` (1e-8) to second-order
Taylor expansions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SMALL_ANGLE = 1e-8
_ORTHO_TOL = 1e-8


def skew(v):
    """Cross-product matrix: skew(a) @ b == np.cross(a, b)."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def unskew(M):
    """Inverse of skew for an antisymmetric 3x3 matrix."""
    return np.array([M[2, 1], M[0, 2], M[1, 0]])


def so3_exp(phi):
    """Rodrigues formula mapping a rotation vector to a rotation matrix."""
    phi = np.asarray(phi, dtype=float)
    theta2 = float(phi @ phi)
    S = skew(phi)
    if theta2 < SMALL_ANGLE**2:
        # second-order Taylor; adequate below the switch point
        return np.eye(3) + S + 0.5 * (S @ S)
    theta = np.sqrt(theta2)
    # 2 sin^2(t/2) instead of 1 - cos(t): no cancellation at small angles
    half_sin = np.sin(theta / 2.0)
    return (
        np.eye(3)
        + (np.sin(theta) / theta) * S
        + (2.0 * half_sin * half_sin / theta2) * (S @ S)
    )


def _check_rotation(R):
    err = np.abs(R.T @ R - np.eye(3)).max()
    if err > _ORTHO_TOL or not np.isfinite(R).all():
        raise ValueError(f"matrix is not orthonormal (max |R'R - I| = {err:.3e})")
    if np.linalg.det(R) < 0.0:
        raise ValueError("matrix is a reflection (det < 0), not a rotation")


def so3_log(R):
    """Principal rotation vector of R, with |phi| <= pi.

    At exactly pi the axis sign is ambiguous; the convention here makes the
    largest-magnitude component of the result non-negative (a half-turn
    about z maps to (0, 0, +pi)).
    """
    R = np.asarray(R, dtype=float)
    _check_rotation(R)
    cos_theta = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(cos_theta)
    s = unskew(R - R.T) / 2.0  # == sin(theta) * axis

    if theta < SMALL_ANGLE:
        return s
    if theta < 2.0:
        return (theta / np.sin(theta)) * s

    # For obtuse angles sin(theta) shrinks and both s and arccos lose accuracy.
    # The symmetric part B = I + (1 - cos) (aa' - I) stays well conditioned:
    # recover aa' from it, seeding from its largest diagonal entry.
    theta = np.pi - np.arcsin(min(np.linalg.norm(s), 1.0))
    B = (R + R.T) / 2.0
    one_minus_cos = 1.0 - cos_theta
    k = int(np.argmax(np.diag(B)))
    ak = np.sqrt(max((B[k, k] - cos_theta) / one_minus_cos, 0.0))
    axis = B[:, k] / (one_minus_cos * ak)
    axis[k] = ak
    axis = axis / np.linalg.norm(axis)
    # fix the sign: prefer agreement with R - R', else the largest component
    if np.linalg.norm(s) > 1e-12:
        if s @ axis < 0.0:
            axis = -axis
    elif axis[int(np.argmax(np.abs(axis)))] < 0.0:
        axis = -axis
    return theta * axis


def so3_left_jacobian(phi):
    phi = np.asarray(phi, dtype=float)
    theta2 = float(phi @ phi)
    S = skew(phi)
    if theta2 < SMALL_ANGLE**2:
        return np.eye(3) + 0.5 * S + (S @ S) / 6.0
    theta = np.sqrt(theta2)
    half_sin = np.sin(theta / 2.0)
    return (
        np.eye(3)
        + (2.0 * half_sin * half_sin / theta2) * S
        + ((theta - np.sin(theta)) / (theta2 * theta)) * (S @ S)
    )


def so3_left_jacobian_inv(phi):
    phi = np.asarray(phi, dtype=float)
    theta2 = float(phi @ phi)
    S = skew(phi)
    if theta2 < 1e-8:
        # Taylor of the inverse, not the inverse of the Taylor
        return np.eye(3) - 0.5 * S + (S @ S) / 12.0
    theta = np.sqrt(theta2)
    # cot(theta/2) form stays finite up to (but excluding) 2*pi
    c = 1.0 / theta2 - np.tan(np.pi / 2.0 - theta / 2.0) / (2.0 * theta)
    return np.eye(3) - 0.5 * S + c * (S @ S)


@dataclass
class ExtendedPose:
    """Attitude, world-frame velocity, and world-frame position."""

    rot: np.ndarray = field(default_factory=lambda: np.eye(3))
    vel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    pos: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def copy(self):
        return ExtendedPose(self.rot.copy(), self.vel.copy(), self.pos.copy())

    def as_matrix(self):
        M = np.eye(5)
        M[:3, :3] = self.rot
        M[:3, 3] = self.vel
        M[:3, 4] = self.pos
        return M

    @classmethod
    def from_matrix(cls, M):
        return cls(np.array(M[:3, :3]), np.array(M[:3, 3]), np.array(M[:3, 4]))

    def inverse(self):
        Rt = self.rot.T
        return ExtendedPose(Rt, -Rt @ self.vel, -Rt @ self.pos)

    def compose(self, other):
        return ExtendedPose(
            self.rot @ other.rot,
            self.rot @ other.vel + self.vel,
            self.rot @ other.pos + self.pos,
        )

    def __matmul__(self, other):
        return self.compose(other)


def se23_hat(xi):
    """5x5 Lie-algebra embedding of a 9-vector [xi_R, xi_v, xi_p]."""
    xi = np.asarray(xi, dtype=float)
    M = np.zeros((5, 5))
    M[:3, :3] = skew(xi[0:3])
    M[:3, 3] = xi[3:6]
    M[:3, 4] = xi[6:9]
    return M


def se23_vee(M):
    return np.concatenate([unskew(M[:3, :3]), M[:3, 3], M[:3, 4]])


def se23_exp(xi):
    """Exponential map: closed form via the SO(3) left Jacobian."""
    xi = np.asarray(xi, dtype=float)
    phi = xi[0:3]
    J = so3_left_jacobian(phi)
    return ExtendedPose(so3_exp(phi), J @ xi[3:6], J @ xi[6:9])


def se23_log(pose):
    phi = so3_log(pose.rot)
    Jinv = so3_left_jacobian_inv(phi)
    return np.concatenate([phi, Jinv @ pose.vel, Jinv @ pose.pos])


def right_invariant_error(est, ref):
    """xi = log(X_est @ X_ref^-1); zero when the poses agree."""
    return se23_log(est.compose(ref.inverse()))


def adjoint_se23(pose):
    """9x9 adjoint: Ad_X xi = vee(X hat(xi) X^-1)."""
    R, v, p = pose.rot, pose.vel, pose.pos
    Ad = np.zeros((9, 9))
    Ad[0:3, 0:3] = R
    Ad[3:6, 0:3] = skew(v) @ R
    Ad[3:6, 3:6] = R
    Ad[6:9, 0:3] = skew(p) @ R
    Ad[6:9, 6:9] = R
    return Ad
