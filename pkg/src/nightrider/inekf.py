"""Right-invariant extended Kalman filter on the extended pose group.

The filter estimate is an ExtendedPose plus gyro/accelerometer biases.  The
15-dimensional error state stacks [xi_R, xi_v, xi_p, zeta_gyro, zeta_accel]
where xi is the right-invariant pose error (see lie.right_invariant_error)
and zeta = estimated bias - true bias.

Measurements enter through the linear model  z = -H [xi; zeta] + n  with
n ~ N(0, N).  Updates retract multiplicatively on the left of the pose and
additively on the biases.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lie import ExtendedPose, adjoint_se23, se23_exp, skew, so3_exp

GRAVITY = np.array([0.0, 0.0, -9.81])

MAX_DT = 0.1
COND_LIMIT = 1e12


class UpdateRejected(RuntimeError):
    """Raised when an innovation covariance is numerically singular."""


@dataclass
class FilterState:
    pose: ExtendedPose = field(default_factory=ExtendedPose)
    bias_gyro: np.ndarray = field(default_factory=lambda: np.zeros(3))
    bias_accel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    t: float = 0.0

    def copy(self):
        return FilterState(
            self.pose.copy(), self.bias_gyro.copy(), self.bias_accel.copy(), self.t
        )


@dataclass
class ImuSample:
    t: float
    gyro: np.ndarray
    accel: np.ndarray


@dataclass
class NoiseConfig:
    """Continuous-time noise densities (all 3x3 covariance blocks).

    gyro/accel are white-noise densities; the bias entries are random-walk
    densities.  gravity is the world-frame gravity vector.
    """

    gyro_cov: np.ndarray
    accel_cov: np.ndarray
    gyro_bias_cov: np.ndarray
    accel_bias_cov: np.ndarray
    gravity: np.ndarray = field(default_factory=lambda: GRAVITY.copy())

    @classmethod
    def from_sigmas(
        cls,
        gyro_sigma=0.005,
        accel_sigma=0.05,
        gyro_bias_sigma=1e-4,
        accel_bias_sigma=1e-3,
        gravity=None,
    ):
        g = GRAVITY.copy() if gravity is None else np.asarray(gravity, dtype=float)
        return cls(
            gyro_cov=np.eye(3) * gyro_sigma**2,
            accel_cov=np.eye(3) * accel_sigma**2,
            gyro_bias_cov=np.eye(3) * gyro_bias_sigma**2,
            accel_bias_cov=np.eye(3) * accel_bias_sigma**2,
            gravity=g,
        )


def symmetrize(P):
    return (P + P.T) / 2.0


def expm_taylor(A, max_terms=20, tol=0.0):
    """Matrix exponential by truncated Taylor series with early exit.

    The propagation Jacobian built by build_error_dynamics is nilpotent
    (A^4 = 0), so the series terminates exactly after four terms there;
    max_terms bounds the general case.
    """
    out = np.eye(A.shape[0])
    term = np.eye(A.shape[0])
    for k in range(1, max_terms + 1):
        term = term @ A / k
        out = out + term
        if np.abs(term).max() <= tol:
            break
    return out


def build_error_dynamics(state, gravity=None):
    """Continuous-time error-state Jacobian A (15x15).

    d/dt [xi; zeta] = A [xi; zeta] + (noise terms); the bias rows are zero
    and the pose rows couple to the biases through the current estimate.
    """
    g = GRAVITY if gravity is None else gravity
    R = state.pose.rot
    A = np.zeros((15, 15))
    A[0:3, 9:12] = -R
    A[3:6, 0:3] = skew(g)
    A[3:6, 9:12] = -skew(state.pose.vel) @ R
    A[3:6, 12:15] = -R
    A[6:9, 3:6] = np.eye(3)
    A[6:9, 9:12] = -skew(state.pose.pos) @ R
    return A


def _noise_matrix(noise):
    Q = np.zeros((15, 15))
    Q[0:3, 0:3] = noise.gyro_cov
    Q[3:6, 3:6] = noise.accel_cov
    # position rows carry no direct noise
    Q[9:12, 9:12] = noise.gyro_bias_cov
    Q[12:15, 12:15] = noise.accel_bias_cov
    return Q


def propagate(state, P, imu, dt, noise, first_order=False):
    """One strapdown step: mean propagation plus covariance Riccati update.

    The mean integrates bias-corrected IMU rates over dt; the covariance
    uses Phi = expm(A dt) (or its first-order truncation when first_order
    is set) and maps the noise through the state-dependent adjoint.
    Returns a new (state, P).
    """
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    if dt > MAX_DT:
        raise ValueError(f"dt {dt} exceeds sanity bound {MAX_DT}")
    gyro = np.asarray(imu.gyro, dtype=float)
    accel = np.asarray(imu.accel, dtype=float)
    if not (np.isfinite(gyro).all() and np.isfinite(accel).all()):
        raise ValueError("non-finite IMU sample")

    R, v, p = state.pose.rot, state.pose.vel, state.pose.pos
    g = noise.gravity

    omega = gyro - state.bias_gyro
    acc_w = R @ (accel - state.bias_accel) + g

    R_new = R @ so3_exp(omega * dt)
    v_new = v + acc_w * dt
    p_new = p + v * dt + 0.5 * acc_w * dt * dt

    A = build_error_dynamics(state, g)
    if first_order:
        Phi = np.eye(15) + A * dt
    else:
        Phi = expm_taylor(A * dt)

    # noise enters through the adjoint of the current estimate
    Ad = np.eye(15)
    Ad[0:9, 0:9] = adjoint_se23(state.pose)
    Q = Ad @ _noise_matrix(noise) @ Ad.T
    P_new = Phi @ (P + Q * dt) @ Phi.T

    new_state = FilterState(
        ExtendedPose(R_new, v_new, p_new),
        state.bias_gyro.copy(),
        state.bias_accel.copy(),
        state.t + dt,
    )
    return new_state, symmetrize(P_new)


def invariant_update(state, P, H, z, N):
    """Measurement update under  z = -H [xi; zeta] + n,  n ~ N(0, N).

    Gain K = P H' (H P H' + N)^-1; the correction K z retracts the pose by
    left multiplication with se23_exp and adds to the biases.  Covariance
    uses the Joseph form.  Raises UpdateRejected when the innovation
    covariance is numerically singular.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    N = np.atleast_2d(np.asarray(N, dtype=float))

    S = H @ P @ H.T + N
    S = symmetrize(S)
    cond = np.linalg.cond(S)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise UpdateRejected(f"innovation covariance condition {cond:.3e}")

    K = np.linalg.solve(S, H @ P).T
    delta = K @ z

    pose_new = se23_exp(delta[0:9]).compose(state.pose)
    bias_gyro_new = state.bias_gyro + delta[9:12]
    bias_accel_new = state.bias_accel + delta[12:15]

    IKH = np.eye(15) - K @ H
    P_new = IKH @ P @ IKH.T + K @ N @ K.T

    new_state = FilterState(pose_new, bias_gyro_new, bias_accel_new, state.t)
    return new_state, symmetrize(P_new)
