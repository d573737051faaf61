"""Deterministic synthetic night scenes: trajectories, sensors, maps.

A Scenario fixes everything: the ground-truth trajectory, sensor rates,
the streetlight layout, noise levels, and one RNG seed.  All randomness
flows from that seed through named child streams, so a scenario always
reproduces the same sensor bytes.

IMU samples are interval-consistent: each reports the exact body rate and
specific force that carry the sampled truth pose from one grid time to
the next, so a noise-free stream integrates back to the truth up to the
integrator's own O(dt^3) position remainder.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import scipy.interpolate

from .camera import CamExtrinsics, CameraIntrinsics, DetectionBox, camera_point, project
from .inekf import GRAVITY, ImuSample
from .lie import ExtendedPose, so3_log
from .mapping import StreetlightCluster, StreetlightMap
from .odometry import OdomSample


@dataclass
class Scenario:
    name: str = "figure-eight"
    trajectory: dict = field(
        default_factory=lambda: {
            "kind": "figure-eight",
            "amp_x": 25.0,
            "amp_y": 12.0,
            "period": 40.0,
            "height": 0.0,
        }
    )
    duration: float = 40.0
    imu_rate: float = 200.0
    odom_rate: float = 10.0
    cam_rate: float = 10.0
    seed: int = 0
    lamps: list = field(default_factory=list)  # [[x, y, z], ...]
    lamp_size: float = 0.5  # physical lamp diameter (m)
    bloom: float = 2.0  # rendered blobs saturate larger than the lamp
    gyro_sigma: float = 0.005
    accel_sigma: float = 0.05
    gyro_bias_sigma: float = 1e-4
    accel_bias_sigma: float = 1e-3
    bias_mode: str = "random-walk"  # or "constant"
    gyro_bias0: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    accel_bias0: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    odom_sigma: float = 0.05
    pixel_sigma: float = 2.0
    dropout: float = 0.2
    false_positives: float = 0.5  # expected count per frame
    detector_min_box: float = 8.0  # px, smaller lights are missed
    blackouts: list = field(default_factory=list)  # [[t0, t1], ...]
    fx: float = 500.0
    fy: float = 500.0
    cx: float = 640.0
    cy: float = 360.0
    image_width: int = 1280
    image_height: int = 720

    def __post_init__(self):
        for name in ("imu_rate", "odom_rate", "cam_rate"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        for name in ("odom_rate", "cam_rate"):
            ratio = self.imu_rate / getattr(self, name)
            if abs(ratio - round(ratio)) > 1e-9:
                raise ValueError(f"imu_rate must be an integer multiple of {name}")
        if self.bias_mode not in ("random-walk", "constant"):
            raise ValueError(f"unknown bias_mode {self.bias_mode!r}")

    def intrinsics(self):
        return CameraIntrinsics(
            self.fx, self.fy, self.cx, self.cy, self.image_width, self.image_height
        )

    def in_blackout(self, t):
        return any(t0 <= t < t1 for t0, t1 in self.blackouts)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, doc):
        return cls(**doc)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class TrajectorySample:
    t: float
    pose: ExtendedPose
    body_rate: np.ndarray
    accel_world: np.ndarray


@dataclass
class CameraFrame:
    t: float
    detections: list
    truth_ids: list  # cluster id per detection, None for false positives
    blackout: bool = False


def _rotz(yaw):
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _truth_arrays(spec, t):
    """(pos, vel, acc, yaw, yaw_rate) arrays for a trajectory spec."""
    kind = spec.get("kind")
    n = len(t)
    if kind == "circle":
        r = float(spec["radius"])
        speed = float(spec["speed"])
        cx, cy = spec.get("center", (0.0, 0.0))
        z = float(spec.get("height", 0.0))
        w = speed / r
        th = spec.get("phase", 0.0) + w * t
        pos = np.stack([cx + r * np.cos(th), cy + r * np.sin(th), np.full(n, z)], 1)
        vel = np.stack([-r * w * np.sin(th), r * w * np.cos(th), np.zeros(n)], 1)
        acc = np.stack(
            [-r * w * w * np.cos(th), -r * w * w * np.sin(th), np.zeros(n)], 1
        )
        return pos, vel, acc, th + np.pi / 2, np.full(n, w)
    if kind == "figure-eight":
        A = float(spec["amp_x"])
        B = float(spec["amp_y"])
        T = float(spec["period"])
        z = float(spec.get("height", 0.0))
        ud = 2.0 * np.pi / T
        u = ud * t
        pos = np.stack([A * np.sin(u), B * np.sin(2 * u), np.full(n, z)], 1)
        vel = np.stack([A * ud * np.cos(u), 2 * B * ud * np.cos(2 * u), np.zeros(n)], 1)
        acc = np.stack(
            [-A * ud**2 * np.sin(u), -4 * B * ud**2 * np.sin(2 * u), np.zeros(n)], 1
        )
    elif kind == "line":
        start = np.asarray(spec.get("start", (0.0, 0.0, 0.0)), dtype=float)
        v = np.asarray(spec.get("velocity", (0.0, 0.0, 0.0)), dtype=float)
        pos = start + np.outer(t, v)
        vel = np.tile(v, (n, 1))
        acc = np.zeros((n, 3))
        speed_xy = math.hypot(v[0], v[1])
        yaw0 = spec.get("yaw", math.atan2(v[1], v[0]) if speed_xy > 0 else 0.0)
        return pos, vel, acc, np.full(n, float(yaw0)), np.zeros(n)
    elif kind == "waypoints":
        times = np.asarray(spec["times"], dtype=float)
        points = np.asarray(spec["points"], dtype=float)
        bc = "periodic" if spec.get("closed", False) else "natural"
        spline = scipy.interpolate.CubicSpline(times, points, bc_type=bc)
        pos = spline(t)
        vel = spline(t, 1)
        acc = spline(t, 2)
    else:
        raise ValueError(f"unknown trajectory kind {kind!r}")

    speed2 = vel[:, 0] ** 2 + vel[:, 1] ** 2
    if speed2.min() < 0.05**2:
        raise ValueError("planar speed too low for a defined heading")
    yaw = np.arctan2(vel[:, 1], vel[:, 0])
    yaw_rate = (vel[:, 0] * acc[:, 1] - vel[:, 1] * acc[:, 0]) / speed2
    return pos, vel, acc, yaw, yaw_rate


def generate_truth(scenario):
    """Ground truth sampled on the IMU grid, with analytic derivatives.

    Attitude is yaw-only (planar heading along the velocity), so the body
    angular rate is (0, 0, yaw_rate).
    """
    n = int(round(scenario.duration * scenario.imu_rate))
    t = np.arange(n + 1) / scenario.imu_rate
    pos, vel, acc, yaw, yaw_rate = _truth_arrays(scenario.trajectory, t)
    samples = []
    for k in range(n + 1):
        samples.append(
            TrajectorySample(
                t[k],
                ExtendedPose(_rotz(yaw[k]), vel[k].copy(), pos[k].copy()),
                np.array([0.0, 0.0, yaw_rate[k]]),
                acc[k].copy(),
            )
        )
    return samples


def simulate_imu(truth, scenario, rng):
    """IMU stream plus the true bias trajectories (one entry per sample).

    Sample k carries the interval-consistent rates for [t_k, t_{k+1}],
    corrupted by the bias at t_k and white noise scaled to the rate.
    """
    n = len(truth) - 1
    dt = 1.0 / scenario.imu_rate
    if scenario.bias_mode == "constant":
        bias_g = np.tile(np.asarray(scenario.gyro_bias0, dtype=float), (n + 1, 1))
        bias_a = np.tile(np.asarray(scenario.accel_bias0, dtype=float), (n + 1, 1))
    else:
        steps_g = rng.normal(size=(n, 3)) * scenario.gyro_bias_sigma * math.sqrt(dt)
        steps_a = rng.normal(size=(n, 3)) * scenario.accel_bias_sigma * math.sqrt(dt)
        bias_g = np.vstack([np.zeros(3), np.cumsum(steps_g, axis=0)])
        bias_a = np.vstack([np.zeros(3), np.cumsum(steps_a, axis=0)])
        bias_g += np.asarray(scenario.gyro_bias0, dtype=float)
        bias_a += np.asarray(scenario.accel_bias0, dtype=float)
    noise_g = rng.normal(size=(n, 3)) * (scenario.gyro_sigma / math.sqrt(dt))
    noise_a = rng.normal(size=(n, 3)) * (scenario.accel_sigma / math.sqrt(dt))

    samples = []
    for k in range(n):
        Rk = truth[k].pose.rot
        omega = so3_log(Rk.T @ truth[k + 1].pose.rot) / dt
        accel = Rk.T @ ((truth[k + 1].pose.vel - truth[k].pose.vel) / dt - GRAVITY)
        samples.append(
            ImuSample(
                truth[k].t,
                omega + bias_g[k] + noise_g[k],
                accel + bias_a[k] + noise_a[k],
            )
        )
    return samples, bias_g, bias_a


def simulate_odom(truth, scenario, rng):
    """Body-frame velocity samples on the odometer grid (identity mount)."""
    step = int(round(scenario.imu_rate / scenario.odom_rate))
    m = int(math.floor(scenario.duration * scenario.odom_rate + 1e-9))
    noise = rng.normal(size=(m, 3)) * scenario.odom_sigma
    samples = []
    for j in range(1, m + 1):
        s = truth[j * step]
        samples.append(OdomSample(s.t, s.pose.rot.T @ s.pose.vel + noise[j - 1]))
    return samples


_SIM_EXT = CamExtrinsics()


def simulate_detections(truth, scenario, smap, rng):
    """Detector output per camera frame.

    Visible clusters (in front, large enough on screen, inside the image)
    are dropped with the dropout probability, the survivors get pixel
    noise; Poisson-many false positives are appended.  Blackout frames
    are empty.
    """
    intr = scenario.intrinsics()
    step = int(round(scenario.imu_rate / scenario.cam_rate))
    m = int(math.floor(scenario.duration * scenario.cam_rate + 1e-9))
    frames = []
    for j in range(1, m + 1):
        s = truth[j * step]
        if scenario.in_blackout(s.t):
            frames.append(CameraFrame(s.t, [], [], blackout=True))
            continue
        dets, tids = [], []
        for c in smap.clusters:
            cp = camera_point(c.center, s.pose, _SIM_EXT)
            if cp[2] < 1.0:
                continue
            extents = np.array(
                [
                    intr.fx * scenario.lamp_size / cp[2],
                    intr.fy * scenario.lamp_size / cp[2],
                ]
            )
            if extents.min() < scenario.detector_min_box:
                continue
            pix = project(c.center, s.pose, _SIM_EXT, intr)
            if not intr.contains(pix, margin=2.0):
                continue
            if rng.random() < scenario.dropout:
                continue
            noisy = pix + rng.normal(size=2) * scenario.pixel_sigma
            dets.append(DetectionBox(noisy, extents))
            tids.append(c.id)
        for _ in range(rng.poisson(scenario.false_positives)):
            center = np.array(
                [
                    rng.uniform(10.0, scenario.image_width - 10.0),
                    rng.uniform(10.0, scenario.image_height - 10.0),
                ]
            )
            extents = rng.uniform(8.0, 20.0, size=2)
            dets.append(DetectionBox(center, extents))
            tids.append(None)
        frames.append(CameraFrame(s.t, dets, tids))
    return frames


def _blob_rect(pix, extents, width, height):
    """Integer pixel rectangle [u0, u1) x [v0, v1) of a rendered blob."""
    u0 = int(math.floor(pix[0] - extents[0] / 2.0 + 0.5))
    u1 = int(math.floor(pix[0] + extents[0] / 2.0 + 0.5))
    v0 = int(math.floor(pix[1] - extents[1] / 2.0 + 0.5))
    v1 = int(math.floor(pix[1] + extents[1] / 2.0 + 0.5))
    u1, v1 = max(u1, u0 + 1), max(v1, v0 + 1)
    u0, v0 = max(u0, 0), max(v0, 0)
    u1, v1 = min(u1, width), min(v1, height)
    if u0 >= u1 or v0 >= v1:
        return None
    return u0, u1, v0, v1


def _visible_blobs(pose, smap, scenario, intr):
    blobs = []
    for c in smap.clusters:
        cp = camera_point(c.center, pose, _SIM_EXT)
        if cp[2] < 1.0:
            continue
        pix = np.array(
            [intr.fx * cp[0] / cp[2] + intr.cx, intr.fy * cp[1] / cp[2] + intr.cy]
        )
        size = scenario.bloom * scenario.lamp_size
        extents = (intr.fx * size / cp[2], intr.fy * size / cp[2])
        rect = _blob_rect(pix, extents, scenario.image_width, scenario.image_height)
        if rect is not None:
            blobs.append(rect)
    return blobs


BLOB_INTENSITY = 240


def render_intensity_image(pose, smap, scenario):
    """8-bit camera image: black sky with saturated streetlight blobs."""
    img = np.zeros((scenario.image_height, scenario.image_width), dtype=np.uint8)
    for u0, u1, v0, v1 in _visible_blobs(pose, smap, scenario, scenario.intrinsics()):
        img[v0:v1, u0:u1] = BLOB_INTENSITY
    return img


def frame_boxes(pose, smap, scenario, min_area=4):
    """Segmentation boxes of the rendered frame, without the image.

    Groups 8-connected blob rectangles and reports each group's bounding
    box and painted pixel count, which equals segment_boxes applied to
    render_intensity_image for any threshold below the blob intensity.
    """
    rects = _visible_blobs(pose, smap, scenario, scenario.intrinsics())
    n = len(rects)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            a, b = rects[i], rects[j]
            # 8-adjacency of [u0, u1) ranges: gap of at most one pixel
            if a[0] <= b[1] and b[0] <= a[1] and a[2] <= b[3] and b[2] <= a[3]:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[ri] = rj

    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(rects[i])

    boxes = []
    for members in groups.values():
        u0 = min(r[0] for r in members)
        u1 = max(r[1] for r in members)
        v0 = min(r[2] for r in members)
        v1 = max(r[3] for r in members)
        if len(members) == 1:
            area = (u1 - u0) * (v1 - v0)
        else:
            mask = np.zeros((v1 - v0, u1 - u0), dtype=bool)
            for r in members:
                mask[r[2] - v0 : r[3] - v0, r[0] - u0 : r[1] - u0] = True
            area = int(mask.sum())
        if area < min_area:
            continue
        boxes.append(
            DetectionBox(
                np.array([(u0 + u1 - 1) / 2.0, (v0 + v1 - 1) / 2.0]),
                np.array([float(u1 - u0), float(v1 - v0)]),
                source="segmentation",
            )
        )
    boxes.sort(key=lambda b: (b.center[1], b.center[0]))
    return boxes


_LAMP_OFFSETS = np.array(
    [
        [0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0],
    ]
)


def make_map(scenario):
    """Streetlight map straight from the scenario's lamp positions.

    Each lamp becomes one cluster with a small point cloud spanning its
    physical size; ids follow the map-builder's x-then-y ordering.
    """
    lamps = sorted(
        (np.asarray(p, dtype=float) for p in scenario.lamps),
        key=lambda p: (p[0], p[1]),
    )
    clusters = []
    for i, center in enumerate(lamps):
        points = center + _LAMP_OFFSETS * (scenario.lamp_size / 2.0)
        clusters.append(StreetlightCluster(i, center, points))
    return StreetlightMap(map_id=scenario.name, clusters=clusters)


def compute_ate(est_times, est_poses, truth_times, truth_poses, max_dt=0.005):
    """(translation RMSE m, rotation RMSE deg) over nearest-time pairs.

    Both trajectories share the world frame, so no alignment is applied.
    Raises ValueError when no timestamps pair up within max_dt.
    """
    est_times = np.asarray(est_times, dtype=float)
    truth_times = np.asarray(truth_times, dtype=float)
    if len(est_times) == 0 or len(truth_times) == 0:
        raise ValueError("empty trajectory")
    idx = np.searchsorted(truth_times, est_times)
    idx = np.clip(idx, 0, len(truth_times) - 1)
    left = np.clip(idx - 1, 0, len(truth_times) - 1)
    use_left = np.abs(truth_times[left] - est_times) <= np.abs(
        truth_times[idx] - est_times
    )
    nearest = np.where(use_left, left, idx)
    ok = np.abs(truth_times[nearest] - est_times) <= max_dt + 1e-12
    if not ok.any():
        raise ValueError("no overlapping timestamps within tolerance")

    t_sq = []
    r_sq = []
    for i in np.nonzero(ok)[0]:
        e = est_poses[i]
        g = truth_poses[nearest[i]]
        t_sq.append(float(np.sum((e.pos - g.pos) ** 2)))
        ang = np.linalg.norm(so3_log(e.rot.T @ g.rot))
        r_sq.append(float(ang**2))
    trans = math.sqrt(float(np.mean(t_sq)))
    rot = math.degrees(math.sqrt(float(np.mean(r_sq))))
    return trans, rot


def path_length(truth):
    pts = np.stack([s.pose.pos for s in truth])
    return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())


def default_scenario(seed=0):
    """Figure-eight course through a lamp grid; the standard test scene."""
    lamps = []
    i = 0
    for x in (-24.0, -12.0, 0.0, 12.0, 24.0):
        for y in (-15.0, -5.0, 5.0, 15.0):
            lamps.append([x, y, 4.5 + 0.5 * (i % 3)])
            i += 1
    return Scenario(name="figure-eight", lamps=lamps, seed=seed)


def ring_scenario(seed=0):
    """One 500 m lap with 20 lamps alternating inside/outside the ring."""
    r = 500.0 / (2.0 * np.pi)
    lamps = []
    for i in range(20):
        th = 2.0 * np.pi * i / 20.0
        rad = r + (4.0 if i % 2 == 0 else -4.0)
        lamps.append([rad * np.cos(th), rad * np.sin(th), 5.0 + (i % 2)])
    return Scenario(
        name="ring",
        trajectory={"kind": "circle", "radius": r, "speed": 5.0},
        duration=100.0,
        lamps=lamps,
        seed=seed,
    )


def corridor_scenario(seed=1, offline_lamp=True, lateral_bias=0.5):
    """Straight corridor of collinear lamps, then one off-line lamp.

    Collinear lights cannot pin a rotation about their common line, and
    neither gravity leveling nor the odometer helps: a roll about the
    line pairs with a lateral accelerometer-bias shift of g times the
    angle, and the velocity is parallel to the line.  The scenario
    plants a constant lateral accelerometer bias that the filter does
    not know at start; the estimate settles into a tilted equilibrium
    roughly lateral_bias / g radians around the line (a z offset of a
    few decimetres here) while every on-line projection stays
    consistent.  The off-line lamp breaks the symmetry once it comes
    into range.

    The filter still models the bias as a walk, so its covariance
    grows honestly along the blind direction.  The other noise knobs
    are kept quiet so the planted bias is the only meaningful error
    source and the comparison between runs with and without
    degeneration handling is not washed out.
    """
    lamps = [[8.0 + 10.0 * i, 6.0, 4.0] for i in range(10)]
    if offline_lamp:
        lamps.append([110.0, -12.0, 4.0])
    return Scenario(
        name="corridor",
        trajectory={"kind": "line", "start": [0.0, 0.0, 0.0], "velocity": [2.0, 0.0, 0.0]},
        duration=50.0,
        lamps=lamps,
        seed=seed,
        gyro_sigma=0.002,
        accel_sigma=0.02,
        gyro_bias_sigma=2e-5,
        accel_bias_sigma=0.1,
        bias_mode="constant",
        accel_bias0=[0.0, lateral_bias, 0.0],
        pixel_sigma=0.3,
        dropout=0.0,
        false_positives=0.0,
        detector_min_box=12.0,
        bloom=1.2,
    )


def blackout_scenario(seed=0, start=15.0, length=20.0):
    """The default course with a detection blackout in the middle."""
    sc = default_scenario(seed)
    sc.name = "blackout"
    sc.duration = 45.0
    sc.blackouts = [[start, start + length]]
    return sc
