"""Synthetic spinning-radar simulator with motion distortion and Doppler shift.

The simulator is the ground-truth oracle for the estimator: it places point
landmarks, sweeps the beam one azimuth at a time while the sensor moves with
a constant body velocity, and deposits power at the apparent range of each
landmark.  Both distortion effects can be toggled independently:

* motion distortion: each azimuth uses the sensor pose at its own timestamp
  (cork-screw warping); with it off, every azimuth uses the pose at the scan
  reference time (idealized instantaneous scan);
* Doppler shift: a closing radial velocity u = v_x cos(phi) + v_y sin(phi)
  reduces the apparent range by beta * u.

The sensor pose T_s(t) maps inertial coordinates into the sensor frame and
advances by left-multiplication: T_s(t) = exp((t - t0) * w^) T_s(t0).  The
transform between two measurement times is then exp(dt * w^), which is
exactly what the velocity estimator recovers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .features import Keypoint, MatchSet
from .scan import PolarScan, RadarConfig, polar_to_cartesian_point
from .se3 import BodyVelocity, Pose, velocity_to_transform


@dataclass(frozen=True)
class SimScene:
    """Landmark field plus the trajectory and noise driving a simulation.

    landmarks are inertial-frame (N, 2) positions; reflectivity is the power
    deposited per return (scalar or per-landmark).  landmark_velocities, when
    given, make objects dynamic: (N, 2) inertial velocities in m/s.
    """

    landmarks: np.ndarray
    velocity: BodyVelocity
    initial_pose: Pose = field(default_factory=Pose.identity)
    reflectivity: np.ndarray | float = 1.0
    range_sigma: float = 0.0
    dropout: float = 0.0
    landmark_velocities: np.ndarray | None = None

    def __post_init__(self):
        lm = np.atleast_2d(np.asarray(self.landmarks, dtype=float))
        if lm.shape[0] < 1 or lm.shape[1] != 2:
            raise ValueError("landmarks must be a non-empty (N, 2) array")
        refl = np.broadcast_to(
            np.asarray(self.reflectivity, dtype=float), (lm.shape[0],)).copy()
        if np.any(refl <= 0):
            raise ValueError("reflectivity must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.range_sigma < 0:
            raise ValueError("range_sigma must be non-negative")
        if self.landmark_velocities is not None:
            lv = np.asarray(self.landmark_velocities, dtype=float)
            if lv.shape != lm.shape:
                raise ValueError("landmark_velocities must match landmarks")
            object.__setattr__(self, "landmark_velocities", lv)
        object.__setattr__(self, "landmarks", lm)
        object.__setattr__(self, "reflectivity", refl)

    @classmethod
    def random(cls, n_landmarks: int, velocity: BodyVelocity,
               max_radius: float = 80.0, min_radius: float = 5.0,
               seed: int = 0, **kwargs) -> "SimScene":
        """Uniform-in-annulus random landmark field (seeded)."""
        rng = np.random.default_rng(seed)
        u = rng.uniform(min_radius**2, max_radius**2, n_landmarks)
        r = np.sqrt(u)
        phi = rng.uniform(0.0, 2.0 * np.pi, n_landmarks)
        lm = np.stack([r * np.cos(phi), r * np.sin(phi)], axis=1)
        return cls(lm, velocity, **kwargs)


@dataclass(frozen=True)
class Detection:
    """Ground-truth bookkeeping for one deposited landmark return."""

    landmark_id: int
    azimuth_index: int
    range_bin: int


@dataclass(frozen=True)
class SimScanPair:
    """Two consecutive rotations plus the ground truth relating them."""

    scan1: PolarScan
    scan2: PolarScan
    true_velocity: BodyVelocity
    true_transform: Pose
    reference_time1: float
    reference_time2: float
    detections1: list = field(default_factory=list)
    detections2: list = field(default_factory=list)


def _sensor_xy(pose: Pose, points: np.ndarray) -> np.ndarray:
    """Inertial (N, 2) points into the sensor frame given T_s (inertial->sensor)."""
    p3 = np.concatenate([points, np.zeros((points.shape[0], 1))], axis=1)
    return pose.apply(p3)[:, :2]


def simulate_scan(scene: SimScene, start_pose: Pose, start_time: float,
                  cfg: RadarConfig, doppler_on: bool = True,
                  distortion_on: bool = True, seed: int = 0,
                  return_detections: bool = False):
    """Simulate one rotation starting at azimuth 0 at ``start_time``.

    A landmark contributes to the single azimuth whose beam angle is nearest
    its sensor-frame bearing at that azimuth's time.  Landmarks beyond the
    maximum range are silently omitted.  All randomness (range jitter,
    dropout) is fixed by ``seed``.
    """
    if doppler_on and cfg.beta is None:
        raise ValueError("doppler_on requires config.beta")
    rng = np.random.default_rng(seed)
    A = cfg.azimuths_per_rotation
    R = cfg.range_bins
    res = cfg.range_resolution
    step = cfg.azimuth_step
    times = cfg.azimuth_timestamps(start_time)
    angles = cfg.default_azimuth_angles()
    power = np.zeros((A, R), dtype=np.float32)
    detections: list[Detection] = []

    w = scene.velocity
    vx, vy = w.nu[0], w.nu[1]
    for a in range(A):
        if distortion_on:
            pose = velocity_to_transform(w, times[a] - start_time) @ start_pose
        else:
            pose = start_pose
        lm = scene.landmarks
        if scene.landmark_velocities is not None:
            lm = lm + scene.landmark_velocities * times[a]
        q = _sensor_xy(pose, lm)
        r = np.hypot(q[:, 0], q[:, 1])
        phi = np.mod(np.arctan2(q[:, 1], q[:, 0]), 2.0 * np.pi)
        nearest = np.rint(phi / step).astype(int) % A
        hits = np.flatnonzero((nearest == a) & (r > 0))
        for i in hits:
            r_app = r[i]
            if doppler_on:
                u = vx * np.cos(phi[i]) + vy * np.sin(phi[i])
                r_app = r_app - cfg.beta * u
            if scene.range_sigma > 0:
                r_app += rng.normal(0.0, scene.range_sigma)
            if scene.dropout > 0 and rng.uniform() < scene.dropout:
                continue
            b = int(np.rint(r_app / res))
            if 0 <= b < R:
                power[a, b] += scene.reflectivity[i]
                detections.append(Detection(int(i), a, b))

    scan = PolarScan(cfg, angles, times, power)
    if return_detections:
        return scan, detections
    return scan


def simulate_pair(scene: SimScene, cfg: RadarConfig, doppler_on: bool = True,
                  distortion_on: bool = True, seed: int = 0) -> SimScanPair:
    """Two rotations one period apart, with ground-truth transform recorded.

    The reference time of each scan is the timestamp of its azimuth 0, so
    the reference interval is exactly one rotation period.  Per-scan RNG
    streams are derived from ``seed`` deterministically.
    """
    w = scene.velocity
    t1 = 0.0
    t2 = cfg.period
    pose1 = scene.initial_pose
    pose2 = velocity_to_transform(w, t2 - t1) @ pose1
    scan1, det1 = simulate_scan(scene, pose1, t1, cfg, doppler_on,
                                distortion_on, seed=2 * seed,
                                return_detections=True)
    scan2, det2 = simulate_scan(scene, pose2, t2, cfg, doppler_on,
                                distortion_on, seed=2 * seed + 1,
                                return_detections=True)
    true_T = velocity_to_transform(w, t2 - t1)
    return SimScanPair(scan1, scan2, w, true_T, t1, t2, det1, det2)


def undistort_points(ranges: np.ndarray, azimuths: np.ndarray,
                     timestamps: np.ndarray, w: BodyVelocity,
                     reference_time: float, doppler: bool = False,
                     beta: float | None = None):
    """Re-express polar detections in the sensor frame at ``reference_time``.

    Each detection taken at time t is propagated through the constant-twist
    flow exp((reference_time - t) * w^).  With ``doppler`` the range is first
    corrected by adding beta * (v_x cos(phi) + v_y sin(phi)).

    Returns (ranges, azimuths) in the reference frame.
    """
    r = np.asarray(ranges, dtype=float).copy()
    phi = np.asarray(azimuths, dtype=float)
    t = np.asarray(timestamps, dtype=float)
    if doppler:
        if beta is None:
            raise ValueError("doppler correction requires beta")
        u = w.nu[0] * np.cos(phi) + w.nu[1] * np.sin(phi)
        r = r + beta * u
    xy = polar_to_cartesian_point(r, phi)
    out = np.empty_like(xy)
    for i in range(xy.shape[0]):
        T = velocity_to_transform(w, reference_time - t[i])
        p = T.apply(np.array([xy[i, 0], xy[i, 1], 0.0]))
        out[i] = p[:2]
    r_out = np.hypot(out[:, 0], out[:, 1])
    phi_out = np.mod(np.arctan2(out[:, 1], out[:, 0]), 2.0 * np.pi)
    return r_out, phi_out


def undistort_scan(scan: PolarScan, w: BodyVelocity,
                   reference_time: float | None = None,
                   doppler: bool = False) -> PolarScan:
    """Undistort every non-zero cell of a scan into a new polar grid.

    Corrected detections are re-deposited at their nearest azimuth/range bin;
    cells that leave the field of view are dropped.
    """
    cfg = scan.config
    if reference_time is None:
        reference_time = scan.reference_time
    az_idx, bins = np.nonzero(scan.power)
    if az_idx.size == 0:
        return PolarScan(cfg, scan.azimuth_angles.copy(),
                         scan.azimuth_timestamps.copy(),
                         np.zeros_like(scan.power))
    r = bins * cfg.range_resolution
    phi = scan.azimuth_angles[az_idx]
    t = scan.azimuth_timestamps[az_idx]
    r2, phi2 = undistort_points(r, phi, t, w, reference_time,
                                doppler=doppler, beta=cfg.beta)
    power = np.zeros_like(scan.power)
    a_new = np.rint(phi2 / cfg.azimuth_step).astype(int) % cfg.azimuths_per_rotation
    b_new = np.rint(r2 / cfg.range_resolution).astype(int)
    ok = (b_new >= 0) & (b_new < cfg.range_bins)
    vals = scan.power[az_idx, bins]
    np.add.at(power, (a_new[ok], b_new[ok]), vals[ok])
    return PolarScan(cfg, scan.azimuth_angles.copy(),
                     scan.azimuth_timestamps.copy(), power)


def _keypoint_from_detection(scan: PolarScan, det: Detection) -> Keypoint:
    return Keypoint.from_indices(scan, det.azimuth_index, det.range_bin)


def oracle_matches(pair: SimScanPair) -> MatchSet:
    """Ground-truth data association: join the two detection lists by landmark.

    Landmarks observed more than once in a scan (possible under rotation)
    use their first detection.
    """
    first1 = {}
    for d in pair.detections1:
        first1.setdefault(d.landmark_id, d)
    first2 = {}
    for d in pair.detections2:
        first2.setdefault(d.landmark_id, d)
    kps1, kps2 = [], []
    for lid, d1 in first1.items():
        d2 = first2.get(lid)
        if d2 is None:
            continue
        kps1.append(_keypoint_from_detection(pair.scan1, d1))
        kps2.append(_keypoint_from_detection(pair.scan2, d2))
    return MatchSet(kps1, kps2, np.zeros(len(kps1)),
                    pair.reference_time1, pair.reference_time2)


def exact_matches(landmarks: np.ndarray, w: BodyVelocity, cfg: RadarConfig,
                  seed: int = 0, time_offset: float | None = None) -> MatchSet:
    """Noise- and quantization-free matches from the generative model.

    Each landmark is observed once per scan at a random time within the
    rotation; observations are the exact sensor-frame positions, so a
    consistent estimator must recover ``w`` to machine precision.
    """
    lm = np.atleast_2d(np.asarray(landmarks, dtype=float))
    rng = np.random.default_rng(seed)
    period = cfg.period
    if time_offset is None:
        time_offset = period
    span = period * (cfg.azimuths_per_rotation - 1) / cfg.azimuths_per_rotation
    t1 = rng.uniform(0.0, span, lm.shape[0])
    t2 = time_offset + rng.uniform(0.0, span, lm.shape[0])
    kps1, kps2 = [], []
    for i in range(lm.shape[0]):
        p = np.array([lm[i, 0], lm[i, 1], 0.0])
        for t, kps in ((t1[i], kps1), (t2[i], kps2)):
            q = velocity_to_transform(w, t).apply(p)
            r = float(np.hypot(q[0], q[1]))
            phi = float(np.mod(np.arctan2(q[1], q[0]), 2.0 * np.pi))
            kps.append(Keypoint(azimuth_index=-1, range_index=-1,
                                timestamp=float(t), range_m=r,
                                azimuth_rad=phi, cartesian=q[:2].copy()))
    return MatchSet(kps1, kps2, np.zeros(lm.shape[0]), 0.0, time_offset)
