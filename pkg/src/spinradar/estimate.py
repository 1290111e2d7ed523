"""Rigid RANSAC, motion-compensated RANSAC, and Doppler range correction.

The motion-compensated estimator fits a constant body velocity w via
Gauss-Newton on the pseudomeasurement residual p2 - exp(dt * w^) p1, where
dt is the per-pair measurement time difference.  Because scans are planar,
only (v_x, v_y, omega_z) are free; the full SE(3) machinery backs the
linearization through the odot operator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .features import Keypoint, MatchSet
from .se3 import BodyVelocity, Pose, odot, velocity_to_transform


class EstimationError(RuntimeError):
    """Base class for estimator failures."""


class DegenerateGeometryError(EstimationError):
    """Raised when the match geometry cannot constrain the model."""


class NonConvergenceError(EstimationError):
    """Raised when Gauss-Newton diverges."""


@dataclass(frozen=True)
class RansacConfig:
    """Shared settings for both RANSAC variants (subset size fixed at 2)."""

    max_iterations: int = 100
    inlier_threshold: float = 0.35
    subset_size: int = 2
    seed: int = 0
    gn_max_iters: int = 10
    gn_tolerance: float = 1e-10
    final_gn_max_iters: int = 20

    def __post_init__(self):
        if self.subset_size != 2:
            raise ValueError("subset size is fixed at 2 for planar scans")
        if self.inlier_threshold <= 0:
            raise ValueError("inlier_threshold must be positive")


@dataclass(frozen=True)
class MeasurementNoise:
    """Per-point measurement covariance in the local Cartesian frame.

    Default: isotropic sigma equal to one range bin, giving uniform weights.
    With polar standard deviations set, the covariance is propagated through
    the polar-to-Cartesian map h: R_cart = H diag(sr^2, sa^2) H^T with H the
    Jacobian of h at the measurement.
    """

    sigma: float = 0.0432
    sigma_range: float | None = None
    sigma_azimuth: float | None = None

    def information(self, polar: np.ndarray) -> np.ndarray:
        """(M, 2, 2) inverse covariances for (range, azimuth) measurements."""
        polar = np.atleast_2d(np.asarray(polar, dtype=float))
        M = polar.shape[0]
        if self.sigma_range is None or self.sigma_azimuth is None:
            return np.broadcast_to(np.eye(2) / self.sigma**2, (M, 2, 2)).copy()
        r, phi = polar[:, 0], polar[:, 1]
        c, s = np.cos(phi), np.sin(phi)
        H = np.empty((M, 2, 2))
        H[:, 0, 0] = c
        H[:, 0, 1] = -r * s
        H[:, 1, 0] = s
        H[:, 1, 1] = r * c
        Rp = np.zeros((M, 2, 2))
        Rp[:, 0, 0] = self.sigma_range**2
        Rp[:, 1, 1] = self.sigma_azimuth**2
        cov = H @ Rp @ np.transpose(H, (0, 2, 1))
        return np.linalg.inv(cov)


@dataclass(frozen=True)
class EstimationResult:
    """Output of either RANSAC variant."""

    transform: Pose
    velocity: BodyVelocity | None
    inlier_indices: np.ndarray
    iterations_used: int
    converged: bool

    def __post_init__(self):
        object.__setattr__(self, "inlier_indices",
                           np.asarray(self.inlier_indices, dtype=int))


def _planar_flow(vx: float, vy: float, wz: float, dts: np.ndarray):
    """Vectorized exp(dt * w^) for a planar velocity: (cos, sin, tx, ty).

    Matches exp_se3 exactly: rotation by theta = wz*dt, translation
    V2 @ (dt * nu) with V2 = [[sin t / t, -(1-cos t)/t], [(1-cos t)/t, sin t / t]].
    """
    theta = wz * dts
    c = np.cos(theta)
    s = np.sin(theta)
    small = np.abs(theta) < 1e-6
    with np.errstate(divide="ignore", invalid="ignore"):
        A = np.where(small, 1.0 - theta**2 / 6.0, s / np.where(small, 1.0, theta))
        B = np.where(small, theta / 2.0 - theta**3 / 24.0,
                     (1.0 - c) / np.where(small, 1.0, theta))
    tx = dts * (A * vx - B * vy)
    ty = dts * (B * vx + A * vy)
    return c, s, tx, ty


def _propagate(vx, vy, wz, dts, p1):
    """Pseudomeasurements exp(dt * w^) p1 for (M, 2) points."""
    c, s, tx, ty = _planar_flow(vx, vy, wz, dts)
    gx = c * p1[:, 0] - s * p1[:, 1] + tx
    gy = s * p1[:, 0] + c * p1[:, 1] + ty
    return np.stack([gx, gy], axis=1)


def velocity_jacobians(velocity: BodyVelocity, dts: np.ndarray,
                       p1: np.ndarray) -> np.ndarray:
    """Full 4x6 measurement Jacobians G_m = dt * odot(T_m p1) per match."""
    out = np.empty((dts.shape[0], 4, 6))
    for m in range(dts.shape[0]):
        T = velocity_to_transform(velocity, float(dts[m]))
        g = T.matrix @ np.array([p1[m, 0], p1[m, 1], 0.0, 1.0])
        out[m] = dts[m] * odot(g)
    return out


def align_rigid_svd(points1: np.ndarray, points2: np.ndarray) -> Pose:
    """Least-squares rigid transform minimizing sum ||p2 - T p1||^2.

    SVD-based with the reflection fix so det(C) = +1 always holds.
    """
    p1 = np.atleast_2d(np.asarray(points1, dtype=float))
    p2 = np.atleast_2d(np.asarray(points2, dtype=float))
    if p1.shape != p2.shape or p1.shape[0] < 2:
        raise DegenerateGeometryError("need at least 2 point pairs")
    c1 = p1.mean(axis=0)
    c2 = p2.mean(axis=0)
    q1 = p1 - c1
    q2 = p2 - c2
    scale = max(np.max(np.abs(q1)), np.max(np.abs(q2)), 1.0)
    H = q1.T @ q2
    if np.max(np.abs(H)) < 1e-12 * scale**2:
        raise DegenerateGeometryError("coincident points: rotation unobservable")
    U, _, Vt = np.linalg.svd(H)
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    R = Vt.T @ np.diag([1.0, d]) @ U.T
    t = c2 - R @ c1
    theta = np.arctan2(R[1, 0], R[0, 0])
    return Pose.from_xytheta(t[0], t[1], theta)


def _apply_pose_2d(T: Pose, pts: np.ndarray) -> np.ndarray:
    R = T.rotation[:2, :2]
    return pts @ R.T + T.translation[:2]


def ransac_rigid(matches: MatchSet, cfg: RansacConfig) -> EstimationResult:
    """Rigid RANSAC baseline over 2-point SVD alignments (seed-deterministic)."""
    M = len(matches)
    if M < 2:
        raise DegenerateGeometryError("need at least 2 matches")
    p1 = matches.p1
    p2 = matches.p2
    rng = np.random.default_rng(cfg.seed)
    best = None  # (count, -ssr, transform, inlier mask)
    for _ in range(cfg.max_iterations):
        idx = rng.choice(M, size=2, replace=False)
        try:
            T = align_rigid_svd(p1[idx], p2[idx])
        except DegenerateGeometryError:
            continue
        resid = np.linalg.norm(p2 - _apply_pose_2d(T, p1), axis=1)
        mask = resid < cfg.inlier_threshold
        count = int(mask.sum())
        if count < 2:
            continue
        score = (count, -float(np.sum(resid[mask]**2)))
        if best is None or score > best[0]:
            best = (score, T, mask)
    if best is None:
        raise DegenerateGeometryError("no hypothesis produced >= 2 inliers")
    _, _, mask = best
    T = align_rigid_svd(p1[mask], p2[mask])
    resid = np.linalg.norm(p2 - _apply_pose_2d(T, p1), axis=1)
    inliers = np.flatnonzero(resid < cfg.inlier_threshold)
    return EstimationResult(transform=T, velocity=None,
                            inlier_indices=inliers,
                            iterations_used=cfg.max_iterations,
                            converged=True)


def gauss_newton_velocity(matches: MatchSet, subset=None,
                          noise: MeasurementNoise | None = None,
                          cfg: RansacConfig | None = None,
                          init: BodyVelocity | None = None,
                          max_iters: int | None = None) -> BodyVelocity:
    """Gauss-Newton fit of a planar constant body velocity to matched points.

    Iterates the normal-equation update built from the per-match Jacobians
    G_m = dt_m * odot(T_m p1) reduced to the planar components; stops when
    the update norm drops below tolerance.
    """
    cfg = cfg or RansacConfig()
    noise = noise or MeasurementNoise()
    if subset is not None:
        matches = matches.subset(subset)
    K = len(matches)
    if K < 2:
        raise DegenerateGeometryError("need at least 2 matches")
    p1 = matches.p1
    p2 = matches.p2
    dts = matches.dt
    W = noise.information(matches.polar(2))
    if max_iters is None:
        max_iters = cfg.gn_max_iters

    x = np.zeros(3) if init is None else np.array(
        [init.nu[0], init.nu[1], init.omega[2]])
    prev_cost = np.inf
    rising = 0
    for _ in range(max_iters):
        g = _propagate(x[0], x[1], x[2], dts, p1)
        e = p2 - g
        # Planar reduction of dt * odot(g): rows x,y; columns v_x, v_y, w_z.
        G = np.zeros((K, 2, 3))
        G[:, 0, 0] = dts
        G[:, 1, 1] = dts
        G[:, 0, 2] = -dts * g[:, 1]
        G[:, 1, 2] = dts * g[:, 0]
        WG = W @ G
        A = np.einsum("mij,mik->jk", G, WG)
        b = np.einsum("mij,mi->j", WG, e)
        cost = 0.5 * float(np.einsum("mi,mij,mj->", e, W, e))
        if cost > prev_cost:
            rising += 1
            if rising >= 3:
                raise NonConvergenceError(
                    f"cost increased for {rising} consecutive iterations")
        else:
            rising = 0
        prev_cost = cost
        try:
            delta = np.linalg.solve(A, b)
        except np.linalg.LinAlgError as err:
            raise DegenerateGeometryError(
                "normal equations singular (degenerate geometry)") from err
        if not np.all(np.isfinite(delta)):
            raise DegenerateGeometryError("non-finite Gauss-Newton update")
        x = x + delta
        if np.linalg.norm(delta) < cfg.gn_tolerance:
            break
    return BodyVelocity.planar(x[0], x[1], x[2])


def velocity_cost(matches: MatchSet, velocity: BodyVelocity,
                  noise: MeasurementNoise | None = None) -> float:
    """Objective J(w) = 1/2 sum e_m^T R^-1 e_m at a given velocity."""
    noise = noise or MeasurementNoise()
    p1 = matches.p1
    e = matches.p2 - _propagate(velocity.nu[0], velocity.nu[1],
                                velocity.omega[2], matches.dt, p1)
    W = noise.information(matches.polar(2))
    return 0.5 * float(np.einsum("mi,mij,mj->", e, W, e))


def _velocity_residuals(matches: MatchSet, v: BodyVelocity) -> np.ndarray:
    g = _propagate(v.nu[0], v.nu[1], v.omega[2], matches.dt, matches.p1)
    return np.linalg.norm(matches.p2 - g, axis=1)


def mc_ransac(matches: MatchSet, cfg: RansacConfig,
              noise: MeasurementNoise | None = None) -> EstimationResult:
    """Motion-compensated RANSAC: velocity hypotheses from 2-point GN fits.

    The inlier test propagates each scan-1 point through the per-pair
    constant-twist flow (pseudomeasurement) and thresholds the Cartesian
    residual.  The final velocity is refit on the largest inlier set and the
    returned transform spans the scan reference times.
    """
    noise = noise or MeasurementNoise()
    M = len(matches)
    if M < 2:
        raise DegenerateGeometryError("need at least 2 matches")
    rng = np.random.default_rng(cfg.seed)
    best = None
    for _ in range(cfg.max_iterations):
        idx = rng.choice(M, size=2, replace=False)
        try:
            v = gauss_newton_velocity(matches, subset=idx, noise=noise,
                                      cfg=cfg, max_iters=cfg.gn_max_iters)
        except EstimationError:
            continue
        resid = _velocity_residuals(matches, v)
        mask = resid < cfg.inlier_threshold
        count = int(mask.sum())
        if count < 2:
            continue
        score = (count, -float(np.sum(resid[mask]**2)))
        if best is None or score > best[0]:
            best = (score, v, mask)
    if best is None:
        raise DegenerateGeometryError("no hypothesis produced >= 2 inliers")
    _, v0, mask = best
    converged = True
    try:
        v = gauss_newton_velocity(matches, subset=np.flatnonzero(mask),
                                  noise=noise, cfg=cfg, init=v0,
                                  max_iters=cfg.final_gn_max_iters)
    except NonConvergenceError:
        v = v0
        converged = False
    resid = _velocity_residuals(matches, v)
    inliers = np.flatnonzero(resid < cfg.inlier_threshold)
    dt_ref = matches.reference_time2 - matches.reference_time1
    return EstimationResult(transform=velocity_to_transform(v, dt_ref),
                            velocity=v, inlier_indices=inliers,
                            iterations_used=cfg.max_iterations,
                            converged=converged)


def doppler_correct(ranges: np.ndarray, azimuths: np.ndarray,
                    v: np.ndarray, beta: float) -> np.ndarray:
    """Undo the Doppler range shift: r + beta * (v_x cos phi + v_y sin phi)."""
    r = np.asarray(ranges, dtype=float)
    phi = np.asarray(azimuths, dtype=float)
    u = v[0] * np.cos(phi) + v[1] * np.sin(phi)
    return r + beta * u


def _doppler_correct_keypoints(kps: list, v: np.ndarray,
                               beta: float) -> list:
    out = []
    for kp in kps:
        r = float(doppler_correct(kp.range_m, kp.azimuth_rad, v, beta))
        out.append(Keypoint(azimuth_index=kp.azimuth_index,
                            range_index=kp.range_index,
                            timestamp=kp.timestamp, range_m=r,
                            azimuth_rad=kp.azimuth_rad,
                            cartesian=np.array([r * np.cos(kp.azimuth_rad),
                                                r * np.sin(kp.azimuth_rad)])))
    return out


def doppler_correct_matches(matches: MatchSet, velocity: BodyVelocity,
                            beta: float) -> MatchSet:
    """Doppler-correct both sides of a match set with the sensor velocity.

    Under the constant-velocity assumption both scans share the same
    sensor-frame velocity, so each keypoint is corrected with its own
    azimuth and the common (v_x, v_y).
    """
    v = velocity.nu[:2]
    return MatchSet(
        _doppler_correct_keypoints(matches.keypoints1, v, beta),
        _doppler_correct_keypoints(matches.keypoints2, v, beta),
        matches.distances.copy(),
        matches.reference_time1, matches.reference_time2)


def mc_ransac_doppler(matches: MatchSet, cfg: RansacConfig,
                      noise: MeasurementNoise | None = None,
                      beta: float = 0.049, max_passes: int = 3,
                      velocity_tolerance: float = 1e-6) -> EstimationResult:
    """MC-RANSAC coupled with Doppler correction via a fixed-point loop.

    Each pass corrects the original measured ranges with the latest velocity
    estimate and re-runs MC-RANSAC; the loop stops when the velocity change
    drops below tolerance or after ``max_passes`` passes.
    """
    current = matches
    prev_v = None
    result = None
    for _ in range(max_passes):
        result = mc_ransac(current, cfg, noise)
        v = result.velocity.nu[:2]
        if prev_v is not None and np.linalg.norm(v - prev_v) < velocity_tolerance:
            break
        prev_v = v
        current = doppler_correct_matches(matches, result.velocity, beta)
    return result
