"""Trajectory compounding, KITTI-style drift metrics, localization statistics.

Drift is averaged over every subsequence of path length 100..800 m (start
positions advance one frame at a time) and reported as translation percent
and rotation in degrees per meter, with per-length and per-speed breakdowns.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .se3 import Pose, log_se3

KITTI_LENGTHS = (100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0)
SPEED_BUCKET_WIDTH = 2.5  # m/s


@dataclass
class Trajectory:
    """Ordered (timestamp, Pose) samples in a common world frame."""

    timestamps: np.ndarray
    poses: list

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=float).reshape(-1)
        if self.timestamps.shape[0] != len(self.poses):
            raise ValueError("timestamps and poses must align")
        if np.any(np.diff(self.timestamps) <= 0):
            raise ValueError("timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.poses)


@dataclass
class DriftReport:
    """KITTI-style drift summary."""

    translational_error_pct: float
    rotational_error_deg_per_m: float
    per_length: dict = field(default_factory=dict)   # L -> (t%, deg/m, n)
    per_speed: dict = field(default_factory=dict)    # bucket m/s -> (t%, deg/m, n)
    num_segments: int = 0


@dataclass
class LocalizationReport:
    """Median localization errors plus full histogram data."""

    median_translation_m: float
    median_rotation_deg: float
    translation_errors: np.ndarray
    rotation_errors_deg: np.ndarray
    translation_hist: tuple = ()
    rotation_hist: tuple = ()


def compound(relative) -> Trajectory:
    """Chain frame-to-frame results into a world trajectory.

    ``relative`` is a list of (dt, Pose) where each Pose maps points from the
    earlier scan's frame into the later one's; the world pose advances by
    T_k = T_{k-1} @ inverse(T_rel).  The first pose is the identity at t=0.
    """
    if not relative:
        raise ValueError("need at least one relative pose")
    times = [0.0]
    poses = [Pose.identity()]
    for dt, T_rel in relative:
        times.append(times[-1] + dt)
        poses.append(poses[-1] @ T_rel.inverse())
    return Trajectory(np.array(times), poses)


def _path_distances(traj: Trajectory) -> np.ndarray:
    pts = np.array([p.translation for p in traj.poses])
    steps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(steps)])


def _segment_end(dist: np.ndarray, start: int, length: float) -> int:
    target = dist[start] + length
    j = int(np.searchsorted(dist, target))
    return j if j < dist.shape[0] else -1


def kitti_drift(estimated: Trajectory, truth: Trajectory,
                lengths=KITTI_LENGTHS) -> DriftReport:
    """Average endpoint drift over all subsequences of the given lengths.

    Trajectories must be time-aligned sample for sample.  Per-segment errors
    are the relative-pose discrepancy between the estimated and true endpoint
    motions, normalized by the true segment length.
    """
    if len(estimated) != len(truth):
        raise ValueError("trajectories must have the same frame count")
    dist = _path_distances(truth)
    t_errs, r_errs, seg_len, seg_speed = [], [], [], []
    for start in range(len(truth)):
        for L in lengths:
            end = _segment_end(dist, start, L)
            if end < 0:
                break
            gt_rel = truth.poses[start].inverse() @ truth.poses[end]
            est_rel = estimated.poses[start].inverse() @ estimated.poses[end]
            err = gt_rel.inverse() @ est_rel
            length = dist[end] - dist[start]
            t_err = float(np.linalg.norm(err.translation)) / length
            cos_a = np.clip((np.trace(err.rotation) - 1.0) / 2.0, -1.0, 1.0)
            r_err = float(np.arccos(cos_a)) / length
            duration = truth.timestamps[end] - truth.timestamps[start]
            t_errs.append(t_err)
            r_errs.append(r_err)
            seg_len.append(L)
            seg_speed.append(length / duration)
    if not t_errs:
        return DriftReport(0.0, 0.0, {}, {}, 0)
    t_errs = np.array(t_errs)
    r_errs = np.array(r_errs)
    seg_len = np.array(seg_len)
    seg_speed = np.array(seg_speed)

    per_length = {}
    for L in lengths:
        m = seg_len == L
        if np.any(m):
            per_length[L] = (float(t_errs[m].mean()) * 100.0,
                             float(np.rad2deg(r_errs[m].mean())), int(m.sum()))
    per_speed = {}
    buckets = np.floor(seg_speed / SPEED_BUCKET_WIDTH) * SPEED_BUCKET_WIDTH
    for b in np.unique(buckets):
        m = buckets == b
        per_speed[float(b)] = (float(t_errs[m].mean()) * 100.0,
                               float(np.rad2deg(r_errs[m].mean())),
                               int(m.sum()))
    return DriftReport(
        translational_error_pct=float(t_errs.mean()) * 100.0,
        rotational_error_deg_per_m=float(np.rad2deg(r_errs.mean())),
        per_length=per_length, per_speed=per_speed,
        num_segments=len(t_errs))


def evaluate_localization(pairs, hist_bin_m: float = 0.1,
                          hist_bin_deg: float = 0.1) -> LocalizationReport:
    """Median translation/rotation errors over (estimated, truth) pose pairs."""
    if not pairs:
        raise ValueError("need at least one pose pair")
    t_errs, r_errs = [], []
    for est, gt in pairs:
        err = gt.inverse() @ est
        xi = log_se3(err)
        t_errs.append(float(np.linalg.norm(err.translation[:2])))
        r_errs.append(abs(float(np.rad2deg(xi.phi[2]))))
    t_errs = np.array(t_errs)
    r_errs = np.array(r_errs)
    t_edges = np.arange(0.0, t_errs.max() + 2 * hist_bin_m, hist_bin_m)
    r_edges = np.arange(0.0, r_errs.max() + 2 * hist_bin_deg, hist_bin_deg)
    return LocalizationReport(
        median_translation_m=float(np.median(t_errs)),
        median_rotation_deg=float(np.median(r_errs)),
        translation_errors=t_errs, rotation_errors_deg=r_errs,
        translation_hist=np.histogram(t_errs, bins=t_edges),
        rotation_hist=np.histogram(r_errs, bins=r_edges))


def save_trajectory_csv(path, traj: Trajectory) -> None:
    """Rows: timestamp then the first 3 rows of the 4x4 pose, row-major."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        for t, pose in zip(traj.timestamps, traj.poses):
            row = [repr(float(t))]
            row += [repr(float(v)) for v in pose.matrix[:3].reshape(-1)]
            writer.writerow(row)


def load_trajectory_csv(path) -> Trajectory:
    times, poses = [], []
    with open(path, newline="") as f:
        for row in csv.reader(f):
            if not row:
                continue
            vals = [float(v) for v in row]
            if len(vals) != 13:
                raise ValueError(
                    f"{path}: expected 13 values per row, found {len(vals)}")
            times.append(vals[0])
            T = np.eye(4)
            T[:3] = np.array(vals[1:]).reshape(3, 4)
            poses.append(Pose.from_matrix(T))
    return Trajectory(np.array(times), poses)


def save_drift_report_csv(path, report: DriftReport) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["section", "key", "translational_error_pct",
                         "rotational_error_deg_per_m", "num_segments"])
        writer.writerow(["overall", "", repr(report.translational_error_pct),
                         repr(report.rotational_error_deg_per_m),
                         report.num_segments])
        for L, (t, r, n) in sorted(report.per_length.items()):
            writer.writerow(["length", repr(float(L)), repr(t), repr(r), n])
        for b, (t, r, n) in sorted(report.per_speed.items()):
            writer.writerow(["speed", repr(float(b)), repr(t), repr(r), n])


def save_localization_report_csv(path, report: LocalizationReport) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["median_translation_m", "median_rotation_deg"])
        writer.writerow([repr(report.median_translation_m),
                         repr(report.median_rotation_deg)])
        writer.writerow([])
        writer.writerow(["translation_error_m", "rotation_error_deg"])
        for t, r in zip(report.translation_errors, report.rotation_errors_deg):
            writer.writerow([repr(float(t)), repr(float(r))])


def plot_drift(report: DriftReport, path) -> None:
    """Drift vs length and vs speed as a self-contained SVG."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    # Fixed hash salt keeps the SVG element ids, and so the file bytes,
    # identical between runs.
    plt.rcParams["svg.hashsalt"] = "spinradar"
    fig, axes = plt.subplots(2, 2, figsize=(9, 6))
    ls = sorted(report.per_length)
    ss = sorted(report.per_speed)
    axes[0, 0].plot(ls, [report.per_length[k][0] for k in ls], "o-")
    axes[0, 0].set_xlabel("path length (m)")
    axes[0, 0].set_ylabel("translation error (%)")
    axes[0, 1].plot(ls, [report.per_length[k][1] for k in ls], "o-")
    axes[0, 1].set_xlabel("path length (m)")
    axes[0, 1].set_ylabel("rotation error (deg/m)")
    axes[1, 0].plot(ss, [report.per_speed[k][0] for k in ss], "s-")
    axes[1, 0].set_xlabel("speed (m/s)")
    axes[1, 0].set_ylabel("translation error (%)")
    axes[1, 1].plot(ss, [report.per_speed[k][1] for k in ss], "s-")
    axes[1, 1].set_xlabel("speed (m/s)")
    axes[1, 1].set_ylabel("rotation error (deg/m)")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_localization(report: LocalizationReport, path) -> None:
    """Error histograms as a self-contained SVG."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "spinradar"
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    counts, edges = report.translation_hist
    axes[0].bar(edges[:-1], counts, width=np.diff(edges), align="edge")
    axes[0].set_xlabel("translation error (m)")
    axes[0].set_ylabel("count")
    counts, edges = report.rotation_hist
    axes[1].bar(edges[:-1], counts, width=np.diff(edges), align="edge")
    axes[1].set_xlabel("rotation error (deg)")
    axes[1].set_ylabel("count")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
