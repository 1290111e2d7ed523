"""Keypoint detection, descriptors, and matching for spinning radar scans.

Detection runs on the polar scan (modified Cen2018: per-azimuth mean
subtraction, Gaussian smoothing, noise-normalized thresholding).  The binary
patch descriptor is an oriented BRIEF-style descriptor computed on the
Cartesian rendering; the Radial Statistics Descriptor (RSD) is a range
histogram of neighboring detections, invariant to rigid rotation about the
keypoint.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter, gaussian_filter1d

from .scan import CartesianImage, PolarScan, polar_to_cartesian_point

log = logging.getLogger(__name__)

BINARY_DESCRIPTOR_BITS = 256
_PATCH_PATTERN_SEED = 20180214  # fixed so descriptors are bit-reproducible


def _make_test_pattern(n_bits: int, patch_radius: int) -> np.ndarray:
    """Seeded BRIEF-style test pattern: (n_bits, 4) pixel offset pairs."""
    rng = np.random.default_rng(_PATCH_PATTERN_SEED)
    sigma = patch_radius / 2.0
    pts = rng.normal(0.0, sigma, size=(n_bits, 4))
    return np.clip(np.rint(pts), -patch_radius, patch_radius).astype(int)


_TEST_PATTERN = _make_test_pattern(BINARY_DESCRIPTOR_BITS, 10)


@dataclass(frozen=True)
class Keypoint:
    """A detection in one scan, carrying its azimuth's timestamp."""

    azimuth_index: int
    range_index: int
    timestamp: float
    range_m: float
    azimuth_rad: float
    cartesian: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "cartesian",
                           np.asarray(self.cartesian, dtype=float).reshape(2))

    @classmethod
    def from_indices(cls, scan: PolarScan, azimuth_index: int,
                     range_index: int) -> "Keypoint":
        r = range_index * scan.config.range_resolution
        phi = float(scan.azimuth_angles[azimuth_index])
        return cls(azimuth_index=azimuth_index, range_index=range_index,
                   timestamp=float(scan.azimuth_timestamps[azimuth_index]),
                   range_m=r, azimuth_rad=phi,
                   cartesian=polar_to_cartesian_point(r, phi))


@dataclass(frozen=True)
class Descriptor:
    """Either a 256-bit binary patch descriptor or an RSD histogram."""

    kind: str
    data: np.ndarray

    def __post_init__(self):
        if self.kind not in ("binary-patch", "rsd"):
            raise ValueError(f"unknown descriptor kind {self.kind!r}")


@dataclass(frozen=True)
class DetectorConfig:
    """Modified Cen2018 parameters (probability threshold, smoothing)."""

    z_q: float = 3.0
    gaussian_sigma: float = 17.0
    max_points_per_azimuth: int = 12

    def __post_init__(self):
        if self.z_q <= 0 or self.gaussian_sigma <= 0:
            raise ValueError("z_q and gaussian_sigma must be positive")


@dataclass
class MatchSet:
    """Associated keypoint pairs with per-point timestamps.

    reference_time1/2 are the scan reference times (azimuth 0) that the
    estimated transform is reported between.
    """

    keypoints1: list
    keypoints2: list
    distances: np.ndarray = field(default_factory=lambda: np.zeros(0))
    reference_time1: float = 0.0
    reference_time2: float = 0.0

    def __post_init__(self):
        if len(self.keypoints1) != len(self.keypoints2):
            raise ValueError("keypoint lists must be the same length")
        self.distances = np.asarray(self.distances, dtype=float).reshape(-1)
        if self.distances.size == 0:
            self.distances = np.zeros(len(self.keypoints1))
        if self.distances.shape[0] != len(self.keypoints1):
            raise ValueError("distances must match the number of pairs")

    def __len__(self) -> int:
        return len(self.keypoints1)

    @property
    def p1(self) -> np.ndarray:
        return np.array([k.cartesian for k in self.keypoints1]).reshape(-1, 2)

    @property
    def p2(self) -> np.ndarray:
        return np.array([k.cartesian for k in self.keypoints2]).reshape(-1, 2)

    @property
    def t1(self) -> np.ndarray:
        return np.array([k.timestamp for k in self.keypoints1])

    @property
    def t2(self) -> np.ndarray:
        return np.array([k.timestamp for k in self.keypoints2])

    @property
    def dt(self) -> np.ndarray:
        """Per-pair temporal difference t2 - t1."""
        return self.t2 - self.t1

    def polar(self, which: int) -> np.ndarray:
        """(M, 2) array of (range, azimuth) for scan 1 or 2."""
        kps = self.keypoints1 if which == 1 else self.keypoints2
        return np.array([[k.range_m, k.azimuth_rad] for k in kps]).reshape(-1, 2)

    def subset(self, indices) -> "MatchSet":
        idx = np.asarray(indices, dtype=int)
        return MatchSet([self.keypoints1[i] for i in idx],
                        [self.keypoints2[i] for i in idx],
                        self.distances[idx],
                        self.reference_time1, self.reference_time2)


def detect_cen2018(scan: PolarScan,
                   cfg: DetectorConfig = DetectorConfig()) -> list:
    """Modified Cen2018 keypoint detector.

    Per azimuth: subtract the azimuth mean, smooth with a Gaussian filter,
    z-normalize by the standard deviation of the below-zero smoothed samples,
    and keep strict 3-bin local maxima whose score exceeds z_q.
    """
    power = scan.power.astype(np.float64)
    centered = power - power.mean(axis=1, keepdims=True)
    smoothed = gaussian_filter1d(centered, cfg.gaussian_sigma, axis=1,
                                 mode="nearest")

    keypoints: list[Keypoint] = []
    for a in range(power.shape[0]):
        s = smoothed[a]
        neg = s[s < 0]
        if neg.size < 2:
            continue
        scale = float(np.std(neg))
        if scale <= 0:
            continue
        z = s / scale
        interior = z[1:-1]
        is_max = (interior > z[:-2]) & (interior > z[2:]) & (interior > cfg.z_q)
        bins = np.flatnonzero(is_max) + 1
        if bins.size > cfg.max_points_per_azimuth:
            order = np.argsort(z[bins])[::-1][:cfg.max_points_per_azimuth]
            bins = np.sort(bins[order])
        for b in bins:
            keypoints.append(Keypoint.from_indices(scan, a, int(b)))
    return keypoints


def _patch_orientation(image: np.ndarray, row: int, col: int,
                       radius: int) -> float:
    """Intensity-centroid orientation of the patch, in image x-y (x right, y up)."""
    patch = image[row - radius:row + radius + 1,
                  col - radius:col + radius + 1]
    offs = np.arange(-radius, radius + 1, dtype=float)
    m10 = float(np.sum(patch * offs[None, :]))   # x moment (columns)
    m01 = float(np.sum(patch * (-offs)[:, None]))  # y moment (rows point down)
    return float(np.arctan2(m01, m10))


def compute_binary_descriptors(image: CartesianImage, keypoints: list,
                               patch_size: int = 21,
                               smoothing_sigma: float = 2.0):
    """Oriented binary patch descriptors on the Cartesian image.

    Returns (kept_keypoints, descriptors); keypoints whose (rotated) patch
    would leave the image are dropped with a log notice.
    """
    if patch_size % 2 != 1:
        raise ValueError("patch_size must be odd")
    radius = patch_size // 2
    # Rotated test points can reach radius * sqrt(2) from the center.
    margin = int(np.ceil(radius * np.sqrt(2.0))) + 1
    img = gaussian_filter(image.pixels.astype(np.float64), smoothing_sigma)
    W = image.width

    pattern = _TEST_PATTERN
    kept, descriptors = [], []
    dropped = 0
    for kp in keypoints:
        rc = image.point_to_pixel(kp.cartesian)
        row, col = int(np.rint(rc[0])), int(np.rint(rc[1]))
        if not (margin <= row < W - margin and margin <= col < W - margin):
            dropped += 1
            continue
        theta = _patch_orientation(img, row, col, radius)
        c, s = np.cos(theta), np.sin(theta)
        # Rotate the (dx, dy) sampling offsets by the patch orientation.
        dx1, dy1 = pattern[:, 0], pattern[:, 1]
        dx2, dy2 = pattern[:, 2], pattern[:, 3]
        rx1 = np.rint(c * dx1 - s * dy1).astype(int)
        ry1 = np.rint(s * dx1 + c * dy1).astype(int)
        rx2 = np.rint(c * dx2 - s * dy2).astype(int)
        ry2 = np.rint(s * dx2 + c * dy2).astype(int)
        # Image y points up, rows point down.
        i1 = img[row - ry1, col + rx1]
        i2 = img[row - ry2, col + rx2]
        bits = (i1 < i2)
        kept.append(kp)
        descriptors.append(Descriptor("binary-patch", np.packbits(bits)))
    if dropped:
        log.info("dropped %d keypoints outside descriptor bounds", dropped)
    return kept, descriptors


def compute_rsd(keypoints: list, query: Keypoint,
                num_range_bins: int = 16, radius: float = 20.0,
                num_azimuth_slices: int = 8,
                include_azimuth: bool = False) -> Descriptor:
    """Radial Statistics Descriptor around ``query``.

    Counts neighboring detections in ``num_range_bins`` annuli out to
    ``radius`` meters and normalizes the histogram to unit sum.  The optional
    azimuth component stores FFT magnitudes of the bearing histogram so it
    stays rotation-invariant; by default only the range histogram is used.
    """
    pts = np.array([k.cartesian for k in keypoints]).reshape(-1, 2)
    d = pts - query.cartesian
    dist = np.hypot(d[:, 0], d[:, 1])
    neighbors = (dist > 1e-9) & (dist <= radius)
    hist, _ = np.histogram(dist[neighbors], bins=num_range_bins,
                           range=(0.0, radius))
    hist = hist.astype(float)
    total = hist.sum()
    if total > 0:
        hist /= total
    if include_azimuth:
        bearings = np.arctan2(d[neighbors, 1], d[neighbors, 0])
        az_hist, _ = np.histogram(bearings, bins=num_azimuth_slices,
                                  range=(-np.pi, np.pi))
        az = np.abs(np.fft.rfft(az_hist.astype(float)))
        if az_hist.sum() > 0:
            az /= az_hist.sum()
        hist = np.concatenate([hist, az])
    return Descriptor("rsd", hist)


def compute_rsd_all(keypoints: list, **kwargs) -> list:
    """RSD descriptors for every keypoint against the full detection set."""
    return [compute_rsd(keypoints, kp, **kwargs) for kp in keypoints]


def _distance_matrix(d1: list, d2: list) -> np.ndarray:
    kind = d1[0].kind
    if any(d.kind != kind for d in d1 + d2):
        raise ValueError("descriptor kind mismatch between lists")
    if kind == "binary-patch":
        m1 = np.stack([d.data for d in d1])
        m2 = np.stack([d.data for d in d2])
        xor = np.bitwise_xor(m1[:, None, :], m2[None, :, :])
        return np.unpackbits(xor, axis=2).sum(axis=2).astype(float)
    m1 = np.stack([d.data for d in d1])
    m2 = np.stack([d.data for d in d2])
    diff = m1[:, None, :] - m2[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=2))


def match_descriptors(kps1: list, d1: list, kps2: list, d2: list,
                      nndr: float = 0.8, mutual: bool = True,
                      reference_time1: float = 0.0,
                      reference_time2: float = 0.0) -> MatchSet:
    """Brute-force matching with a nearest-neighbor distance ratio test.

    A query keeps its nearest neighbor j* only if dist(j*) < nndr * dist(j**)
    for the second-nearest j**; with ``mutual`` the pair must also be the
    best match in the reverse direction.
    """
    if not 0.0 < nndr <= 1.0:
        raise ValueError("nndr must lie in (0, 1]")
    if not d1 or not d2:
        return MatchSet([], [], np.zeros(0), reference_time1, reference_time2)
    D = _distance_matrix(d1, d2)
    best_j = np.argmin(D, axis=1)
    best_i = np.argmin(D, axis=0)
    kps_a, kps_b, dists = [], [], []
    for i in range(D.shape[0]):
        j = best_j[i]
        if D.shape[1] >= 2:
            two = np.partition(D[i], 1)[:2]
            if not two[0] < nndr * two[1]:
                continue
        if mutual and best_i[j] != i:
            continue
        kps_a.append(kps1[i])
        kps_b.append(kps2[j])
        dists.append(D[i, j])
    return MatchSet(kps_a, kps_b, np.array(dists),
                    reference_time1, reference_time2)


def save_keypoints_csv(path, scan_id, keypoints: list) -> None:
    """Debug/evaluation dump: scan id, azimuth idx, range idx, t, x, y."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["scan_id", "azimuth_index", "range_index",
                         "timestamp", "x", "y"])
        for kp in keypoints:
            writer.writerow([scan_id, kp.azimuth_index, kp.range_index,
                             repr(kp.timestamp),
                             repr(float(kp.cartesian[0])),
                             repr(float(kp.cartesian[1]))])


def save_matches_csv(path, matches: MatchSet) -> None:
    """Dump matched pairs: per-side indices, timestamps, and positions."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["az1", "bin1", "t1", "x1", "y1",
                         "az2", "bin2", "t2", "x2", "y2", "distance"])
        for k1, k2, d in zip(matches.keypoints1, matches.keypoints2,
                             matches.distances):
            writer.writerow([
                k1.azimuth_index, k1.range_index, repr(k1.timestamp),
                repr(float(k1.cartesian[0])), repr(float(k1.cartesian[1])),
                k2.azimuth_index, k2.range_index, repr(k2.timestamp),
                repr(float(k2.cartesian[0])), repr(float(k2.cartesian[1])),
                repr(float(d))])
