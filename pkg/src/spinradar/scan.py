"""Radar scan data model, polar/Cartesian conversion, and scan file I/O.

A polar scan is one full rotation of a spinning FMCW radar: per-azimuth
timestamps, per-azimuth beam angles, and a (azimuths x range bins) power
matrix.  Range bin b is centered at b * range_resolution meters.

Native ``.prs`` byte layout (all little-endian):

    offset  size         field
    0       4            magic b"PRS1"
    4       4            uint32  azimuth count A
    8       4            uint32  range bin count R
    12      8            float64 rotation_rate (Hz)
    20      8            float64 range_resolution (m/bin)
    28      8            float64 beamwidth (rad)
    36      8            float64 transmit_freq (Hz, NaN if unset)
    44      8            float64 sweep_slope (Hz/s, NaN if unset)
    52      8            float64 beta (m per m/s, NaN if unset)
    60      8*A          float64 azimuth_angles (rad)
    60+8A   8*A          float64 azimuth_timestamps (s)
    60+16A  4*A*R        float32 power, row-major (azimuth-major)

Oxford-style row-image codec (constants from the public dataset convention,
one azimuth per image row):

    bytes 0-7    int64   timestamp in microseconds (UTC)
    bytes 8-9    uint16  azimuth word, angle = word / 5600 * 2*pi
    byte  10     uint8   valid flag
    bytes 11-    uint8   power bins, scaled to [0, 1]
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0

OXFORD_ENCODER_SIZE = 5600  # azimuth words per rotation
OXFORD_HEADER_BYTES = 11

_PRS_MAGIC = b"PRS1"
_PRS_HEADER = struct.Struct("<4sIIdddddd")


class ScanFormatError(ValueError):
    """Raised when a scan file cannot be decoded."""


@dataclass(frozen=True)
class RadarConfig:
    """Sensor profile of a spinning FMCW radar.

    beta = transmit_freq / sweep_slope converts radial velocity (m/s) into
    apparent range shift (m).  It may be given directly when the chirp
    constants are unknown; if all three are given they must be consistent.
    """

    rotation_rate: float = 4.0
    azimuths_per_rotation: int = 400
    range_resolution: float = 0.0432
    range_bins: int = 3773
    beamwidth: float = np.deg2rad(1.8)
    transmit_freq: float | None = None
    sweep_slope: float | None = None
    beta: float | None = None

    def __post_init__(self):
        if self.rotation_rate <= 0 or self.azimuths_per_rotation <= 0:
            raise ValueError("rotation_rate and azimuth count must be positive")
        if self.range_resolution <= 0 or self.range_bins <= 0:
            raise ValueError("range geometry must be positive")
        if self.beta is None and self.transmit_freq and self.sweep_slope:
            object.__setattr__(self, "beta",
                               self.transmit_freq / self.sweep_slope)
        elif (self.beta is not None and self.transmit_freq
              and self.sweep_slope):
            derived = self.transmit_freq / self.sweep_slope
            if abs(self.beta - derived) > 1e-12 * abs(derived):
                raise ValueError(
                    f"beta {self.beta} inconsistent with "
                    f"transmit_freq/sweep_slope = {derived}")

    @classmethod
    def navtech(cls) -> "RadarConfig":
        """Default profile: 4 Hz, 400 azimuths, 4.32 cm bins, beta 0.049."""
        return cls(rotation_rate=4.0, azimuths_per_rotation=400,
                   range_resolution=0.0432, range_bins=3773,
                   beamwidth=np.deg2rad(1.8), transmit_freq=76.5e9,
                   beta=0.049)

    @property
    def period(self) -> float:
        return 1.0 / self.rotation_rate

    @property
    def azimuth_step(self) -> float:
        return 2.0 * np.pi / self.azimuths_per_rotation

    @property
    def max_range(self) -> float:
        return self.range_bins * self.range_resolution

    @property
    def wavelength(self) -> float:
        if self.transmit_freq is None:
            raise ValueError("transmit_freq is unset")
        return SPEED_OF_LIGHT / self.transmit_freq

    def default_azimuth_angles(self) -> np.ndarray:
        A = self.azimuths_per_rotation
        return 2.0 * np.pi * np.arange(A) / A

    def azimuth_timestamps(self, start_time: float) -> np.ndarray:
        A = self.azimuths_per_rotation
        return start_time + np.arange(A) * (self.period / A)


def doppler_frequency(radial_velocity: float, transmit_freq: float) -> float:
    """Doppler shift f_d = 2 u / lambda for closing radial velocity u (m/s)."""
    return 2.0 * radial_velocity * transmit_freq / SPEED_OF_LIGHT


def doppler_range_shift(radial_velocity: float, transmit_freq: float,
                        sweep_slope: float) -> float:
    """Apparent FMCW range decrease caused by a closing radial velocity.

    Equals c * f_d / (2 * df/dt) = (f_t / (df/dt)) * u = beta * u.
    """
    f_d = doppler_frequency(radial_velocity, transmit_freq)
    return SPEED_OF_LIGHT * f_d / (2.0 * sweep_slope)


@dataclass(frozen=True)
class PolarScan:
    """One radar rotation: per-azimuth angles, timestamps, and power."""

    config: RadarConfig
    azimuth_angles: np.ndarray
    azimuth_timestamps: np.ndarray
    power: np.ndarray

    def __post_init__(self):
        angles = np.asarray(self.azimuth_angles, dtype=float).reshape(-1)
        times = np.asarray(self.azimuth_timestamps, dtype=float).reshape(-1)
        power = np.asarray(self.power, dtype=np.float32)
        A = self.config.azimuths_per_rotation
        R = self.config.range_bins
        if angles.shape != (A,) or times.shape != (A,):
            raise ValueError("angle/timestamp vectors must match azimuth count")
        if power.shape != (A, R):
            raise ValueError("power matrix must be (azimuths, range_bins)")
        if np.any(np.diff(times) <= 0):
            raise ValueError("azimuth timestamps must be strictly increasing")
        if times[-1] - times[0] > self.config.period * (1.0 + 1e-9):
            raise ValueError("timestamp span exceeds one rotation period")
        if np.any(angles < 0) or np.any(angles >= 2.0 * np.pi):
            raise ValueError("azimuth angles must lie in [0, 2*pi)")
        if np.any(power < 0):
            raise ValueError("power must be non-negative")
        object.__setattr__(self, "azimuth_angles", angles)
        object.__setattr__(self, "azimuth_timestamps", times)
        object.__setattr__(self, "power", power)

    @property
    def reference_time(self) -> float:
        """Scan reference time: timestamp of azimuth 0."""
        return float(self.azimuth_timestamps[0])


@dataclass(frozen=True)
class CartesianImage:
    """Square top-down raster of a scan.

    The sensor sits at the pixel-center (W-1)/2 in both axes; +x (azimuth 0)
    points right along increasing column, +y points up along decreasing row.
    """

    pixels: np.ndarray
    meters_per_pixel: float

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float32)
        if px.ndim != 2 or px.shape[0] != px.shape[1]:
            raise ValueError("pixels must be a square 2D grid")
        if self.meters_per_pixel <= 0:
            raise ValueError("meters_per_pixel must be positive")
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[0]

    @property
    def center(self) -> float:
        return (self.width - 1) / 2.0

    def point_to_pixel(self, xy: np.ndarray) -> np.ndarray:
        """Meters (..., 2) -> fractional (row, col)."""
        xy = np.asarray(xy, dtype=float)
        col = self.center + xy[..., 0] / self.meters_per_pixel
        row = self.center - xy[..., 1] / self.meters_per_pixel
        return np.stack([row, col], axis=-1)

    def pixel_to_point(self, rowcol: np.ndarray) -> np.ndarray:
        rowcol = np.asarray(rowcol, dtype=float)
        x = (rowcol[..., 1] - self.center) * self.meters_per_pixel
        y = (self.center - rowcol[..., 0]) * self.meters_per_pixel
        return np.stack([x, y], axis=-1)


def polar_to_cartesian_point(range_m, azimuth_rad) -> np.ndarray:
    """(r, phi) -> (x, y) = (r cos phi, r sin phi); broadcasts over arrays."""
    r = np.asarray(range_m, dtype=float)
    phi = np.asarray(azimuth_rad, dtype=float)
    if np.any(r < 0):
        raise ValueError("range must be non-negative")
    return np.stack([r * np.cos(phi), r * np.sin(phi)], axis=-1)


def cartesian_to_polar_point(p):
    """(x, y) -> (range, azimuth in [0, 2*pi)); broadcasts over (..., 2)."""
    p = np.asarray(p, dtype=float)
    r = np.hypot(p[..., 0], p[..., 1])
    if np.any(r == 0):
        raise ValueError("azimuth undefined at the origin")
    phi = np.mod(np.arctan2(p[..., 1], p[..., 0]), 2.0 * np.pi)
    return r, phi


def _azimuth_fractional_index(scan: PolarScan, phi: np.ndarray):
    """Fractional azimuth-row index for angles phi, with wraparound."""
    angles = scan.azimuth_angles
    A = angles.shape[0]
    ext = np.concatenate([angles, [angles[0] + 2.0 * np.pi]])
    phi_adj = np.where(phi >= angles[0], phi, phi + 2.0 * np.pi)
    k = np.clip(np.searchsorted(ext, phi_adj, side="right") - 1, 0, A - 1)
    width = ext[k + 1] - ext[k]
    frac = (phi_adj - ext[k]) / width
    return k % A, (k + 1) % A, frac


def render_cartesian(scan: PolarScan, width: int = 964,
                     meters_per_pixel: float = 0.2592,
                     interpolation: str = "bilinear") -> CartesianImage:
    """Rasterize a polar scan to a top-down Cartesian intensity image.

    Each output pixel samples the polar grid at its (range, azimuth); pixels
    beyond the maximum range are zero.
    """
    if width <= 0:
        raise ValueError("width must be positive")
    if interpolation not in ("bilinear", "nearest"):
        raise ValueError(f"unknown interpolation {interpolation!r}")
    c = (width - 1) / 2.0
    idx = np.arange(width)
    x = (idx[None, :] - c) * meters_per_pixel
    y = (c - idx[:, None]) * meters_per_pixel
    r = np.hypot(x, y)
    phi = np.mod(np.arctan2(y, x), 2.0 * np.pi)

    res = scan.config.range_resolution
    R = scan.config.range_bins
    valid = r <= scan.config.max_range
    rbin = r / res

    a0, a1, fa = _azimuth_fractional_index(scan, phi)
    if interpolation == "nearest":
        an = np.where(fa < 0.5, a0, a1)
        bn = np.clip(np.rint(rbin).astype(int), 0, R - 1)
        out = scan.power[an, bn]
    else:
        b0 = np.floor(rbin).astype(int)
        fb = rbin - b0
        b0c = np.clip(b0, 0, R - 1)
        b1c = np.clip(b0 + 1, 0, R - 1)
        p00 = scan.power[a0, b0c]
        p01 = scan.power[a0, b1c]
        p10 = scan.power[a1, b0c]
        p11 = scan.power[a1, b1c]
        out = ((1 - fa) * ((1 - fb) * p00 + fb * p01)
               + fa * ((1 - fb) * p10 + fb * p11))
    out = np.where(valid, out, 0.0).astype(np.float32)
    return CartesianImage(out, meters_per_pixel)


def save_scan(scan: PolarScan, path) -> None:
    """Write a scan in the native .prs format (lossless round trip)."""
    cfg = scan.config

    def _f(v):
        return np.nan if v is None else float(v)

    header = _PRS_HEADER.pack(
        _PRS_MAGIC, cfg.azimuths_per_rotation, cfg.range_bins,
        cfg.rotation_rate, cfg.range_resolution, cfg.beamwidth,
        _f(cfg.transmit_freq), _f(cfg.sweep_slope), _f(cfg.beta))
    with open(path, "wb") as f:
        f.write(header)
        f.write(scan.azimuth_angles.astype("<f8").tobytes())
        f.write(scan.azimuth_timestamps.astype("<f8").tobytes())
        f.write(scan.power.astype("<f4").tobytes())


def _load_native(path) -> PolarScan:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _PRS_HEADER.size:
        raise ScanFormatError(f"{path}: truncated header")
    magic, A, R, rate, res, bw, ft, slope, beta = _PRS_HEADER.unpack_from(raw)
    if magic != _PRS_MAGIC:
        raise ScanFormatError(f"{path}: bad magic {magic!r}")
    expected = _PRS_HEADER.size + 16 * A + 4 * A * R
    if len(raw) != expected:
        raise ScanFormatError(
            f"{path}: expected {expected} bytes, found {len(raw)}")

    def _opt(v):
        return None if np.isnan(v) else v

    cfg = RadarConfig(rotation_rate=rate, azimuths_per_rotation=A,
                      range_bins=R, range_resolution=res, beamwidth=bw,
                      transmit_freq=_opt(ft), sweep_slope=_opt(slope),
                      beta=_opt(beta))
    off = _PRS_HEADER.size
    angles = np.frombuffer(raw, "<f8", A, off).copy()
    times = np.frombuffer(raw, "<f8", A, off + 8 * A).copy()
    power = np.frombuffer(raw, "<f4", A * R, off + 16 * A).reshape(A, R).copy()
    try:
        return PolarScan(cfg, angles, times, power)
    except ValueError as e:
        raise ScanFormatError(f"{path}: {e}") from e


def decode_oxford_rows(rows: np.ndarray,
                       config: RadarConfig | None = None) -> PolarScan:
    """Decode an Oxford-style row image (uint8, one azimuth per row)."""
    rows = np.asarray(rows)
    if rows.ndim != 2 or rows.dtype != np.uint8:
        raise ScanFormatError("expected a 2D uint8 row image")
    if rows.shape[1] <= OXFORD_HEADER_BYTES:
        raise ScanFormatError(
            f"row length {rows.shape[1]} too short for the 11-byte header")
    A = rows.shape[0]
    R = rows.shape[1] - OXFORD_HEADER_BYTES
    if config is None:
        base = RadarConfig.navtech()
        config = RadarConfig(rotation_rate=base.rotation_rate,
                             azimuths_per_rotation=A, range_bins=R,
                             range_resolution=base.range_resolution,
                             beamwidth=base.beamwidth,
                             transmit_freq=base.transmit_freq,
                             beta=base.beta)
    timestamps_us = rows[:, :8].copy().view("<i8").reshape(A)
    words = rows[:, 8:10].copy().view("<u2").reshape(A)
    angles = words.astype(float) / OXFORD_ENCODER_SIZE * 2.0 * np.pi
    power = rows[:, OXFORD_HEADER_BYTES:].astype(np.float32) / 255.0
    times = timestamps_us.astype(float) * 1e-6
    try:
        return PolarScan(config, angles, times, power)
    except ValueError as e:
        raise ScanFormatError(str(e)) from e


def _load_oxford(path) -> PolarScan:
    from PIL import Image

    with Image.open(path) as im:
        rows = np.array(im)
    if rows.ndim == 3:
        rows = rows[:, :, 0]
    return decode_oxford_rows(rows.astype(np.uint8))


def load_scan(path, format: str = "native") -> PolarScan:
    """Load a scan from disk; format is 'native' or 'oxford-png-rows'."""
    if format == "native":
        return _load_native(path)
    if format == "oxford-png-rows":
        return _load_oxford(path)
    raise ScanFormatError(f"unknown scan format {format!r}")
