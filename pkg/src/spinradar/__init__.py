"""Spinning FMCW radar ego-motion estimation with motion-distortion and
Doppler compensation, plus a synthetic scan simulator for ground-truth
testing."""

from .se3 import (BodyVelocity, Pose, Twist, exp_se3, log_se3, odot,
                  velocity_to_transform, wedge_se3, wedge_so3)
from .scan import (CartesianImage, PolarScan, RadarConfig, ScanFormatError,
                   cartesian_to_polar_point, doppler_frequency,
                   doppler_range_shift, load_scan, polar_to_cartesian_point,
                   render_cartesian, save_scan)
from .features import (Descriptor, DetectorConfig, Keypoint, MatchSet,
                       compute_binary_descriptors, compute_rsd,
                       compute_rsd_all, detect_cen2018, match_descriptors)
from .simulate import (SimScanPair, SimScene, exact_matches, oracle_matches,
                       simulate_pair, simulate_scan, undistort_points,
                       undistort_scan)
from .estimate import (DegenerateGeometryError, EstimationError,
                       EstimationResult, MeasurementNoise,
                       NonConvergenceError, RansacConfig, align_rigid_svd,
                       doppler_correct, gauss_newton_velocity, mc_ransac,
                       mc_ransac_doppler, ransac_rigid)
from .evaluate import (DriftReport, LocalizationReport, Trajectory, compound,
                       evaluate_localization, kitti_drift)

__version__ = "0.1.0"
