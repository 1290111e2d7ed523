"""Batch command-line entry point: simulate, odometry, localize, undistort, eval.

Every command resolves its configuration (YAML file plus flag overrides,
flags win), writes a manifest.json with the resolved values, and produces
deterministic primary outputs for a fixed seed.  Exit codes: 0 success,
1 configuration error, 2 data error, 3 estimation hard failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .estimate import (EstimationError, MeasurementNoise, RansacConfig,
                       mc_ransac, mc_ransac_doppler, ransac_rigid)
from .evaluate import (Trajectory, compound, evaluate_localization,
                       kitti_drift, load_trajectory_csv, plot_drift,
                       plot_localization, save_drift_report_csv,
                       save_localization_report_csv, save_trajectory_csv)
from .features import (DetectorConfig, compute_binary_descriptors,
                       compute_rsd_all, detect_cen2018, match_descriptors,
                       save_keypoints_csv)
from .scan import (PolarScan, RadarConfig, ScanFormatError, load_scan,
                   render_cartesian, save_scan)
from .se3 import BodyVelocity, Pose, velocity_to_transform
from .simulate import SimScene, simulate_scan, undistort_points

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_ESTIMATION = 3

DEFAULT_BETA = 0.049


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse failures are config errors (exit 1)
        raise ConfigError(message)


def _load_yaml(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    with open(p) as f:
        data = yaml.safe_load(f) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    return data


def _write_manifest(outdir: Path, command: str, config: dict,
                    outputs: list, elapsed: float) -> None:
    manifest = {
        "tool": "spinradar",
        "version": __version__,
        "command": command,
        "config": config,
        "outputs": [str(o) for o in outputs],
        "elapsed_seconds": elapsed,
    }
    with open(outdir / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def _radar_config(overrides: dict | None) -> RadarConfig:
    base = RadarConfig.navtech()
    if not overrides:
        return base
    fields = {
        "rotation_rate": base.rotation_rate,
        "azimuths_per_rotation": base.azimuths_per_rotation,
        "range_resolution": base.range_resolution,
        "range_bins": base.range_bins,
        "beamwidth": base.beamwidth,
        "transmit_freq": base.transmit_freq,
        "sweep_slope": base.sweep_slope,
        "beta": base.beta,
    }
    unknown = set(overrides) - set(fields)
    if unknown:
        raise ConfigError(f"unknown radar config keys: {sorted(unknown)}")
    fields.update(overrides)
    return RadarConfig(**fields)


def _scene_from_config(cfg: dict) -> tuple[SimScene, RadarConfig, dict]:
    if "velocity" not in cfg:
        raise ConfigError("scene file must define 'velocity: [vx, vy, wz]'")
    vx, vy, wz = (float(v) for v in cfg["velocity"])
    velocity = BodyVelocity.planar(vx, vy, wz)
    lm_spec = cfg.get("landmarks")
    noise = cfg.get("noise", {}) or {}
    kwargs = dict(range_sigma=float(noise.get("range_sigma", 0.0)),
                  dropout=float(noise.get("dropout", 0.0)))
    if isinstance(lm_spec, dict):
        scene = SimScene.random(
            int(lm_spec.get("count", 100)), velocity,
            max_radius=float(lm_spec.get("max_radius", 80.0)),
            min_radius=float(lm_spec.get("min_radius", 5.0)),
            seed=int(lm_spec.get("seed", 0)), **kwargs)
    elif isinstance(lm_spec, list) and lm_spec:
        scene = SimScene(np.asarray(lm_spec, dtype=float), velocity, **kwargs)
    else:
        raise ConfigError("scene file must define 'landmarks'")
    radar = _radar_config(cfg.get("radar"))
    return scene, radar, cfg


# ---------------------------------------------------------------------------
# Shared estimation pipeline


def _detector_config(args) -> DetectorConfig:
    return DetectorConfig(z_q=args.z_q, gaussian_sigma=args.gaussian_sigma,
                          max_points_per_azimuth=args.max_points_per_azimuth)


def _scan_matches(scan1: PolarScan, scan2: PolarScan, args,
                  descriptor: str | None = None):
    if descriptor is None:
        descriptor = args.descriptor
    det_cfg = _detector_config(args)
    kps1 = detect_cen2018(scan1, det_cfg)
    kps2 = detect_cen2018(scan2, det_cfg)
    if descriptor == "binary":
        img1 = render_cartesian(scan1, args.cart_width, args.cart_resolution)
        img2 = render_cartesian(scan2, args.cart_width, args.cart_resolution)
        kps1, d1 = compute_binary_descriptors(img1, kps1)
        kps2, d2 = compute_binary_descriptors(img2, kps2)
    elif descriptor == "rsd":
        d1 = compute_rsd_all(kps1)
        d2 = compute_rsd_all(kps2)
    else:
        raise ConfigError(f"unknown descriptor {descriptor!r}")
    return match_descriptors(kps1, d1, kps2, d2, nndr=args.nndr,
                             reference_time1=scan1.reference_time,
                             reference_time2=scan2.reference_time)


def _run_estimator(matches, estimator: str, seed: int, beta: float):
    cfg = RansacConfig(seed=seed)
    noise = MeasurementNoise()
    if estimator == "rigid":
        return ransac_rigid(matches, cfg)
    if estimator == "mc":
        return mc_ransac(matches, cfg, noise)
    if estimator == "mc+doppler":
        return mc_ransac_doppler(matches, cfg, noise, beta=beta)
    raise ConfigError(f"unknown estimator {estimator!r}")


def _beta_of(scan: PolarScan) -> float:
    return scan.config.beta if scan.config.beta is not None else DEFAULT_BETA


# ---------------------------------------------------------------------------
# Commands


def cmd_simulate(args) -> int:
    t0 = time.perf_counter()
    cfg = _load_yaml(args.scene)
    scene, radar, raw = _scene_from_config(cfg)
    num_scans = int(raw.get("num_scans", 2))
    doppler = bool(raw.get("doppler", True))
    distortion = bool(raw.get("distortion", True))
    seed = args.seed if args.seed is not None else int(raw.get("seed", 0))
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)

    outputs = []
    times, poses = [], []
    w = scene.velocity
    for k in range(num_scans):
        t_start = k * radar.period
        pose = velocity_to_transform(w, t_start)
        scan = simulate_scan(scene, pose, t_start, radar,
                             doppler_on=doppler, distortion_on=distortion,
                             seed=seed + k)
        path = outdir / f"scan_{k:04d}.prs"
        save_scan(scan, path)
        outputs.append(path)
        times.append(scan.reference_time)
        poses.append(pose.inverse())  # sensor pose in the world frame
    truth_path = outdir / "truth.csv"
    save_trajectory_csv(truth_path, Trajectory(np.array(times), poses))
    outputs.append(truth_path)
    _write_manifest(outdir, "simulate",
                    {"scene": raw, "seed": seed, "out": str(outdir)},
                    outputs, time.perf_counter() - t0)
    return EXIT_OK


def _load_scans(paths) -> list:
    scans = []
    for p in paths:
        if not Path(p).is_file():
            raise DataError(f"scan file not found: {p}")
        scans.append(load_scan(p))
    return scans


def cmd_odometry(args) -> int:
    t0 = time.perf_counter()
    scan_dir = Path(args.scans)
    if not scan_dir.is_dir():
        raise ConfigError(f"scan directory not found: {args.scans}")
    paths = sorted(scan_dir.glob("*.prs"))
    if len(paths) < 2:
        raise DataError(f"need at least 2 scans in {args.scans}, "
                        f"found {len(paths)}")
    scans = _load_scans(paths)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)

    relatives = []
    rows = []
    failures = 0
    for k in range(len(scans) - 1):
        s1, s2 = scans[k], scans[k + 1]
        pair_seed = args.seed + k
        status = "ok"
        try:
            matches = _scan_matches(s1, s2, args)
            result = _run_estimator(matches, args.estimator, pair_seed,
                                    _beta_of(s1))
            T = result.transform
            n_matches = len(matches)
            n_inliers = int(result.inlier_indices.size)
        except EstimationError:
            # Keep the sequence alive: degrade to an identity relative pose.
            T = Pose.identity()
            n_matches, n_inliers = 0, 0
            failures += 1
            status = "failed"
        dt = s2.reference_time - s1.reference_time
        relatives.append((dt, T))
        row = [k, status, n_matches, n_inliers]
        row += [repr(float(v)) for v in T.matrix[:3].reshape(-1)]
        rows.append(row)

    traj = compound(relatives)
    traj_path = outdir / "trajectory.csv"
    save_trajectory_csv(traj_path, traj)
    pairs_path = outdir / "pairs.csv"
    with open(pairs_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["pair", "status", "matches", "inliers"]
                        + [f"T{i}{j}" for i in range(3) for j in range(4)])
        writer.writerows(rows)
    _write_manifest(outdir, "odometry",
                    {"scans": str(scan_dir), "estimator": args.estimator,
                     "seed": args.seed, "nndr": args.nndr,
                     "descriptor": args.descriptor,
                     "z_q": args.z_q, "gaussian_sigma": args.gaussian_sigma,
                     "cart_width": args.cart_width,
                     "cart_resolution": args.cart_resolution,
                     "failures": failures},
                    [traj_path, pairs_path], time.perf_counter() - t0)
    if failures:
        print(f"odometry: {failures} pair(s) fell back to identity",
              file=sys.stderr)
    return EXIT_OK


def cmd_localize(args) -> int:
    t0 = time.perf_counter()
    pairs_file = Path(args.pairs)
    if not pairs_file.is_file():
        raise ConfigError(f"pair list not found: {args.pairs}")
    truth_traj = None
    if args.truth:
        if not Path(args.truth).is_file():
            raise ConfigError(f"truth file not found: {args.truth}")
        truth_traj = load_trajectory_csv(args.truth)

    pair_paths = []
    with open(pairs_file, newline="") as f:
        for row in csv.reader(f):
            if not row:
                continue
            if len(row) != 2:
                raise DataError(f"{args.pairs}: each row must list two scans")
            pair_paths.append((row[0].strip(), row[1].strip()))
    if not pair_paths:
        raise DataError(f"{args.pairs}: no scan pairs listed")
    if truth_traj is not None and len(truth_traj) != len(pair_paths):
        raise DataError("truth trajectory length must equal the number of "
                        "scan pairs (one relative pose per pair)")

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    est_poses = []
    for k, (p1, p2) in enumerate(pair_paths):
        s1, s2 = _load_scans([p1, p2])
        matches = _scan_matches(s1, s2, args)
        result = _run_estimator(matches, args.estimator, args.seed + k,
                                _beta_of(s1))
        est_poses.append(result.transform)

    outputs = []
    est_path = outdir / "estimates.csv"
    with open(est_path, "w", newline="") as f:
        writer = csv.writer(f)
        for k, T in enumerate(est_poses):
            writer.writerow([k] + [repr(float(v))
                                   for v in T.matrix[:3].reshape(-1)])
    outputs.append(est_path)
    if truth_traj is not None:
        report = evaluate_localization(list(zip(est_poses, truth_traj.poses)))
        rpt_path = outdir / "localization.csv"
        save_localization_report_csv(rpt_path, report)
        svg_path = outdir / "localization.svg"
        plot_localization(report, svg_path)
        outputs += [rpt_path, svg_path]
    _write_manifest(outdir, "localize",
                    {"pairs": str(pairs_file), "truth": args.truth,
                     "estimator": args.estimator, "seed": args.seed},
                    outputs, time.perf_counter() - t0)
    return EXIT_OK


def cmd_undistort(args) -> int:
    t0 = time.perf_counter()
    if not Path(args.scan).is_file():
        raise ConfigError(f"scan file not found: {args.scan}")
    scan = load_scan(args.scan)
    if args.vx is not None or args.vy is not None or args.wz is not None:
        w = BodyVelocity.planar(args.vx or 0.0, args.vy or 0.0,
                                args.wz or 0.0)
    elif args.from_scan:
        if not Path(args.from_scan).is_file():
            raise ConfigError(f"scan file not found: {args.from_scan}")
        other = load_scan(args.from_scan)
        matches = _scan_matches(scan, other, args)
        result = _run_estimator(matches, "mc+doppler", args.seed,
                                _beta_of(scan))
        w = result.velocity
    else:
        raise ConfigError("provide a velocity (--vx/--vy/--wz) or a second "
                          "scan (--from-scan) to estimate it from")

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    kps = detect_cen2018(scan, _detector_config(args))
    raw_path = outdir / "keypoints_raw.csv"
    save_keypoints_csv(raw_path, Path(args.scan).name, kps)

    ranges = np.array([k.range_m for k in kps])
    azimuths = np.array([k.azimuth_rad for k in kps])
    times = np.array([k.timestamp for k in kps])
    if ranges.size:
        r2, phi2 = undistort_points(ranges, azimuths, times, w,
                                    scan.reference_time,
                                    doppler=args.doppler,
                                    beta=_beta_of(scan))
    else:
        r2 = phi2 = np.zeros(0)
    corr_path = outdir / "keypoints_corrected.csv"
    with open(corr_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["range_m", "azimuth_rad", "x", "y"])
        for r, phi in zip(r2, phi2):
            writer.writerow([repr(float(r)), repr(float(phi)),
                             repr(float(r * np.cos(phi))),
                             repr(float(r * np.sin(phi)))])

    svg_path = outdir / "overlay.svg"
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.rcParams["svg.hashsalt"] = "spinradar"
    fig, ax = plt.subplots(figsize=(6, 6))
    if ranges.size:
        ax.scatter(ranges * np.cos(azimuths), ranges * np.sin(azimuths),
                   s=6, label="raw")
        ax.scatter(r2 * np.cos(phi2), r2 * np.sin(phi2), s=6, marker="x",
                   label="corrected")
    ax.set_aspect("equal")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.legend()
    fig.savefig(svg_path, format="svg", metadata={"Date": None})
    plt.close(fig)
    _write_manifest(outdir, "undistort",
                    {"scan": args.scan,
                     "velocity": [float(w.nu[0]), float(w.nu[1]),
                                  float(w.omega[2])],
                     "doppler": args.doppler, "seed": args.seed},
                    [raw_path, corr_path, svg_path],
                    time.perf_counter() - t0)
    return EXIT_OK


def cmd_eval(args) -> int:
    t0 = time.perf_counter()
    for p in (args.est, args.truth):
        if not Path(p).is_file():
            raise ConfigError(f"trajectory file not found: {p}")
    try:
        est = load_trajectory_csv(args.est)
        truth = load_trajectory_csv(args.truth)
        report = kitti_drift(est, truth)
    except ValueError as e:
        raise DataError(str(e)) from e
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    csv_path = outdir / "drift.csv"
    save_drift_report_csv(csv_path, report)
    svg_path = outdir / "drift.svg"
    plot_drift(report, svg_path)
    _write_manifest(outdir, "eval",
                    {"est": args.est, "truth": args.truth},
                    [csv_path, svg_path], time.perf_counter() - t0)
    print(f"translational error: {report.translational_error_pct:.4f} % | "
          f"rotational error: {report.rotational_error_deg_per_m:.6f} deg/m")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument wiring


def _add_pipeline_flags(p):
    p.add_argument("--z-q", type=float, default=3.0,
                   help="detector probability threshold")
    p.add_argument("--gaussian-sigma", type=float, default=17.0,
                   help="detector smoothing sigma in range bins")
    p.add_argument("--max-points-per-azimuth", type=int, default=12)
    p.add_argument("--nndr", type=float, default=0.8,
                   help="nearest-neighbor distance ratio")
    p.add_argument("--descriptor", default="binary",
                   choices=["binary", "rsd"],
                   help="binary patches suit dense imagery; rsd suits "
                        "sparse detection constellations")
    p.add_argument("--cart-width", type=int, default=964,
                   help="Cartesian rendering width in pixels")
    p.add_argument("--cart-resolution", type=float, default=0.2592,
                   help="Cartesian rendering meters per pixel")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spinradar",
                     description="Spinning-radar ego-motion experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate synthetic scans + truth")
    p.add_argument("--scene", required=True, help="scene YAML file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None,
                   help="override the scene seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("odometry", help="frame-to-frame odometry over scans")
    p.add_argument("--scans", required=True, help="directory of .prs scans")
    p.add_argument("--out", required=True)
    p.add_argument("--estimator", default="mc+doppler",
                   choices=["rigid", "mc", "mc+doppler"])
    p.add_argument("--seed", type=int, default=0)
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_odometry)

    p = sub.add_parser("localize", help="pairwise localization with RSD")
    p.add_argument("--pairs", required=True,
                   help="CSV listing scan1,scan2 paths per row")
    p.add_argument("--truth", default=None,
                   help="trajectory CSV of true relative poses, one per pair")
    p.add_argument("--out", required=True)
    p.add_argument("--estimator", default="mc+doppler",
                   choices=["rigid", "mc", "mc+doppler"])
    p.add_argument("--seed", type=int, default=0)
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_localize, descriptor="rsd")

    p = sub.add_parser("undistort", help="dump raw vs corrected keypoints")
    p.add_argument("--scan", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--vx", type=float, default=None)
    p.add_argument("--vy", type=float, default=None)
    p.add_argument("--wz", type=float, default=None)
    p.add_argument("--from-scan", default=None,
                   help="estimate the velocity against this scan")
    p.add_argument("--doppler", action="store_true",
                   help="also apply the Doppler range correction")
    p.add_argument("--seed", type=int, default=0)
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_undistort)

    p = sub.add_parser("eval", help="KITTI-style drift report")
    p.add_argument("--est", required=True, help="estimated trajectory CSV")
    p.add_argument("--truth", required=True, help="ground-truth trajectory CSV")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ScanFormatError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except EstimationError as e:
        print(f"estimation failed: {e}", file=sys.stderr)
        return EXIT_ESTIMATION


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
