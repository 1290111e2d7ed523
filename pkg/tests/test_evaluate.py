import numpy as np
import pytest

from spinradar.evaluate import (KITTI_LENGTHS, Trajectory, compound,
                                evaluate_localization, kitti_drift,
                                load_trajectory_csv, plot_drift,
                                plot_localization, save_drift_report_csv,
                                save_localization_report_csv,
                                save_trajectory_csv)
from spinradar.se3 import BodyVelocity, Pose, velocity_to_transform


def straight_trajectory(n, step=10.0, dt=0.25):
    times = dt * np.arange(n)
    poses = [Pose.from_xytheta(step * k, 0.0, 0.0) for k in range(n)]
    return Trajectory(times, poses)


class TestTrajectory:
    def test_validation(self):
        with pytest.raises(ValueError, match="align"):
            Trajectory(np.array([0.0, 1.0]), [Pose.identity()])
        with pytest.raises(ValueError, match="increasing"):
            Trajectory(np.array([0.0, 0.0]),
                       [Pose.identity(), Pose.identity()])


class TestCompound:
    def test_single_step(self):
        # relative pose maps frame-1 points into frame 2; driving forward by
        # d gives T_rel with translation -d, and the world pose advances by
        # its inverse
        T_rel = Pose.from_xytheta(-5.0, 0.0, 0.0)
        traj = compound([(0.25, T_rel)])
        assert len(traj) == 2
        np.testing.assert_allclose(traj.poses[1].translation[:2], [5.0, 0.0],
                                   atol=1e-12)
        assert traj.timestamps[1] == pytest.approx(0.25)

    def test_matches_constant_velocity_flow(self):
        # chaining per-pair transforms of a constant twist must reproduce the
        # inverse sensor pose at each scan time
        w = BodyVelocity.planar(10.0, 0.0, 0.5)
        dt = 0.25
        T_rel = velocity_to_transform(w, dt)
        traj = compound([(dt, T_rel)] * 8)
        for k in range(9):
            expect = velocity_to_transform(w, k * dt).inverse()
            np.testing.assert_allclose(traj.poses[k].matrix, expect.matrix,
                                       atol=1e-9)

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="at least one"):
            compound([])


class TestKittiDrift:
    def test_perfect_estimate_zero_drift(self):
        truth = straight_trajectory(120)
        report = kitti_drift(truth, truth)
        assert report.translational_error_pct == 0.0
        assert report.rotational_error_deg_per_m == 0.0
        assert report.num_segments > 0

    def test_known_scale_drift(self):
        # estimate travels 1% farther per step: exactly 1% drift at every
        # segment length
        truth = straight_trajectory(120, step=10.0)
        est = straight_trajectory(120, step=10.1)
        report = kitti_drift(est, truth)
        assert report.translational_error_pct == pytest.approx(1.0, rel=1e-6)
        assert report.rotational_error_deg_per_m == pytest.approx(0.0,
                                                                  abs=1e-9)
        for L, (t_pct, r_deg, n) in report.per_length.items():
            assert t_pct == pytest.approx(1.0, rel=1e-6)
            assert n > 0

    def test_segments_need_minimum_path(self):
        # 30 m of travel cannot host a 100 m segment
        truth = straight_trajectory(4, step=10.0)
        report = kitti_drift(truth, truth)
        assert report.num_segments == 0

    def test_every_frame_starts(self):
        # 1200 m of path at 10 m per frame: 111 starts fit a 100 m segment,
        # 101 starts fit 200 m, and so on down to 41 starts at 800 m
        truth = straight_trajectory(121, step=10.0)
        report = kitti_drift(truth, truth)
        expect = sum(121 - int(L // 10) for L in KITTI_LENGTHS)
        assert report.num_segments == expect

    def test_speed_buckets(self):
        truth = straight_trajectory(120, step=10.0, dt=0.25)  # 40 m/s
        report = kitti_drift(truth, truth)
        assert list(report.per_speed.keys()) == [40.0]

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError, match="frame count"):
            kitti_drift(straight_trajectory(10), straight_trajectory(11))


class TestLocalization:
    def test_known_offsets(self):
        truth = Pose.identity()
        pairs = [(Pose.from_xytheta(0.3, 0.4, np.deg2rad(2.0)), truth),
                 (Pose.from_xytheta(0.0, 0.1, np.deg2rad(-1.0)), truth),
                 (Pose.from_xytheta(1.0, 0.0, 0.0), truth)]
        report = evaluate_localization(pairs)
        assert report.median_translation_m == pytest.approx(0.5)
        assert report.median_rotation_deg == pytest.approx(1.0)
        assert report.translation_errors.shape == (3,)

    def test_histogram_bins(self):
        pairs = [(Pose.from_xytheta(0.25, 0.0, 0.0), Pose.identity())]
        report = evaluate_localization(pairs)
        counts, edges = report.translation_hist
        assert np.diff(edges)[0] == pytest.approx(0.1)
        assert counts.sum() == 1

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="at least one"):
            evaluate_localization([])


class TestCsvRoundTrip:
    def test_trajectory_round_trip(self, tmp_path):
        w = BodyVelocity.planar(8.0, 1.0, 0.3)
        traj = compound([(0.25, velocity_to_transform(w, 0.25))] * 5)
        path = tmp_path / "traj.csv"
        save_trajectory_csv(path, traj)
        loaded = load_trajectory_csv(path)
        assert len(loaded) == len(traj)
        np.testing.assert_array_equal(loaded.timestamps, traj.timestamps)
        for a, b in zip(loaded.poses, traj.poses):
            np.testing.assert_array_equal(a.matrix, b.matrix)

    def test_trajectory_bytes_deterministic(self, tmp_path):
        traj = straight_trajectory(5)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        save_trajectory_csv(p1, traj)
        save_trajectory_csv(p2, traj)
        assert p1.read_bytes() == p2.read_bytes()

    def test_report_csvs_written(self, tmp_path):
        truth = straight_trajectory(120)
        est = straight_trajectory(120, step=10.1)
        drift = kitti_drift(est, truth)
        save_drift_report_csv(tmp_path / "drift.csv", drift)
        assert (tmp_path / "drift.csv").read_text().startswith("section")
        loc = evaluate_localization(
            [(Pose.from_xytheta(0.2, 0.0, 0.0), Pose.identity())])
        save_localization_report_csv(tmp_path / "loc.csv", loc)
        assert (tmp_path / "loc.csv").stat().st_size > 0


class TestPlots:
    def test_svg_outputs_deterministic(self, tmp_path):
        truth = straight_trajectory(120)
        est = straight_trajectory(120, step=10.1)
        drift = kitti_drift(est, truth)
        a, b = tmp_path / "a.svg", tmp_path / "b.svg"
        plot_drift(drift, a)
        plot_drift(drift, b)
        assert a.read_bytes() == b.read_bytes()
        assert b.read_text().lstrip().startswith("<?xml")

    def test_localization_plot(self, tmp_path):
        rng = np.random.default_rng(0)
        pairs = [(Pose.from_xytheta(rng.normal(0, 0.3), rng.normal(0, 0.3),
                                    rng.normal(0, 0.02)), Pose.identity())
                 for _ in range(50)]
        report = evaluate_localization(pairs)
        out = tmp_path / "loc.svg"
        plot_localization(report, out)
        assert out.stat().st_size > 0
