import numpy as np
import pytest

from spinradar.estimate import (DegenerateGeometryError, MeasurementNoise,
                                NonConvergenceError, RansacConfig,
                                _planar_flow, align_rigid_svd, doppler_correct,
                                doppler_correct_matches, gauss_newton_velocity,
                                mc_ransac, mc_ransac_doppler, ransac_rigid,
                                velocity_cost, velocity_jacobians)
from spinradar.features import Keypoint, MatchSet
from spinradar.scan import RadarConfig
from spinradar.se3 import (BodyVelocity, Pose, exp_se3, odot,
                           velocity_to_transform)
from spinradar.simulate import SimScene, exact_matches


def corrupt(matches, fraction, seed=0, magnitude=8.0):
    """Replace a fraction of scan-2 keypoints with gross outliers."""
    rng = np.random.default_rng(seed)
    n = len(matches)
    bad = rng.choice(n, size=int(round(fraction * n)), replace=False)
    kps2 = list(matches.keypoints2)
    for i in bad:
        kp = kps2[i]
        ang = rng.uniform(0.0, 2 * np.pi)
        mag = rng.uniform(0.5 * magnitude, magnitude)
        xy = kp.cartesian + mag * np.array([np.cos(ang), np.sin(ang)])
        kps2[i] = Keypoint(kp.azimuth_index, kp.range_index, kp.timestamp,
                           float(np.hypot(*xy)),
                           float(np.mod(np.arctan2(xy[1], xy[0]),
                                        2 * np.pi)), xy)
    return MatchSet(list(matches.keypoints1), kps2,
                    matches.distances.copy(), matches.reference_time1,
                    matches.reference_time2), set(bad.tolist())


class TestPlanarFlow:
    def test_matches_exp_se3(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            vx, vy, wz = rng.normal(scale=10.0, size=3)
            dt = rng.uniform(-0.3, 0.3)
            c, s, tx, ty = _planar_flow(vx, vy, wz, np.array([dt]))
            T = velocity_to_transform(BodyVelocity.planar(vx, vy, wz), dt)
            M = T.matrix
            np.testing.assert_allclose([c[0], s[0], tx[0], ty[0]],
                                       [M[0, 0], M[1, 0], M[0, 3], M[1, 3]],
                                       atol=1e-12)

    def test_small_angle_series(self):
        c, s, tx, ty = _planar_flow(3.0, -2.0, 1e-9, np.array([1e-4]))
        T = velocity_to_transform(BodyVelocity.planar(3.0, -2.0, 1e-9), 1e-4)
        np.testing.assert_allclose([tx[0], ty[0]],
                                   [T.matrix[0, 3], T.matrix[1, 3]],
                                   atol=1e-15)


class TestVelocityJacobians:
    def test_finite_difference_oracle(self):
        # G_m = dt * odot(T_m p) is the exact derivative of the left-perturbed
        # flow exp(dt * delta^) T_m p with respect to delta at zero
        rng = np.random.default_rng(1)
        w = BodyVelocity(rng.normal(size=3), rng.normal(size=3) * 0.5)
        dts = rng.uniform(0.05, 0.3, 5)
        p1 = rng.uniform(-40, 40, (5, 2))
        G = velocity_jacobians(w, dts, p1)
        eps = 1e-7
        for m in range(5):
            T = velocity_to_transform(w, float(dts[m]))
            g0 = T.matrix @ np.array([p1[m, 0], p1[m, 1], 0.0, 1.0])
            fd = np.zeros((4, 6))
            for j in range(6):
                d = np.zeros(6)
                d[j] = eps
                pert = exp_se3(dts[m] * d)
                fd[:, j] = (pert.matrix @ g0 - g0) / eps
            np.testing.assert_allclose(G[m], fd, atol=1e-5)

    def test_closed_form_structure(self):
        w = BodyVelocity.planar(10.0, 0.0, 0.5)
        dts = np.array([0.1])
        p1 = np.array([[20.0, 5.0]])
        G = velocity_jacobians(w, dts, p1)[0]
        g = velocity_to_transform(w, 0.1).matrix @ np.array(
            [20.0, 5.0, 0.0, 1.0])
        np.testing.assert_allclose(G, 0.1 * odot(g), atol=1e-15)


class TestAlignRigidSvd:
    def test_recovers_known_transform(self):
        rng = np.random.default_rng(2)
        p1 = rng.uniform(-50, 50, (20, 2))
        T = Pose.from_xytheta(3.0, -1.5, 0.4)
        p2 = np.array([T.apply([x, y, 0.0])[:2] for x, y in p1])
        est = align_rigid_svd(p1, p2)
        np.testing.assert_allclose(est.matrix, T.matrix, atol=1e-12)

    def test_minimum_two_points(self):
        with pytest.raises(DegenerateGeometryError, match="2 point pairs"):
            align_rigid_svd(np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]]))

    def test_coincident_points_rejected(self):
        p = np.array([[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]])
        with pytest.raises(DegenerateGeometryError, match="coincident"):
            align_rigid_svd(p, p + 2.0)

    def test_no_reflection(self):
        # mirrored correspondences must still yield a proper rotation
        p1 = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
        p2 = p1 * np.array([1.0, -1.0])
        est = align_rigid_svd(p1, p2)
        assert np.linalg.det(est.rotation) == pytest.approx(1.0)


class TestMeasurementNoise:
    def test_isotropic_information(self):
        noise = MeasurementNoise(sigma=0.1)
        W = noise.information(np.array([[10.0, 0.3]]))
        np.testing.assert_allclose(W[0], np.eye(2) / 0.01, atol=1e-12)

    def test_polar_information_rotates_with_azimuth(self):
        noise = MeasurementNoise(sigma_range=0.05, sigma_azimuth=0.01)
        polar = np.array([[20.0, 0.0], [20.0, np.pi / 2]])
        W = noise.information(polar)
        # at phi=0 the range direction is x: small sigma means large W_xx
        assert W[0, 0, 0] > W[0, 1, 1]
        # at phi=pi/2 the roles swap
        assert W[1, 1, 1] > W[1, 0, 0]
        np.testing.assert_allclose(W[0, 0, 0], W[1, 1, 1], atol=1e-9)


def noiseless_matches(w, n=40, seed=3):
    cfg = RadarConfig.navtech()
    lm = SimScene.random(n, w, seed=seed).landmarks
    return exact_matches(lm, w, cfg, seed=seed + 1)


class TestGaussNewton:
    def test_exact_recovery_on_clean_matches(self):
        w = BodyVelocity.planar(14.0, -2.0, 0.6)
        v = gauss_newton_velocity(noiseless_matches(w))
        np.testing.assert_allclose(v.nu[:2], w.nu[:2], atol=1e-9)
        assert v.omega[2] == pytest.approx(0.6, abs=1e-9)

    def test_zero_velocity_fixed_point(self):
        w = BodyVelocity.planar(0.0, 0.0, 0.0)
        v = gauss_newton_velocity(noiseless_matches(w))
        assert np.linalg.norm(v.nu) < 1e-9

    def test_cost_decreases(self):
        w = BodyVelocity.planar(10.0, 1.0, 0.4)
        m = noiseless_matches(w)
        before = velocity_cost(m, BodyVelocity.planar(0.0, 0.0, 0.0))
        v = gauss_newton_velocity(m)
        after = velocity_cost(m, v)
        assert after < 1e-12 * max(before, 1.0)

    def test_needs_two_matches(self):
        w = BodyVelocity.planar(5.0, 0.0, 0.1)
        m = noiseless_matches(w).subset([0])
        with pytest.raises(DegenerateGeometryError):
            gauss_newton_velocity(m)

    def test_warm_start(self):
        w = BodyVelocity.planar(12.0, 0.0, 0.5)
        m = noiseless_matches(w)
        v = gauss_newton_velocity(m, init=w, max_iters=2)
        np.testing.assert_allclose(v.nu[:2], w.nu[:2], atol=1e-9)


class TestRansacRigid:
    def test_rejects_outliers(self):
        w = BodyVelocity.planar(0.0, 0.0, 0.0)
        clean = noiseless_matches(w, n=50)
        m, bad = corrupt(clean, 0.3, seed=4)
        res = ransac_rigid(m, RansacConfig(seed=0))
        assert not (set(res.inlier_indices.tolist()) & bad)
        assert len(res.inlier_indices) >= 30
        # static scene: the transform is identity
        np.testing.assert_allclose(res.transform.matrix, np.eye(4), atol=0.05)

    def test_deterministic_given_seed(self):
        w = BodyVelocity.planar(5.0, 0.0, 0.2)
        m, _ = corrupt(noiseless_matches(w, n=40), 0.25, seed=5)
        a = ransac_rigid(m, RansacConfig(seed=7))
        b = ransac_rigid(m, RansacConfig(seed=7))
        np.testing.assert_array_equal(a.inlier_indices, b.inlier_indices)
        np.testing.assert_allclose(a.transform.matrix, b.transform.matrix,
                                   rtol=0, atol=0)

    def test_too_few_matches(self):
        w = BodyVelocity.planar(1.0, 0.0, 0.0)
        with pytest.raises(DegenerateGeometryError):
            ransac_rigid(noiseless_matches(w).subset([0]), RansacConfig())


class TestMcRansac:
    def test_exact_velocity_with_outliers(self):
        w = BodyVelocity.planar(15.0, 1.0, 0.5)
        m, bad = corrupt(noiseless_matches(w, n=60), 0.3, seed=6)
        res = mc_ransac(m, RansacConfig(seed=1))
        assert res.converged
        np.testing.assert_allclose(res.velocity.nu[:2], w.nu[:2], atol=1e-6)
        assert res.velocity.omega[2] == pytest.approx(0.5, abs=1e-6)
        assert not (set(res.inlier_indices.tolist()) & bad)

    def test_transform_spans_reference_times(self):
        w = BodyVelocity.planar(10.0, 0.0, 0.3)
        m = noiseless_matches(w)
        res = mc_ransac(m, RansacConfig(seed=0))
        dt = m.reference_time2 - m.reference_time1
        np.testing.assert_allclose(
            res.transform.matrix,
            velocity_to_transform(res.velocity, dt).matrix, atol=1e-12)

    def test_beats_rigid_on_distorted_data(self):
        # high yaw rate: intra-scan distortion breaks the rigid model but
        # not the velocity model
        w = BodyVelocity.planar(18.0, 0.0, 0.9)
        m = noiseless_matches(w, n=50, seed=8)
        true_T = velocity_to_transform(
            w, m.reference_time2 - m.reference_time1)
        rigid = ransac_rigid(m, RansacConfig(seed=2, inlier_threshold=1.5))
        mc = mc_ransac(m, RansacConfig(seed=2))
        err = lambda T: np.linalg.norm(
            (true_T.inverse() @ T).translation[:2])
        assert err(mc.transform) < 0.2 * err(rigid.transform)


class TestDopplerCorrection:
    def test_correct_inverts_simulated_shift(self):
        beta = 0.049
        phi = np.array([0.0, np.pi / 3, np.pi])
        v = np.array([20.0, -3.0])
        true_r = np.array([30.0, 45.0, 60.0])
        u = v[0] * np.cos(phi) + v[1] * np.sin(phi)
        apparent = true_r - beta * u
        np.testing.assert_allclose(
            doppler_correct(apparent, phi, v, beta), true_r, atol=1e-12)

    def test_correct_matches_moves_both_sides(self):
        w = BodyVelocity.planar(20.0, 0.0, 0.0)
        m = noiseless_matches(w, n=10)
        out = doppler_correct_matches(m, w, beta=0.049)
        r_in = m.polar(1)[:, 0]
        r_out = out.polar(1)[:, 0]
        assert np.any(np.abs(r_out - r_in) > 1e-6)
        assert len(out) == len(m)

    def test_mc_ransac_doppler_recovers_shifted_ranges(self):
        # build matches with the doppler shift baked in, then check the
        # coupled estimator undoes it while the plain one cannot
        beta = 0.049
        w = BodyVelocity.planar(25.0, 0.0, 0.4)
        m = noiseless_matches(w, n=50, seed=9)
        shifted = doppler_correct_matches(m, BodyVelocity.planar(
            -w.nu[0], -w.nu[1], 0.0), beta)
        plain = mc_ransac(shifted, RansacConfig(seed=3))
        coupled = mc_ransac_doppler(shifted, RansacConfig(seed=3), beta=beta)
        err_plain = np.linalg.norm(plain.velocity.nu[:2] - w.nu[:2])
        err_coupled = np.linalg.norm(coupled.velocity.nu[:2] - w.nu[:2])
        assert err_coupled < 0.5 * err_plain
        assert err_coupled < 0.05


class TestRansacConfig:
    def test_subset_size_fixed(self):
        with pytest.raises(ValueError, match="subset size"):
            RansacConfig(subset_size=3)

    def test_threshold_positive(self):
        with pytest.raises(ValueError, match="threshold"):
            RansacConfig(inlier_threshold=0.0)
