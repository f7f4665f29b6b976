import numpy as np
import pytest

from reebcert import convex4d as c4
from reebcert import flow_engine as fe


class TestComplexStructures:
    def test_squares_to_minus_one(self):
        for J in (c4.J0, c4.J1, c4.J2):
            assert np.allclose(J @ J, -np.eye(4))

    def test_anticommutation(self):
        assert np.allclose(c4.J0 @ c4.J1 + c4.J1 @ c4.J0, 0)
        assert np.allclose(c4.J0 @ c4.J2 + c4.J2 @ c4.J0, 0)
        assert np.allclose(c4.J1 @ c4.J2 + c4.J2 @ c4.J1, 0)

    def test_omega_on_coordinate_plane(self):
        e_q1 = np.array([1.0, 0, 0, 0])
        e_p1 = np.array([0, 0, 1.0, 0])
        assert abs(c4.omega0(e_q1, e_p1) + c4.omega0(e_p1, e_q1)) < 1e-15
        assert abs(c4.omega0(e_q1, e_p1)) == 1.0


class TestEllipsoidFlow:
    def test_hamiltonian_circles(self):
        # closed form: zeta_j = p_j + i q_j rotates at rate 2/a_j
        a1, a2 = 1.0, 1.5
        body = c4.Ellipsoid(a1, a2)
        x0 = c4.boundary_point(body, np.array([0.3, 0.5, -0.2, 0.7]))
        T = 2.0
        traj = c4.flow(body, x0, T)
        x1 = traj.y_end
        for j, aj in ((0, a1), (1, a2)):
            zeta0 = x0[2 + j] + 1j * x0[j]
            zeta1 = x1[2 + j] + 1j * x1[j]
            assert abs(zeta1 - np.exp(2j * T / aj) * zeta0) < 1e-8

    def test_energy_preserved(self):
        body = c4.Ellipsoid(1.0, 2.5)
        x0 = c4.boundary_point(body, np.ones(4))
        traj = c4.flow(body, x0, 5.0)
        for t in np.linspace(0, 5.0, 11):
            assert abs(body.gauge2(traj(t)) - 1.0) < 1e-10

    def test_orbit_periods(self):
        body = c4.Ellipsoid(1.0, 1.5)
        t1, t2 = body.orbit_periods()
        x_short = c4.boundary_point(body, np.array([1.0, 0, 0.3, 0]))
        traj = c4.flow(body, x_short, t1)
        assert np.max(np.abs(traj.y_end - traj.y[0])) < 1e-9


class TestRateMatrix:
    def test_ball_rate_is_four(self):
        body = c4.Ellipsoid(1.0, 1.0)
        rs = fe.rng(2)
        for _ in range(20):
            x = c4.boundary_point(body, rs.normal(size=4))
            M = c4.rate_matrix(body, x)
            assert np.allclose(M, 4.0 * np.eye(2), atol=1e-12)

    def test_ellipsoid_rate_is_constant_sum(self):
        # derived: for quadratic gauges the 2x2 matrix is (2/a1 + 2/a2) I
        a1, a2 = 1.0, 1.5
        body = c4.Ellipsoid(a1, a2)
        rs = fe.rng(3)
        expect = 2 / a1 + 2 / a2
        for _ in range(20):
            x = c4.boundary_point(body, rs.normal(size=4))
            M = c4.rate_matrix(body, x)
            assert np.allclose(M, expect * np.eye(2), atol=1e-10)

    def test_frame_orthonormal(self):
        body = c4.PerturbedBall()
        rs = fe.rng(4)
        for _ in range(10):
            x = c4.boundary_point(body, rs.normal(size=4))
            F = np.stack(c4.frame(body, x))
            assert np.allclose(F @ F.T, np.eye(4), atol=1e-12)

    def test_ball_angle_advance(self):
        # theta(pi) - theta(0) = 4 pi on the round ball
        body = c4.Ellipsoid(1.0, 1.0)
        x0 = c4.boundary_point(body, np.array([0.2, -0.4, 0.5, 0.3]))
        traj = c4.transverse_angle(body, x0, 0.3, np.pi, tol=1e-11)
        advance = traj.y_end[4] - traj.y[0][4]
        assert abs(advance - 4 * np.pi) < 1e-6


class TestKmin:
    def test_ball_exact(self):
        val, err = c4.kmin(c4.Ellipsoid(1.0, 1.0))
        assert val == 2.0
        assert err == 0.0

    @pytest.mark.parametrize("a2", [1.5, 2.5])
    def test_ellipsoid_exact(self, a2):
        val, _ = c4.kmin(c4.Ellipsoid(1.0, a2))
        assert abs(val - 2.0 / a2) < 1e-15

    def test_perturbed_ball_bracket(self):
        # coefficients +-0.05: the body is a small star-shaped deformation,
        # kmin must be positive (convex) and below the round value 2
        body = c4.PerturbedBall()
        val, err = c4.kmin(body, budget=2**11)
        assert 0.0 < val < 2.0
        assert err >= 0.0

    def test_perturbed_gradient_is_exact(self):
        body = c4.PerturbedBall()
        rs = fe.rng(5)
        for _ in range(10):
            x = rs.normal(size=4) * 1.1
            g = body.grad2(x)
            h = 1e-6
            for k in range(4):
                e = np.zeros(4)
                e[k] = h
                fd = (body.gauge2(x + e) - body.gauge2(x - e)) / (2 * h)
                assert abs(fd - g[k]) < 1e-7

    def test_zero_coeffs_reduce_to_ball(self):
        body = c4.PerturbedBall((0.0, 0.0, 0.0, 0.0))
        rs = fe.rng(6)
        x = c4.boundary_point(body, rs.normal(size=4))
        assert np.allclose(body.hess2(x), 2 * np.eye(4), atol=1e-8)


class TestRateBound:
    @pytest.mark.parametrize("body,n", [
        (c4.Ellipsoid(1.0, 1.0), 10**4),
        (c4.Ellipsoid(1.0, 1.5), 10**4),
        (c4.PerturbedBall(), 10**3),
    ])
    def test_sampled_rate_above_twice_kmin(self, body, n):
        kmin_val, _ = c4.kmin(body, budget=2**11)
        worst = c4.min_rate_sampled(body, n, seed=17)
        assert worst >= 2 * kmin_val - 1e-5
