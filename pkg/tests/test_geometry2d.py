import numpy as np
import pytest

from reebcert import flow_engine as fe
from reebcert import geometry2d as g2


def fd_normal_curvature(metric, p, v, h=1e-5):
    """Second-order normal curvature of the surface at p in direction v."""
    p = metric.project_point(p)
    v = metric.tangent_project(p, v)
    v = v / np.linalg.norm(v)
    n = metric.gradient(p)
    n = n / np.linalg.norm(n)
    f = lambda t: np.dot(metric.project_point(p + t * v) - p, -n)
    return (f(h) + f(-h)) / h**2


class TestCurvature:
    @pytest.mark.parametrize("c", [0.8, 0.95, 1.0, 1.3])
    def test_closed_form_against_principal_curvature_product(self, c):
        # oracle: K = product of normal curvatures along the two symmetry
        # directions (meridian and parallel are principal for a revolution
        # surface), measured by finite differences of the embedding
        m = g2.RevolutionMetric(c)
        rs = fe.rng(5)
        for _ in range(12):
            phi = rs.uniform(-1.2, 1.2)
            s = rs.uniform(0, 2 * np.pi)
            p = np.array([np.cos(phi) * np.cos(s), np.cos(phi) * np.sin(s),
                          c * np.sin(phi)])
            e_par = np.array([-np.sin(s), np.cos(s), 0.0])
            e_mer = m.tangent_project(p, np.array(
                [-np.sin(phi) * np.cos(s), -np.sin(phi) * np.sin(s),
                 c * np.cos(phi)]))
            k1 = fd_normal_curvature(m, p, e_par)
            k2 = fd_normal_curvature(m, p, e_mer)
            assert abs(m.curvature(p) - k1 * k2) < 5e-4

    @pytest.mark.parametrize("c,kmin,kmax", [
        (0.95, 0.95**2, 1 / 0.95**2),
        (1.0, 1.0, 1.0),
        (1.2, 1 / 1.2**2, 1.2**2),
    ])
    def test_extrema_closed_form(self, c, kmin, kmax):
        m = g2.RevolutionMetric(c)
        lo, hi = m.curvature_extrema()
        assert abs(lo - kmin) < 1e-12
        assert abs(hi - kmax) < 1e-12

    def test_pinching_delta_sampled_matches_closed_form(self):
        for c in (0.9, 0.95, 1.0):
            m = g2.RevolutionMetric(c)
            delta, bound = m.pinching_delta()
            exact = min(c**4, 1 / c**4)
            assert abs(delta - exact) < 1e-6
            assert bound >= 0

    def test_pole_and_equator_values(self):
        c = 0.95
        m = g2.RevolutionMetric(c)
        assert abs(m.curvature(np.array([0.0, 0.0, c])) - c**2) < 1e-12
        assert abs(m.curvature(np.array([1.0, 0.0, 0.0])) - 1 / c**2) < 1e-12

    def test_normalization_scale(self):
        m = g2.RevolutionMetric(0.95)
        assert abs(m.normalization() - 1 / 0.95) < 1e-12


class TestGeodesics:
    def test_round_great_circle(self):
        m = g2.RevolutionMetric(1.0)
        traj = m.geodesic([1.0, 0.0, 0.0], [0.0, 0.3, 0.9], 2 * np.pi)
        y0 = traj.y[0]
        assert np.max(np.abs(traj.y_end - y0)) < 1e-8

    def test_equator_is_a_geodesic(self):
        m = g2.RevolutionMetric(0.95)
        traj = m.geodesic(m.equator_point(0.3), m.equator_tangent(0.3), 5.0)
        for t in np.linspace(0, 5.0, 23):
            assert abs(traj(t)[2]) < 1e-9

    def test_unit_speed_preserved(self):
        m = g2.RevolutionMetric(0.9)
        traj = m.geodesic([0.6, 0.0, 0.9], [0.1, 1.0, -0.2], 8.0)
        for t in np.linspace(0, 8.0, 17):
            assert abs(np.linalg.norm(traj(t)[3:]) - 1.0) < 1e-9

    def test_clairaut_invariant(self):
        m = g2.RevolutionMetric(0.95)
        rs = fe.rng(11)
        for _ in range(5):
            p = rs.normal(size=3)
            v = rs.normal(size=3)
            traj = m.geodesic(p, v, 6.0)
            c0 = m.clairaut(traj.y[0])
            for t in np.linspace(0, 6.0, 13):
                assert abs(m.clairaut(traj(t)) - c0) < 1e-8

    def test_meridian_period(self):
        # a meridian of the c-ellipsoid is a planar ellipse; check closure
        # after the quadrature perimeter
        from scipy.integrate import quad
        c = 0.95
        m = g2.RevolutionMetric(c)
        per = 4 * quad(lambda t: np.sqrt(np.sin(t) ** 2 + c**2 * np.cos(t) ** 2),
                       0, np.pi / 2, epsabs=1e-13)[0]
        traj = m.geodesic([1.0, 0.0, 0.0], [0.0, 0.0, 1.0], per)
        assert np.max(np.abs(traj.y_end - traj.y[0])) < 1e-7


class TestJacobi:
    @pytest.mark.parametrize("K", [0.25, 1.0, 4.0])
    def test_constant_curvature_closed_form(self, K):
        # oracle: b(t) = sin(sqrt(K) t)/sqrt(K) for b(0)=0, b'(0)=1
        traj = g2.jacobi_field(lambda t: K, 0.0, 1.0, 10.0, tol=1e-12)
        ts = np.linspace(0.01, 10.0, 200)
        exact = np.sin(np.sqrt(K) * ts) / np.sqrt(K)
        got = traj(ts)[:, 0]
        scale = np.maximum(np.abs(exact), 1e-3)
        assert np.max(np.abs(got - exact) / scale) < 1e-8

    def test_jacobi_zero_round(self):
        assert abs(g2.jacobi_zero(lambda t: 1.0, which=1) - np.pi) < 1e-9
        assert abs(g2.jacobi_zero(lambda t: 1.0, which=2) - 2 * np.pi) < 1e-9

    def test_jacobi_zero_equator(self):
        c = 0.95
        m = g2.RevolutionMetric(c)
        K = m.equator_curvature()
        assert abs(g2.jacobi_zero(lambda t: K, which=2) - 2 * np.pi * c) < 1e-8

    def test_rate_bounds_on_random_trajectories(self):
        # cos^2 + K sin^2 stays in [min(1,K_min), max(1,K_max)] along 100
        # random geodesic samples
        m = g2.RevolutionMetric(0.95)
        kmin, kmax = m.curvature_extrema()
        lo, hi = min(1.0, kmin), max(1.0, kmax)
        rs = fe.rng(23)
        for _ in range(100):
            p = rs.normal(size=3)
            v = rs.normal(size=3)
            theta = rs.uniform(0, 2 * np.pi)
            traj = m.geodesic(p, v, 1.0, tol=1e-9)
            t = rs.uniform(0, 1.0)
            rate = g2.frame_angle_rate(m.curvature(traj(t)[:3]), theta)
            assert lo - 1e-6 <= rate <= hi + 1e-6

    def test_angle_trajectory_matches_jacobi_zero(self):
        # theta(0) = 0 on the Jacobi axis reaches pi exactly at the first
        # conjugate time for constant curvature
        m = g2.RevolutionMetric(1.0)
        traj = m.geodesic([1.0, 0.0, 0.0], [0.0, 1.0, 0.0], 4.0)
        th = g2.frame_angle_trajectory(m, traj, np.pi / 2, 4.0)
        # round sphere: rate is identically 1
        ts = np.linspace(0, 4.0, 60)
        got = th(ts)[:, 0]
        assert np.max(np.abs(got - (np.pi / 2 + ts))) < 1e-8
