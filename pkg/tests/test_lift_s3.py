import numpy as np
import pytest

from reebcert import flow_engine as fe
from reebcert import geometry2d as g2
from reebcert import lift_s3 as ls


class TestQuaternions:
    def test_multiplication_table(self):
        assert np.allclose(ls.qmul(ls.I, ls.J), ls.K)
        assert np.allclose(ls.qmul(ls.J, ls.K), ls.I)
        assert np.allclose(ls.qmul(ls.K, ls.I), ls.J)
        assert np.allclose(ls.qmul(ls.I, ls.I), -ls.ONE)

    def test_inverse(self):
        q = ls.normalize(np.array([0.3, -0.4, 0.5, 0.6]))
        assert np.allclose(ls.qmul(q, ls.qinv(q)), ls.ONE, atol=1e-14)

    def test_zw_roundtrip(self):
        q = np.array([0.1, 0.2, 0.3, 0.4])
        z, w = ls.to_zw(q)
        assert np.allclose(ls.from_zw(z, w), q)

    def test_left_multiplication_is_diagonal_on_zw(self):
        q = ls.normalize(np.array([0.3, -0.4, 0.5, 0.6]))
        th = 0.7
        z0, w0 = ls.to_zw(q)
        z1, w1 = ls.to_zw(ls.qmul(ls.qexp_i(th), q))
        assert abs(z1 - np.exp(1j * th) * z0) < 1e-14
        assert abs(w1 - np.exp(1j * th) * w0) < 1e-14


class TestContactForm:
    def test_reeb_is_calibrated(self):
        rs = fe.rng(3)
        for _ in range(10):
            q = ls.normalize(rs.normal(size=4))
            assert abs(ls.lambda0(q, ls.reeb_vector(q)) - 1.0) < 1e-13

    def test_frame_is_orthonormal_and_contact(self):
        rs = fe.rng(4)
        for _ in range(10):
            q = ls.normalize(rs.normal(size=4))
            f1, f2 = ls.contact_frame(q)
            for f in (f1, f2):
                assert abs(np.linalg.norm(f) - 1.0) < 1e-13
                assert abs(np.dot(f, q)) < 1e-13
                assert abs(ls.lambda0(q, f)) < 1e-13
            assert abs(np.dot(f1, f2)) < 1e-13

    def test_right_translation_preserves_lambda0(self):
        rs = fe.rng(5)
        a = ls.normalize(rs.normal(size=4))
        for _ in range(10):
            q = ls.normalize(rs.normal(size=4))
            zeta = rs.normal(size=4)
            lhs = ls.lambda0(ls.qmul(q, a), ls.qmul(zeta, a))
            assert abs(lhs - ls.lambda0(q, zeta)) < 1e-13

    def test_hopf_orbit_in_translated_chart(self):
        # right translation by q0^-1 puts the fibre through q0 onto {w = 0}
        rs = fe.rng(6)
        q0 = ls.normalize(rs.normal(size=4))
        for t in np.linspace(0, np.pi, 7):
            q = ls.qmul(ls.qexp_i(2 * t), q0)
            _, w = ls.to_zw(ls.qmul(q, ls.qinv(q0)))
            assert abs(w) < 1e-13


class TestDoubleCover:
    def test_base_values(self):
        p, v = ls.double_cover(ls.ONE)
        assert np.allclose(p, [0.0, 1.0, 0.0], atol=1e-15)
        assert np.allclose(v, [0.0, 0.0, -1.0], atol=1e-15)

    def test_lands_in_unit_tangent_bundle(self):
        rs = fe.rng(7)
        for _ in range(20):
            q = ls.normalize(rs.normal(size=4))
            p, v = ls.double_cover(q)
            assert abs(np.linalg.norm(p) - 1.0) < 1e-13
            assert abs(np.linalg.norm(v) - 1.0) < 1e-13
            assert abs(np.dot(p, v)) < 1e-13

    def test_two_to_one(self):
        rs = fe.rng(8)
        q = ls.normalize(rs.normal(size=4))
        pa, va = ls.double_cover(q)
        pb, vb = ls.double_cover(-q)
        assert np.allclose(pa, pb, atol=1e-15)
        assert np.allclose(va, vb, atol=1e-15)

    def test_inverse_roundtrip(self):
        rs = fe.rng(9)
        for _ in range(50):
            q = ls.normalize(rs.normal(size=4))
            p, v = ls.double_cover(q)
            q2 = ls.double_cover_inverse(p, v, near=q)
            assert np.max(np.abs(q2 - q)) < 1e-12

    def test_pullback_factor_four(self):
        # the contact-form pullback identity at 1000 random (point, tangent)
        # pairs
        rs = fe.rng(10)
        worst = 0.0
        for _ in range(1000):
            q = ls.normalize(rs.normal(size=4))
            zeta = rs.normal(size=4)
            zeta -= np.dot(zeta, q) * q
            lhs, rhs = ls.pullback_vs_standard(q, zeta)
            worst = max(worst, abs(lhs - rhs))
        assert worst < 1e-6

    def test_differential_matches_finite_differences(self):
        rs = fe.rng(11)
        q = ls.normalize(rs.normal(size=4))
        zeta = rs.normal(size=4)
        zeta -= np.dot(zeta, q) * q
        h = 1e-7
        qp = ls.normalize(q + h * zeta)
        qm = ls.normalize(q - h * zeta)
        pp, vp = ls.double_cover(qp)
        pm, vm = ls.double_cover(qm)
        dp, dv = ls.differential_double_cover(q, zeta)
        assert np.max(np.abs((pp - pm) / (2 * h) - dp)) < 1e-6
        assert np.max(np.abs((vp - vm) / (2 * h) - dv)) < 1e-6


class TestLiftedFlow:
    def test_equator_lift_closes_after_double_period(self):
        # the lift of the round equator geodesic closes after 4*pi of
        # geodesic time (double cover), not after 2*pi
        m = g2.RevolutionMetric(1.0)
        traj = m.geodesic(m.equator_point(0.0), m.equator_tangent(0.0),
                          4 * np.pi, tol=1e-12)
        ts = np.linspace(0.0, 4 * np.pi, 801)
        lifts = ls.lift_surface_trajectory(m, traj, ts)
        assert np.max(np.abs(lifts[-1] - lifts[0])) < 1e-6
        # halfway it sits on the other sheet
        mid = lifts[len(ts) // 2]
        assert np.max(np.abs(mid + lifts[0])) < 1e-6

    def test_lift_matches_reeb_field(self):
        # lifted geodesic flow is the quarter-speed Hopf field: the lift of
        # the equator should satisfy q(s) = exp(s i / 2) q(0)
        m = g2.RevolutionMetric(1.0)
        traj = m.geodesic(m.equator_point(0.0), m.equator_tangent(0.0),
                          2 * np.pi, tol=1e-12)
        ts = np.linspace(0.0, 2 * np.pi, 401)
        lifts = ls.lift_surface_trajectory(m, traj, ts)
        for s, q in zip(ts[::40], lifts[::40]):
            expect = ls.qmul(ls.qexp_i(s / 2), lifts[0])
            assert np.max(np.abs(q - expect)) < 1e-6

    def test_lifted_rhs_consistent(self):
        q0 = ls.normalize(np.array([0.4, 0.1, -0.7, 0.2]))
        traj = fe.integrate(ls.lifted_geodesic_rhs, q0, (0.0, 4 * np.pi),
                            tol=1e-11, project=ls.normalize)
        assert np.max(np.abs(traj.y_end - q0)) < 1e-8

    def test_stretch_chart_roundtrip(self):
        m = g2.RevolutionMetric(0.95)
        to_round, from_round = ls.bundle_chart(m)
        rs = fe.rng(12)
        for _ in range(10):
            p = rs.normal(size=3)
            P = m.project_point(p)
            V = m.tangent_project(P, rs.normal(size=3))
            V /= np.linalg.norm(V)
            pr, vr = to_round(P, V)
            assert abs(np.linalg.norm(pr) - 1.0) < 1e-12
            assert abs(np.linalg.norm(vr) - 1.0) < 1e-12
            assert abs(np.dot(pr, vr)) < 1e-12
            P2, V2 = from_round(pr, vr)
            assert np.max(np.abs(P2 - P)) < 1e-12
            assert np.max(np.abs(V2 - V)) < 1e-12
