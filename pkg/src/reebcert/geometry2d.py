"""Surfaces of revolution, their geodesic flow, and Jacobi-field machinery.

The surface family is the ellipsoid of revolution x^2 + y^2 + (z/c)^2 = 1
embedded in R^3 (c = 1 is the round sphere). Geodesics are integrated as
curves in R^3 x R^3 constrained to the unit tangent bundle. Curvature
pinching, the normalization that rescales the maximal curvature to one, and
the rotation-rate form of the Jacobi equation all live here.
"""

from __future__ import annotations

import numpy as np
from scipy import optimize

from . import flow_engine as fe


class RevolutionMetric:
    """Ellipsoid of revolution {x^2 + y^2 + (z/c)^2 = 1} with its induced metric.

    Gaussian curvature in closed form:
        K(p) = 1 / (c^2 (x^2 + y^2 + z^2/c^4)^2).
    For c < 1 the poles minimize K at c^2 and the equator maximizes it at
    1/c^2, so the pinching constant is delta = c^4; for c > 1 the roles swap
    and delta = 1/c^4.
    """

    def __init__(self, c=1.0):
        if c <= 0:
            raise ValueError("semi-axis must be positive")
        self.c = float(c)

    # -- surface geometry ---------------------------------------------------

    def implicit(self, p):
        x, y, z = p
        return x * x + y * y + (z / self.c) ** 2 - 1.0

    def gradient(self, p):
        x, y, z = p
        return np.array([2 * x, 2 * y, 2 * z / self.c**2])

    def hessian(self):
        return np.diag([2.0, 2.0, 2.0 / self.c**2])

    def project_point(self, p):
        # radial projection onto the surface (exact for this gauge)
        x, y, z = p
        nu = np.sqrt(x * x + y * y + (z / self.c) ** 2)
        return np.asarray(p) / nu

    def tangent_project(self, p, v):
        n = self.gradient(p)
        n = n / np.linalg.norm(n)
        return v - np.dot(v, n) * n

    def curvature(self, p):
        x, y, z = p
        c = self.c
        return 1.0 / (c**2 * (x * x + y * y + (z / c**2) ** 2) ** 2)

    def curvature_extrema(self):
        """Exact (K_min, K_max) for this family."""
        c = self.c
        vals = (c**2, 1.0 / c**2)
        return min(vals), max(vals)

    def pinching_delta(self, grid=96):
        """Sampled pinching constant K_min / K_max with a resolution bound.

        A dense latitude sweep (curvature only depends on latitude) is
        refined by bounded scalar minimization; the reported bound is the
        largest change the refinement made to either extremum.
        """
        phis = np.linspace(-np.pi / 2, np.pi / 2, grid)
        pts = np.stack([np.cos(phis), np.zeros_like(phis),
                        self.c * np.sin(phis)], axis=1)
        ks = np.array([self.curvature(p) for p in pts])
        k_of_phi = lambda phi: self.curvature(
            np.array([np.cos(phi), 0.0, self.c * np.sin(phi)]))
        i_min, i_max = int(np.argmin(ks)), int(np.argmax(ks))

        def refine(i, sign):
            lo = phis[max(i - 1, 0)]
            hi = phis[min(i + 1, grid - 1)]
            res = optimize.minimize_scalar(lambda t: sign * k_of_phi(t),
                                           bounds=(lo, hi), method="bounded",
                                           options={"xatol": 1e-12})
            return sign * res.fun

        k_min = refine(i_min, 1.0)
        k_max = refine(i_max, -1.0)
        bound = max(abs(k_min - ks[i_min]), abs(k_max - ks[i_max]))
        return k_min / k_max, max(bound, 1e-12)

    def normalization(self):
        """Scale factor lambda with K_max(lambda^2 g) = 1; lengths multiply by it."""
        _, k_max = self.curvature_extrema()
        return np.sqrt(k_max)

    # -- geodesic flow ------------------------------------------------------

    def geodesic_rhs(self, t, y):
        p, v = y[:3], y[3:]
        g = self.gradient(p)
        H = self.hessian()
        lam = np.dot(v, H @ v) / np.dot(g, g)
        return np.concatenate([v, -lam * g])

    def unit_tangent_project(self, y):
        p = self.project_point(y[:3])
        v = self.tangent_project(p, y[3:])
        return np.concatenate([p, v / np.linalg.norm(v)])

    def geodesic(self, p0, v0, T, tol=1e-11):
        p0 = self.project_point(np.asarray(p0, dtype=float))
        v0 = self.tangent_project(p0, np.asarray(v0, dtype=float))
        v0 = v0 / np.linalg.norm(v0)
        return fe.integrate(self.geodesic_rhs, np.concatenate([p0, v0]),
                            (0.0, T), tol=tol,
                            project=self.unit_tangent_project)

    def clairaut(self, y):
        """x v_y - y v_x, conserved along geodesics of any revolution metric."""
        p, v = y[:3], y[3:]
        return p[0] * v[1] - p[1] * v[0]

    # -- distinguished equator ---------------------------------------------

    def equator_point(self, s):
        return np.array([np.cos(s), np.sin(s), 0.0])

    def equator_tangent(self, s):
        return np.array([-np.sin(s), np.cos(s), 0.0])

    def equator_normal_field(self, s):
        # unit tangent field pointing to the z > 0 side along the equator
        return np.array([0.0, 0.0, 1.0])

    def equator_length(self):
        # {z = 0} is the unit circle for every c
        return 2 * np.pi

    def equator_curvature(self):
        return self.curvature(np.array([1.0, 0.0, 0.0]))


# -- Jacobi fields and frame rotation rates ---------------------------------

def jacobi_rhs(curvature_of_t):
    def rhs(t, y):
        return np.array([y[1], -curvature_of_t(t) * y[0]])
    return rhs


def jacobi_field(curvature_of_t, b0, db0, T, tol=1e-11):
    """Solve b'' + K(t) b = 0 and return the trajectory of (b, b')."""
    return fe.integrate(jacobi_rhs(curvature_of_t),
                        np.array([b0, db0], dtype=float), (0.0, T), tol=tol)


def jacobi_zero(curvature_of_t, which=1, t_max=50.0, tol=1e-11):
    """Time of the which-th positive zero of the Jacobi field with b(0)=0, b'(0)=1."""
    traj = jacobi_field(curvature_of_t, 0.0, 1.0, t_max, tol=tol)
    scan = fe.detect_crossings(traj, lambda s: s[0], refine_tol=1e-13)
    zeros = [ev.t for ev in scan if ev.t > 1e-9]
    if len(zeros) < which:
        raise fe.FlowEngineError(
            f"fewer than {which} Jacobi zeros before t={t_max}")
    return zeros[which - 1]


def frame_angle_rate(K, theta):
    """Rotation rate cos^2(theta) + K sin^2(theta) of a Jacobi line field.

    theta is measured from the derivative axis of the (b', b) plane; the rate
    is pinched between min(1, K) and max(1, K) pointwise.
    """
    s = np.sin(theta)
    c = np.cos(theta)
    return c * c + K * s * s


def frame_angle_trajectory(metric, geod_traj, theta0, T, tol=1e-11):
    """Integrate theta' = cos^2 theta + K(p(t)) sin^2 theta along a geodesic."""
    rate = lambda t, th: np.array(
        [frame_angle_rate(metric.curvature(geod_traj(t)[:3]), th[0])])
    return fe.integrate(rate, np.array([theta0]), (0.0, T), tol=tol)
