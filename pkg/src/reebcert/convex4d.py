"""Convex energy hypersurfaces in R^4 and the rotation-rate bound machinery.

Coordinates are (q1, q2, p1, p2). Three complex structures are used: J0 is
the symplectic one (omega0(u, v) = <u, J0 v>, Hamiltonian field
X_H = -J0 grad H), while J1, J2 anticommute with it and furnish the moving
frame below.

For a convex body C = {nu <= 1} with gauge nu, the flow studied here is the
Hamiltonian flow of H = nu^2 on the boundary. Along it the frame

    X0 = grad H / |grad H|,  X1 = J2 X0,  X2 = J1 X0,  X3 = -J0 X0

splits a linearized solution into transverse components (alpha1, alpha2)
obeying (alpha2', -alpha1')^T = M(t) (alpha1, alpha2)^T with the symmetric
2x2 matrix M built from the Hessian of H, so the transverse rotation rate is
the Rayleigh quotient <alpha, M alpha>/|alpha|^2. Positive definiteness of
the Hessian turns into a positive lower bound for that rate: twice the
smallest Hessian eigenvalue of nu^2 over the unit sphere of directions.
"""

from __future__ import annotations

import numpy as np
from scipy import optimize

from . import flow_engine as fe

J0 = np.array([
    [0.0, 0.0, -1.0, 0.0],
    [0.0, 0.0, 0.0, -1.0],
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0],
])
J1 = np.array([
    [0.0, -1.0, 0.0, 0.0],
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
    [0.0, 0.0, -1.0, 0.0],
])
J2 = np.array([
    [0.0, 0.0, 0.0, -1.0],
    [0.0, 0.0, 1.0, 0.0],
    [0.0, -1.0, 0.0, 0.0],
    [1.0, 0.0, 0.0, 0.0],
])


def omega0(u, v):
    return float(np.dot(u, J0 @ v))


class Ellipsoid:
    """E(a1, a2) = {(q1^2 + p1^2)/a1 + (q2^2 + p2^2)/a2 <= 1}, a1 <= a2."""

    def __init__(self, a1=1.0, a2=1.0):
        if a1 <= 0 or a2 <= 0:
            raise ValueError("axes must be positive")
        self.a = (float(a1), float(a2))
        self._Q = np.diag([1 / a1, 1 / a2, 1 / a1, 1 / a2])

    def gauge2(self, x):
        return float(x @ self._Q @ x)

    def grad2(self, x):
        return 2.0 * (self._Q @ x)

    def hess2(self, x):
        return 2.0 * self._Q

    def kmin_exact(self):
        return 2.0 / max(self.a)

    def orbit_periods(self):
        """Periods (pi a1, pi a2) of the two coordinate circles."""
        return np.pi * self.a[0], np.pi * self.a[1]


class PerturbedBall:
    """Star-shaped body {|x| <= r(x/|x|)} with r(n) = 1 + sum_i c_i n_i^4.

    Small coefficients keep it convex; convexity is certified numerically by
    the positivity of the sampled minimal Hessian eigenvalue.
    """

    def __init__(self, coeffs=(0.05, -0.05, 0.0, 0.0)):
        self.coeffs = np.asarray(coeffs, dtype=float)
        if self.coeffs.shape != (4,):
            raise ValueError("need exactly 4 quartic coefficients")

    def _r(self, n):
        return 1.0 + float(np.dot(self.coeffs, n**4))

    def _grad_r(self, n):
        return 4.0 * self.coeffs * n**3

    def gauge2(self, x):
        s = np.linalg.norm(x)
        return (s / self._r(x / s)) ** 2

    def grad2(self, x):
        # nu^2 = |x|^2 / r(n)^2 with n = x/|x|; the angular gradient of r
        # enters through the projector (I - n n^T)/|x|
        s = np.linalg.norm(x)
        n = x / s
        r = self._r(n)
        gr = self._grad_r(n)
        ang = gr - np.dot(gr, n) * n
        return 2.0 * x / r**2 - (2.0 * s / r**3) * ang

    def hess2(self, x, h=1e-5):
        # central differences of the exact gradient; symmetrized
        H = np.empty((4, 4))
        for k in range(4):
            e = np.zeros(4)
            e[k] = h
            H[:, k] = (self.grad2(x + e) - self.grad2(x - e)) / (2 * h)
        return 0.5 * (H + H.T)


def reeb_rhs(body):
    def rhs(t, y):
        return -(J0 @ body.grad2(y))
    return rhs


def boundary_project(body):
    def project(y):
        return y / np.sqrt(body.gauge2(y))
    return project


def boundary_point(body, direction):
    """Radial intersection of a ray with the boundary."""
    d = np.asarray(direction, dtype=float)
    return d / np.sqrt(body.gauge2(d))


def flow(body, x0, T, tol=1e-11):
    return fe.integrate(reeb_rhs(body), x0, (0.0, T), tol=tol,
                        project=boundary_project(body))


# -- moving frame and transverse rotation rate -------------------------------

def frame(body, x):
    g = body.grad2(x)
    X0 = g / np.linalg.norm(g)
    return X0, J2 @ X0, J1 @ X0, -(J0 @ X0)


def rate_matrix(body, x):
    """The symmetric 2x2 matrix M driving the transverse angle."""
    H = body.hess2(x)
    X0, X1, X2, X3 = frame(body, x)
    m11 = X1 @ H @ X1
    m12 = X1 @ H @ X2
    m22 = X2 @ H @ X2
    c = X3 @ H @ X3
    return np.array([[m11, m12], [m12, m22]]) + c * np.eye(2)


def angle_rate(body, x, alpha):
    a = np.asarray(alpha, dtype=float)
    M = rate_matrix(body, x)
    return float(a @ M @ a) / float(a @ a)


def transverse_angle_rhs(body):
    """RHS for (x, theta): boundary flow plus the transverse angle."""
    rhs_x = reeb_rhs(body)

    def rhs(t, y):
        x, th = y[:4], y[4]
        M = rate_matrix(body, x)
        a = np.array([np.cos(th), np.sin(th)])
        dth = float(a @ M @ a)
        out = np.empty(5)
        out[:4] = rhs_x(t, x)
        out[4] = dth
        return out

    return rhs


def transverse_angle(body, x0, theta0, T, tol=1e-10):
    """Unwrapped transverse angle along the boundary orbit through x0.

    The pair (alpha1, alpha2) rotates by (alpha2', -alpha1') = M alpha; in
    polar form the angle from the alpha1 axis obeys theta' = <a, M a> with
    a = (cos theta, sin theta).
    """
    proj = boundary_project(body)

    def project(y):
        out = y.copy()
        out[:4] = proj(y[:4])
        return out

    y0 = np.concatenate([np.asarray(x0, dtype=float), [theta0]])
    return fe.integrate(transverse_angle_rhs(body), y0, (0.0, T), tol=tol,
                        project=project)


def min_rate_sampled(body, n_samples, seed):
    """Smallest sampled rotation rate over boundary points and angles."""
    gen = fe.rng(seed)
    dirs = fe.random_unit_vectors(gen, n_samples, 4)
    thetas = gen.uniform(0.0, 2 * np.pi, size=n_samples)
    worst = np.inf
    for d, th in zip(dirs, thetas):
        x = boundary_point(body, d)
        a = np.array([np.cos(th), np.sin(th)])
        M = rate_matrix(body, x)
        worst = min(worst, float(a @ M @ a))
    return worst


def kmin(body, budget=2**14):
    """Infimum over unit directions of the smallest Hessian eigenvalue of nu^2.

    Ellipsoids are exact; general bodies are sampled on a deterministic
    quasi-random sweep of the boundary, refined by Nelder-Mead from the ten
    best starts. Returns (value, error_bound).
    """
    if isinstance(body, Ellipsoid):
        return body.kmin_exact(), 0.0

    def lam_min_angles(ang):
        n = _angles_to_unit(ang)
        x = boundary_point(body, n)
        return float(np.linalg.eigvalsh(body.hess2(x))[0])

    dirs = fe.sphere_directions(budget, 4)
    vals = np.array([
        float(np.linalg.eigvalsh(body.hess2(boundary_point(body, d)))[0])
        for d in dirs])
    order = np.argsort(vals)
    best = np.inf
    for idx in order[:10]:
        ang0 = _unit_to_angles(dirs[idx])
        res = optimize.minimize(lam_min_angles, ang0, method="Nelder-Mead",
                                options={"xatol": 1e-10, "fatol": 1e-12,
                                         "maxiter": 2000})
        best = min(best, float(res.fun))
    # resolution bound: sampled-vs-refined gap plus local variation scale
    gap = float(vals[order[0]] - best)
    spread = float(vals[order[9]] - vals[order[0]])
    err = max(gap, spread / budget ** (1 / 3), 1e-9)
    return best, err


def _angles_to_unit(ang):
    t1, t2, t3 = ang
    s1, c1 = np.sin(t1), np.cos(t1)
    s2, c2 = np.sin(t2), np.cos(t2)
    return np.array([c1, s1 * c2, s1 * s2 * np.cos(t3), s1 * s2 * np.sin(t3)])


def _unit_to_angles(n):
    t1 = np.arccos(np.clip(n[0], -1, 1))
    t2 = np.arctan2(np.hypot(n[2], n[3]), n[1])
    t3 = np.arctan2(n[3], n[2])
    return np.array([t1, t2, t3])
