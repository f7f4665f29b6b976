"""Quaternion model of S^3, its standard contact form, and the double cover
of the unit tangent bundle of S^2.

Conventions, fixed once for the whole package:

* a quaternion q = x + y i + u j + v k is stored as the array [x, y, u, v];
* the complex pair is (z, w) = (x + iy, u + iv);
* the standard contact form is lambda0(q)(zeta) = <i q, zeta> / 2;
* its Reeb flow is LEFT multiplication by exp(2 t i) (period pi), so right
  translations move binding fibres onto {w = 0} while preserving lambda0;
* the double cover of the round unit tangent bundle is
  D0(q) = (q^-1 j q, -q^-1 k q), a 2-1 map with D0(-q) = D0(q).
"""

from __future__ import annotations

import numpy as np

from . import flow_engine as fe

I = np.array([0.0, 1.0, 0.0, 0.0])
J = np.array([0.0, 0.0, 1.0, 0.0])
K = np.array([0.0, 0.0, 0.0, 1.0])
ONE = np.array([1.0, 0.0, 0.0, 0.0])


def qmul(a, b):
    """Hamilton product; broadcasts over leading axes."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], axis=-1)


def qconj(q):
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def qinv(q):
    q = np.asarray(q, dtype=float)
    return qconj(q) / np.sum(q * q, axis=-1, keepdims=True)


def qexp_i(theta):
    """exp(theta i) as a quaternion array; broadcasts over theta."""
    theta = np.asarray(theta, dtype=float)
    out = np.zeros(theta.shape + (4,))
    out[..., 0] = np.cos(theta)
    out[..., 1] = np.sin(theta)
    return out


def to_zw(q):
    q = np.asarray(q, dtype=float)
    return q[..., 0] + 1j * q[..., 1], q[..., 2] + 1j * q[..., 3]


def from_zw(z, w):
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    return np.stack([z.real, z.imag, w.real, w.imag], axis=-1)


def lambda0(q, zeta):
    """Standard contact form: <i q, zeta> / 2."""
    return 0.5 * np.sum(qmul(I, q) * zeta, axis=-1)


def reeb_vector(q):
    """Reeb field of lambda0: the Hopf field 2 i q."""
    return 2.0 * qmul(I, q)


def hopf_rhs(t, y):
    return 2.0 * qmul(I, y)


def contact_frame(q):
    """The global trivialization (j q, k q) of the contact planes."""
    return qmul(J, q), qmul(K, q)


def frame_components(q, zeta):
    """Components of a tangent vector in the (j q, k q) frame.

    {q, i q, j q, k q} is an orthonormal basis, so the frame components are
    plain inner products; the Reeb and radial parts drop out automatically.
    """
    f1, f2 = contact_frame(q)
    return np.sum(f1 * zeta, axis=-1), np.sum(f2 * zeta, axis=-1)


def normalize(q):
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


# -- double cover of the round unit tangent bundle ---------------------------

def double_cover(q):
    """D0(q) = (q^-1 j q, -q^-1 k q) as a (point, unit tangent) pair on S^2."""
    qc = qconj(q)
    p = qmul(qmul(qc, J), q)
    v = -qmul(qmul(qc, K), q)
    return p[..., 1:], v[..., 1:]


def double_cover_rotation(p, v):
    """The SO(3) matrix of x -> q^-1 x q determined by (p, v).

    Columns are the images of (i, j, k): conjugation sends j to p and k to
    -v, hence i = jk goes to p x (-v) = -(p x v).
    """
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    return np.stack([-np.cross(p, v), p, -v], axis=-1)


def _quat_from_rotation(R):
    """Unit quaternion q with q x q^-1 = R x (Shepperd's branch selection)."""
    t = np.trace(R)
    cand = [t, R[0, 0], R[1, 1], R[2, 2]]
    i = int(np.argmax(cand))
    if i == 0:
        r = np.sqrt(1.0 + t)
        s = 0.5 / r
        q = np.array([0.5 * r, (R[2, 1] - R[1, 2]) * s,
                      (R[0, 2] - R[2, 0]) * s, (R[1, 0] - R[0, 1]) * s])
    else:
        # cyclic indices around the dominant diagonal entry
        a, b, c = i - 1, i % 3, (i + 1) % 3
        r = np.sqrt(1.0 + R[a, a] - R[b, b] - R[c, c])
        s = 0.5 / r
        q = np.empty(4)
        q[0] = (R[c, b] - R[b, c]) * s
        q[1 + a] = 0.5 * r
        q[1 + b] = (R[b, a] + R[a, b]) * s
        q[1 + c] = (R[c, a] + R[a, c]) * s
    return q / np.linalg.norm(q)


def double_cover_inverse(p, v, near=None):
    """One of the two preimages of (p, v) under D0.

    The rotation x -> q^-1 x q has matrix double_cover_rotation(p, v), so the
    quaternion is extracted from its transpose (which represents
    x -> q x q^-1). When ``near`` is given the sign is chosen to keep the
    result on the same sheet.
    """
    R = double_cover_rotation(p, v)
    q = _quat_from_rotation(R.T)
    if near is not None:
        if np.dot(q, near) < 0:
            q = -q
    elif q[np.argmax(np.abs(q))] < 0:
        q = -q
    return q


def lift_path(points, tangents, q0=None):
    """Continuous lift of a discrete path in the unit tangent bundle.

    Each sample is inverted through the double cover with the sign chosen by
    continuity against the previous lift. The caller must sample densely
    enough that consecutive lifts stay in the same hemisphere.
    """
    out = np.empty((len(points), 4))
    prev = q0
    for n, (p, v) in enumerate(zip(points, tangents)):
        out[n] = double_cover_inverse(p, v, near=prev)
        prev = out[n]
    return out


def differential_double_cover(q, zeta):
    """Exact differential of D0 at q applied to zeta (tangent to S^3)."""
    qc, zc = qconj(q), qconj(zeta)
    dp = qmul(qmul(zc, J), q) + qmul(qmul(qc, J), zeta)
    dv = -(qmul(qmul(zc, K), q) + qmul(qmul(qc, K), zeta))
    return dp[..., 1:], dv[..., 1:]


def pullback_vs_standard(q, zeta):
    """(D0^* lambda_round)(zeta) and 4 lambda0(zeta) at q.

    The round Hilbert form at (p, v) pairs a bundle tangent (dp, dv) with
    <v, dp>.
    """
    p, v = double_cover(q)
    dp, _ = differential_double_cover(q, zeta)
    return float(np.sum(v * dp, axis=-1)), float(4.0 * lambda0(q, zeta))


def lifted_geodesic_rhs(t, y):
    """Reeb field of the lifted round geodesic flow: q' = (i q) / 2.

    Geodesic time is arc length downstairs; the lift of a closed geodesic of
    length L closes after 2L upstairs (one deck transformation per lap).
    """
    return 0.5 * qmul(I, y)


# -- general revolution surfaces ---------------------------------------------

def bundle_chart(metric):
    """Forward/backward identification of unit tangent bundles.

    The stretch map Phi(x, y, z) = (x, y, c z) carries the round sphere to
    the ellipsoid of revolution. Pulling a unit tangent vector of the
    ellipsoid back through dPhi and renormalizing identifies the two unit
    tangent bundles fibrewise, which is all the audit bookkeeping needs
    (linking numbers and crossing counts only see the isotopy class).
    """
    c = metric.c

    def to_round(P, V):
        p = np.array([P[0], P[1], P[2] / c])
        v = np.array([V[0], V[1], V[2] / c])
        v = v - np.dot(v, p) * p
        return p, v / np.linalg.norm(v)

    def from_round(p, v):
        P = np.array([p[0], p[1], c * p[2]])
        V = np.array([v[0], v[1], c * v[2]])
        n = metric.gradient(P)
        V = V - np.dot(V, n) / np.dot(n, n) * n
        return P, V / np.linalg.norm(V)

    return to_round, from_round


def lift_surface_trajectory(metric, traj, ts, q0=None):
    """Lift a geodesic-flow trajectory on the surface to S^3 by continuity."""
    to_round, _ = bundle_chart(metric)
    samples = traj(ts)
    pts, vecs = [], []
    for y in samples:
        p, v = to_round(y[:3], y[3:])
        pts.append(p)
        vecs.append(v)
    return lift_path(pts, vecs, q0=q0)
