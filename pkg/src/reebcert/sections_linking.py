"""Surfaces of section, return maps, linking numbers, and rotation numbers.

Two independent linking routes are kept deliberately separate and are never
allowed to feed each other:

* the crossing route counts signed transits through a disk page, computed as
  the winding of the transverse complex coordinate along the loop;
* the Gauss route stereographically projects both loops from a far pole and
  evaluates the segment-pair solid-angle formula for polylines.

Model flows (Hopf flow, ellipsoid flows, the lifted round geodesic flow) are
all conjugate to a diagonal rotation (z, w) -> (e^{i w1 t} z, e^{i w2 t} w)
in a right-translated chart, which is what LinearModelFlow encodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import flow_engine as fe
from . import geometry2d as g2
from . import lift_s3 as ls


# ---------------------------------------------------------------------------
# model flows and disk pages
# ---------------------------------------------------------------------------

class LinearModelFlow:
    """Diagonal rotation flow on S^3 in a right-translated chart.

    rates = (w1, w2) act on the chart coordinates (z, w) of
    q_chart = q * q0^-1. The Hopf flow is rates (2, 2); the boundary flow of
    the ellipsoid E(a1, a2) transported to S^3 is rates (2/a1, 2/a2); the
    lifted round geodesic flow is rates (1/2, 1/2).
    """

    def __init__(self, rates=(2.0, 2.0), q0=None):
        self.rates = (float(rates[0]), float(rates[1]))
        self.q0 = ls.ONE.copy() if q0 is None else ls.normalize(q0)
        w1, w2 = self.rates
        R = np.array([[0.0, -1.0], [1.0, 0.0]])
        self._A = np.zeros((4, 4))
        self._A[:2, :2] = w1 * R
        self._A[2:, 2:] = w2 * R

    def to_chart(self, q):
        return ls.qmul(q, ls.qinv(self.q0))

    def from_chart(self, qc):
        return ls.qmul(qc, self.q0)

    def rhs(self, t, y):
        qc = self.to_chart(y)
        return self.from_chart(qc @ self._A.T if qc.ndim > 1 else self._A @ qc)

    def rhs_aug(self, t, y):
        """Flow plus its linearization: y = [q, zeta] flattened."""
        n = y.size // 8
        q = y[: 4 * n].reshape(n, 4)
        z = y[4 * n:].reshape(n, 4)
        dq = self.from_chart(self.to_chart(q) @ self._A.T)
        dz = self.from_chart(self.to_chart(z) @ self._A.T)
        return np.concatenate([dq.ravel(), dz.ravel()])

    def exact(self, t, q):
        """Closed-form evolution (the flow is a chartwise rotation)."""
        z, w = ls.to_zw(self.to_chart(q))
        z = np.exp(1j * self.rates[0] * t) * z
        w = np.exp(1j * self.rates[1] * t) * w
        return self.from_chart(ls.from_zw(z, w))

    def integrate(self, q, T, tol=1e-11):
        return fe.integrate(self.rhs, np.asarray(q, dtype=float), (0.0, T),
                            tol=tol, project=ls.normalize)


@dataclass
class DiskPage:
    """One page {arg(axis coordinate) = phase} of an open book for a model flow.

    axis "w" means pages are levels of arg(w) in the chart, the binding is
    the circle {w = 0}, the page chart coordinate is z (and symmetrically for
    axis "z").
    """

    flow: LinearModelFlow
    axis: str = "w"
    phase: float = 0.0

    def _split(self, q):
        z, w = ls.to_zw(self.flow.to_chart(q))
        return (w, z) if self.axis == "w" else (z, w)

    @property
    def axis_rate(self):
        return self.flow.rates[1] if self.axis == "w" else self.flow.rates[0]

    @property
    def binding_rate(self):
        return self.flow.rates[0] if self.axis == "w" else self.flow.rates[1]

    def section_value(self, q):
        ax, _ = self._split(q)
        return np.imag(np.exp(-1j * self.phase) * ax)

    def admissible(self, q):
        ax, _ = self._split(q)
        return np.real(np.exp(-1j * self.phase) * ax) > 0

    def chart(self, q):
        _, disk = self._split(q)
        return disk

    def transverse_angle(self, q):
        ax, _ = self._split(q)
        return np.angle(ax)

    def binding_point(self, t, base_angle=0.0):
        phase = np.exp(1j * (self.binding_rate * t + base_angle))
        zw = (phase, 0.0 * phase) if self.axis == "w" else (0.0 * phase, phase)
        return self.flow.from_chart(ls.from_zw(*zw))

    @property
    def binding_period(self):
        return 2 * np.pi / self.binding_rate

    @property
    def return_time(self):
        """Page-to-same-page time of the model flow (constant)."""
        return 2 * np.pi / self.axis_rate

    def binding_loop(self, n=256):
        ts = np.linspace(0.0, self.binding_period, n, endpoint=False)
        return np.stack([self.binding_point(t) for t in ts])


def hopf_flow(q0=None):
    return LinearModelFlow((2.0, 2.0), q0=q0)


def ellipsoid_flow(a1, a2, q0=None):
    """Ellipsoid boundary flow carried to S^3.

    The identification sends each symplectic-plane pair (p_j + i q_j) to the chart
    coordinates, so the short orbit of E(a1, a2) with a1 < a2 is the circle
    {w = 0} with rate 2/a1.
    """
    return LinearModelFlow((2.0 / a1, 2.0 / a2), q0=q0)


def lifted_round_flow(q0=None):
    return LinearModelFlow((0.5, 0.5), q0=q0)


# ---------------------------------------------------------------------------
# loops and the two linking routes
# ---------------------------------------------------------------------------

def slerp(a, b, n):
    """Great-circle interpolation samples from a to b (exclusive of b)."""
    a = ls.normalize(a)
    b = ls.normalize(b)
    dot = float(np.clip(np.dot(a, b), -1.0, 1.0))
    ang = np.arccos(dot)
    ts = np.linspace(0.0, 1.0, n, endpoint=False)
    if ang < 1e-12:
        return np.repeat(a[None, :], n, axis=0)
    return (np.sin((1 - ts) * ang)[:, None] * a[None, :]
            + np.sin(ts * ang)[:, None] * b[None, :]) / np.sin(ang)


def close_arc(flow, x, T, n_arc=512, n_chord=64, tol=1e-10):
    """Closed polyline: integrated flow arc plus a spherical closing chord."""
    traj = flow.integrate(x, T, tol=tol)
    ts = np.linspace(0.0, T, n_arc)
    pts = traj(ts)
    end, start = pts[-1], pts[0]
    if np.linalg.norm(end - start) < 1e-9:
        return pts[:-1]
    chord = slerp(end, start, n_chord)
    return np.vstack([pts[:-1], chord])


def link_binding_crossings(page, loop_pts):
    """Crossing-route linking of a closed loop with a page binding.

    Signed transits through any single page equal the winding of the
    transverse coordinate along the loop; the residual distance to the
    nearest integer is reported as the route's internal gap.
    """
    vals = []
    for q in loop_pts:
        a, _ = page._split(q)
        vals.append(a)
    vals.append(vals[0])
    w = fe.winding(np.asarray(vals))
    return int(np.round(w)), float(abs(w - np.round(w)))


def _stereographic_basis(pole, seed):
    gen = fe.rng(seed + 101)
    basis = []
    while len(basis) < 3:
        v = gen.normal(size=4)
        v -= np.dot(v, pole) * pole
        for e in basis:
            v -= np.dot(v, e) * e
        n = np.linalg.norm(v)
        if n > 1e-6:
            basis.append(v / n)
    # orientation pinned so that a positively-oriented Hopf pair links +1,
    # matching the crossing route
    M = np.stack(basis + [pole])
    if np.linalg.det(M) > 0:
        basis[0], basis[1] = basis[1], basis[0]
    return basis


def _stereographic_project(pts, pole, basis):
    a = pts @ pole
    out = np.stack([pts @ e for e in basis], axis=1)
    return out / (1.0 - a)[:, None]


def _segment_pair_solid_angle(a1, a2, b1, b2):
    """Signed solid-angle contribution of segment pairs (broadcasting)."""
    r13 = b1 - a1
    r14 = b2 - a1
    r23 = b1 - a2
    r24 = b2 - a2
    n1 = np.cross(r13, r14)
    n2 = np.cross(r14, r24)
    n3 = np.cross(r24, r23)
    n4 = np.cross(r23, r13)
    norms = np.stack([np.linalg.norm(n, axis=-1) for n in (n1, n2, n3, n4)])
    ok = norms.min(axis=0) > 1e-14
    safe = np.where(norms[..., None] > 1e-14, norms[..., None], 1.0)
    n1, n2, n3, n4 = (n / s for n, s in zip((n1, n2, n3, n4), safe))

    def asd(u, v):
        return np.arcsin(np.clip(np.sum(u * v, axis=-1), -1, 1))

    om = asd(n1, n2) + asd(n2, n3) + asd(n3, n4) + asd(n4, n1)
    sgn = np.sign(np.sum(np.cross(a2 - a1, b2 - b1) * r13, axis=-1))
    return np.where(ok, om * sgn, 0.0) / (4 * np.pi)


@dataclass
class GaussLinking:
    raw: float
    value: int
    gap: float
    pole_tries: int


def linking_gauss(loop1, loop2, seed=0, min_pole_distance=0.35):
    """Gauss-integral linking of two disjoint closed polylines on S^3.

    A pole far from both loops is drawn from the seeded generator, both
    loops are stereographically projected to R^3 through an
    orientation-fixed orthonormal basis, and the polyline Gauss integral is
    summed segment pair by segment pair. The distance of the raw value to
    the nearest integer is the integrality gap.
    """
    loop1 = np.asarray(loop1, dtype=float)
    loop2 = np.asarray(loop2, dtype=float)
    gen = fe.rng(seed)
    pole = None
    tries = 0
    for _ in range(200):
        tries += 1
        cand = gen.normal(size=4)
        cand /= np.linalg.norm(cand)
        margin = min(np.min(np.arccos(np.clip(loop1 @ cand, -1, 1))),
                     np.min(np.arccos(np.clip(loop2 @ cand, -1, 1))))
        if margin > min_pole_distance:
            pole = cand
            break
    if pole is None:
        raise fe.FlowEngineError("no stereographic pole clears both loops")
    basis = _stereographic_basis(pole, seed)
    P = _stereographic_project(loop1, pole, basis)
    Q = _stereographic_project(loop2, pole, basis)
    B1 = Q[None, :, :]
    B2 = np.roll(Q, -1, axis=0)[None, :, :]
    P2 = np.roll(P, -1, axis=0)
    total = 0.0
    chunk = max(1, 500_000 // max(len(Q), 1))
    for i0 in range(0, len(P), chunk):
        A1 = P[i0:i0 + chunk, None, :]
        A2 = P2[i0:i0 + chunk, None, :]
        total += float(np.sum(_segment_pair_solid_angle(A1, A2, B1, B2)))
    value = int(np.round(total))
    return GaussLinking(raw=float(total), value=value,
                        gap=float(abs(total - value)), pole_tries=tries)


# ---------------------------------------------------------------------------
# winding-sum identity for linking numbers
# ---------------------------------------------------------------------------

def page_traces(page, x, T, n_s=256, n_arc=4096, n_chord=256):
    """Disk-chart traces of the closed-up arc through the rotating pages.

    The arc is closed by a spherical chord when it does not already close.
    With W the total transverse winding of the closed loop, trace i follows
    the loop's i-th page transit as the page phase makes one full turn, so
    the union of the traces sweeps the loop exactly once. The transverse
    angle must be strictly monotone along the loop (true for model arcs and
    short closing chords).
    """
    flow = page.flow
    ts = np.linspace(0.0, T, n_arc + 1)
    pts = np.stack([flow.exact(t, x) for t in ts])
    if np.linalg.norm(pts[-1] - pts[0]) < 1e-9:
        loop = pts[:-1]
    else:
        loop = np.vstack([pts[:-1], slerp(pts[-1], pts[0], n_chord)])
    ax = np.array([page._split(q)[0] for q in loop])
    charts = np.array([page.chart(q) for q in loop])
    ang = fe.unwrap_guarded(np.angle(ax))
    closing = float(np.angle(np.exp(1j * (np.angle(ax[0]) - ang[-1]))))
    ang_ext = np.append(ang, ang[-1] + closing)
    charts_ext = np.append(charts, charts[0])
    if np.any(np.diff(ang_ext) <= 0):
        raise fe.ResolutionError(
            "transverse angle is not monotone along the closed loop")
    W = int(np.round((ang_ext[-1] - ang_ext[0]) / (2 * np.pi)))
    span = ang_ext[-1] - ang_ext[0]
    a_start = 2 * np.pi * np.ceil((ang_ext[0] - page.phase) / (2 * np.pi)) \
        + page.phase
    ss = np.linspace(0.0, 1.0, n_s + 1)
    traces = []
    for i in range(W):
        targets = a_start + 2 * np.pi * (i + ss)
        tmod = ang_ext[0] + (targets - ang_ext[0]) % span
        tr = (np.interp(tmod, ang_ext, charts_ext.real)
              + 1j * np.interp(tmod, ang_ext, charts_ext.imag))
        traces.append(tr)
    return traces


def winding_sum_linking(page, x, Tx, y, Ty, n_s=512):
    """Linking of two closed-up arcs as a sum of pairwise trace windings."""
    tr_p = page_traces(page, x, Tx, n_s=n_s)
    tr_q = page_traces(page, y, Ty, n_s=n_s)
    total = 0.0
    for kp in tr_p:
        for kq in tr_q:
            total += fe.winding(kp - kq)
    return total


# ---------------------------------------------------------------------------
# rotation numbers
# ---------------------------------------------------------------------------

@dataclass
class RotationNumber:
    value: float
    framing: str
    periods: int
    richardson_gap: float


_PAGE_FRAMES = ("seifert", "disk-page")
_GLOBAL_FRAMES = ("global", "constant-frame")


def rotation_number(page, framing="seifert", n_periods=50, tol=1e-10,
                    base_angle=0.0, dev_angle=0.0):
    """Measured rotation number of a page binding orbit.

    The flow and its linearization are integrated together along the binding;
    the transverse deviation is compared against either the disk-page framing
    (a constant direction in the page chart) or the global contact frame
    (j q, k q). Turns per binding period are Richardson-extrapolated in the
    period count.
    """
    if framing not in _PAGE_FRAMES + _GLOBAL_FRAMES:
        raise ValueError(f"unknown framing {framing!r}")
    flow = page.flow
    T_b = page.binding_period
    q0 = page.binding_point(0.0, base_angle=base_angle)
    if page.axis == "w":
        zeta0 = flow.from_chart(ls.from_zw(0.0 + 0j, np.exp(1j * dev_angle)))
    else:
        zeta0 = flow.from_chart(ls.from_zw(np.exp(1j * dev_angle), 0.0 + 0j))
    zeta0 = zeta0 - np.dot(zeta0, q0) * q0

    dt = 0.05 / max(sum(flow.rates), 1.0)
    samples = []

    def observe(t, yy):
        q = yy[:4]
        z = yy[4:]
        if framing in _PAGE_FRAMES:
            ax, _ = page._split(z)
            samples.append(complex(ax))
        else:
            a, b = ls.frame_components(q, z)
            samples.append(complex(a, b))

    y0 = np.concatenate([q0, zeta0])

    def project(yy):
        out = yy.copy()
        out[:4] = ls.normalize(yy[:4])
        return out

    T_total = 2 * n_periods * T_b
    fe.integrate(lambda t, yy: flow.rhs_aug(t, yy), y0, (0.0, T_total),
                 tol=tol, project=project, observer=observe,
                 observe_dt=dt, store=False)
    zs = np.asarray(samples)
    n_half = len(zs) // 2
    w_half = fe.winding(zs[:n_half + 1])
    w_full = fe.winding(zs)
    t_half = dt * n_half
    rho_n = w_half / (t_half / T_b)
    rho_2n = w_full / (dt * (len(zs) - 1) / T_b)
    value = 2 * rho_2n - rho_n
    return RotationNumber(value=float(value), framing=framing,
                          periods=n_periods,
                          richardson_gap=float(abs(rho_2n - rho_n)))


@dataclass
class CzIndex:
    value: int
    degenerate: bool
    neighbors: tuple | None


def cz_index(rho, n=1, tol=1e-9):
    """Index 2 floor(n rho) + 1 of the n-th iterate, with a degeneracy flag.

    When n rho sits within tol of an integer the orbit is at a bifurcation
    and both neighboring odd values are reported.
    """
    x = n * float(rho)
    nearest = np.round(x)
    if abs(x - nearest) < tol:
        k = int(nearest)
        return CzIndex(value=2 * k - 1, degenerate=True,
                       neighbors=(2 * k - 1, 2 * k + 1))
    return CzIndex(value=int(2 * np.floor(x) + 1), degenerate=False,
                   neighbors=None)


def multi_page_rotation(flow, translations, which, n_periods=20, tol=1e-10):
    """Rotation of fibre `which` against the multi-boundary page framing.

    The framing direction along the fibre is exp(-i sum of the chart angles
    of the other fibres), the page framing twisted once per turn of each
    companion coordinate; this realizes the framing induced by a Seifert
    surface bounding the whole collection.
    """
    pages = [DiskPage(LinearModelFlow(flow.rates, q0=tr)) for tr in translations]
    page_i = pages[which]
    T_b = page_i.binding_period
    q0 = page_i.binding_point(0.0)
    zeta0 = page_i.flow.from_chart(ls.from_zw(0.0 + 0j, 1.0 + 0j))
    zeta0 = zeta0 - np.dot(zeta0, q0) * q0
    dt = 0.02 / max(sum(flow.rates), 1.0)
    samples = []

    def observe(t, yy):
        q, z = yy[:4], yy[4:]
        ax, _ = page_i._split(z)
        twist = 0.0
        for m, pg in enumerate(pages):
            if m == which:
                continue
            twist += np.angle(pg._split(q)[0])
        samples.append((complex(ax), twist))

    def project(yy):
        out = yy.copy()
        out[:4] = ls.normalize(yy[:4])
        return out

    y0 = np.concatenate([q0, zeta0])
    fe.integrate(lambda t, yy: page_i.flow.rhs_aug(t, yy), y0,
                 (0.0, n_periods * T_b), tol=tol, project=project,
                 observer=observe, observe_dt=dt, store=False)
    devs = np.array([d for d, _ in samples])
    twists = np.array([tw for _, tw in samples])
    rel = devs * np.exp(1j * fe.unwrap_guarded(twists))
    return fe.winding(rel) / (dt * (len(rel) - 1) / T_b)


def rotation_additivity_check(rates, translations, n_periods=20, seed=0,
                              n_loop=512):
    """Residuals of: multi-page rotation = disk-page rotation + links.

    For each fibre in the collection, the left side is measured against the
    framing of a surface bounding all of them; the right side adds the Gauss
    linking numbers with the companions to the single-page rotation number.
    """
    flow = LinearModelFlow(rates)
    residuals = []
    for i, tr in enumerate(translations):
        lhs = multi_page_rotation(flow, translations, i, n_periods=n_periods)
        own = DiskPage(LinearModelFlow(rates, q0=tr))
        rho_page = rotation_number(own, framing="seifert",
                                   n_periods=n_periods).value
        links = 0
        loop_i = own.binding_loop(n_loop)
        for m, other in enumerate(translations):
            if m == i:
                continue
            loop_m = DiskPage(LinearModelFlow(rates, q0=other)).binding_loop(n_loop)
            links += linking_gauss(loop_i, loop_m, seed=seed + 7 * m).value
        residuals.append(abs(lhs - (rho_page + links)))
    return np.asarray(residuals)


# ---------------------------------------------------------------------------
# Birkhoff annulus of the equator of a revolution surface
# ---------------------------------------------------------------------------

@dataclass
class ReturnSample:
    s: float
    theta: float
    s1: float
    theta1: float
    tau: float
    ds_mod: float
    half_time: float


class BirkhoffAnnulus:
    """Annulus of unit vectors along the equator pointing to the z >= 0 side.

    Chart a(s, theta) = (c(s), cos(theta) c'(s) + sin(theta) e3) with
    s the arc parameter of the equator and theta in [0, pi]. The return map
    follows the geodesic flow to the next equator crossing on the same side
    (second crossing of {z = 0}); the boundary circles are the equator orbit
    and its reverse, where the return is the second conjugate point.
    """

    def __init__(self, metric):
        self.metric = metric
        self.L = metric.equator_length()
        self._boundary_return = None

    def chart(self, s, theta):
        p = self.metric.equator_point(s)
        v = (np.cos(theta) * self.metric.equator_tangent(s)
             + np.sin(theta) * self.metric.equator_normal_field(s))
        return np.concatenate([p, v])

    def chart_angles(self, y):
        p, v = y[:3], y[3:]
        s = np.arctan2(p[1], p[0]) % (2 * np.pi)
        theta = np.arctan2(v[2], np.dot(v, self.metric.equator_tangent(s)))
        return s, theta

    def boundary_return_time(self):
        if self._boundary_return is None:
            K = self.metric.equator_curvature()
            self._boundary_return = g2.jacobi_zero(lambda t: K, which=2)
        return self._boundary_return

    def return_map(self, s, theta, tol=1e-10):
        if theta < 1e-9 or theta > np.pi - 1e-9:
            tau = self.boundary_return_time()
            ds = tau if theta < 1e-9 else -tau
            return ReturnSample(s=s, theta=theta,
                                s1=(s + ds) % self.L, theta1=theta, tau=tau,
                                ds_mod=ds % self.L,
                                half_time=tau / 2)
        y0 = self.chart(s, theta)
        # the same-side return happens within two hemisphere passages, well
        # under the short cap; the long cap is a fallback for odd geometries
        ret = None
        for cap_factor in (2.0, 4.0):
            t_cap = cap_factor * self.boundary_return_time()
            traj = fe.integrate(self.metric.geodesic_rhs, y0, (0.0, t_cap),
                                tol=tol,
                                project=self.metric.unit_tangent_project)
            scan = fe.detect_crossings(traj, lambda yy: yy[2])
            hits = [ev for ev in scan if ev.t > 1e-8]
            ret = next((ev for ev in hits if ev.state[5] > 0), None)
            if ret is not None:
                break
        if not hits:
            raise fe.FlowEngineError("no equator return within the time cap")
        half_time = hits[0].t
        if ret is None:
            raise fe.FlowEngineError("no same-side return within the time cap")
        s1, theta1 = self.chart_angles(ret.state)
        return ReturnSample(s=s, theta=theta, s1=s1, theta1=theta1,
                            tau=ret.t, ds_mod=(s1 - s) % self.L,
                            half_time=half_time)

    def sample_grid(self, n_s=8, n_theta=9, tol=1e-10, include_boundary=True):
        thetas = np.linspace(0.0, np.pi, n_theta)
        if not include_boundary:
            thetas = thetas[1:-1]
        out = []
        for s in np.linspace(0.0, self.L, n_s, endpoint=False):
            for th in thetas:
                out.append(self.return_map(s, th, tol=tol))
        return out


def canonical_lift_displacement(ds_mod, L):
    """Representative of a displacement class inside (2L/3, 3L/2).

    The window is shorter than one period, so at most one representative
    exists; a class with none signals a geometry outside the pinching range
    and raises.
    """
    base = ds_mod % L
    ks = np.arange(-1, 4)
    cands = [base + k * L for k in ks
             if 2 * L / 3 < base + k * L < 3 * L / 2]
    if not cands:
        raise fe.FlowEngineError(
            f"no displacement representative in (2L/3, 3L/2) for {ds_mod!r}")
    return float(cands[0])


def tau_stats(annulus, n_s=8, n_theta=9, tol=1e-10):
    """(tau_min, tau_max, samples) over a chart grid, boundary included."""
    samples = annulus.sample_grid(n_s=n_s, n_theta=n_theta, tol=tol)
    taus = np.array([r.tau for r in samples])
    return float(np.min(taus)), float(np.max(taus)), samples


# ---------------------------------------------------------------------------
# crossings of loops with the lifted annulus
# ---------------------------------------------------------------------------

# Orientation of the lifted annulus, pinned by the meridian calibration test:
# a positively-linked meridian of the equator lift must cross the annulus +1.
_ANNULUS_SIGN = 1


def lifted_boundary_loops(metric, n=1024):
    """Lifts of the equator orbit and of its reverse (the annulus boundary)."""
    L = metric.equator_length()
    ss = np.linspace(0.0, 2 * L, n, endpoint=False)
    to_round, _ = ls.bundle_chart(metric)
    fwd = [to_round(metric.equator_point(s), metric.equator_tangent(s))
           for s in ss]
    gamma = ls.lift_path([p for p, _ in fwd], [v for _, v in fwd])
    rev = [to_round(metric.equator_point(-s), -metric.equator_tangent(-s))
           for s in ss]
    gamma_hat = ls.lift_path([p for p, _ in rev], [v for _, v in rev])
    return gamma, gamma_hat


def annulus_crossings(metric, loop_pts):
    """Signed count of transversal crossings of a loop with the lifted annulus.

    Membership upstairs: the double-cover image has footpoint on the equator
    and tangent on the closed upper side. The stretch identification scales
    the footpoint height and the tangent vertical component by the same
    positive factor, so for the whole revolution family the predicate reads
    off the round double cover directly. Crossings are found by sign changes
    of the footpoint height along the polyline and refined by bisection on
    the chords.
    """

    def height_and_side(q):
        p, v = ls.double_cover(ls.normalize(q))
        return p[2], v[2]

    n = len(loop_pts)
    hs = np.array([height_and_side(q)[0] for q in loop_pts])
    # resolve exact-zero samples to the sign opposite the previous resolved
    # one: a transversal zero at a vertex is then counted on the incoming
    # segment, while a grazing touch contributes two cancelling crossings
    signs = np.sign(hs)
    nz = np.nonzero(signs)[0]
    if len(nz) == 0:
        raise fe.FlowEngineError("loop lies inside the crossing torus")
    prev = signs[nz[-1]]
    resolved = np.empty(n)
    for start in range(2):
        # two passes so leading zeros pick up the cyclic predecessor
        for i in range(n):
            if signs[i] == 0:
                resolved[i] = -prev
            else:
                resolved[i] = signs[i]
            prev = resolved[i]
    total = 0
    for i in range(n):
        j = (i + 1) % n
        if resolved[i] * resolved[j] < 0:
            a, b = loop_pts[i], loop_pts[j]
            ha = hs[i] if hs[i] != 0 else 1e-300 * resolved[i]
            lo, hi = 0.0, 1.0
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                hm, _ = height_and_side(ls.normalize(a + mid * (b - a)))
                if ha * hm <= 0:
                    hi = mid
                else:
                    lo = mid
            _, side = height_and_side(ls.normalize(a + hi * (b - a)))
            if side > 0:
                total += _ANNULUS_SIGN * (1 if resolved[j] > 0 else -1)
    return total


def annulus_disk_identity_check(metric, loop_pts, seed=0):
    """Compare two computations of intersections with the spanning annulus.

    Left: Gauss linking with both boundary lifts. Right: direct signed
    crossing count through the lifted annulus. Both are integers and must
    agree exactly for loops disjoint from the boundary.
    """
    gamma, gamma_hat = lifted_boundary_loops(metric)
    lk1 = linking_gauss(loop_pts, gamma, seed=seed)
    lk2 = linking_gauss(loop_pts, gamma_hat, seed=seed + 1)
    lhs = lk1.value + lk2.value
    rhs = annulus_crossings(metric, loop_pts)
    return {"link_boundary": lk1.value, "link_boundary_reverse": lk2.value,
            "sum": lhs, "annulus_crossings": rhs,
            "match": lhs == rhs,
            "gauss_gap": max(lk1.gap, lk2.gap)}


# ---------------------------------------------------------------------------
# torus flows in polar form and boundary sections
# ---------------------------------------------------------------------------

class PolarTorus:
    """Flow on T^2: base angle runs at rate 1/T, fibre angle at rate b."""

    def __init__(self, T, b):
        self.T = float(T)
        self.b = b

    @classmethod
    def from_curvature_profile(cls, T, K_of_base):
        """Fibre rate cos^2 + K sin^2 from a base-dependent curvature."""
        return cls(T, lambda v, th: np.cos(th) ** 2
                   + K_of_base(v) * np.sin(th) ** 2)

    def rhs(self, t, y):
        v, th = y
        return np.array([1.0 / self.T, float(self.b(v, th))])

    def integrate(self, v0, th0, T_int, tol=1e-10):
        return fe.integrate(self.rhs, np.array([v0, th0]), (0.0, T_int),
                            tol=tol)


def boundary_section_check(torus, graph, time_cap=None, n_grid=10, tol=1e-9):
    """Does the graph {theta = graph(base)} cut every orbit both ways?

    Every grid initial condition is flown forward and backward up to the
    cap; the orbit must cross the graph (the tracked angle difference passes
    a multiple of 2 pi) in both directions. Returns a verdict with the
    failing initial conditions.
    """
    cap = 3.0 * torus.T if time_cap is None else float(time_cap)
    failures = []
    for v0 in np.linspace(0.0, 1.0, n_grid, endpoint=False):
        for th0 in np.linspace(0.0, 2 * np.pi, n_grid, endpoint=False):
            ok = {1: False, -1: False}
            for direction in (1, -1):
                traj = torus.integrate(v0, th0, direction * cap, tol=tol)
                ts = np.linspace(0.0, direction * cap, 400)
                ys = traj(ts)
                u = ys[:, 1] - np.array([graph(v % 1.0) for v in ys[:, 0]])
                ok[direction] = _passes_lattice(u)
            if not (ok[1] and ok[-1]):
                failures.append((float(v0), float(th0), ok[1], ok[-1]))
    return {"is_section": not failures, "failures": failures,
            "time_cap": cap}


def _passes_lattice(u):
    k = np.floor(u / (2 * np.pi))
    return bool(np.any(k != k[0]))


# ---------------------------------------------------------------------------
# winding comparison for surface isotopies
# ---------------------------------------------------------------------------

def _planar_winding(path):
    path = np.asarray(path)
    if path.ndim == 2:
        path = path[:, 0] + 1j * path[:, 1]
    return fe.winding(path)


def florio_check(f, df, x, y, T, n_scan=64, n_refine=64, n_t=512):
    """Containment of the relative winding between two mean-value windings.

    f(t, z) is a planar isotopy, df(t, z) its space derivative (a 2x2 matrix,
    or a complex number for conformal maps); points may be given as pairs or
    complex numbers. The winding of f_t(y) - f_t(x) over [0, T] must lie
    between the extremes over z on the segment [x, y] of the winding of
    df_t(z) (y - x); the nearest witness gap is reported.
    """
    ts = np.linspace(0.0, T, n_t)
    rel = [f(t, y) - f(t, x) for t in ts]
    lhs = _planar_winding(rel)
    d = np.asarray(y) - np.asarray(x)

    def rhs_at(z):
        return _planar_winding([
            df(t, z) @ d if np.ndim(df(t, z)) == 2 else df(t, z) * d
            for t in ts])

    lams = np.linspace(0.0, 1.0, n_scan)
    vals = np.array([rhs_at(np.asarray(x) + lam * d) for lam in lams])
    # refine around the samples closest to the left side
    order = np.argsort(np.abs(vals - lhs))
    for idx in order[:3]:
        lo = lams[max(idx - 1, 0)]
        hi = lams[min(idx + 1, n_scan - 1)]
        extra = np.linspace(lo, hi, n_refine)
        vals = np.concatenate([
            vals, [rhs_at(np.asarray(x) + lam * d) for lam in extra]])
    vmin, vmax = float(np.min(vals)), float(np.max(vals))
    gap = float(np.min(np.abs(vals - lhs)))
    contained = (vmin - 1e-9) <= lhs <= (vmax + 1e-9)
    return {"lhs": float(lhs), "rhs_min": vmin, "rhs_max": vmax,
            "contained": bool(contained), "witness_gap": gap}
