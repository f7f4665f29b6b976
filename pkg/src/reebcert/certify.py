"""Certification layer: threshold constants, the kappa estimate, the three
right-handedness criteria, and desk-scale geometric audits.

Verdicts are three-valued. The criteria are sufficient conditions, so
"not-certified" never claims a disproof; it only records that the measured
margin is negative beyond the stated error budget. A margin smaller than the
budget, or a non-stabilizing estimate, yields "inconclusive".
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate as sq
from scipy import optimize
from scipy.special import ndtri

from . import convex4d as c4
from . import flow_engine as fe
from . import geometry2d as g2
from . import lift_s3 as ls
from . import sections_linking as sl

TWO_PI = 2.0 * np.pi


class OrbitSeparationError(fe.FlowEngineError):
    """Raised when two sampled trajectories come closer than the tolerance."""


# ---------------------------------------------------------------------------
# pinching threshold and the slope window
# ---------------------------------------------------------------------------

def pinching_polynomial(x):
    return 4.0 * x**3 - 2.0 * x**2 - 1.0


def delta_star():
    """(x*, delta*): the unique real root of 4x^3 - 2x^2 - 1 and its square.

    The cubic's critical points sit at 0 and 1/3 and its values there are
    both negative, so there is exactly one real root; a brentq bracket on
    [1/2, 1] is polished by Newton until the residual drops below 1e-14.
    """
    crit = (pinching_polynomial(0.0), pinching_polynomial(1.0 / 3.0))
    if not (crit[0] < 0 and crit[1] < 0):
        raise fe.FlowEngineError("pinching cubic lost its sign pattern")
    x = optimize.brentq(pinching_polynomial, 0.5, 1.0, xtol=1e-15)
    for _ in range(3):
        x = x - pinching_polynomial(x) / (12.0 * x * x - 4.0 * x)
    if abs(pinching_polynomial(x)) >= 1e-14:
        raise fe.FlowEngineError("root polish did not converge")
    return float(x), float(x * x)


def mu_window(delta):
    """Slope window (sqrt(d)/(2 sqrt(d) - 1), 2 d sqrt(d)) and its feasibility.

    Defined for delta > 1/4, where the lower endpoint's denominator is
    positive; the window is nonempty exactly above the pinching threshold.
    """
    if delta <= 0.25:
        raise ValueError("the slope window needs delta > 1/4")
    r = np.sqrt(delta)
    lower = r / (2.0 * r - 1.0)
    upper = 2.0 * delta * r
    return float(lower), float(upper), bool(upper > lower)


# ---------------------------------------------------------------------------
# kappa estimation for the model flows
# ---------------------------------------------------------------------------

@dataclass
class KappaEstimate:
    kappa: float
    t_grid: tuple
    infima: tuple
    spread: float
    stabilization: float
    stabilized: bool
    samples: int
    seed: int
    min_link: int
    error_bound: float


def _quasi_samples(budget, seed):
    # deterministic low-discrepancy draw; the seed shifts the sequence start
    skip = int(seed) % 64
    u = fe.halton(budget + skip, 5)[skip:]
    g = np.clip(u[:, :4], 1e-12, 1 - 1e-12)
    x = ndtri(g)
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    phases = TWO_PI * u[:, 4]
    return x, phases


def estimate_kappa(flow, page, budget=256, t_grid=(25.0, 50.0, 100.0, 200.0),
                   seed=0, angle_step=0.05):
    """Sampled infimum of (frame angle gain) / (binding link) on a T grid.

    For each quasi-random start point and deviation phase, the linear model
    flow is evaluated in closed form on a time grid fine enough for guarded
    unwrapping. Arcs are closed up at page hits: the gain of the
    global-frame angle of the deviation is measured between the first and
    the last transit inside [0, T] and divided by the transit count, which
    is the linking number of the arc closed inside a page. Closing anywhere
    else leaves a bias of one partial transit that decays only like 1/T and
    would defeat the stabilization rule at this T grid. The reported value
    is the infimum at the largest T with a stabilization diagnostic.
    """
    xs, phases = _quasi_samples(budget, seed)
    rate_scale = max(sum(flow.rates), 1e-9)
    t_grid = tuple(float(t) for t in t_grid)
    infima = []
    min_link = 0
    for T in t_grid:
        n_nodes = int(np.ceil(T * rate_scale / angle_step)) + 2
        ts = np.linspace(0.0, T, n_nodes)
        best = np.inf
        links = []
        for x, phi in zip(xs, phases):
            ax0, _ = page._split(x)
            if abs(ax0) < 1e-9:
                continue  # start on the binding: no transits to count
            f1, f2 = ls.contact_frame(x)
            zeta0 = np.cos(phi) * f1 + np.sin(phi) * f2
            qs = flow.exact(ts, x)
            zs = flow.exact(ts, zeta0)
            a, b = ls.frame_components(qs, zs)
            theta = fe.unwrap_guarded(np.arctan2(b, a))
            ax, _ = page._split(qs)
            ang = fe.unwrap_guarded(np.angle(ax)) - page.phase
            if np.any(np.diff(ang) <= 0):
                raise fe.ResolutionError(
                    "page phase is not monotone along the sampled arc")
            k_first = np.ceil(ang[0] / TWO_PI)
            k_last = np.floor(ang[-1] / TWO_PI)
            link = int(k_last - k_first)
            if link < 1:
                continue
            t_first = np.interp(TWO_PI * k_first, ang, ts)
            t_last = np.interp(TWO_PI * k_last, ang, ts)
            gain = np.interp(t_last, ts, theta) - np.interp(t_first, ts, theta)
            links.append(link)
            best = min(best, gain / link)
        if not np.isfinite(best):
            raise fe.FlowEngineError("no sample kept a positive link count")
        infima.append(float(best))
        min_link = min(links)
    stab = abs(infima[-1] - infima[-2]) / abs(infima[-1])
    tail = infima[-3:] if len(infima) >= 3 else infima
    spread = (max(tail) - min(tail)) / abs(infima[-1])
    kappa = infima[-1]
    err = spread * abs(kappa) + 2 * angle_step
    return KappaEstimate(kappa=float(kappa), t_grid=t_grid,
                         infima=tuple(infima), spread=float(spread),
                         stabilization=float(stab),
                         stabilized=bool(stab < 0.02), samples=budget,
                         seed=seed, min_link=int(min_link),
                         error_bound=float(err))


# ---------------------------------------------------------------------------
# certificates
# ---------------------------------------------------------------------------

@dataclass
class Certificate:
    criterion: str
    inputs: dict
    measured: dict
    threshold: float
    margin: float
    error_budget: float
    verdict: str


def _verdict(margin, budget):
    if margin > budget:
        return "certified"
    if margin < -budget:
        return "not-certified"
    return "inconclusive"


def certify_kappa(estimate):
    margin = estimate.kappa - TWO_PI
    verdict = _verdict(margin, estimate.error_bound)
    if not estimate.stabilized:
        verdict = "inconclusive"
    return Certificate(
        criterion="kappa",
        inputs={"samples": estimate.samples, "seed": estimate.seed,
                "t_grid": list(estimate.t_grid)},
        measured={"kappa": estimate.kappa, "infima": list(estimate.infima),
                  "stabilization": estimate.stabilization,
                  "min_link": estimate.min_link},
        threshold=TWO_PI, margin=float(margin),
        error_budget=estimate.error_bound, verdict=verdict)


def certify_Ksigma(k_sigma, tau_min, error=0.0):
    """Product criterion K_sigma * tau_min > 2 pi for lifted geodesic flows."""
    product = float(k_sigma) * float(tau_min)
    margin = product - TWO_PI
    return Certificate(
        criterion="Ksigma",
        inputs={"k_sigma": float(k_sigma), "tau_min": float(tau_min)},
        measured={"product": product},
        threshold=TWO_PI, margin=float(margin),
        error_budget=float(error), verdict=_verdict(margin, error))


def certify_convex(body, tau_min=None, budget=2**14):
    """Product criterion K^C_min * tau_min > pi on a convex boundary.

    Ellipsoids carry exact Hessian minima and orbit periods; other bodies
    need tau_min supplied (the sampled Hessian bound is still used).
    """
    kmin, kerr = c4.kmin(body, budget=budget)
    if tau_min is None:
        if not isinstance(body, c4.Ellipsoid):
            raise ValueError("tau_min is required for non-ellipsoid bodies")
        tau_min = min(body.orbit_periods())
    product = float(kmin) * float(tau_min)
    margin = product - np.pi
    budget_err = float(kerr) * float(tau_min) + 1e-12
    return Certificate(
        criterion="convex",
        inputs={"body": type(body).__name__,
                "parameters": list(getattr(body, "a", getattr(body, "coeffs", []))),
                "tau_min": float(tau_min)},
        measured={"kmin": float(kmin), "kmin_error": float(kerr),
                  "product": product},
        threshold=float(np.pi), margin=float(margin),
        error_budget=budget_err, verdict=_verdict(margin, budget_err))


def certify_pinching(metric_or_delta):
    """Pinching criterion delta > delta* for a surface of revolution."""
    if isinstance(metric_or_delta, (int, float)):
        delta, bound = float(metric_or_delta), 0.0
        inputs = {"delta": delta}
    else:
        delta, bound = metric_or_delta.pinching_delta()
        inputs = {"c": metric_or_delta.c}
    _, dstar = delta_star()
    margin = delta - dstar
    budget = bound + 1e-12
    return Certificate(
        criterion="pinching", inputs=inputs,
        measured={"delta": delta, "delta_star": dstar,
                  "resolution_bound": bound},
        threshold=dstar, margin=float(margin),
        error_budget=float(budget), verdict=_verdict(margin, budget))


# ---------------------------------------------------------------------------
# measured ingredients for the K_sigma criterion
# ---------------------------------------------------------------------------

def sample_k_sigma(metric, budget=4096, seed=0):
    """Sampled infimum of the Jacobi frame rotation rate on the unit bundle.

    The rate at a point depends only on the curvature there and the frame
    angle, so the sweep draws surface points and angles; the exact infimum
    for this family is min(1, K_min) and the sample converges to it from
    above.
    """
    gen = fe.rng(seed)
    pts = fe.random_unit_vectors(gen, budget, 3)
    thetas = gen.uniform(0.0, np.pi, size=budget)
    worst = np.inf
    for n, th in zip(pts, thetas):
        p = metric.project_point(n)
        worst = min(worst, float(g2.frame_angle_rate(metric.curvature(p), th)))
    return worst


def meridian_length(metric):
    """Length of the profile meridian {y = 0} of the revolution surface."""
    c = metric.c
    val, _ = sq.quad(lambda u: np.hypot(np.sin(u), c * np.cos(u)),
                     0.0, TWO_PI, limit=200)
    return float(val)


def revolution_tau_min(metric):
    """Shortest period of a lifted closed orbit for the revolution family.

    Closed geodesics lift to orbits that close only after two traversals, so
    the candidate periods are twice the equator and meridian lengths; for c
    near 1 these are the extremal closed geodesics of the family.
    """
    return 2.0 * min(metric.equator_length(), meridian_length(metric))


# ---------------------------------------------------------------------------
# geometric audit of the annulus data
# ---------------------------------------------------------------------------

def _measured_equator_length(metric, tol=1e-11):
    start = np.concatenate([metric.equator_point(0.0),
                            metric.equator_tangent(0.0)])
    horizon = 1.3 * TWO_PI
    traj = fe.integrate(metric.geodesic_rhs, start, (0.0, horizon), tol=tol,
                        project=metric.unit_tangent_project)
    scan = fe.detect_crossings(traj, lambda y: y[1], direction=1,
                               admissible=lambda y: y[0] > 0.0)
    events = [ev for ev in scan if ev.t > 1e-6]
    if not events:
        raise fe.FlowEngineError("equator orbit did not return")
    return float(events[0].t), len(scan.near_misses)


def audit_geometry(metric, n_s=6, n_theta=7, tol=1e-9, n_traj=4,
                   n_returns=6, seed=0, check_tol=1e-6):
    """Check every annulus-level inequality on measured data.

    The report carries the measured equator length, return-time and
    displacement statistics over a chart grid, the arc bound, and the
    homology bookkeeping fit. A violated bound lands in `violations`; the
    bounds hold for every admissible metric, so a violation falsifies the
    implementation, not the inputs.
    """
    delta, delta_bound = metric.pinching_delta()
    if delta <= 0.25:
        raise ValueError("the arc bound needs delta > 1/4")
    rd = np.sqrt(delta)
    annulus = sl.BirkhoffAnnulus(metric)
    L_hat, flagged = _measured_equator_length(metric)
    violations = []

    def check(name, ok):
        if not ok:
            violations.append(name)
        return bool(ok)

    perimeter_window = (TWO_PI - check_tol, TWO_PI / rd + check_tol)
    check("perimeter", perimeter_window[0] <= L_hat <= perimeter_window[1])

    samples = annulus.sample_grid(n_s=n_s, n_theta=n_theta, tol=tol)
    reps = np.array([sl.canonical_lift_displacement(r.ds_mod, annulus.L)
                     for r in samples])
    taus = np.array([r.tau for r in samples])
    halves = np.array([r.half_time for r in samples])

    disp_radius = TWO_PI * (1.0 / rd - 1.0)
    check("displacement-corollary",
          bool(np.all(np.abs(reps - L_hat) <= disp_radius + check_tol)))
    check("displacement-window",
          bool(np.all((reps > 2 * annulus.L / 3) & (reps < 3 * annulus.L / 2))))

    tau_min = float(np.min(taus))
    tau_bound = TWO_PI * (2.0 - 1.0 / rd)
    check("return-time", tau_min >= tau_bound - check_tol)

    alpha_plus = float(np.max(halves))
    f_delta = L_hat / 2.0 + np.pi * (1.0 / rd - 1.0)
    check("arc-bound", alpha_plus <= f_delta + check_tol)

    displacement_rows = []
    c_fit = None
    if delta > 4.0 / 9.0:
        displacement_rows, c_fit = _homology_bookkeeping(
            metric, annulus, n_traj=n_traj, n_returns=n_returns, tol=tol)

    return {
        "c": metric.c,
        "delta": float(delta),
        "delta_bound": float(delta_bound),
        "L_hat": L_hat,
        "perimeter_window": [float(v) for v in perimeter_window],
        "flagged_events": int(flagged),
        "tau_min": tau_min,
        "tau_bound": float(tau_bound),
        "alpha_plus": alpha_plus,
        "F_delta": float(f_delta),
        "displacement_radius": float(disp_radius),
        "grid": [{"s": r.s, "theta": r.theta, "s1": r.s1, "theta1": r.theta1,
                  "tau": r.tau, "ds": float(rep)}
                 for r, rep in zip(samples, reps)],
        "bookkeeping": displacement_rows,
        "bookkeeping_fit": c_fit,
        "violations": violations,
        "all_ok": not violations,
    }


def _homology_bookkeeping(metric, annulus, n_traj, n_returns, tol):
    """Fit of |total displacement / 2L - page crossings| over long arcs.

    Each audited arc strings together same-side annulus returns; its lift is
    closed by a spherical chord, then counted against the disk page of the
    lifted equator (M) and against the lifted annulus (N). The fitted bound
    on the residual is reported, not asserted.
    """
    to_round, _ = ls.bundle_chart(metric)
    p_e, v_e = to_round(metric.equator_point(0.0), metric.equator_tangent(0.0))
    q_e = ls.lift_path([p_e], [v_e])[0]
    page = sl.DiskPage(sl.LinearModelFlow((0.5, 0.5), q0=q_e), axis="w")
    starts = fe.halton(n_traj, 2)
    rows = []
    residuals = []
    for u_s, u_th in starts:
        s0 = float(annulus.L * u_s)
        th0 = float(np.pi / 6 + 2 * np.pi / 3 * u_th)
        ds_total = 0.0
        t_total = 0.0
        s, th = s0, th0
        for _ in range(n_returns):
            r = annulus.return_map(s, th, tol=tol)
            ds_total += sl.canonical_lift_displacement(r.ds_mod, annulus.L)
            t_total += r.tau
            s, th = r.s1, r.theta1
        y0 = annulus.chart(s0, th0)
        traj = fe.integrate(metric.geodesic_rhs, y0, (0.0, t_total), tol=tol,
                            project=metric.unit_tangent_project)
        ts = np.linspace(0.0, t_total, max(int(t_total / 0.03), 400))
        states = traj(ts)
        lifted = ls.lift_path(
            *zip(*[to_round(st[:3], st[3:]) for st in states]))
        loop = np.vstack([lifted, sl.slerp(lifted[-1], lifted[0], 64)[1:]])
        m_count, m_resid = sl.link_binding_crossings(page, loop)
        gauss = sl.linking_gauss(loop, page.binding_loop(512))
        n_count = sl.annulus_crossings(metric, loop)
        residual = abs(ds_total / (2 * annulus.L) - m_count)
        residuals.append(residual)
        rows.append({"s": s0, "theta": th0, "returns": n_returns,
                     "ds_total": float(ds_total), "time": float(t_total),
                     "M": int(m_count), "M_residual": float(m_resid),
                     "gauss_raw": float(gauss.raw), "gauss_int": int(gauss.value),
                     "N": int(n_count), "residual": float(residual)})
    return rows, float(max(residuals))


# ---------------------------------------------------------------------------
# positive linking estimates
# ---------------------------------------------------------------------------

@dataclass
class PositiveLinking:
    estimate: float
    link: int
    gap: float
    T: float
    S: float
    error_bar: float
    min_separation: float


def positive_linking_sample(flow, p, q, T, S, seed=0, n_per_loop=900,
                            min_sep=5e-2):
    """Finite-time proxy link(arc_T(p), arc_S(q)) / (T S).

    Arcs are closed by spherical chords; the reported error bar covers the
    closing perturbation (one transit per shortest period on each factor).
    """
    p = ls.normalize(np.asarray(p, dtype=float))
    q = ls.normalize(np.asarray(q, dtype=float))
    ts_p = np.linspace(0.0, T, n_per_loop, endpoint=False)
    ts_q = np.linspace(0.0, S, n_per_loop, endpoint=False)
    arc_p = flow.exact(ts_p, p)
    arc_q = flow.exact(ts_q, q)
    sep = _min_distance(arc_p, arc_q)
    if sep < min_sep:
        raise OrbitSeparationError(
            f"trajectories approach to {sep:.3g} < {min_sep:.3g}")
    loop_p = np.vstack([arc_p, sl.slerp(flow.exact(T, p), p, 48)])
    loop_q = np.vstack([arc_q, sl.slerp(flow.exact(S, q), q, 48)])
    gl = sl.linking_gauss(loop_p, loop_q, seed=seed)
    periods = [TWO_PI / w for w in flow.rates]
    m_p = T / min(periods)
    m_q = S / min(periods)
    err = (m_p + m_q + 1.0) / (T * S)
    return PositiveLinking(estimate=float(gl.value / (T * S)),
                           link=int(gl.value), gap=float(gl.gap),
                           T=float(T), S=float(S), error_bar=float(err),
                           min_separation=float(sep))


def _min_distance(a, b):
    d = a[:, None, :] - b[None, :, :]
    return float(np.sqrt(np.min(np.sum(d * d, axis=-1))))


def random_positive_linking(flow, n_pairs, T, S, seed=0, max_draws=200,
                            **kwargs):
    """Seeded random pairs with rejection resampling on close approaches."""
    gen = fe.rng(seed)
    out = []
    draws = 0
    while len(out) < n_pairs:
        if draws >= max_draws:
            raise fe.FlowEngineError("resampling budget exhausted")
        draws += 1
        p = ls.normalize(gen.normal(size=4))
        q = ls.normalize(gen.normal(size=4))
        try:
            out.append(positive_linking_sample(flow, p, q, T, S,
                                               seed=seed + draws, **kwargs))
        except OrbitSeparationError:
            continue
    return out
