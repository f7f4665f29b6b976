"""Generic ODE machinery used by every other module.

Adaptive Dormand-Prince RK45 with dense output and an optional per-step
projection hook (used to pin trajectories to constraint manifolds such as the
unit sphere or an energy level), section-crossing detection by sign change
plus bisection on the dense output, unwrapped-angle winding numbers, and the
seeded sampling helpers shared by every sampling run.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtri
from scipy.stats import qmc


class FlowEngineError(Exception):
    pass


class StepSizeUnderflowError(FlowEngineError):
    pass


class ConstraintBlowupError(FlowEngineError):
    pass


class DegeneratePathError(FlowEngineError):
    pass


class ResolutionError(FlowEngineError):
    pass


# Dormand-Prince 5(4) tableau.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.array([
    [0, 0, 0, 0, 0, 0],
    [1 / 5, 0, 0, 0, 0, 0],
    [3 / 40, 9 / 40, 0, 0, 0, 0],
    [44 / 45, -56 / 15, 32 / 9, 0, 0, 0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0, 0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0],
])
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
# b - b_hat, for the embedded 4th order error estimate
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200,
               22 / 525, -1 / 40])
# Shampine's dense-output coefficients: y(t0+h*th) = y0 + h * (K^T P) @ [th, th^2, th^3, th^4]
_P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])


@dataclass
class _Step:
    t0: float
    h: float
    y0: np.ndarray
    Q: np.ndarray  # (d, 4) dense-output polynomial coefficients


class Trajectory:
    """Dense solution of one integration run.

    Calling the object at a time (scalar or array) evaluates the piecewise
    dense-output interpolant. Sample nodes are available as ``t`` and ``y``.
    """

    def __init__(self, steps, t_nodes, y_nodes, meta):
        self._steps = steps
        self.t = np.asarray(t_nodes)
        self.y = np.asarray(y_nodes)
        self.meta = meta

    @property
    def t0(self):
        return float(self.t[0])

    @property
    def t_end(self):
        return float(self.t[-1])

    @property
    def y_end(self):
        return self.y[-1]

    def _locate(self, t):
        if getattr(self, "_step_starts", None) is None:
            self._step_starts = np.array([s.t0 for s in self._steps])
        ts = self._step_starts
        direction = 1.0 if self._steps[0].h > 0 else -1.0
        idx = np.searchsorted(direction * ts, direction * np.asarray(t), side="right") - 1
        return np.clip(idx, 0, len(self._steps) - 1)

    def __call__(self, t):
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        lo, hi = sorted((self.t0, self.t_end))
        eps = 1e-9 * max(1.0, abs(hi), abs(lo))
        if np.any(t_arr < lo - eps) or np.any(t_arr > hi + eps):
            raise FlowEngineError("evaluation outside the integrated interval")
        idx = self._locate(t_arr)
        out = np.empty(t_arr.shape + self.y[0].shape)
        for i, (ti, si) in enumerate(zip(t_arr, idx)):
            s = self._steps[si]
            th = (ti - s.t0) / s.h
            th = min(max(th, 0.0), 1.0)
            powers = np.array([th, th**2, th**3, th**4])
            out[i] = s.y0 + s.h * (s.Q @ powers)
        return out[0] if np.isscalar(t) or np.asarray(t).ndim == 0 else out

    def derivative(self, t):
        """Time derivative of the interpolant at scalar time t."""
        si = int(self._locate(float(t)))
        s = self._steps[si]
        th = (float(t) - s.t0) / s.h
        powers = np.array([1.0, 2 * th, 3 * th**2, 4 * th**3])
        return s.Q @ powers


def _initial_step(rhs, t0, y0, f0, direction, tol):
    scale = tol + tol * np.abs(y0)
    d0 = np.sqrt(np.mean((y0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = y0 + h0 * direction * f0
    f1 = rhs(t0 + h0 * direction, y1)
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1)


def integrate(rhs, y0, t_span, tol=1e-10, project=None, max_step=np.inf,
              observer=None, observe_dt=None, store=True, max_steps=2_000_000,
              drift_tol=None):
    """Integrate y' = rhs(t, y) over t_span with adaptive RK45.

    Parameters
    ----------
    rhs : callable(t, y) -> array
        Right-hand side; y is a flat float array (batched systems reshape
        inside rhs).
    y0 : array
        Initial state.
    t_span : (t0, tf)
        tf < t0 integrates backwards.
    tol : float
        Relative and absolute tolerance of the embedded error estimate.
    project : callable(y) -> y, optional
        Applied to every accepted step. The per-step drift
        ``|project(y) - y|`` must stay below ``drift_tol`` or the run aborts
        (constraint blow-up).
    observer : callable(t, y), optional
        Called on an equispaced grid of spacing ``observe_dt`` evaluated from
        the dense output; lets long batched runs stream results without
        storing every step.
    store : bool
        Keep dense output and nodes; disable for long streamed runs.

    Returns
    -------
    Trajectory (store=True) or a meta dict (store=False).
    """
    t0, tf = float(t_span[0]), float(t_span[1])
    if tf == t0:
        raise FlowEngineError("empty integration interval")
    direction = 1.0 if tf > t0 else -1.0
    y = np.array(y0, dtype=float).copy()
    if project is not None:
        y = project(y)
    d = y.size
    t = t0
    f = np.asarray(rhs(t, y), dtype=float)
    h = direction * min(_initial_step(rhs, t, y, f, direction, tol), max_step,
                        abs(tf - t0))
    if drift_tol is None:
        drift_tol = max(100 * tol, 1e-8)

    steps = []
    t_nodes = [t]
    y_nodes = [y.copy()]
    n_acc = 0
    n_rej = 0
    next_obs = None
    if observer is not None:
        if observe_dt is None:
            raise FlowEngineError("observer requires observe_dt")
        observer(t, y)
        next_obs = t + direction * observe_dt

    K = np.empty((7, d))
    while (tf - t) * direction > 0:
        if abs(h) < 1e-14 * max(1.0, abs(t)):
            raise StepSizeUnderflowError(f"step size underflow at t={t!r}")
        if n_acc + n_rej > max_steps:
            raise FlowEngineError("step budget exceeded")
        h = direction * min(abs(h), abs(tf - t), max_step)
        K[0] = f
        for i in range(1, 6):
            yi = y + h * (K[:i].T @ _A[i, :i])
            K[i] = rhs(t + _C[i] * h, yi)
        # stage 7 is the FSAL stage: evaluate at the 5th order solution
        y1 = y + h * (K[:6].T @ _B[:6])
        K[6] = rhs(t + h, y1)
        err_vec = h * (K.T @ _E)
        scale = tol + tol * np.maximum(np.abs(y), np.abs(y1))
        err = np.sqrt(np.mean((err_vec / scale) ** 2))
        if err <= 1.0:
            Q = K.T @ _P
            t1 = t + h
            if observer is not None:
                while next_obs is not None and (t1 - next_obs) * direction >= -1e-12:
                    th = (next_obs - t) / h
                    th = min(max(th, 0.0), 1.0)
                    powers = np.array([th, th**2, th**3, th**4])
                    observer(next_obs, y + h * (Q @ powers))
                    next_obs = next_obs + direction * observe_dt
            if store:
                steps.append(_Step(t, h, y.copy(), Q))
            y_new = y1
            f_new = K[6]
            if project is not None:
                y_proj = project(y1)
                drift = float(np.max(np.abs(y_proj - y1)))
                if drift > drift_tol:
                    raise ConstraintBlowupError(
                        f"constraint drift {drift:.3e} exceeds {drift_tol:.3e} at t={t1!r}")
                y_new = y_proj
                f_new = np.asarray(rhs(t1, y_new), dtype=float)
            t, y, f = t1, y_new, f_new
            if store:
                t_nodes.append(t)
                y_nodes.append(y.copy())
            n_acc += 1
            factor = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
            h *= factor
        else:
            n_rej += 1
            h *= max(0.2, 0.9 * err ** -0.2)

    meta = {"tol": tol, "n_steps": n_acc, "n_rejected": n_rej,
            "t_span": (t0, tf)}
    if not store:
        meta["y_end"] = y
        return meta
    return Trajectory(steps, t_nodes, y_nodes, meta)


@dataclass
class CrossingEvent:
    t: float
    state: np.ndarray
    sign: int
    section_id: str
    ambiguous: bool = False
    g_residual: float = 0.0


@dataclass
class EventScan:
    """Transversal crossings plus separately reported tangential near-misses."""

    events: list = field(default_factory=list)
    near_misses: list = field(default_factory=list)

    def __iter__(self):
        return iter(self.events)

    def __len__(self):
        return len(self.events)

    def __getitem__(self, i):
        return self.events[i]


def detect_crossings(traj, section, direction=0, admissible=None,
                     refine_tol=1e-12, guard=1e-6, samples_per_step=8,
                     section_id="section"):
    """Find zeros of section(state) along a trajectory.

    Sign changes of the section function between dense-output sub-nodes are
    bracketed and bisected in time to ``refine_tol``. Crossings whose
    transversal speed is below ``guard`` are kept but flagged ambiguous.
    Local minima of |g| that do not change sign are reported as near-misses.
    """
    scan = EventScan()
    g_fn = lambda tt: float(section(traj(tt)))
    # sign is relative to the direction of traversal, so a time-reversed run
    # reports flipped signs
    traversal = 1 if (not traj._steps or traj._steps[0].h > 0) else -1
    for step in traj._steps:
        ts = step.t0 + step.h * np.linspace(0.0, 1.0, samples_per_step + 1)
        gs = np.array([g_fn(tt) for tt in ts])
        for i in range(samples_per_step):
            ga, gb = gs[i], gs[i + 1]
            if ga == 0.0 and gb == 0.0:
                continue
            if ga * gb < 0.0 or (ga == 0.0 and i == 0 and gb != 0.0):
                ta, tb = sorted((ts[i], ts[i + 1]))
                if ga == 0.0:
                    t_star = ts[i]
                else:
                    t_star = brentq(g_fn, ta, tb, xtol=refine_tol)
                state = traj(t_star)
                dt = 1e-7 * max(1.0, abs(t_star))
                lo_t = max(min(traj.t0, traj.t_end), t_star - dt)
                hi_t = min(max(traj.t0, traj.t_end), t_star + dt)
                dgdt = (g_fn(hi_t) - g_fn(lo_t)) / (hi_t - lo_t)
                sgn = traversal * (1 if dgdt > 0 else -1)
                if direction != 0 and sgn != direction:
                    continue
                if admissible is not None and not admissible(state):
                    continue
                scan.events.append(CrossingEvent(
                    t=t_star, state=state, sign=sgn, section_id=section_id,
                    ambiguous=abs(dgdt) < guard, g_residual=abs(g_fn(t_star))))
        # near-misses: interior local minima of |g| without sign change
        ags = np.abs(gs)
        for i in range(1, samples_per_step):
            if (ags[i] < ags[i - 1] and ags[i] < ags[i + 1]
                    and gs[i - 1] * gs[i + 1] > 0 and ags[i] < 1e-4):
                scan.near_misses.append((float(ts[i]), float(gs[i])))
    # deduplicate events at shared step boundaries
    dedup = []
    for ev in sorted(scan.events, key=lambda e: e.t):
        if dedup and abs(ev.t - dedup[-1].t) < 1e-9 * max(1.0, abs(ev.t)):
            continue
        dedup.append(ev)
    if traj._steps and traj._steps[0].h < 0:
        dedup = dedup[::-1]
    scan.events = dedup
    return scan


def _as_complex(z):
    z = np.asarray(z)
    if z.ndim == 2 and z.shape[1] == 2:
        z = z[:, 0] + 1j * z[:, 1]
    return z.astype(complex)


def winding(z):
    """Winding number of a sampled nonvanishing planar path.

    The continuous argument is tracked sample to sample; any angular step of
    pi/2 or more means the sampling cannot be trusted and raises
    ResolutionError. A zero sample raises DegeneratePathError.
    """
    z = _as_complex(z)
    if z.size < 2:
        return 0.0
    if np.any(np.abs(z) == 0.0):
        raise DegeneratePathError("path passes through 0")
    steps = np.angle(z[1:] / z[:-1])
    if np.any(np.abs(steps) >= np.pi / 2):
        raise ResolutionError("angular step >= pi/2; refine the sampling")
    return float(np.sum(steps) / (2 * np.pi))


def winding_adaptive(f, a, b, n0=64, max_refine=12):
    """Winding of t -> f(t) on [a, b], refining until every step < pi/2."""
    n = int(n0)
    for _ in range(max_refine + 1):
        ts = np.linspace(a, b, n + 1)
        z = _as_complex(np.array([f(t) for t in ts]))
        if np.any(np.abs(z) == 0.0):
            raise DegeneratePathError("path passes through 0")
        steps = np.angle(z[1:] / z[:-1])
        if np.all(np.abs(steps) < np.pi / 2):
            return float(np.sum(steps) / (2 * np.pi))
        n *= 2
    raise ResolutionError("angular step >= pi/2 after max refinement")


def unwrap_guarded(angles):
    """np.unwrap with the pi/2 resolution guard used throughout."""
    a = np.asarray(angles, dtype=float)
    d = np.angle(np.exp(1j * np.diff(a)))
    if d.size and np.max(np.abs(d)) >= np.pi / 2:
        raise ResolutionError("angular step >= pi/2 in unwrap")
    return a[0] + np.concatenate(([0.0], np.cumsum(d)))


def rng(seed):
    """Seeded counter-based generator (Philox), the only randomness source."""
    if seed is None:
        raise FlowEngineError("a seed is mandatory for any sampling run")
    return np.random.Generator(np.random.Philox(int(seed)))


def halton(n, dim):
    """Deterministic (unscrambled) Halton points in [0,1)^dim."""
    sampler = qmc.Halton(d=dim, scramble=False)
    sampler.fast_forward(1)  # skip the origin
    return sampler.random(n)


def sphere_directions(n, dim=4):
    """Deterministic quasi-random unit vectors via Halton + inverse normal."""
    u = halton(n, dim)
    g = ndtri(np.clip(u, 1e-12, 1 - 1e-12))
    norms = np.linalg.norm(g, axis=1)
    keep = norms > 1e-12
    return g[keep] / norms[keep, None]


def random_unit_vectors(generator, n, dim=4):
    """Seeded uniform points on the unit sphere."""
    g = generator.normal(size=(n, dim))
    return g / np.linalg.norm(g, axis=1, keepdims=True)
