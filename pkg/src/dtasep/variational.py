"""Variational formulas for macroscopic growth and the hydrodynamic limit.

The scaled passage time to a wedge point (x, y) maximizes an integral
functional over macroscopic paths.  In a step landscape the maximizer can
be taken piecewise linear: straight runs between neighboring discontinuity
columns plus vertical dwell pieces sitting on columns, where the rate is
lowest.  For a fixed itinerary of visited columns the remaining problem is
a separable concave allocation of the vertical budget, which this module
solves exactly by water filling on the common marginal value.  The
hydrodynamic interface height is then an envelope over starting points of
initial data minus a level set of the passage time.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numba import njit
from scipy.optimize import brentq, minimize_scalar

from .speed import SpeedFunction

__all__ = [
    "gamma",
    "g_wedge",
    "dual_flux_gap",
    "gamma_q",
    "GammaQResult",
    "g_q_level",
    "StepDensity",
    "hydro_v",
    "rho_from_v",
]

_BIG = 1.0e300


def gamma(x, y):
    """Homogeneous growth constant (sqrt(x+y) + sqrt(y))**2.

    Defined on the wedge y >= 0, x >= -y.  One-homogeneous, concave, and
    superadditive there.
    """
    xs = np.asarray(x, dtype=np.float64)
    ys = np.asarray(y, dtype=np.float64)
    if np.any(ys < 0.0) or np.any(xs + ys < 0.0):
        raise ValueError("gamma needs y >= 0 and x + y >= 0")
    out = (np.sqrt(xs + ys) + np.sqrt(ys)) ** 2
    return float(out) if out.ndim == 0 else out


def g_wedge(y):
    """sup over rho in [0, 1] of rho(1 - rho) - y rho (flux minus tilt)."""
    ys = np.asarray(y, dtype=np.float64)
    out = np.where(ys <= -1.0, -ys, np.where(ys >= 1.0, 0.0, (1.0 - ys) ** 2 / 4.0))
    return float(out) if out.ndim == 0 else out


def flux_conjugate_restricted(y: float, cval: float) -> float:
    """inf over rho in [0, 1] of y rho - cval rho(1 - rho)."""
    if y >= cval:
        return 0.0
    if y <= -cval:
        return float(y)
    return -((cval - y) ** 2) / (4.0 * cval)


def flux_conjugate_unrestricted(y: float, cval: float) -> float:
    """inf over all real rho of y rho - cval rho(1 - rho); the parabola has no floor constraint."""
    return -((cval - y) ** 2) / (4.0 * cval)


def dual_flux_gap(y: float, cval: float) -> float:
    """Conjugate of the restricted flux minus conjugate of the unrestricted one.

    Zero exactly for |y| <= cval, (|y| - cval)^2 / (4 cval) outside, never
    negative.  The zero set is what makes density values outside [0, 1]
    cost nothing extra in the dual and is checked, not assumed.
    """
    if cval <= 0:
        raise ValueError("cval must be positive")
    return flux_conjugate_restricted(y, cval) - flux_conjugate_unrestricted(y, cval)


# ---------------------------------------------------------------------------
# exact allocation of the vertical budget for a fixed column itinerary
# ---------------------------------------------------------------------------

def _inv_gamma_y(dx: float, m: float) -> float:
    """Solve d/dy gamma(dx, y) = m for y, with m > 4 and dx != 0.

    With s = sqrt(y/(dx+y)) the marginal is 2 + s + 1/s, so s solves a
    quadratic; the root branch follows the sign of dx (s < 1 when dx > 0).
    """
    sm = m - 2.0
    disc = math.sqrt(sm * sm - 4.0)
    s = (sm - disc) / 2.0 if dx > 0 else (sm + disc) / 2.0
    s2 = s * s
    return s2 * dx / (1.0 - s2)


def _waterfill(dxs, rates, los, dwell_slope, budget):
    """Maximize sum gamma(dx_k, h_k)/r_k + dwell_slope * delta.

    Subject to h_k >= lo_k, delta >= 0, sum h + delta = budget.  Concave and
    separable, so the optimum equalizes marginals at a common level mu; the
    dwell is linear and pins mu at its slope whenever it is active.  Returns
    (value, h array, delta) or None when the budget cannot cover the
    mandatory minima.
    """
    K = len(dxs)
    los = np.asarray(los, dtype=np.float64)
    base = float(los.sum())
    rem = budget - base
    if rem < -1e-12 * max(1.0, abs(budget)):
        return None
    rem = max(rem, 0.0)

    if K == 0:
        if dwell_slope < 0.0:
            return None
        return dwell_slope * budget, np.zeros(0), budget

    def demand(mu: float) -> float:
        tot = 0.0
        for k in range(K):
            mr = mu * rates[k]
            if mr <= 4.0:
                return _BIG
            tot += max(los[k], _inv_gamma_y(dxs[k], mr))
        return tot

    if rem == 0.0:
        hs = los.copy()
        delta = 0.0
    elif dwell_slope > 0.0 and demand(dwell_slope) <= budget:
        hs = np.array([max(los[k], _inv_gamma_y(dxs[k], dwell_slope * rates[k]))
                       for k in range(K)])
        delta = budget - float(hs.sum())
    else:
        mu_lo = max(dwell_slope, 0.0)
        mu_hi = max(mu_lo, 4.0 / min(rates)) * 1.0000001 + 1e-12
        it = 0
        while demand(mu_hi) > budget and it < 300:
            mu_hi *= 2.0
            it += 1
        for _ in range(200):
            mid = 0.5 * (mu_lo + mu_hi)
            if mid == mu_lo or mid == mu_hi:
                break
            if demand(mid) > budget:
                mu_lo = mid
            else:
                mu_hi = mid
        hs = np.array([max(los[k], _inv_gamma_y(dxs[k], mu_hi * rates[k]))
                       for k in range(K)])
        slack = budget - float(hs.sum())
        hs[int(np.argmax(hs - los))] += slack  # float dust, keeps the sum exact
        delta = 0.0

    val = delta * max(dwell_slope, 0.0)
    for k in range(K):
        val += gamma(dxs[k], hs[k]) / rates[k]
    return val, hs, delta


# ---------------------------------------------------------------------------
# itineraries over discontinuity columns
# ---------------------------------------------------------------------------

def _columns(speed: SpeedFunction, q: float):
    return [b + q for b in speed.breakpoints]


def _adjacent(cols, p: float):
    """Column indices a path at position p can reach without crossing another column."""
    for m, d in enumerate(cols):
        if p == d:
            return [m]
    idx = int(np.searchsorted(np.asarray(cols), p))
    out = []
    if idx - 1 >= 0:
        out.append(idx - 1)
    if idx < len(cols):
        out.append(idx)
    return out


def _enumerate_walks(cols, x: float, max_visits: int):
    lo, hi = min(0.0, x), max(0.0, x)
    walks = []
    if not any(lo < d < hi for d in cols):
        walks.append(())
    if not cols:
        return walks
    adj0 = _adjacent(cols, 0.0)
    adjx = set(_adjacent(cols, x))
    stack = [(m,) for m in adj0]
    while stack:
        w = stack.pop()
        if w[-1] in adjx:
            walks.append(w)
        if len(w) < max_visits:
            for nxt in (w[-1] - 1, w[-1] + 1):
                if 0 <= nxt < len(cols):
                    stack.append(w + (nxt,))
    return walks


@dataclass(frozen=True)
class GammaQResult:
    value: float
    path: tuple[tuple[float, float], ...]
    walk_columns: tuple[float, ...]
    converged: bool


def gamma_q(x: float, y: float, speed: SpeedFunction, q: float = 0.0,
            max_visits: int | None = None) -> GammaQResult:
    """Scaled passage value to (x, y) in the landscape shifted by q.

    Maximizes sum of gamma(segment)/rate over piecewise linear paths whose
    corners sit on discontinuity columns of c(. - q), plus vertical dwell
    pieces on columns.  ``max_visits`` caps the itinerary length; the
    default allows every monotone sweep plus a few reversals, which is
    enough for any landscape this package targets, and is exposed because
    the tight general bound is not pinned down.
    """
    if y < 0.0 or x < -y:
        raise ValueError(f"target ({x}, {y}) outside the wedge")
    cols = _columns(speed, q)
    if max_visits is None:
        max_visits = min(2 * len(cols) + 2, 12)
    best = None
    converged = True
    for walk in _enumerate_walks(cols, x, max_visits):
        pts = [0.0] + [cols[m] for m in walk] + [x]
        dxs, rates, los, seg_at = [], [], [], []
        for s in range(len(pts) - 1):
            dx = pts[s + 1] - pts[s]
            if dx == 0.0:
                continue
            dxs.append(dx)
            rates.append(float(speed(0.5 * (pts[s] + pts[s + 1]) - q)))
            los.append(max(0.0, -dx))
            seg_at.append(s)
        if walk:
            slopes = [4.0 / float(speed(cols[m] - q)) for m in walk]
            dwell_slope = max(slopes)
            dwell_pos = walk[int(np.argmax(slopes))]
        elif not dxs:
            # vertical ascent at the origin of the shifted frame
            dwell_slope = 4.0 / float(speed(0.0 - q))
            dwell_pos = None
        else:
            dwell_slope = -1.0
            dwell_pos = None
        fill = _waterfill(dxs, rates, los, dwell_slope, y)
        if fill is None:
            continue
        val, hs, delta = fill
        if best is None or val > best[0]:
            best = (val, walk, pts, dxs, hs, delta, dwell_pos, seg_at)
    if best is None:
        raise ValueError("no feasible path; vertical budget below the mandatory minimum")

    val, walk, pts, dxs, hs, delta, dwell_pos, seg_at = best
    path = [(0.0, 0.0)]
    h = 0.0
    hs_by_seg = dict(zip(seg_at, hs))
    for s in range(len(pts) - 1):
        if s >= 1 and dwell_pos is not None and walk[s - 1] == dwell_pos and delta > 0.0:
            h += delta
            path.append((pts[s], h))
            delta = 0.0
        if s in hs_by_seg:
            h += hs_by_seg[s]
        if pts[s + 1] != pts[s] or path[-1] != (pts[s + 1], h):
            path.append((pts[s + 1], h))
    if delta > 0.0:
        # dwell at the final point (vertical-only itineraries)
        path.append((pts[-1], h + delta))
    return GammaQResult(float(val), tuple(path), tuple(pts[1:-1]), converged)


def g_q_level(x: float, t: float, speed: SpeedFunction, q: float = 0.0) -> float:
    """Smallest y with passage value at least t; the level set of gamma_q.

    Returns max(0, -x) when t is at or below the boundary value there.
    """
    if t < 0.0:
        raise ValueError("t must be nonnegative")
    if len(speed.breakpoints) <= 1:
        d, r_l, r_r = _tp_params(speed, q)
        return float(_tp_glevel_nb(x, t, d, r_l, r_r))
    y_lo = max(0.0, -x)
    g0 = gamma_q(x, y_lo, speed, q).value
    if g0 >= t:
        return y_lo
    step = speed.max_rate * (t - g0) / 4.0 + 1e-9
    y_hi = y_lo + step
    for _ in range(64):
        if gamma_q(x, y_hi, speed, q).value >= t:
            break
        y_hi += step
    return float(brentq(lambda yy: gamma_q(x, yy, speed, q).value - t,
                        y_lo, y_hi, xtol=1e-10, rtol=8.9e-16))


# ---------------------------------------------------------------------------
# initial data and the hydrodynamic envelope
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StepDensity:
    """Piecewise constant initial density with values in [0, 1]."""

    values: tuple[float, ...]
    breakpoints: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        vals = tuple(float(v) for v in self.values)
        bps = tuple(float(b) for b in self.breakpoints)
        if len(vals) != len(bps) + 1:
            raise ValueError("need len(values) == len(breakpoints) + 1")
        if any(v < 0.0 or v > 1.0 for v in vals):
            raise ValueError(f"density values must lie in [0, 1], got {vals}")
        if any(bps[k] >= bps[k + 1] for k in range(len(bps) - 1)):
            raise ValueError("breakpoints must be strictly increasing")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "breakpoints", bps)

    @classmethod
    def constant(cls, p: float) -> "StepDensity":
        return cls((p,))

    @classmethod
    def from_json(cls, obj) -> "StepDensity":
        if isinstance(obj, dict) and "const" in obj:
            return cls.constant(float(obj["const"]))
        return cls(tuple(obj["values"]), tuple(obj.get("breakpoints", [])))

    def __call__(self, x):
        xs = np.asarray(x, dtype=np.float64)
        vals = np.asarray(self.values)
        if not self.breakpoints:
            out = np.full(xs.shape, vals[0])
        else:
            out = vals[np.searchsorted(np.asarray(self.breakpoints), xs, side="right")]
        return float(out) if out.ndim == 0 else out

    @cached_property
    def _knot_integrals(self) -> tuple[np.ndarray, np.ndarray]:
        bps = np.asarray(self.breakpoints)
        vals = np.asarray(self.values)
        V = np.zeros(bps.size)
        # antiderivative values at the knots, anchored at v0(0) = 0
        if bps.size:
            if bps[0] >= 0.0:
                V[0] = _step_integral(vals, bps, 0.0, bps[0])
            else:
                V[0] = -_step_integral(vals, bps, bps[0], 0.0)
            for j in range(1, bps.size):
                V[j] = V[j - 1] + vals[j] * (bps[j] - bps[j - 1])
        return bps, V

    def v0(self, q):
        """Antiderivative of the density with v0(0) = 0; piecewise linear."""
        qs = np.asarray(q, dtype=np.float64)
        vals = np.asarray(self.values)
        if not self.breakpoints:
            out = vals[0] * qs
            return float(out) if out.ndim == 0 else out
        bps, V = self._knot_integrals
        idx = np.searchsorted(bps, qs, side="right")
        knot = np.clip(idx - 1, 0, bps.size - 1)
        anchor = np.where(idx == 0, bps[0], bps[knot])
        level = np.where(idx == 0, V[0], V[knot])
        out = level + vals[idx] * (qs - anchor)
        return float(out) if out.ndim == 0 else out


def _step_integral(vals: np.ndarray, bps: np.ndarray, a: float, b: float) -> float:
    """Integral of the step function over [a, b], a <= b."""
    edges = np.concatenate(([a], np.clip(bps, a, b), [b]))
    return float(np.sum(vals * np.diff(edges)))


def hydro_v(x: float, t: float, speed: SpeedFunction, rho0: StepDensity,
            q_window: tuple[float, float] | None = None,
            coarse: int = 201, xtol: float = 1e-7) -> float:
    """Interface height at (x, t) via the envelope over starting points.

    v(x, t) = sup over q of v0(q) - g(x - q, t) where g is the level set of
    the passage value in the landscape recentred at q.  The sup is taken
    over a window wide enough to contain every maximizer (propagation speed
    is bounded by the top rate); a coarse scan plus local refinement guards
    against the objective being multimodal.  Near ties resolve to the
    smallest q.  If the maximizer lands on the window edge the window is
    doubled, with a warning, up to twice.
    """
    if t <= 0.0:
        raise ValueError("t must be positive")
    cmax = speed.max_rate
    window = q_window or (x - cmax * t - 1.0, x + cmax * t + 1.0)
    fast = len(speed.breakpoints) <= 1

    if fast:
        a0, r_l, r_r = _tp_raw(speed)

        def glevel(q: float) -> float:
            return float(_tp_glevel_nb(x - q, t, a0 - q, r_l, r_r))
    else:
        def glevel(q: float) -> float:
            return g_q_level(x - q, t, speed, -q)

    def objective(q: float) -> float:
        return float(rho0.v0(q)) - glevel(q)

    for _widen in range(3):
        lo, hi = window
        qs = list(np.linspace(lo, hi, coarse))
        for extra in (*rho0.breakpoints, *(x - b for b in speed.breakpoints),
                      *(b for b in speed.breakpoints), x):
            if lo < extra < hi:
                qs.append(float(extra))
        qs = np.asarray(sorted(qs))
        vals = np.asarray([objective(qq) for qq in qs])
        order = np.argsort(vals)[::-1]
        seeds = []
        for idx in order[:6]:
            if all(abs(qs[idx] - s) > (hi - lo) / coarse for s in seeds):
                seeds.append(float(qs[idx]))
            if len(seeds) == 3:
                break
        dq = (hi - lo) / (coarse - 1)
        cands = []
        for s in seeds:
            res = minimize_scalar(lambda qq: -objective(qq),
                                  bounds=(max(lo, s - 2 * dq), min(hi, s + 2 * dq)),
                                  method="bounded", options={"xatol": xtol})
            cands.append((-float(res.fun), float(res.x)))
        best_v = max(c[0] for c in cands)
        best_q = min(c[1] for c in cands if c[0] >= best_v - 1e-10)
        if best_q - lo > 2 * dq and hi - best_q > 2 * dq:
            return best_v
        half = (hi - lo) / 2.0
        window = (lo - half, hi + half)
        warnings.warn("envelope maximizer at the window edge; widening the q window")
    return best_v


def rho_from_v(x: float, t: float, speed: SpeedFunction, rho0: StepDensity,
               h: float = 5e-4, **kw) -> float:
    """Density as a clipped central difference of the interface height."""
    vp = hydro_v(x + h, t, speed, rho0, **kw)
    vm = hydro_v(x - h, t, speed, rho0, **kw)
    return float(np.clip((vp - vm) / (2.0 * h), 0.0, 1.0))


# ---------------------------------------------------------------------------
# compiled fast path for landscapes with at most one jump
# ---------------------------------------------------------------------------

def _tp_raw(speed: SpeedFunction):
    if speed.breakpoints:
        return float(speed.breakpoints[0]), float(speed.rates[0]), float(speed.rates[1])
    r = float(speed.rates[0])
    return math.inf, r, r


def _tp_params(speed: SpeedFunction, q: float):
    a0, r_l, r_r = _tp_raw(speed)
    return a0 + q if math.isfinite(a0) else a0, r_l, r_r


@njit(inline="always")
def _nb_gamma(dx, dy):
    return (math.sqrt(dx + dy) + math.sqrt(dy)) ** 2


@njit(inline="always")
def _nb_inv_gy(dx, m):
    sm = m - 2.0
    disc = math.sqrt(sm * sm - 4.0)
    s = (sm - disc) / 2.0 if dx > 0 else (sm + disc) / 2.0
    s2 = s * s
    return s2 * dx / (1.0 - s2)


@njit(inline="always")
def _nb_demand(mu, dx1, r1, lo1, use1, dx2, r2, lo2, use2):
    tot = 0.0
    if use1:
        m1 = mu * r1
        if m1 <= 4.0:
            return _BIG
        v = _nb_inv_gy(dx1, m1)
        tot += v if v > lo1 else lo1
    if use2:
        m2 = mu * r2
        if m2 <= 4.0:
            return _BIG
        v = _nb_inv_gy(dx2, m2)
        tot += v if v > lo2 else lo2
    return tot


@njit(cache=True, nogil=True)
def _tp_gamma_nb(x, y, d, r_l, r_r):
    """Passage value for a landscape with one jump column at d; start at 0."""
    best = -_BIG
    cmin = min(r_l, r_r)
    lo_b = x if x < 0.0 else 0.0
    hi_b = x if x > 0.0 else 0.0
    if not (lo_b < d < hi_b):
        if x == 0.0:
            if d == 0.0:
                r0 = cmin
            elif d > 0.0:
                r0 = r_l
            else:
                r0 = r_r
            best = 4.0 * y / r0
        else:
            mid = 0.5 * (lo_b + hi_b)
            r = r_l if mid < d else r_r
            best = _nb_gamma(x, y) / r
    if math.isfinite(d):
        dx1 = d
        dx2 = x - d
        use1 = dx1 != 0.0
        use2 = dx2 != 0.0
        lo1 = -dx1 if dx1 < 0.0 else 0.0
        lo2 = -dx2 if dx2 < 0.0 else 0.0
        base = lo1 + lo2
        if y >= base:
            r1 = r_l if d > 0.0 else r_r
            r2 = r_r if x > d else r_l
            slope = 4.0 / cmin
            rem = y - base
            if rem <= 0.0:
                h1, h2, delta = lo1, lo2, 0.0
            else:
                dem = _nb_demand(slope, dx1, r1, lo1, use1, dx2, r2, lo2, use2)
                if dem <= y:
                    h1 = max(lo1, _nb_inv_gy(dx1, slope * r1)) if use1 else 0.0
                    h2 = max(lo2, _nb_inv_gy(dx2, slope * r2)) if use2 else 0.0
                    delta = y - h1 - h2
                else:
                    mu_lo = slope
                    mu_hi = max(slope, 4.0 / min(r1, r2)) * 1.0000001 + 1e-12
                    it = 0
                    while _nb_demand(mu_hi, dx1, r1, lo1, use1, dx2, r2, lo2, use2) > y and it < 300:
                        mu_hi *= 2.0
                        it += 1
                    for _ in range(120):
                        mid_mu = 0.5 * (mu_lo + mu_hi)
                        if mid_mu == mu_lo or mid_mu == mu_hi:
                            break
                        if _nb_demand(mid_mu, dx1, r1, lo1, use1, dx2, r2, lo2, use2) > y:
                            mu_lo = mid_mu
                        else:
                            mu_hi = mid_mu
                    h1 = max(lo1, _nb_inv_gy(dx1, mu_hi * r1)) if use1 else 0.0
                    h2 = max(lo2, _nb_inv_gy(dx2, mu_hi * r2)) if use2 else 0.0
                    slack = y - h1 - h2
                    if use1 and (not use2 or h1 - lo1 >= h2 - lo2):
                        h1 += slack
                    elif use2:
                        h2 += slack
                    delta = 0.0
            val = slope * delta
            if use1:
                val += _nb_gamma(dx1, h1) / r1
            if use2:
                val += _nb_gamma(dx2, h2) / r2
            if val > best:
                best = val
    return best


@njit(cache=True, nogil=True)
def _tp_glevel_nb(x, t, d, r_l, r_r):
    y_lo = 0.0 if x >= 0.0 else -x
    g0 = _tp_gamma_nb(x, y_lo, d, r_l, r_r)
    if g0 >= t:
        return y_lo
    cmax = max(r_l, r_r)
    step = cmax * (t - g0) / 4.0 + 1e-9
    y_hi = y_lo + step
    it = 0
    while _tp_gamma_nb(x, y_hi, d, r_l, r_r) < t and it < 64:
        y_hi += step
        it += 1
    for _ in range(80):
        mid = 0.5 * (y_lo + y_hi)
        if mid == y_lo or mid == y_hi:
            break
        if _tp_gamma_nb(x, mid, d, r_l, r_r) >= t:
            y_hi = mid
        else:
            y_lo = mid
    return y_hi
