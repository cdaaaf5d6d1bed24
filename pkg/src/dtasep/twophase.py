"""Closed forms for the two-rate landscape: limit shape, density profiles,
height formulas, and entropy diagnostics.

Everything here assumes a single jump at the origin with rate c1 to the
left and c2 to the right, c1 >= c2 > 0 (the slow rod sits downstream).
The mirrored landscape reduces to this one by the particle-hole
reflection, so it is rejected rather than half-supported.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .variational import g_wedge

__all__ = [
    "TwoPhaseConstants",
    "phi",
    "DensityProfile",
    "ProfilePiece",
    "profile",
    "v_closed",
    "entropy_check",
    "EntropyReport",
    "SmoothBump",
    "weak_residual",
]


def _check_rates(c1: float, c2: float) -> None:
    if not (c1 > 0.0 and c2 > 0.0):
        raise ValueError("rates must be positive")
    if c1 < c2:
        raise ValueError(
            "need c1 >= c2 (fast phase upstream); for c1 < c2 apply the "
            "particle-hole reflection x -> -x, rho -> 1 - rho and swap the rates")


@dataclass(frozen=True)
class TwoPhaseConstants:
    """Derived constants for the two-rate landscape."""

    c1: float
    c2: float

    def __post_init__(self) -> None:
        _check_rates(self.c1, self.c2)

    @property
    def ratio(self) -> float:
        return self.c1 / self.c2

    @property
    def b(self) -> float:
        """Anisotropy parameter in (0, 1]; equals 1 when the rates match."""
        c = self.ratio
        return 2.0 * c - 1.0 - 2.0 * math.sqrt(c * (c - 1.0))

    @property
    def B(self) -> float:
        return math.sqrt(self.c1 * (self.c1 - self.c2))

    @property
    def rho_star(self) -> float:
        """Density whose upstream flux saturates the slow-phase capacity."""
        return 0.5 - 0.5 * math.sqrt(1.0 - self.c2 / self.c1)

    def D(self, rho: float) -> float:
        return self.c2 ** 2 - 4.0 * self.c1 * self.c2 * rho * (1.0 - rho)

    def D1(self, rho: float) -> float:
        return self.c1 ** 2 - 4.0 * self.c1 * self.c2 * rho * (1.0 - rho)


def phi(x, y, c1: float, c2: float):
    """Limit of the scaled corner passage time G(nx, ny)/n, both args > 0.

    Three linear-or-parabolic regimes split by the rays x = b^2 y and
    x = y.  The outer regimes are checked first: at c1 == c2 the middle
    regime is empty and its coefficients degenerate to 0/0.
    """
    _check_rates(c1, c2)
    xs = np.asarray(x, dtype=np.float64)
    ys = np.asarray(y, dtype=np.float64)
    if np.any(xs <= 0.0) or np.any(ys <= 0.0):
        raise ValueError("phi needs x > 0 and y > 0")
    k = TwoPhaseConstants(c1, c2)
    b, c = k.b, k.ratio
    slow = (np.sqrt(xs) + np.sqrt(ys)) ** 2 / c2
    fast = (np.sqrt(xs) + np.sqrt(ys)) ** 2 / c1
    if c > 1.0:
        mid_x = (4.0 * c - (1.0 + b) ** 2) / (c1 * (1.0 - b * b))
        mid_y = ((1.0 + b) ** 2 - 4.0 * c * b * b) / (c1 * (1.0 - b * b))
    else:
        mid_x = mid_y = 0.0  # middle region empty
    out = np.where(ys <= xs, slow,
                   np.where(xs <= b * b * ys, fast, mid_x * xs + mid_y * ys))
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# density profiles started from a constant density
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProfilePiece:
    lo: float
    hi: float
    kind: str          # "flat" or "fan"
    param: float       # the flat value, or the fan's rate

    def value_at(self, x, t: float):
        if self.kind == "flat":
            return np.full_like(np.asarray(x, dtype=np.float64), self.param)
        return (1.0 - np.asarray(x, dtype=np.float64) / (t * self.param)) / 2.0

    def integral(self, lo: float, hi: float, t: float) -> float:
        lo, hi = max(lo, self.lo), min(hi, self.hi)
        if hi <= lo:
            return 0.0
        if self.kind == "flat":
            return self.param * (hi - lo)
        return (hi - lo) / 2.0 - (hi * hi - lo * lo) / (4.0 * t * self.param)


@dataclass(frozen=True)
class DensityProfile:
    """Piecewise flat-or-fan density at a fixed time, tiling the whole line."""

    t: float
    pieces: tuple[ProfilePiece, ...]

    def __post_init__(self) -> None:
        ps = self.pieces
        if ps[0].lo != -math.inf or ps[-1].hi != math.inf:
            raise ValueError("pieces must tile the line")
        for a, b in zip(ps, ps[1:]):
            if a.hi != b.lo:
                raise ValueError("pieces must be contiguous")

    @property
    def edges(self) -> tuple[float, ...]:
        return tuple(p.hi for p in self.pieces[:-1])

    def value(self, x, t: float | None = None):
        """Density at position x (right-continuous at the edges).

        With t given, evaluates at that time through self-similarity: every
        edge scales linearly in t and fans keep the form (1 - x/(tc))/2.
        """
        tt = self.t if t is None else t
        xs = np.asarray(x, dtype=np.float64) * (self.t / tt)
        idx = np.searchsorted(np.asarray(self.edges), xs, side="right")
        out = np.empty(xs.shape, dtype=np.float64)
        flat_idx = xs.ravel()
        res = out.ravel()
        for k, p in enumerate(self.pieces):
            m = idx.ravel() == k
            if m.any():
                res[m] = p.value_at(flat_idx[m], self.t)
        out2 = res.reshape(xs.shape)
        return float(out2) if out2.ndim == 0 else out2

    def one_sided(self, xe: float) -> tuple[float, float]:
        """Left and right limits at xe, from the piece structure."""
        left = right = None
        for p in self.pieces:
            if p.lo < xe <= p.hi:
                left = float(p.value_at(xe, self.t))
            if p.lo <= xe < p.hi:
                right = float(p.value_at(xe, self.t))
        return left, right

    def average(self, lo: float, hi: float) -> float:
        """Exact mean density over [lo, hi]."""
        if hi <= lo:
            raise ValueError("need lo < hi")
        tot = sum(p.integral(lo, hi, self.t) for p in self.pieces)
        return tot / (hi - lo)

    def jumps(self, tol: float = 1e-13) -> list[tuple[float, float, float]]:
        out = []
        for xe in self.edges:
            l, r = self.one_sided(xe)
            if abs(l - r) > tol:
                out.append((xe, l, r))
        return out


def _nonempty(pieces) -> tuple[ProfilePiece, ...]:
    return tuple(p for p in pieces if p.hi > p.lo)


def profile(rho: float, c1: float, c2: float, t: float = 1.0) -> DensityProfile:
    """Density profile at time t started from constant density rho.

    Three regimes depending on where rho sits relative to the saturation
    density rho* and 1/2; the regime boundaries produce identical profiles
    from either side and are assigned to the middle regime.
    """
    _check_rates(c1, c2)
    if not 0.0 < rho < 1.0:
        raise ValueError("rho must lie in (0, 1)")
    if t <= 0.0:
        raise ValueError("t must be positive")
    k = TwoPhaseConstants(c1, c2)
    rs = k.rho_star
    inf = math.inf
    if rho < rs:
        r_up = 0.5 - 0.5 * math.sqrt(1.0 - 4.0 * rho * (1.0 - rho) * c1 / c2)
        e1 = c2 * (1.0 - 2.0 * r_up) * t
        e2 = c2 * (1.0 - 2.0 * rho) * t
        pieces = (ProfilePiece(-inf, 0.0, "flat", rho),
                  ProfilePiece(0.0, e1, "flat", r_up),
                  ProfilePiece(e1, e2, "fan", c2),
                  ProfilePiece(e2, inf, "flat", rho))
    elif rho <= 0.5:
        s = -t * c1 * (rho - rs)
        e2 = (1.0 - 2.0 * rho) * t * c2
        pieces = (ProfilePiece(-inf, s, "flat", rho),
                  ProfilePiece(s, 0.0, "flat", 1.0 - rs),
                  ProfilePiece(0.0, e2, "fan", c2),
                  ProfilePiece(e2, inf, "flat", rho))
    else:
        r_dn = 0.5 - 0.5 * math.sqrt(1.0 - 4.0 * rho * (1.0 - rho) * c2 / c1)
        s = -t * c1 * (rho - r_dn)
        pieces = (ProfilePiece(-inf, s, "flat", rho),
                  ProfilePiece(s, 0.0, "flat", 1.0 - r_dn),
                  ProfilePiece(0.0, inf, "flat", rho))
    return DensityProfile(t, _nonempty(pieces))


# ---------------------------------------------------------------------------
# interface height from its closed form
# ---------------------------------------------------------------------------

def v_closed(x: float, t: float, rho: float, c1: float, c2: float) -> float:
    """Interface height at (x, t) from constant initial density rho.

    Maximum of two candidate heights on each side of the jump: mass
    arriving from the same side and mass that crossed it.  All regime
    conditions are evaluated before the formulas they guard, so the
    degenerate c1 == c2 constants (B = 0) never divide.
    """
    _check_rates(c1, c2)
    if not 0.0 < rho < 1.0:
        raise ValueError("rho must lie in (0, 1)")
    if t <= 0.0:
        raise ValueError("t must be positive")
    k = TwoPhaseConstants(c1, c2)
    rs = k.rho_star
    if x >= 0.0:
        if rho <= 0.5 and x < t * c2 * (1.0 - 2.0 * rho):
            same = -t * c2 * g_wedge(x / (t * c2))
        else:
            same = rho * x - t * c2 * rho * (1.0 - rho)
        if rho < rs:
            sd = math.sqrt(k.D(rho))
            if x <= t * sd:
                crossed = -t * c1 * rho * (1.0 - rho) + x * (0.5 - sd / (2.0 * c2))
            else:
                crossed = -c2 * t * g_wedge(x / (t * c2))
        else:
            crossed = -c2 * t * g_wedge(x / (t * c2))
    else:
        if rho <= 0.5:
            same = -t * c1 * g_wedge(x / (t * c1))
        else:
            sd1 = math.sqrt(k.D1(rho))
            if x >= -t * sd1:
                same = -t * c2 * rho * (1.0 - rho) + x * (0.5 + sd1 / (2.0 * c1))
            else:
                same = -t * c1 * g_wedge(x / (t * c1))
        if rho < rs:
            crossed = rho * x - t * c1 * rho * (1.0 - rho)
        elif rho <= 1.0 - rs:
            edge = -t * c1 * (rho - rs)
            if x < edge or (rho <= 0.5 and x == edge):
                crossed = rho * x - t * c1 * rho * (1.0 - rho)
            else:
                B = k.B
                crossed = -(t + x / B) * (c2 / 4.0) + (x * c1 / (4.0 * B)) * (1.0 + B / c1) ** 2
        else:
            if x < -c1 * t * (2.0 * rho - 1.0):
                crossed = rho * x - t * c1 * rho * (1.0 - rho)
            elif x < -k.B * t:
                crossed = -t * c1 * g_wedge(x / (t * c1))
            else:
                B = k.B
                crossed = -(t + x / B) * (c2 / 4.0) + (x * c1 / (4.0 * B)) * (1.0 + B / c1) ** 2
    return float(max(same, crossed))


def flux(x, rho, c1: float, c2: float):
    """Instantaneous flux c(x) rho (1 - rho) with the jump at the origin."""
    xs = np.asarray(x, dtype=np.float64)
    rr = np.asarray(rho, dtype=np.float64)
    out = np.where(xs < 0.0, c1, c2) * rr * (1.0 - rr)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# entropy diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EntropyReport:
    ei_violations: tuple[tuple[float, float, float], ...]
    flux_residual: float
    eb_case: str
    passed: bool


def entropy_check(dp: DensityProfile, c1: float, c2: float,
                  tol: float = 1e-9) -> EntropyReport:
    """Admissibility of a candidate profile.

    Away from the origin every jump must go up in x (the flux is concave, so
    only upward shocks dissipate).  At the origin the flux must be
    continuous and the pair of one-sided characteristic speeds must point
    into, out of, or across the slow side in one of the three admissible
    patterns.  Limits come from the piece structure, never from sampling.
    """
    _check_rates(c1, c2)
    viol = []
    for xe, l, r in dp.jumps():
        if xe != 0.0 and r < l - tol:
            viol.append((xe, l, r))
    l0, r0 = dp.one_sided(0.0)
    resid = abs(c1 * l0 * (1.0 - l0) - c2 * r0 * (1.0 - r0))
    dl = c1 * (1.0 - 2.0 * l0)
    dr = c2 * (1.0 - 2.0 * r0)
    if dr >= -tol and dl >= -tol:
        case = "Eb1"
    elif dr <= tol and dl <= tol:
        case = "Eb2"
    elif dr <= tol and dl >= -tol:
        case = "Eb3"
    else:
        case = "none"
    passed = not viol and resid <= tol and case != "none"
    return EntropyReport(tuple(viol), float(resid), case, passed)


# ---------------------------------------------------------------------------
# weak-form residual against smooth bumps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SmoothBump:
    """Compactly supported C^2 test bump, a product of (1 - u^2)^3 windows."""

    x0: float
    t0: float
    rx: float
    rt: float

    def _win(self, u):
        inside = np.abs(u) < 1.0
        return np.where(inside, (1.0 - u * u) ** 3, 0.0)

    def _dwin(self, u):
        inside = np.abs(u) < 1.0
        return np.where(inside, -6.0 * u * (1.0 - u * u) ** 2, 0.0)

    def phi(self, x, t):
        return self._win((np.asarray(x) - self.x0) / self.rx) * \
            self._win((np.asarray(t) - self.t0) / self.rt)

    def phi_x(self, x, t):
        return self._dwin((np.asarray(x) - self.x0) / self.rx) / self.rx * \
            self._win((np.asarray(t) - self.t0) / self.rt)

    def phi_t(self, x, t):
        return self._win((np.asarray(x) - self.x0) / self.rx) * \
            self._dwin((np.asarray(t) - self.t0) / self.rt) / self.rt

    @property
    def support(self) -> tuple[float, float, float, float]:
        return (self.x0 - self.rx, self.x0 + self.rx,
                self.t0 - self.rt, self.t0 + self.rt)


def weak_residual(dp: DensityProfile, bump: SmoothBump, c1: float, c2: float,
                  nx: int = 128, nt: int = 128, rho0=None,
                  frozen: bool = False) -> float:
    """Midpoint quadrature of the weak form of the conservation law.

    integral of rho phi_t + F(x, rho) phi_x over space-time, plus the
    initial-data term when the bump touches t = 0.  For the entropy
    solution this tends to zero at second order in the mesh width provided
    the bump support avoids the flux discontinuity and the shock lines.
    ``frozen`` evaluates the profile at its own fixed time instead of
    rescaling, a deliberately wrong field used as a negative control.
    """
    x_lo, x_hi, t_lo, t_hi = bump.support
    t_lo = max(t_lo, 0.0)
    if t_hi <= t_lo:
        raise ValueError("bump support has no overlap with t > 0")
    hx = (x_hi - x_lo) / nx
    ht = (t_hi - t_lo) / nt
    xs = x_lo + hx * (np.arange(nx) + 0.5)
    ts = t_lo + ht * (np.arange(nt) + 0.5)
    X, T = np.meshgrid(xs, ts, indexing="ij")
    R = dp.value(X) if frozen else dp.value(X, t=T)
    integ = R * bump.phi_t(X, T) + flux(X, R, c1, c2) * bump.phi_x(X, T)
    total = float(integ.sum() * hx * ht)
    if bump.t0 - bump.rt < 0.0:
        if rho0 is None:
            raise ValueError("bump touches t = 0; pass rho0 for the initial term")
        r0 = np.asarray(rho0(xs), dtype=np.float64)
        total += float((r0 * np.asarray(bump.phi(xs, 0.0))).sum() * hx)
    return total
