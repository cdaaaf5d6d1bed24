"""Particle dynamics on a finite window of the integer line.

Sites carry independent exponential clocks whose rates come from a step
landscape evaluated at i/n.  The engine uniformizes the merged clock
process: within each observation interval it draws a Poisson number of
rings and attributes each ring to a site with probability proportional to
its rate.  Conditionally on the count the attributions are exchangeable,
so state snapshots at the interval ends have exactly the right law; no
per-event exponential sampling is needed.  The window is closed: no mass
enters or leaves, which is harmless as long as the window pads the
observation region by more than the propagation distance.

Also here: the auxiliary nondecreasing-profile process used to tie jump
counts to passage times, and an exact sup-envelope identity checker for
the height dynamics.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from .lpp import _mix64
from .speed import SpeedFunction

__all__ = [
    "SimConfig",
    "SimState",
    "BernoulliInitial",
    "HeightInitial",
    "default_window",
    "run",
    "run_replicas",
    "empirical_density",
    "mean_density",
    "scaled_current",
    "save_snapshot",
    "load_snapshot",
    "run_xi",
    "envelope_check",
    "EnvelopeReport",
]

_U64_P1 = np.uint64(0x9E3779B97F4A7C15)
_S12 = np.uint64(12)
_S25 = np.uint64(25)
_S27 = np.uint64(27)
_S11 = np.uint64(11)
_XS_MULT = np.uint64(0x2545F4914F6CDD1D)
_INV53 = 1.1102230246251565e-16  # 2**-53


@njit(inline="always")
def _xs_step(state):
    state ^= state >> _S12
    state ^= state << _S25
    state ^= state >> _S27
    u = np.float64((state * _XS_MULT) >> _S11) * _INV53
    return state, u


@njit(cache=True, nogil=True, fastmath=True)
def _run_kernel(seed, pois_seed, occ, J, int_start, int_len, int_inv_rate, cum,
                durations, occ_out, J_out):
    np.random.seed(pois_seed)
    state = _mix64(np.uint64(seed) ^ _U64_P1) | np.uint64(1)
    K = cum.size
    R = cum[K - 1]
    one = np.uint8(1)
    for m in range(durations.size):
        nev = np.random.poisson(R * durations[m])
        for _ in range(nev):
            state, u = _xs_step(state)
            target = u * R
            k = 0
            while k < K - 1 and target >= cum[k]:
                k += 1
            base = cum[k - 1] if k > 0 else 0.0
            idx = np.int64((target - base) * int_inv_rate[k])
            if idx >= int_len[k]:
                idx = int_len[k] - 1
            s = int_start[k] + idx
            # branchless exchange: mv = 1 iff the bond (s, s+1) is 1,0
            a = occ[s]
            b = occ[s + 1]
            mv = a & (one ^ b)
            occ[s] = a ^ mv
            occ[s + 1] = b ^ mv
            J[s] += mv
        occ_out[m, :] = occ
        J_out[m, :] = J


@dataclass(frozen=True)
class SimConfig:
    """A window [i_lo, i_hi] of sites at scale n, plus the rate landscape."""

    speed: SpeedFunction
    n: int
    i_lo: int
    i_hi: int
    seed: int = 0

    def __post_init__(self) -> None:
        if self.i_hi - self.i_lo < 2:
            raise ValueError("window needs at least three sites")

    @property
    def sites(self) -> np.ndarray:
        return np.arange(self.i_lo, self.i_hi + 1, dtype=np.int64)


@dataclass(frozen=True)
class BernoulliInitial:
    """Independent occupancy with site probability density(i/n)."""

    density: object  # callable x -> rho in [0, 1]

    def occupancy(self, sites: np.ndarray, n: int, seed: int) -> np.ndarray:
        p = np.asarray(self.density(sites / n), dtype=np.float64)
        rng = np.random.default_rng([seed, 0xA5])
        return (rng.random(sites.size) < p).astype(np.uint8)


@dataclass(frozen=True)
class HeightInitial:
    """Deterministic occupancy from a macroscopic height profile.

    Site i is filled iff floor(n v0((i+1)/n)) exceeds floor(n v0(i/n)); for
    a nondecreasing 1-Lipschitz v0 the difference is always 0 or 1.
    """

    v0: object  # callable

    def occupancy(self, sites: np.ndarray, n: int, seed: int) -> np.ndarray:
        ext = np.arange(sites[0], sites[-1] + 2, dtype=np.float64)
        h = np.floor(np.asarray(self.v0(ext / n), dtype=np.float64) * n)
        return np.clip(np.diff(h), 0, 1).astype(np.uint8)


@dataclass(frozen=True)
class SimState:
    t: float
    n: int
    i_lo: int
    occ0: np.ndarray
    occ: np.ndarray
    current: np.ndarray  # jumps across bond (i, i+1), indexed by local site i


def default_window(speed: SpeedFunction, t: float, a_lo: float, a_hi: float,
                   n: int) -> tuple[int, int]:
    """Window padding the observed region beyond the propagation distance.

    Information moves no faster than the top rate; the square-root term
    covers fluctuation wandering with a wide margin.
    """
    pad = speed.max_rate * t + 6.0 * math.sqrt(speed.max_rate * t * n) / n
    return int(math.floor(n * (a_lo - pad))) - 1, int(math.ceil(n * (a_hi + pad))) + 1


def _rate_intervals(rates: np.ndarray):
    cuts = np.flatnonzero(np.diff(rates) != 0.0)
    starts = np.concatenate(([0], cuts + 1)).astype(np.int64)
    ends = np.concatenate((cuts + 1, [rates.size])).astype(np.int64)
    int_rate = rates[starts]
    int_len = ends - starts
    cum = np.cumsum(int_rate * int_len)
    return starts, int_len, int_rate, cum


def run(config: SimConfig, observe_times, initial) -> list[SimState]:
    """Evolve the window and snapshot at each macroscopic observation time."""
    times = sorted(float(t) for t in observe_times)
    if not times or times[0] < 0.0:
        raise ValueError("observe_times must be nonempty and nonnegative")
    sites = config.sites
    occ0 = initial.occupancy(sites, config.n, config.seed)
    clock_rates = config.speed.site_rates(sites[:-1], config.n)
    starts, int_len, int_rate, cum = _rate_intervals(clock_rates)

    durations = np.diff(np.concatenate(([0.0], times))) * config.n
    occ = occ0.copy()
    J = np.zeros(sites.size - 1, dtype=np.int64)
    occ_out = np.empty((len(times), sites.size), dtype=np.uint8)
    J_out = np.empty((len(times), sites.size - 1), dtype=np.int64)
    pois_seed = int(_mix64(np.uint64((config.seed * 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF))
                    & np.uint64(0x7FFFFFFF))
    _run_kernel(config.seed, pois_seed, occ, J, starts, int_len, 1.0 / int_rate,
                cum, durations, occ_out, J_out)
    return [SimState(t, config.n, config.i_lo, occ0, occ_out[m], J_out[m])
            for m, t in enumerate(times)]


def run_replicas(config: SimConfig, observe_times, initial, reps: int,
                 jobs: int | None = None) -> list[list[SimState]]:
    """Independent replicas, seeded config.seed + r, mapped over a thread pool."""
    import os

    def one(r: int) -> list[SimState]:
        cfg = SimConfig(config.speed, config.n, config.i_lo, config.i_hi,
                        config.seed + r)
        return run(cfg, observe_times, initial)

    jobs = jobs or min(reps, os.cpu_count() or 1)
    if jobs <= 1:
        return [one(r) for r in range(reps)]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(one, range(reps)))


def empirical_density(state: SimState, a: float, b: float) -> float:
    """n^{-1} sum of occupancies over sites in (na, nb]; estimates the mass integral."""
    i_first = int(math.floor(state.n * a)) + 1
    i_last = int(math.floor(state.n * b))
    lo = i_first - state.i_lo
    hi = i_last - state.i_lo
    if lo < 0 or hi >= state.occ.size:
        raise ValueError("interval leaves the simulated window")
    if hi < lo:
        return 0.0
    return float(state.occ[lo:hi + 1].sum()) / state.n


def mean_density(state: SimState, a: float, b: float) -> float:
    return empirical_density(state, a, b) / (b - a)


def scaled_current(state: SimState, a: float) -> float:
    """n^{-1} times the jump count across the bond at site floor(na)."""
    s = int(math.floor(state.n * a)) - state.i_lo
    if s < 0 or s >= state.current.size:
        raise ValueError("site leaves the simulated window")
    return float(state.current[s]) / state.n


_SNAP_MAGIC = b"DTSP"


def save_snapshot(state: SimState, path) -> None:
    """Binary snapshot: fixed header then the occupation bit-packed."""
    import struct

    head = struct.pack("<4sIqqqd", _SNAP_MAGIC, 1, state.n, state.i_lo,
                       state.occ.size, state.t)
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(np.packbits(state.occ).tobytes())


def load_snapshot(path) -> SimState:
    """Read a snapshot back; the initial occupancy and currents are not stored."""
    import struct

    with open(path, "rb") as fh:
        head = fh.read(struct.calcsize("<4sIqqqd"))
        magic, ver, n, i_lo, size, t = struct.unpack("<4sIqqqd", head)
        if magic != _SNAP_MAGIC or ver != 1:
            raise ValueError(f"{path} is not a snapshot file")
        occ = np.unpackbits(np.frombuffer(fh.read(), dtype=np.uint8))[:size]
    empty = np.zeros(0, dtype=np.int64)
    return SimState(t, n, i_lo, occ.copy(), occ.copy(), empty)


# ---------------------------------------------------------------------------
# auxiliary nondecreasing-profile process
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _xi_kernel(seed, reps, glo, rates, cum, i_target, j_target, out):
    S = rates.size
    R = cum[S - 1]
    xi0 = np.empty(S + 2, dtype=np.int64)
    for loc in range(S + 2):
        g = glo - 1 + loc
        xi0[loc] = -g if g < 0 else 0
    t_loc = i_target - glo + 1
    for rep in range(reps):
        state = _mix64(np.uint64(seed) ^ (np.uint64(rep) * _U64_P1)) | np.uint64(1)
        xi = xi0.copy()
        t = 0.0
        while True:
            state, u1 = _xs_step(state)
            t += -math.log(1.0 - u1) / R
            state, u2 = _xs_step(state)
            target = u2 * R
            k = 0
            while k < S - 1 and target >= cum[k]:
                k += 1
            s = k + 1
            if xi[s] < xi[s - 1] and xi[s] <= xi[s + 1]:
                xi[s] += 1
                if s == t_loc and xi[s] >= j_target:
                    out[rep] = t
                    break


def run_xi(k: int, i_target: int, j_target: int, n: int, speed: SpeedFunction,
           seed: int = 0, reps: int = 1) -> np.ndarray:
    """Hitting times: when the profile at i_target first reaches j_target.

    The profile starts at max(0, -i) and site i increments at rate
    c((i + k)/n) when doing so keeps it nonincreasing with unit steps, the
    particle picture seen from a tagged hole.  The window spans the full
    dependence cone of the target, with the initial values frozen just
    outside it, so the restriction is exact, not approximate.
    """
    if j_target < 1 or i_target < 1 - j_target:
        raise ValueError("target must satisfy j >= 1 and i >= 1 - j")
    glo = -j_target
    ghi = i_target + j_target + 1
    gs = np.arange(glo, ghi + 1, dtype=np.int64)
    rates = speed.site_rates(gs + k, n)
    cum = np.cumsum(rates)
    out = np.empty(reps, dtype=np.float64)
    _xi_kernel(seed, reps, glo, rates, cum, i_target, j_target, out)
    return out


# ---------------------------------------------------------------------------
# exact envelope identity for the height dynamics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnvelopeReport:
    events: int
    violations: int
    first_violation: int | None
    inconclusive: bool


def envelope_check(config: SimConfig, initial, n_events: int,
                   k_range: tuple[int, int] | None = None,
                   decoupled: bool = False) -> EnvelopeReport:
    """Drive the height field and its bank of cornered copies together.

    The height evolution commutes with pointwise suprema, so the field
    started from z0 must equal, after every single event, the supremum over
    k of copies started from the cone z0[k] - max(0, k - r).  The identity
    is exact in integers when the copies see the same events; ``decoupled``
    feeds them an independent event stream instead, as a negative control.
    Restricting ``k_range`` can lose the true argmax, which only ever makes
    the envelope undershoot; such mismatches are reported as inconclusive,
    while any overshoot is a genuine violation regardless of restriction.
    """
    sites = config.sites
    S = sites.size
    occ0 = initial.occupancy(sites, config.n, config.seed)
    z = np.concatenate(([0], np.cumsum(occ0))).astype(np.int64)
    nk = z.size
    k_lo, k_hi = (0, nk - 1) if k_range is None else k_range
    ks = np.arange(k_lo, k_hi + 1)
    E = z[ks, None] - np.maximum(0, ks[:, None] - np.arange(nk)[None, :])

    rates = config.speed.site_rates(sites[:-1], config.n)
    rng = np.random.default_rng([config.seed, 0x5E])
    picks = rng.choice(np.arange(1, S), size=n_events, p=rates / rates.sum())
    picks_e = picks
    if decoupled:
        rng2 = np.random.default_rng([config.seed, 0x5F])
        picks_e = rng2.choice(np.arange(1, S), size=n_events, p=rates / rates.sum())

    violations = 0
    first = None
    inconclusive = False
    restricted = k_range is not None and (k_lo > 0 or k_hi < nk - 1)
    for ev in range(n_events):
        p = picks[ev]
        z[p] = max(z[p] - 1, z[p - 1], z[p + 1] - 1)
        pe = picks_e[ev]
        E[:, pe] = np.maximum(np.maximum(E[:, pe] - 1, E[:, pe - 1]), E[:, pe + 1] - 1)
        env = E.max(axis=0)
        if not np.array_equal(env, z):
            if restricted and not np.any(env > z):
                inconclusive = True
            else:
                violations += 1
                if first is None:
                    first = ev
    return EnvelopeReport(n_events, violations, first, inconclusive)
