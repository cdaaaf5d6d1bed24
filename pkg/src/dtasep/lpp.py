"""Last-passage growth over wedge and corner geometries.

Weights are independent Exp(1) variables attached to lattice cells, divided
by the local jump rate.  Randomness is counter based: cell (i, j) of a field
with a given seed always hashes to the same exponential, independent of
traversal order, array layout, or thread count.  The corner geometry reads
its weight for cell (a, b) from wedge cell (a - b, b), so the two growth
values computed from one field are coupled realization by realization and
their equality can be checked exactly instead of in distribution.

Wedge lattice: cells (i, j) with j >= 1 and i >= 1 - j.  Admissible paths
start at (0, 1) and take steps (1, 0), (0, 1) or (-1, 1); cells outside the
lattice carry value 0.  Corner lattice: cells (a, b) with a, b >= 1, steps
(1, 0) and (0, 1) from (1, 1).
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field

import numpy as np
from numba import njit

from .speed import SpeedFunction

__all__ = [
    "WeightField",
    "wedge_T",
    "corner_growth",
    "wedge_path",
    "transfer_identity_check",
    "scaled_limit_estimate",
    "corner_limit_estimate",
]

# splitmix64 finalizer constants, kept as uint64 so numba never promotes to float
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_P1 = np.uint64(0x9E3779B97F4A7C15)
_P2 = np.uint64(0xC2B2AE3D27D4EB4F)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53


@njit(inline="always")
def _mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(inline="always")
def _exp1_at(seed, i, j):
    """Exp(1) sample for cell (i, j); pure function of (seed, i, j)."""
    h = _mix64(_mix64(np.uint64(seed) ^ (np.uint64(i) * _P1)) ^ (np.uint64(j) * _P2))
    u = 1.0 - np.float64(h >> _S11) * _INV53  # in (0, 1], so the log is finite
    return -np.log(u)


@njit(cache=True)
def _exp1_batch(seed, ii, jj, out):
    for k in range(ii.size):
        out[k] = _exp1_at(seed, ii[k], jj[k])


@njit(inline="always")
def _rate_at(x, bp, rates):
    # lower semicontinuous step lookup, exact equality at breakpoints
    for k in range(bp.size):
        if x < bp[k]:
            return rates[k]
        if x == bp[k]:
            return min(rates[k], rates[k + 1])
    return rates[len(rates) - 1]


@njit(cache=True, nogil=True)
def _wedge_dp(u, v, seed, bp, rates, n, shift, clo, chi, constrained):
    """Row sweep of T(i, j) = max(T(i-1, j), T(i, j-1), T(i+1, j-1)) + w(i, j).

    Row j holds i in [1 - j, u + v - j] (cells that can lie on a path from
    (0, 1) to (u, v)), indexed by idx = i + j - 1.  Out-of-row parents are
    boundary cells with value 0.  With the column constraint active, cells
    outside [clo, chi] are walled off except the start and target cells, so
    a path may spend exactly its first and last step outside the region.
    """
    width = u + v
    prev = np.zeros(width, np.float64)
    cur = np.empty(width, np.float64)
    wall = -1.0e300
    for j in range(1, v + 1):
        ilo = 1 - j
        for idx in range(width):
            i = ilo + idx
            if constrained and (i < clo or i > chi):
                if not ((i == 0 and j == 1) or (i == u and j == v)):
                    cur[idx] = wall
                    continue
            tau = _exp1_at(seed, i, j)
            w = tau / _rate_at((i - shift) / n, bp, rates)
            left = cur[idx - 1] if idx > 0 else 0.0
            below = prev[idx - 1] if idx > 0 else 0.0
            below_r = prev[idx]
            best = left
            if below > best:
                best = below
            if below_r > best:
                best = below_r
            cur[idx] = best + w
        prev, cur = cur, prev
    return prev[width - 1]


@njit(cache=True, nogil=True)
def _corner_dp(m, nrows, seed, bp, rates, n, shift):
    """G(a, b) = max(G(a-1, b), G(a, b-1)) + w, weights read from wedge cell (a-b, b)."""
    G = np.zeros(m + 1, np.float64)
    for b in range(1, nrows + 1):
        left = 0.0
        for a in range(1, m + 1):
            i = a - b
            tau = _exp1_at(seed, i, b)
            w = tau / _rate_at((i - shift) / n, bp, rates)
            below = G[a]
            best = left if left > below else below
            val = best + w
            G[a] = val
            left = val
    return G[m]


def _speed_arrays(speed: SpeedFunction):
    return (
        np.asarray(speed.breakpoints, dtype=np.float64),
        np.asarray(speed.rates, dtype=np.float64),
    )


@dataclass(frozen=True)
class WeightField:
    """Reproducible random environment for one (speed, n, shift, seed) tuple.

    ``shift`` recentres the landscape on the lattice: cell column i sees rate
    ``speed((i - shift)/n)``.  Weight arrays are never materialized globally;
    callers hash cells on demand.
    """

    speed: SpeedFunction
    n: int
    shift: int = 0
    seed: int = 0

    def rate(self, i):
        return self.speed((np.asarray(i, dtype=np.float64) - self.shift) / float(self.n))

    def tau(self, i, j):
        """Exp(1) variables for cells (i, j); scalar in, scalar out."""
        ii, jj = np.broadcast_arrays(np.asarray(i, np.int64), np.asarray(j, np.int64))
        out = np.empty(ii.size, np.float64)
        _exp1_batch(np.uint64(self.seed), ii.ravel(), jj.ravel(), out)
        out = out.reshape(ii.shape)
        return float(out) if out.ndim == 0 else out

    def weight(self, i, j):
        return self.tau(i, j) / self.rate(i)

    def corner_weight(self, a, b):
        """Corner cell (a, b) reads wedge cell (a - b, b)."""
        a = np.asarray(a, np.int64)
        b = np.asarray(b, np.int64)
        return self.weight(a - b, b)


def _check_wedge_target(u: int, v: int) -> None:
    if v < 1 or u < 1 - v:
        raise ValueError(f"wedge target needs v >= 1 and u >= 1 - v, got ({u}, {v})")


def wedge_T(u: int, v: int, field: WeightField, constrain=None) -> float:
    """Maximal path weight from (0, 1) to (u, v) in the wedge.

    ``constrain=(clo, chi)`` restricts paths to columns clo..chi except that
    the start and target cells themselves are always admissible, which lets
    a path step out of the region once at each end.  Raises if no admissible
    path exists under the constraint.
    """
    _check_wedge_target(u, v)
    bp, rates = _speed_arrays(field.speed)
    if constrain is None:
        clo, chi, con = 0, 0, False
    else:
        clo, chi = int(constrain[0]), int(constrain[1])
        if clo > chi:
            raise ValueError(f"empty constraint interval ({clo}, {chi})")
        con = True
    val = _wedge_dp(
        int(u), int(v), np.uint64(field.seed), bp, rates,
        float(field.n), float(field.shift), clo, chi, con,
    )
    if val < -1.0e299:
        raise ValueError("no admissible path under the column constraint")
    return float(val)


def corner_growth(m: int, nrows: int, field: WeightField) -> float:
    """Maximal path weight from (1, 1) to (m, nrows) in the corner geometry."""
    if m < 1 or nrows < 1:
        raise ValueError(f"corner target needs m, n >= 1, got ({m}, {nrows})")
    bp, rates = _speed_arrays(field.speed)
    return float(_corner_dp(
        int(m), int(nrows), np.uint64(field.seed), bp, rates,
        float(field.n), float(field.shift),
    ))


def wedge_path(u: int, v: int, field: WeightField, constrain=None):
    """Reference DP with traceback; quadratic memory, small targets only.

    Returns ``(value, cells)`` where cells runs from (0, 1) to (u, v).  Ties
    are broken preferring the (1, 0) parent, then (-1, 1), then (0, 1).
    """
    _check_wedge_target(u, v)
    if (u + v) * v > 4_000_000:
        raise ValueError("target too large for the traceback variant")
    lo_col, hi_col = (None, None) if constrain is None else constrain

    def allowed(i, j):
        if constrain is None:
            return True
        if (i == 0 and j == 1) or (i == u and j == v):
            return True
        return lo_col <= i <= hi_col

    T: dict[tuple[int, int], float] = {}

    def get(i, j):
        if j < 1 or i < 1 - j or i > u + v - j:
            return 0.0
        return T.get((i, j), -np.inf)

    for j in range(1, v + 1):
        for i in range(1 - j, u + v - j + 1):
            if not allowed(i, j):
                continue
            w = float(field.weight(i, j))
            best = max(get(i - 1, j), get(i, j - 1), get(i + 1, j - 1))
            if best == -np.inf:
                continue
            T[(i, j)] = best + w
    if (u, v) not in T:
        raise ValueError("no admissible path under the column constraint")

    cells = [(u, v)]
    i, j = u, v
    while (i, j) != (0, 1):
        for pi, pj in ((i - 1, j), (i + 1, j - 1), (i, j - 1)):
            if get(pi, pj) == max(get(i - 1, j), get(i, j - 1), get(i + 1, j - 1)):
                i, j = pi, pj
                break
        if j < 1:
            break
        if (i, j) != (0, 1) and get(i, j) == 0.0:
            # walked onto the zero boundary; path starts here
            break
        cells.append((i, j))
    cells.reverse()
    return T[(u, v)], cells


@dataclass(frozen=True)
class TransferCheck:
    equal: bool
    corner_value: float
    wedge_value: float


def transfer_identity_check(m: int, nrows: int, field: WeightField) -> TransferCheck:
    """Exact (bitwise) comparison of corner growth G(m, n) with wedge T(m - n, n).

    Both values are computed from the same hashed weights through the shear
    coupling, so equality is deterministic, not statistical.
    """
    g = corner_growth(m, nrows, field)
    t = wedge_T(m - nrows, nrows, field)
    return TransferCheck(g == t, g, t)


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    values: tuple[float, ...] = dc_field(default_factory=tuple)


def _replicated(worker, reps: int, jobs=None) -> Estimate:
    jobs = jobs or min(int(reps), os.cpu_count() or 1)
    if jobs > 1 and reps > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            vals = list(ex.map(worker, range(reps)))
    else:
        vals = [worker(r) for r in range(reps)]
    arr = np.asarray(vals)
    err = float(arr.std(ddof=1) / np.sqrt(reps)) if reps > 1 else float("nan")
    return Estimate(float(arr.mean()), err, tuple(float(x) for x in arr))


def scaled_limit_estimate(x: float, y: float, n: int, reps: int,
                          speed: SpeedFunction, q: float = 0.0,
                          seed: int = 0, jobs=None) -> Estimate:
    """Monte Carlo mean of T(floor(nx), floor(ny)) / n over independent fields.

    Replica r uses seed ``seed + r``; the landscape is shifted by floor(nq)
    sites so rates are speed((i - floor(nq))/n).
    """
    u, v = int(np.floor(n * x)), int(np.floor(n * y))
    _check_wedge_target(u, v)
    shift = int(np.floor(n * q))
    bp, rates = _speed_arrays(speed)

    def one(r: int) -> float:
        val = _wedge_dp(u, v, np.uint64(seed + r), bp, rates,
                        float(n), float(shift), 0, 0, False)
        return float(val) / n

    return _replicated(one, reps, jobs)


def corner_limit_estimate(x: float, y: float, n: int, reps: int,
                          speed: SpeedFunction, q: float = 0.0,
                          seed: int = 0, jobs=None) -> Estimate:
    """Monte Carlo mean of G(floor(nx), floor(ny)) / n over independent fields."""
    m, nrows = int(np.floor(n * x)), int(np.floor(n * y))
    if m < 1 or nrows < 1:
        raise ValueError(f"corner target needs floor(nx), floor(ny) >= 1, got ({m}, {nrows})")
    shift = int(np.floor(n * q))
    bp, rates = _speed_arrays(speed)

    def one(r: int) -> float:
        val = _corner_dp(m, nrows, np.uint64(seed + r), bp, rates,
                         float(n), float(shift))
        return float(val) / n

    return _replicated(one, reps, jobs)
