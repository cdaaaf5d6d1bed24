"""Positive step functions used as site-dependent jump rates.

A rate landscape is piecewise constant in the macroscopic coordinate with
finitely many jumps.  At a jump point the landscape takes the smaller of
its two one-sided values, so it is lower semicontinuous.  That convention
is load bearing: the slow value at an interface is what the dynamics at
the interface actually sees, and every consumer in this package (weight
fields, simulators, limit formulas) evaluates rates through it.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SpeedFunction",
    "TwoPhaseSpeed",
    "constant",
    "two_phase",
    "load_speed",
    "dump_speed",
]


@dataclass(frozen=True)
class SpeedFunction:
    """Step function with ``len(rates) == len(breakpoints) + 1``.

    ``rates[k]`` is the value on the open interval between ``breakpoints[k-1]``
    and ``breakpoints[k]`` (with infinite end intervals).  Evaluation at a
    breakpoint returns the min of the two adjacent rates.  Instances are
    immutable; adjacent equal rates are merged and the separating breakpoint
    dropped, so the stored representation is canonical.
    """

    rates: tuple[float, ...]
    breakpoints: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        rates = tuple(float(r) for r in self.rates)
        bps = tuple(float(b) for b in self.breakpoints)
        if len(rates) != len(bps) + 1:
            raise ValueError(
                f"need len(rates) == len(breakpoints) + 1, got {len(rates)} and {len(bps)}"
            )
        if any(not np.isfinite(r) or r <= 0.0 for r in rates):
            raise ValueError(f"rates must be positive and finite, got {rates}")
        if any(not np.isfinite(b) for b in bps):
            raise ValueError(f"breakpoints must be finite, got {bps}")
        if any(bps[k] >= bps[k + 1] for k in range(len(bps) - 1)):
            raise ValueError(f"breakpoints must be strictly increasing, got {bps}")
        # canonicalize: a breakpoint with equal rates on both sides is not a jump
        merged_r = [rates[0]]
        merged_b = []
        for k, b in enumerate(bps):
            if rates[k + 1] == merged_r[-1]:
                continue
            merged_b.append(b)
            merged_r.append(rates[k + 1])
        object.__setattr__(self, "rates", tuple(merged_r))
        object.__setattr__(self, "breakpoints", tuple(merged_b))

    def __call__(self, x):
        """Evaluate at ``x`` (scalar or array), min rule at breakpoints.

        Breakpoint membership is tested by exact float equality against the
        user-supplied values, not by a tolerance.
        """
        xs = np.asarray(x, dtype=np.float64)
        r = np.asarray(self.rates)
        if not self.breakpoints:
            out = np.full(xs.shape, r[0])
            return float(out) if xs.ndim == 0 else out
        bp = np.asarray(self.breakpoints)
        pos = np.searchsorted(bp, xs, side="left")
        out = r[pos]
        safe = np.minimum(pos, bp.size - 1)
        hit = (pos < bp.size) & (bp[safe] == xs)
        if np.any(hit):
            out = np.where(hit, np.minimum(r[safe], r[safe + 1]), out)
        return float(out) if xs.ndim == 0 else out

    @property
    def min_rate(self) -> float:
        return min(self.rates)

    @property
    def max_rate(self) -> float:
        return max(self.rates)

    def intervals(self):
        """Yield ``(lo, hi, rate)`` over the constancy intervals, ends infinite."""
        edges = (-np.inf,) + self.breakpoints + (np.inf,)
        for k, r in enumerate(self.rates):
            yield edges[k], edges[k + 1], r

    def site_rates(self, sites, n: int, shift: int = 0) -> np.ndarray:
        """Rates seen by lattice sites: ``c((i - shift)/n)`` for ``i`` in ``sites``."""
        i = np.asarray(sites, dtype=np.float64)
        return np.atleast_1d(self((i - shift) / float(n)))

    def sandwich(self, eps: float):
        """Continuous lower/upper approximations within ``eps``.

        A step function is its own approximation pair, so this returns
        ``(self, self)`` for any ``eps > 0``.
        """
        if eps <= 0.0:
            raise ValueError("eps must be positive")
        return self, self

    def to_json(self) -> dict:
        return {"rates": list(self.rates), "breakpoints": list(self.breakpoints)}

    @classmethod
    def from_json(cls, obj: dict) -> "SpeedFunction":
        try:
            rates = obj["rates"]
            bps = obj.get("breakpoints", [])
        except (TypeError, KeyError) as exc:
            raise ValueError(f"speed JSON must have 'rates' and 'breakpoints' fields: {exc}")
        return cls(tuple(rates), tuple(bps))


@dataclass(frozen=True)
class TwoPhaseSpeed(SpeedFunction):
    """Single jump at the origin: rate ``c_left`` for x < 0, ``c_right`` for x > 0."""

    @property
    def c_left(self) -> float:
        return self.rates[0]

    @property
    def c_right(self) -> float:
        return self.rates[-1]


def constant(rate: float) -> SpeedFunction:
    return SpeedFunction((rate,))


def two_phase(c_left: float, c_right: float) -> TwoPhaseSpeed:
    """Two-phase landscape with its jump at the origin.

    Equal values are allowed and collapse to a constant landscape (the
    breakpoint is then not a jump and is dropped).
    """
    return TwoPhaseSpeed((c_left, c_right), (0.0,))


def load_speed(path) -> SpeedFunction:
    with open(path, "r", encoding="utf-8") as fh:
        return SpeedFunction.from_json(json.load(fh))


def dump_speed(speed: SpeedFunction, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(speed.to_json(), fh, indent=2)
        fh.write("\n")
