"""Config-driven experiment orchestration.

Each experiment is a JSON config with a ``kind`` plus kind-specific
parameters.  Runs are fully determined by config plus base seed: replicas
use consecutive seed offsets, rows are emitted in a fixed order, and every
float is formatted through one canonical formatter, so re-running a config
reproduces the CSV bodies byte for byte.  Timestamps and wall time live
only in the manifest.
"""
from __future__ import annotations

import hashlib
import json
import math
import time
from pathlib import Path

import numpy as np

from .lpp import corner_limit_estimate, scaled_limit_estimate
from .sim import (BernoulliInitial, SimConfig, default_window, envelope_check,
                  mean_density, run_replicas)
from .speed import SpeedFunction, constant, two_phase
from .twophase import entropy_check, phi, profile
from .variational import StepDensity

KINDS = ("lpp-convergence", "hydro-compare", "profile-table",
         "entropy-report", "envelope-audit")


def fmt(v) -> str:
    """One float formatter for every CSV cell, so bodies stay byte-stable."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".12g")


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def speed_from_config(obj) -> SpeedFunction:
    if isinstance(obj, str):
        with open(obj) as fh:
            obj = json.load(fh)
    if "c1" in obj:
        return two_phase(float(obj["c1"]), float(obj["c2"]))
    if "const" in obj:
        return constant(float(obj["const"]))
    return SpeedFunction.from_json(obj)


def rho0_from_config(obj) -> StepDensity:
    if isinstance(obj, str):
        if obj.startswith("const:"):
            return StepDensity.constant(float(obj.split(":", 1)[1]))
        with open(obj) as fh:
            obj = json.load(fh)
    return StepDensity.from_json(obj)


def parse_grid(spec: str) -> np.ndarray:
    """x0:x1:dx inclusive of both ends up to rounding."""
    try:
        x0, x1, dx = (float(p) for p in spec.split(":"))
    except ValueError as exc:
        raise ValueError(f"grid must look like x0:x1:dx, got {spec!r}") from exc
    if dx <= 0 or x1 < x0:
        raise ValueError(f"bad grid {spec!r}")
    k = int(math.floor((x1 - x0) / dx + 1e-9))
    return x0 + dx * np.arange(k + 1)


def _two_phase_rates(speed: SpeedFunction):
    if len(speed.breakpoints) == 1 and speed.breakpoints[0] == 0.0:
        return speed.rates[0], speed.rates[-1]
    if not speed.breakpoints:
        return speed.rates[0], speed.rates[0]
    raise ValueError("this experiment needs a two-phase speed (single jump at 0)")


# ---------------------------------------------------------------------------
# experiment kinds
# ---------------------------------------------------------------------------

def _exp_lpp_convergence(cfg, out_dir: Path, jobs):
    speed = speed_from_config(cfg["speed"])
    x, y = float(cfg["x"]), float(cfg["y"])
    reps = int(cfg.get("reps", 8))
    seed = int(cfg["seed"])
    route = cfg.get("route", "corner")
    ref = None
    if route == "corner":
        c1, c2 = _two_phase_rates(speed)
        ref = phi(x, y, max(c1, c2), min(c1, c2)) if c1 >= c2 else None
    rows = []
    for i, n in enumerate(cfg["n_list"]):
        block_seed = seed + 100000 * i
        if route == "corner":
            est = corner_limit_estimate(x, y, int(n), reps, speed,
                                        seed=block_seed, jobs=jobs)
        else:
            est = scaled_limit_estimate(x, y, int(n), reps, speed,
                                        q=float(cfg.get("q", 0.0)),
                                        seed=block_seed, jobs=jobs)
        err = abs(est.mean - ref) if ref is not None else float("nan")
        rows.append((int(n), reps, est.mean, est.stderr,
                     ref if ref is not None else float("nan"), err))
    path = out_dir / "lpp_convergence.csv"
    write_csv(path, ["n", "reps", "mean", "stderr", "reference", "abs_err"], rows)
    last_err = rows[-1][5]
    tol = float(cfg.get("tolerance", 0.025))
    failed = ref is not None and not (last_err <= tol * abs(ref))
    return [path], {"last_abs_err": last_err, "reference": ref}, failed


def _exp_hydro_compare(cfg, out_dir: Path, jobs):
    speed = speed_from_config(cfg["speed"])
    c1, c2 = _two_phase_rates(speed)
    rho = float(cfg["rho"])
    n = int(cfg["n"])
    t = float(cfg["t"])
    reps = int(cfg.get("reps", 5))
    seed = int(cfg["seed"])
    lo, hi, dx = (float(v) for v in cfg["bins"])
    excl = float(cfg.get("exclude_radius", 0.1))
    tol = float(cfg.get("tolerance", 0.05))

    dp = profile(rho, c1, c2, t)
    i_lo, i_hi = default_window(speed, t, lo, hi, n)
    base = SimConfig(speed, n, i_lo, i_hi, seed)
    states = run_replicas(base, [t], BernoulliInitial(StepDensity.constant(rho)),
                          reps, jobs=jobs)
    nbins = int(round((hi - lo) / dx))
    edges = lo + dx * np.arange(nbins + 1)
    special = [0.0] + list(dp.edges)
    rows = []
    max_delta = 0.0
    for b in range(nbins):
        blo, bhi = float(edges[b]), float(edges[b + 1])
        emp = float(np.mean([mean_density(st[0], blo, bhi) for st in states]))
        closed = dp.average(blo, bhi)
        delta = emp - closed
        excluded = any(blo - excl < e < bhi + excl for e in special)
        if not excluded:
            max_delta = max(max_delta, abs(delta))
        rows.append((blo, bhi, emp, closed, delta, excluded))
    path = out_dir / "hydro_compare.csv"
    write_csv(path, ["bin_lo", "bin_hi", "empirical", "closed", "delta", "excluded"], rows)
    return [path], {"max_abs_delta": max_delta, "tolerance": tol}, max_delta > tol


def _exp_profile_table(cfg, out_dir: Path, jobs):
    dp = profile(float(cfg["rho"]), float(cfg["c1"]), float(cfg["c2"]),
                 float(cfg.get("t", 1.0)))
    xs = parse_grid(cfg["grid"])
    rows = [(float(x), float(dp.value(x))) for x in xs]
    path = out_dir / "profile_table.csv"
    write_csv(path, ["x", "rho"], rows)
    return [path], {"points": len(rows)}, False


def _exp_entropy_report(cfg, out_dir: Path, jobs):
    c1, c2 = float(cfg["c1"]), float(cfg["c2"])
    t = float(cfg.get("t", 1.0))
    rhos = cfg["rho"] if isinstance(cfg["rho"], list) else [cfg["rho"]]
    reports = []
    for rho in rhos:
        rep = entropy_check(profile(float(rho), c1, c2, t), c1, c2)
        reports.append({
            "rho": float(rho),
            "ei_violations": [list(v) for v in rep.ei_violations],
            "flux_residual": rep.flux_residual,
            "eb_case": rep.eb_case,
            "passed": rep.passed,
        })
    path = out_dir / "entropy_report.json"
    with open(path, "w") as fh:
        json.dump(reports, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return [path], {"all_passed": all(r["passed"] for r in reports)}, \
        not all(r["passed"] for r in reports)


def _exp_envelope_audit(cfg, out_dir: Path, jobs):
    speed = speed_from_config(cfg.get("speed", {"const": 1.0}))
    n = int(cfg.get("n", 100))
    sites = int(cfg.get("sites", 20))
    events = int(cfg.get("events", 1000))
    seeds = int(cfg.get("seeds", 10))
    seed0 = int(cfg["seed"])
    rho = float(cfg.get("rho", 0.5))
    init = BernoulliInitial(StepDensity.constant(rho))
    rows = []
    total = 0
    for s in range(seeds):
        conf = SimConfig(speed, n, -sites // 2, -sites // 2 + sites - 1, seed0 + s)
        rep = envelope_check(conf, init, events,
                             k_range=tuple(cfg["k_range"]) if "k_range" in cfg else None,
                             decoupled=bool(cfg.get("decoupled", False)))
        total += rep.violations
        rows.append((seed0 + s, rep.events, rep.violations,
                     -1 if rep.first_violation is None else rep.first_violation,
                     rep.inconclusive))
    path = out_dir / "envelope_audit.csv"
    write_csv(path, ["seed", "events", "violations", "first_violation", "inconclusive"], rows)
    return [path], {"total_violations": total}, total > 0


_RUNNERS = {
    "lpp-convergence": _exp_lpp_convergence,
    "hydro-compare": _exp_hydro_compare,
    "profile-table": _exp_profile_table,
    "entropy-report": _exp_entropy_report,
    "envelope-audit": _exp_envelope_audit,
}


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def run_experiment(cfg: dict, out_dir, check: bool = False,
                   jobs: int | None = None) -> int:
    """Run one experiment config.  Returns the process exit code.

    0 on success, 2 when ``check`` is set and a tolerance gate fails,
    1 on config errors.  A manifest.json lands next to the artifacts either
    way (except on config errors).
    """
    kind = cfg.get("kind")
    if kind not in _RUNNERS:
        raise ValueError(f"unknown experiment kind {kind!r}; expected one of {KINDS}")
    if "seed" not in cfg:
        raise ValueError("config needs a seed (or set it via the environment)")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    artifacts, summary, failed = _RUNNERS[kind](cfg, out_dir, jobs)
    wall = time.perf_counter() - t0

    import numba
    import scipy

    from . import __version__
    manifest = {
        "kind": kind,
        "config_hash": config_hash(cfg),
        "seed": int(cfg["seed"]),
        "versions": {
            "dtasep": __version__,
            "numpy": np.__version__,
            "numba": numba.__version__,
            "scipy": scipy.__version__,
        },
        "wall_time_s": wall,
        "artifacts": [p.name for p in artifacts],
        "summary": summary,
        "check": {"enabled": check, "failed": failed},
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 2 if (check and failed) else 0
