from __future__ import annotations

import pytest

from dtasep.sim import BernoulliInitial, SimConfig, default_window, run_replicas
from dtasep.speed import two_phase
from dtasep.variational import StepDensity

HYDRO_N = 20000
HYDRO_T = 1.0
HYDRO_REPS = 5
HYDRO_RHOS = (0.1, 0.3, 0.7)


@pytest.fixture(scope="session")
def hydro_states():
    """Five replicas of the two-phase system at n = 2e4 per density.

    Shared by the density-profile and current acceptance tests; this is by
    far the slowest fixture in the suite (several minutes), so it runs once
    per session.
    """
    sp = two_phase(2.0, 1.0)
    out = {}
    for rho in HYDRO_RHOS:
        i_lo, i_hi = default_window(sp, HYDRO_T, -1.5, 1.5, HYDRO_N)
        cfg = SimConfig(sp, HYDRO_N, i_lo, i_hi, seed=0)
        init = BernoulliInitial(StepDensity.constant(rho))
        reps = run_replicas(cfg, [HYDRO_T], init, HYDRO_REPS, jobs=1)
        out[rho] = [states[0] for states in reps]
    return out
