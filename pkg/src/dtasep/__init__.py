"""TASEP with a discontinuous jump-rate landscape.

Particle simulation, last-passage growth with counter-based weights, a
variational solver for the macroscopic limit, and closed forms for the
two-rate landscape.
"""
from .speed import SpeedFunction, TwoPhaseSpeed, constant, dump_speed, load_speed, two_phase
from .lpp import (Estimate, TransferCheck, WeightField, corner_growth,
                  corner_limit_estimate, scaled_limit_estimate,
                  transfer_identity_check, wedge_T, wedge_path)
from .variational import (GammaQResult, StepDensity, dual_flux_gap, g_q_level,
                          g_wedge, gamma, gamma_q, hydro_v, rho_from_v)
from .twophase import (DensityProfile, EntropyReport, ProfilePiece, SmoothBump,
                       TwoPhaseConstants, entropy_check, phi, profile,
                       v_closed, weak_residual)
from .sim import (BernoulliInitial, EnvelopeReport, HeightInitial, SimConfig,
                  SimState, default_window, empirical_density, envelope_check,
                  load_snapshot, mean_density, run, run_replicas, run_xi,
                  save_snapshot, scaled_current)

__version__ = "0.1.0"

__all__ = [
    "SpeedFunction", "TwoPhaseSpeed", "constant", "two_phase", "load_speed",
    "dump_speed",
    "WeightField", "wedge_T", "corner_growth", "wedge_path", "Estimate",
    "TransferCheck", "transfer_identity_check", "scaled_limit_estimate",
    "corner_limit_estimate",
    "gamma", "g_wedge", "dual_flux_gap", "gamma_q", "GammaQResult",
    "g_q_level", "StepDensity", "hydro_v", "rho_from_v",
    "TwoPhaseConstants", "phi", "DensityProfile", "ProfilePiece", "profile",
    "v_closed", "entropy_check", "EntropyReport", "SmoothBump",
    "weak_residual",
    "SimConfig", "SimState", "BernoulliInitial", "HeightInitial",
    "default_window", "run", "run_replicas", "empirical_density",
    "mean_density", "scaled_current", "save_snapshot", "load_snapshot",
    "run_xi", "envelope_check", "EnvelopeReport",
    "__version__",
]
