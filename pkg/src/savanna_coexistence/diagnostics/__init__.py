"""Executable drift functionals, constants and Monte Carlo bounds."""

from .brw import simulate_brw_max
from .extinction import extinction_functionals
from .moving import moving_particle_trial
from .recovery import (
    WeightSpec,
    estimate_recovery_time,
    infinitesimal_mean_q,
    q_functional,
    recovery_constants,
)
from .report import run_diagnostics
from .wet import detect_wet_box

__all__ = [
    "WeightSpec",
    "detect_wet_box",
    "estimate_recovery_time",
    "extinction_functionals",
    "infinitesimal_mean_q",
    "moving_particle_trial",
    "q_functional",
    "recovery_constants",
    "run_diagnostics",
    "simulate_brw_max",
]
