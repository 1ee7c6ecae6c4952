"""Optimal sampled-data control on time scales: Δ-calculus, maximum-principle certification and solvers."""

from .errors import TSPMPError
from .integrate import AdjointArc, Dense, Initial, Scattered, Trajectory, backward_adjoint, forward, variation_endpoint
from .pmp import PMPReport, Tolerances, evaluate_report, hamiltonian, scattered_gradient
from .problem import ControlBox, ControlProblem, SampledControl, TerminalSpec, control_value, eval_dynamics
from .solver import (SolveResult, backward_sweep_consumption, decide_scattered_control, direct_solve, gamma_r,
                     lambda_r)
from .timescale import TimeScale, build_grid, delta_integral, exp_generalized, jump, phi

__all__ = [
    "TSPMPError", "AdjointArc", "Dense", "Initial", "Scattered", "Trajectory", "backward_adjoint", "forward",
    "variation_endpoint", "PMPReport", "Tolerances", "evaluate_report", "hamiltonian", "scattered_gradient",
    "ControlBox", "ControlProblem", "SampledControl", "TerminalSpec", "control_value", "eval_dynamics",
    "SolveResult", "backward_sweep_consumption", "decide_scattered_control", "direct_solve", "gamma_r", "lambda_r",
    "TimeScale", "build_grid", "delta_integral", "exp_generalized", "jump", "phi",
]

__version__ = "0.1.0"
