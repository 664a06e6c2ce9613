"""Solution engines: exact CTMC, mean-field fluid ODEs, stochastic simulation."""

from .ctmc import CTMC, ReducibleChain, StateSpaceExceeded, build_ctmc, dense_steady_state, steady_state
from .fluid import ODESystem, StepSizeUnderflow, fluid_system, integrate_fluid, solve_fluid
from .solution import AnalysisError, AnalysisSolution, NonConvergence
from .ssa import simulate_ssa

__all__ = [
    "AnalysisError",
    "AnalysisSolution",
    "CTMC",
    "NonConvergence",
    "ODESystem",
    "ReducibleChain",
    "StateSpaceExceeded",
    "StepSizeUnderflow",
    "build_ctmc",
    "dense_steady_state",
    "fluid_system",
    "integrate_fluid",
    "simulate_ssa",
    "solve_fluid",
    "steady_state",
]
