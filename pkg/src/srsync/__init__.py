"""Synchronization of two steady-state superradiant ensembles: cumulant
solver, regression spectrum, exact small-N oracle and parameter sweeps."""

from .cumulant import CumulantState, integrate, steady_state, steady_state_info, thermodynamic_sz
from .errors import (BracketError, ConvergenceError, FitError, OracleSizeError,
                     ParameterError, StepSizeUnderflow)
from .model import CavityParams, ModelParams, regime_check
from .spectrum import SpectrumResult, delta_thermo, gamma_delta, spectrum_profile

__version__ = "0.1.0"
