"""Gaussian-thermostatted particle dynamics on walled tori."""

__version__ = "0.1.0"

from .errors import (
    DegenerateFrame, GaussStatError, InfeasibleEnergy, MaxReflections, PackingFailure,
    ParseError, TooShort, TransientNotEnded, ValidationError, ZeroMomentum,
)
from .forces import ForceFieldSpec, energies, grad_V, hessian_V, total_potential, xi_at
from .geometry import PhasePoint, SystemSpec
from .integrator import IntegratorConfig, Records, initialize, run, step
from .thermostats import ThermostatMode, alpha_ie, alpha_ik
