"""Finite-difference simulator for the thermistor problem: a steady
current equation ``div(sigma(u) grad phi) = 0`` coupled to Joule heating
``u_t - Lap u = sigma(u) |grad phi|^2`` on the unit interval or square,
with numerical monitors for the a-priori estimates of the existence
theory."""

import logging

from .conductivity import Constant, ExponentialDecay, OscillatorySine, Tabulated, verify_h1
from .config_io import ConfigError, dump_config, load_config, parse_config, reference_config
from .coupler import SimulationError, SolverConfig, homotopy_sweep, run_simulation
from .grid import Field, GridSpec

logging.getLogger(__name__).addHandler(logging.NullHandler())

__version__ = "0.1.0"

__all__ = [
    "Constant", "ExponentialDecay", "OscillatorySine", "Tabulated", "verify_h1",
    "ConfigError", "dump_config", "load_config", "parse_config", "reference_config",
    "SimulationError", "SolverConfig", "homotopy_sweep", "run_simulation",
    "Field", "GridSpec",
]
