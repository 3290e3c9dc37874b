"""Simulation of high-frequency-injection self-sensing for a 12-tooth bearingless motor."""

from .config import ConfigError, dump_config, load_config
from .sim import Config, run_closed_loop, run_scenario, run_static_sweep

__all__ = [
    "Config",
    "ConfigError",
    "dump_config",
    "load_config",
    "run_closed_loop",
    "run_scenario",
    "run_static_sweep",
]
__version__ = "0.1.0"
