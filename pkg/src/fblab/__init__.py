"""Simulation and analysis lab for Floquet-modulated optical binding."""
from .model import (DETUNING, SUM, ConfigurationError, DivergenceError, DomainError,
                    FblabError, ModeParams, NumericalError, PhysicalConfig, ResonanceBranch,
                    reduce, single_mode)

__version__ = "0.1.0"

__all__ = ["DETUNING", "SUM", "ConfigurationError", "DivergenceError", "DomainError",
           "FblabError", "ModeParams", "NumericalError", "PhysicalConfig", "ResonanceBranch",
           "reduce", "single_mode", "__version__"]
