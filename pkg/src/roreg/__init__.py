"""Robust output regulation for modal models of distributed parameter systems."""

from .closed_loop import assemble, sector_scan, simulate_ode
from .controller import Controller, check_g_conditions, check_p_copy, restricted_PK
from .errors import (
    AccuracyError,
    ConfigError,
    DimensionError,
    NumericalError,
    ResonanceError,
    RoregError,
    SingularResolventError,
    ZeroCoefficientWarning,
)
from .exosystem import Block, Exosystem
from .kernels import BACKEND
from .modal_plant import ModalPlant, TailLaw
from .regulator import ClosedLoopSystem, solve_sylvester

__version__ = "0.1.0"

__all__ = [
    "AccuracyError",
    "BACKEND",
    "Block",
    "ClosedLoopSystem",
    "ConfigError",
    "Controller",
    "DimensionError",
    "Exosystem",
    "ModalPlant",
    "NumericalError",
    "ResonanceError",
    "RoregError",
    "SingularResolventError",
    "TailLaw",
    "ZeroCoefficientWarning",
    "assemble",
    "check_g_conditions",
    "check_p_copy",
    "restricted_PK",
    "sector_scan",
    "simulate_ode",
    "solve_sylvester",
]
