"""Planar Coulomb gas: energies, Langevin dynamics, the second-moment CIR
process and the exact marginals of the Ginibre regime."""

from .errors import CollisionError, ConditioningWarning, DomainError, SimulationBlowup
from .model import ModelParams
from .dynamics import PathRecord, SimConfig, simulate, simulate_ensemble
from .cir import CirParams, GammaLaw, cir_from_model, gamma_law

__version__ = "0.1.0"

__all__ = [
    "CirParams",
    "CollisionError",
    "ConditioningWarning",
    "DomainError",
    "GammaLaw",
    "ModelParams",
    "PathRecord",
    "SimConfig",
    "SimulationBlowup",
    "cir_from_model",
    "gamma_law",
    "simulate",
    "simulate_ensemble",
]
