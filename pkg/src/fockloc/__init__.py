"""Numerical laboratory for the disordered attractive hard-core particle chain."""

__version__ = "0.1.0"

from .configspace import ConfigSpace, DecayEnvelope, DomainError, enumerate_configs
from .operators import DisorderRealization, ModelParams, SymmetricOperator, build_hamiltonian
from .spectral import EnergyWindow, SpectralData, diagonalize

__all__ = [
    "ConfigSpace",
    "DecayEnvelope",
    "DisorderRealization",
    "DomainError",
    "EnergyWindow",
    "ModelParams",
    "SpectralData",
    "SymmetricOperator",
    "build_hamiltonian",
    "diagonalize",
    "enumerate_configs",
]
