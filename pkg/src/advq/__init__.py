"""Adversary bounds for quantum state conversion and an adiabatic algorithm that meets them."""

from .adiaconvert import ConversionInstance, build_instance, time_scale, verify_proposition
from .adversary import (
    AdversaryCertificate,
    AdversaryWitness,
    SolverConfig,
    solve_adversary,
    verify_certificate,
    verify_witness,
)
from .gram_core import GramMatrix, StateRealization, gram_factorize
from .propagator import EvolutionTrace, PropagationConfig, propagate

__all__ = [
    "AdversaryCertificate",
    "AdversaryWitness",
    "ConversionInstance",
    "EvolutionTrace",
    "GramMatrix",
    "PropagationConfig",
    "SolverConfig",
    "StateRealization",
    "build_instance",
    "gram_factorize",
    "propagate",
    "solve_adversary",
    "time_scale",
    "verify_certificate",
    "verify_proposition",
    "verify_witness",
]
