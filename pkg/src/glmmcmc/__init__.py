"""MCMC for generalized linear mixed models.

Gradient samplers (MALA, HMC) and data-augmentation Gibbs samplers for the
random-effects conditional and for the Bayesian posterior, Monte Carlo EM and
Monte Carlo maximum likelihood drivers, and chain diagnostics.
"""
from ._backend import BACKEND
from .model import BayesState, ConditionalTarget, Family, ModelSpec, PriorSpec

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BayesState",
    "ConditionalTarget",
    "Family",
    "ModelSpec",
    "PriorSpec",
]
