"""Adaptive clustering of heterogeneous data.

Mixture models over parametrized families of steep exponential dispersion
models, with per-attribute topology learned from the data: an EM algorithm
for soft clustering, a generalized-method-of-moments hard-clustering
algorithm, Gaussian-mixture and k-means baselines, synthetic data generators,
and a command-line frontend.
"""

from .edm import AttributeKind, Family, MorrisCount, MorrisReal, Tweedie, family_for_kind
from .errors import (
    ClusteringError,
    DegenerateComponentError,
    DomainError,
    EmptyClusterError,
    GeneratorTimeoutError,
    InitError,
    NonFiniteError,
    ParseError,
    SingularBlockError,
)
from .soft import FitConfig, FitResult, MixtureParams, Priors, e_step, fit

__all__ = [
    "AttributeKind",
    "ClusteringError",
    "DegenerateComponentError",
    "DomainError",
    "EmptyClusterError",
    "Family",
    "FitConfig",
    "FitResult",
    "GeneratorTimeoutError",
    "InitError",
    "MixtureParams",
    "MorrisCount",
    "MorrisReal",
    "NonFiniteError",
    "ParseError",
    "Priors",
    "SingularBlockError",
    "Tweedie",
    "e_step",
    "family_for_kind",
    "fit",
]

__version__ = "0.1.0"
