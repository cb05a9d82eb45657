"""
Services package for the mixed-pair entropy toolkit

This package contains the computational services:
- quadrature: adaptive Gauss-Legendre integration on the line and in R^d
- distribution_core: injections, spec documents, mass cross-checks
- goodness: sufficient conditions for a finite mixed-pair entropy
- entropy: discrete, differential, mixed-pair and vector entropies
- transform: pushforwards and entropy-preservation certificates
- simulation: Poisson and Markov-chain sample paths, splitting
- processes: entropy rates, finite horizons, splitting identities
- estimators: plug-in and nearest-neighbour entropy estimates
"""

from .quadrature import AdaptiveQuadrature, VectorIntegrator
from .distribution_core import DistributionCore, SpecReader, load_document, parse_document
from .goodness import GoodnessChecker
from .entropy import EntropyCalculator
from .transform import TransformCertifier
from .simulation import ProcessSimulator
from .processes import ProcessEntropy
from .estimators import EntropyEstimator

__all__ = [
    'AdaptiveQuadrature',
    'VectorIntegrator',
    'DistributionCore',
    'SpecReader',
    'load_document',
    'parse_document',
    'GoodnessChecker',
    'EntropyCalculator',
    'TransformCertifier',
    'ProcessSimulator',
    'ProcessEntropy',
    'EntropyEstimator',
]

# Version information
__version__ = '1.0.0'
