"""Numerical lab for convex conjugates, discrete tau-quantization on the
circle, and operator trace inequalities with Garding-type error terms."""

__version__ = "0.1.0"

from .convex_core import (
    AffinePair,
    ConvexFunction,
    biconjugate_gap,
    conjugate,
    eps_subdifferential_witness,
    evaluate,
    gradient,
    restrict_to_real,
)
from .extreal import ExtReal

__all__ = [
    "AffinePair",
    "ConvexFunction",
    "ExtReal",
    "biconjugate_gap",
    "conjugate",
    "eps_subdifferential_witness",
    "evaluate",
    "gradient",
    "restrict_to_real",
]
