"""Search for word mappings that make the components of a finite-alphabet
vector as independent as possible, by minimising the sum of marginal
entropies."""

from .core import (
    JointDistribution,
    MarginalParams,
    WordMapping,
    apply_mapping,
    canonicalize,
    entropy,
    marginal,
    sum_marginal_entropies,
    total_correlation,
)

__all__ = [
    "JointDistribution",
    "MarginalParams",
    "WordMapping",
    "apply_mapping",
    "canonicalize",
    "entropy",
    "marginal",
    "sum_marginal_entropies",
    "total_correlation",
]
