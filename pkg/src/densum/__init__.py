"""densum: dependence-robust inference for additive statistics.

Exact variance identities for weighted sums under summarized dependence,
sharpened Hoeffding/Bernstein confidence sets for bounded symmetric
outcomes, cluster-robust variance estimation with partition comparison,
and a Gaussian-copula Monte Carlo harness for coverage experiments.
"""

from densum.core import (
    ConfidenceSet,
    DependencySummary,
    Partition,
    Sample,
    SupportSpec,
    WeightMatrix,
    sequential_partition,
    summarize,
    validate_weights,
)

__version__ = "0.1.0"

__all__ = [
    "ConfidenceSet",
    "DependencySummary",
    "Partition",
    "Sample",
    "SupportSpec",
    "WeightMatrix",
    "sequential_partition",
    "summarize",
    "validate_weights",
    "__version__",
]
