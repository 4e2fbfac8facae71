"""Exact channel synthesis: maximal cross-entropy couplings, rate regions,
Renyi-covering codebooks and exact mixture-decomposition codes.

All information quantities are in nats unless a function says otherwise.
"""

__version__ = "0.1.0"

from .dist import (
    Channel,
    DistributionError,
    BudgetExceeded,
    EmptyTypicalSet,
    JointPmf,
    Pmf,
    entropy,
    kl_divergence,
    mutual_information,
    renyi_inf_divergence,
    tv_distance,
)
from .coupling import (
    Coupling,
    InfeasibleTransport,
    TransportProblem,
    max_cross_entropy,
    solve_transport,
)
from .regions import (
    Decomposition,
    RegionCurve,
    cuff_constraints,
    inner_constraints,
    outer_constraints,
    search_lower_boundary,
)
from .codebook import CodebookParams, covering_experiment, sample_codebook
from .exact import conditional_huffman_rate, end_to_end_demo

__all__ = [
    "Channel", "DistributionError", "BudgetExceeded", "EmptyTypicalSet", "JointPmf", "Pmf",
    "entropy", "kl_divergence", "mutual_information", "renyi_inf_divergence", "tv_distance",
    "Coupling", "InfeasibleTransport", "TransportProblem", "max_cross_entropy", "solve_transport",
    "Decomposition", "RegionCurve", "cuff_constraints", "inner_constraints", "outer_constraints",
    "search_lower_boundary", "CodebookParams", "covering_experiment", "sample_codebook",
    "conditional_huffman_rate", "end_to_end_demo",
]
