"""Extreme value index estimation for randomly right-censored data."""
from .core import (
    CensoredSample,
    DegenerateSampleError,
    DomainError,
    EstimatorId,
    EviEstimate,
    FullyCensoredTailError,
    TailView,
    adapt_to_censoring,
    k_from_fraction,
    make_tail_view,
)
from .registry import estimate

__version__ = "0.1.0"
