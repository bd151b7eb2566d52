"""Exact discrete optimal transport, dyadic measurable transport maps and
Wasserstein-controlled coupling of Gaussian martingale measures."""

from .measures import (
    DeterministicMap,
    DiscreteMeasure,
    MeasureError,
    ParamFamily,
    dirac,
    make_discrete,
    pushforward,
    sample_cloud,
    uniform,
)
from .ot import (
    CostSpec,
    EdgeSet,
    TransportPlan,
    analyse,
    cost,
    is_unique,
    solve_1d_monotone,
    solve_bruteforce,
    solve_exact,
    support_union,
    wasserstein,
)

__all__ = [
    "CostSpec",
    "DeterministicMap",
    "DiscreteMeasure",
    "EdgeSet",
    "MeasureError",
    "ParamFamily",
    "TransportPlan",
    "analyse",
    "cost",
    "dirac",
    "is_unique",
    "make_discrete",
    "pushforward",
    "sample_cloud",
    "solve_1d_monotone",
    "solve_bruteforce",
    "solve_exact",
    "support_union",
    "uniform",
    "wasserstein",
]
