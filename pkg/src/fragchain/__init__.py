"""Simulation and verification toolkit for self-similar random fragmentation.

Subpackages by role:

- core: mass partitions, tree labels, named random streams, errors
- laws: built-in dislocation laws with closed-form moments
- analytic: characteristic exponent, moment series, limit measures
- engine: event-driven chain simulation (exact and screened modes)
- cascade: generation-indexed multiplicative cascade and its martingale
- partition: paintboxes, tagged fragments, interval histories, time change
- stats: limit-law estimators and goodness-of-fit reports
- duality: uniform-cut fragmentation and its coalescent reversal
- acceptance: the numbered verification suites behind `fragchain verify`
- cli: batch entry point
"""

from .core import (
    MASS_TOL,
    BudgetError,
    ConvergenceError,
    FragmentationError,
    FrontierError,
    MassPartition,
    NodeLabel,
    PreconditionError,
    RngStream,
    SampleSizeError,
    TreeMark,
    ValidationError,
    dust_mass,
    merge_families,
    rank,
)
from .laws import (
    DislocationLaw,
    deterministic_binary,
    dirichlet_k,
    law_names,
    lossy_binary,
    make_law,
    uniform_binary,
)
from .analytic import KappaFunction, moment_series, rho_moments, tagged_laplace

__version__ = "0.1.0"

__all__ = [
    "MASS_TOL",
    "BudgetError",
    "ConvergenceError",
    "FragmentationError",
    "FrontierError",
    "MassPartition",
    "NodeLabel",
    "PreconditionError",
    "RngStream",
    "SampleSizeError",
    "TreeMark",
    "ValidationError",
    "dust_mass",
    "merge_families",
    "rank",
    "DislocationLaw",
    "deterministic_binary",
    "dirichlet_k",
    "law_names",
    "lossy_binary",
    "make_law",
    "uniform_binary",
    "KappaFunction",
    "moment_series",
    "rho_moments",
    "tagged_laplace",
    "__version__",
]
