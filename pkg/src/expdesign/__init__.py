"""Optimal experimental design: randomized designs, estimators, exact
enumeration oracles, minimax, stratified, deterministic and synthetic
control designs, and a seeded Monte Carlo harness.
"""

__version__ = "0.1.0"

from .core import (
    Bernoulli,
    CompletelyRandomized,
    CovariateMatrix,
    DesignPmf,
    Explicit,
    PanelData,
    Permutation,
    ScienceTable,
    StrataPartition,
    Stratified,
    apply_permutation,
    make_rng,
    marginal_propensities,
    sample_ate,
)
from .designs import bernoulli_pmf, crd_pmf, design_pmf, sample_assignment
from .errors import (
    DegenerateAssignmentError,
    DesignError,
    EnumerationLimitError,
    ParseError,
    PositivityError,
    SingularDesignError,
)
from .estimators import Aggregate, aggregate_estimate, dm_estimate, ipw_estimate, ols_fit, sc_estimate, var_tau_ols
