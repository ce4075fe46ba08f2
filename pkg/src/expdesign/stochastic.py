"""Stratified designs with a known baseline: indicator covariances, the
baseline quadratic form and optimal matched pairs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import StrataPartition, _frozen
from .errors import DesignError


@dataclass(frozen=True)
class BaselineVector:
    """g_j = E[Y(1) + Y(0) | x_j] for every unit."""

    g: np.ndarray

    def __post_init__(self):
        g = _frozen(np.atleast_1d(self.g))
        if g.ndim != 1 or g.size < 2:
            raise DesignError("baseline vector needs at least 2 units")
        if not np.all(np.isfinite(g)):
            raise DesignError("baselines must be finite")
        object.__setattr__(self, "g", g)

    @property
    def n(self) -> int:
        return self.g.size


@dataclass(frozen=True)
class PairingResult:
    partition: StrataPartition
    objective: float


def _baseline(g) -> np.ndarray:
    return g.g if isinstance(g, BaselineVector) else BaselineVector(g).g


def _check_even_strata(p: StrataPartition) -> None:
    for l, s in enumerate(p.strata):
        if len(s) % 2:
            raise DesignError(f"stratum {l} has odd size {len(s)}; half-treated randomization needs even strata")


def stratified_cov_matrix(p: StrataPartition) -> np.ndarray:
    """Covariance of treatment indicators under half-treated CRD in every stratum."""
    _check_even_strata(p)
    V = np.zeros((p.n, p.n))
    for s in p.strata:
        idx = np.asarray(s)
        V[np.ix_(idx, idx)] = -1.0 / (4 * (len(s) - 1))
        V[idx, idx] = 0.25
    return V


def pairing_objective(g, p: StrataPartition) -> float:
    """g' V g for the stratified covariance V, computed stratum by stratum."""
    g = _baseline(g)
    if g.size != p.n:
        raise DesignError(f"baseline has {g.size} entries, partition covers {p.n} units")
    _check_even_strata(p)
    total = 0.0
    for s in p.strata:
        gs = g[list(s)]
        sq = gs @ gs
        cross = gs.sum() ** 2 - sq
        total += 0.25 * (sq - cross / (len(s) - 1))
    return float(total)


def pairing_objective_matrix(g, p: StrataPartition) -> float:
    g = _baseline(g)
    return float(g @ stratified_cov_matrix(p) @ g)


def optimal_matched_pairs(g) -> PairingResult:
    """Sort units by baseline (high to low, ties by index) and pair neighbours."""
    g = _baseline(g)
    n = g.size
    if n % 2:
        raise DesignError(f"matched pairs require even n (got n={n})")
    order = np.lexsort((np.arange(n), -g))
    pairs = tuple((int(order[i]), int(order[i + 1])) for i in range(0, n, 2))
    part = StrataPartition(pairs, n)
    return PairingResult(part, max(pairing_objective(g, part), 0.0))


def bias_variance_decompose(samples, target: float) -> tuple:
    """(mse, variance, bias^2) with population-style variance, so mse = variance + bias^2."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise DesignError("no samples to decompose")
    mean = x.mean()
    var = float(np.mean((x - mean) ** 2))
    bias_sq = float((mean - target) ** 2)
    mse = float(np.mean((x - target) ** 2))
    return mse, var, bias_sq
