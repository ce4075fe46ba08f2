"""Probability mass evaluation and sampling for randomized designs."""

from __future__ import annotations

from math import comb

import numpy as np

from .core import (
    Bernoulli,
    CompletelyRandomized,
    DesignPmf,
    Explicit,
    Stratified,
    as_assignment,
)
from .errors import DesignError


def bernoulli_pmf(p, w) -> float:
    """Probability of ``w`` when unit j is treated independently with prob p_j."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    w = as_assignment(w)
    if p.size == 1 and w.size > 1:
        p = np.full(w.size, p[0])
    if p.size != w.size:
        raise DesignError(f"p has length {p.size}, assignment has length {w.size}")
    if np.any(p <= 0) or np.any(p >= 1):
        raise DesignError("Bernoulli probabilities must lie strictly inside (0, 1)")
    return float(np.prod(np.where(w == 1, p, 1.0 - p)))


def crd_pmf(n: int, n1: int, w) -> float:
    """1 / C(n, n1) on vectors with exactly n1 treated units, else 0."""
    if not 1 <= n1 <= n - 1:
        raise DesignError(f"completely randomized design needs 1 <= n1 <= n-1 (n={n}, n1={n1})")
    w = as_assignment(w, n)
    return 1.0 / comb(n, n1) if int(w.sum()) == n1 else 0.0


def design_pmf(d, w) -> float:
    """Probability the design ``d`` assigns exactly ``w``."""
    if isinstance(d, Bernoulli):
        return bernoulli_pmf(d.p, w)
    if isinstance(d, CompletelyRandomized):
        return crd_pmf(d.n, d.n1, w)
    if isinstance(d, Stratified):
        w = as_assignment(w, d.n)
        prob = 1.0
        for s, inner in zip(d.partition.strata, d.designs):
            prob *= design_pmf(inner, w[list(s)])
        return prob
    if isinstance(d, Explicit):
        return d.pmf.prob_of(w)
    if isinstance(d, DesignPmf):
        return d.prob_of(w)
    raise DesignError(f"not a design: {d!r}")


def sample_assignment(d, rng: np.random.Generator) -> np.ndarray:
    """Draw one assignment vector from ``d``."""
    if isinstance(d, Bernoulli):
        return (rng.random(d.n) < d.p).astype(np.int8)
    if isinstance(d, CompletelyRandomized):
        w = np.zeros(d.n, dtype=np.int8)
        w[rng.permutation(d.n)[: d.n1]] = 1
        return w
    if isinstance(d, Stratified):
        w = np.zeros(d.n, dtype=np.int8)
        for s, inner in zip(d.partition.strata, d.designs):
            w[list(s)] = sample_assignment(inner, rng)
        return w
    if isinstance(d, Explicit):
        return sample_assignment(d.pmf, rng)
    if isinstance(d, DesignPmf):
        i = rng.choice(d.support.shape[0], p=d.probs)
        return d.support[i].copy()
    raise DesignError(f"not a design: {d!r}")
