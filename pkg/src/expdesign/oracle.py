"""Exhaustive enumeration engines: exact design moments, risks, pairings,
partitions and subsets on small instances.

Every routine here is exact. Size caps are hard errors; nothing is sampled
or truncated.
"""

from __future__ import annotations

import itertools
from fractions import Fraction
from dataclasses import dataclass
from functools import lru_cache
from math import comb
from typing import Callable, Iterator, NamedTuple

import numpy as np

from .core import (
    MAX_EXPLICIT_N,
    Bernoulli,
    CompletelyRandomized,
    DesignPmf,
    Explicit,
    ScienceTable,
    Stratified,
    StrataPartition,
    marginal_propensities,
)
from .errors import DegenerateAssignmentError, DesignError, EnumerationLimitError, PositivityError
from .estimators import Aggregate

MAX_ASSIGNMENT_N = 16
MAX_PAIRING_N = 12
MAX_PARTITION_N = 8
MAX_SUBSETS = 10**6


@dataclass(frozen=True)
class NonDegenerate:
    """Condition on the estimator being defined (no empty arm, or no empty arm in any stratum)."""


@dataclass(frozen=True)
class FixedN1:
    """Condition on exactly ``n1`` treated units."""

    n1: int

    def __post_init__(self):
        if self.n1 < 0:
            raise DesignError("n1 must be non-negative")


class ExactMoments(NamedTuple):
    mean: float
    variance: float
    conditioning_mass: float


@lru_cache(maxsize=32)
def _all_vectors(n: int) -> np.ndarray:
    codes = np.arange(1 << n, dtype=np.int64)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    out = ((codes[:, None] >> shifts) & 1).astype(np.int8)
    out.setflags(write=False)
    return out


def all_assignments(n: int) -> np.ndarray:
    """Every vector in {0,1}^n, lexicographic (unit 1 most significant)."""
    if n > MAX_EXPLICIT_N:
        raise EnumerationLimitError(f"cannot enumerate 2^{n} assignments (limit n <= {MAX_EXPLICIT_N})")
    return _all_vectors(n)


def expand_design(d) -> DesignPmf:
    """Materialize a design as an explicit pmf over its positive-probability vectors."""
    n = d.n
    if n > MAX_EXPLICIT_N:
        raise EnumerationLimitError(f"cannot expand a design on n={n} units (limit {MAX_EXPLICIT_N})")
    if isinstance(d, Explicit):
        return d.pmf
    if isinstance(d, DesignPmf):
        return d
    if isinstance(d, Bernoulli):
        sup = all_assignments(n)
        probs = np.prod(np.where(sup == 1, d.p, 1.0 - d.p), axis=1)
        probs = probs / probs.sum()
        return DesignPmf(sup, probs)
    if isinstance(d, CompletelyRandomized):
        sup = np.zeros((comb(n, d.n1), n), dtype=np.int8)
        for row, idx in enumerate(itertools.combinations(range(n), d.n1)):
            sup[row, list(idx)] = 1
        # combinations() runs in the reverse of our lexicographic order
        sup = sup[::-1]
        return DesignPmf(sup, np.full(sup.shape[0], 1.0 / sup.shape[0]))
    if isinstance(d, Stratified):
        sup = np.zeros((1, n), dtype=np.int8)
        probs = np.ones(1)
        for s, inner in zip(d.partition.strata, d.designs):
            sub = expand_design(inner)
            grown = np.repeat(sup, sub.support.shape[0], axis=0)
            grown[:, list(s)] = np.tile(sub.support, (sup.shape[0], 1))
            probs = np.outer(probs, sub.probs).ravel()
            sup = grown
        order = np.lexsort(sup.T[::-1])
        return DesignPmf(sup[order], probs[order] / probs.sum())
    raise DesignError(f"not a design: {d!r}")


def _check_assignment_cap(n: int) -> None:
    if n > MAX_ASSIGNMENT_N:
        raise EnumerationLimitError(f"exact moments and risks are limited to n <= {MAX_ASSIGNMENT_N} (got {n})")


def estimator_values(estimator, t: ScienceTable, support: np.ndarray, propensities=None):
    """Estimator value on every support row, and a mask of rows where it is defined."""
    W = support.astype(float)
    Y = W * t.y1 + (1.0 - W) * t.y0
    n = t.n
    if estimator == "dm":
        n1 = W.sum(axis=1)
        ok = (n1 > 0) & (n1 < n)
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = (W * Y).sum(axis=1) / n1 - ((1 - W) * Y).sum(axis=1) / (n - n1)
        return np.where(ok, vals, np.nan), ok
    if estimator == "ipw":
        e = np.asarray(propensities, dtype=float)
        if np.any(e <= 0) or np.any(e >= 1):
            raise PositivityError("positivity violated: every propensity must lie strictly inside (0, 1)")
        vals = (Y * W / e).sum(axis=1) / n - (Y * (1 - W) / (1 - e)).sum(axis=1) / n
        return vals, np.ones(support.shape[0], dtype=bool)
    if isinstance(estimator, Aggregate):
        part = estimator.partition
        if part.n != n:
            raise DesignError("partition size does not match the science table")
        vals = np.zeros(support.shape[0])
        ok = np.ones(support.shape[0], dtype=bool)
        for s in part.strata:
            idx = list(s)
            Ws, Ys = W[:, idx], Y[:, idx]
            n1 = Ws.sum(axis=1)
            ok &= (n1 > 0) & (n1 < len(idx))
            with np.errstate(divide="ignore", invalid="ignore"):
                dm = (Ws * Ys).sum(axis=1) / n1 - ((1 - Ws) * Ys).sum(axis=1) / (len(idx) - n1)
            vals += len(idx) / n * dm
        return np.where(ok, vals, np.nan), ok
    raise DesignError(f"unknown estimator {estimator!r}; use 'dm', 'ipw' or Aggregate(partition)")


def exact_estimator_moments(d, t: ScienceTable, estimator="dm", cond=None) -> ExactMoments:
    """Exact mean and variance of an estimator over the design, optionally conditioned.

    ``cond`` is None, ``NonDegenerate()`` or ``FixedN1(k)``. IPW uses the
    design's own marginal propensities.
    """
    if d.n != t.n:
        raise DesignError(f"design acts on {d.n} units, science table has {t.n}")
    _check_assignment_cap(t.n)
    pmf = expand_design(d)
    e = marginal_propensities(d) if estimator == "ipw" else None
    vals, ok = estimator_values(estimator, t, pmf.support, e)
    keep = pmf.probs > 0
    if cond is None:
        if np.any(keep & ~ok):
            raise DegenerateAssignmentError(
                "estimator undefined on part of the design's support; condition with NonDegenerate()"
            )
    elif isinstance(cond, NonDegenerate):
        keep &= ok
    elif isinstance(cond, FixedN1):
        keep &= pmf.support.sum(axis=1) == cond.n1
        if np.any(keep & ~ok):
            raise DegenerateAssignmentError(f"estimator undefined when N(1) = {cond.n1}")
    else:
        raise DesignError(f"unknown conditioning event {cond!r}")
    mass = float(pmf.probs[keep].sum())
    if mass <= 0:
        raise DesignError("conditioning event has zero probability under the design")
    q = pmf.probs[keep] / mass
    v = vals[keep]
    mean = float(q @ v)
    var = float(q @ (v - mean) ** 2)
    return ExactMoments(mean, max(var, 0.0), mass)


def exact_risk(d, loss: Callable, vectorized: bool = False) -> float:
    """Sum over assignments of pmf(w) * loss(w).

    With ``vectorized=True`` the loss receives the whole support matrix
    (one assignment per row) and must return one value per row.
    """
    _check_assignment_cap(d.n)
    pmf = expand_design(d)
    if vectorized:
        losses = np.asarray(loss(pmf.support), dtype=float)
    else:
        losses = np.array([float(loss(w)) for w in pmf.support])
    return float(pmf.probs @ losses)


# ------------------------------------------------------------ combinatorics


def _pairings(units: tuple) -> Iterator[list]:
    if not units:
        yield []
        return
    first, rest = units[0], units[1:]
    for i, partner in enumerate(rest):
        remaining = rest[:i] + rest[i + 1 :]
        for tail in _pairings(remaining):
            yield [(first, partner)] + tail


def enumerate_pairings(n: int) -> Iterator[StrataPartition]:
    """All (n-1)!! perfect matchings of n units, each once."""
    if n % 2 or n < 2:
        raise DesignError(f"pairings need an even n >= 2 (got {n})")
    if n > MAX_PAIRING_N:
        raise EnumerationLimitError(f"pairing enumeration is limited to n <= {MAX_PAIRING_N}")
    for pairs in _pairings(tuple(range(n))):
        yield StrataPartition(tuple(pairs), n)


def _even_blocks(units: tuple) -> Iterator[list]:
    if not units:
        yield []
        return
    first, rest = units[0], units[1:]
    for size in range(1, len(rest) + 1, 2):
        for mates in itertools.combinations(rest, size):
            block = (first,) + mates
            remaining = tuple(u for u in rest if u not in mates)
            for tail in _even_blocks(remaining):
                yield [block] + tail


def enumerate_even_partitions(n: int) -> Iterator[StrataPartition]:
    """All partitions of n units into strata of even size."""
    if n % 2 or n < 2:
        raise DesignError(f"even partitions need an even n >= 2 (got {n})")
    if n > MAX_PARTITION_N:
        raise EnumerationLimitError(f"even-partition enumeration is limited to n <= {MAX_PARTITION_N}")
    for blocks in _even_blocks(tuple(range(n))):
        yield StrataPartition(tuple(blocks), n)


def enumerate_k_subsets(n: int, k: int) -> Iterator[tuple]:
    """All k-subsets of range(n) in lexicographic order."""
    if not 0 < k <= n:
        raise DesignError(f"need 0 < k <= n (n={n}, k={k})")
    if comb(n, k) > MAX_SUBSETS:
        raise EnumerationLimitError(f"C({n},{k}) = {comb(n, k)} subsets exceeds the limit of {MAX_SUBSETS}")
    return itertools.combinations(range(n), k)


# ------------------------------------------------ two-stage adaptive example


class AdaptivePath(NamedTuple):
    prob: object
    w: tuple
    y: tuple
    propensity: tuple


def two_stage_paths(q, stage_two: str = "adaptive", explore=0) -> list:
    """Every sample path of the three-unit, two-stage adaptive experiment.

    Units 1 and 2 get one treatment and one control uniformly at random;
    every potential outcome is an independent Bernoulli(q) draw. Unit 3 is
    treated if the treated arm did better in stage one, controlled if it
    did worse, and by a fair coin on ties. With ``explore`` > 0 the greedy
    rule is replaced by a fair coin with that probability, which keeps the
    stage-two propensity inside (0, 1). ``stage_two='coin'`` always flips a
    fair coin. Pure Python arithmetic: pass Fractions for exact results.
    """
    if not 0 <= q <= 1:
        raise DesignError("Bernoulli parameter must lie in [0, 1]")
    if not 0 <= explore <= 1:
        raise DesignError("explore must lie in [0, 1]")
    if stage_two not in ("adaptive", "coin"):
        raise DesignError("stage_two must be 'adaptive' or 'coin'")
    one = Fraction(1) if isinstance(q, Fraction) else 1.0
    half = one / 2
    outcome = {1: q, 0: one - q}
    paths = []
    for treated_first in (0, 1):
        w12 = (1, 0) if treated_first == 0 else (0, 1)
        for a in (0, 1):  # stage-one treated outcome
            for c in (0, 1):  # stage-one control outcome
                if stage_two == "coin":
                    p3 = half
                else:
                    greedy = half if a == c else (one if a > c else 0 * one)
                    p3 = (one - explore) * greedy + explore * half
                for w3 in (0, 1):
                    pw3 = p3 if w3 == 1 else one - p3
                    if pw3 == 0:
                        continue
                    for b in (0, 1):
                        prob = half * outcome[a] * outcome[c] * pw3 * outcome[b]
                        if prob == 0:
                            continue
                        y12 = (a, c) if treated_first == 0 else (c, a)
                        paths.append(AdaptivePath(prob, w12 + (w3,), y12 + (b,), (half, half, p3)))
    return paths


def two_stage_adaptive_expectation(bern_param, stage_two: str = "adaptive", estimator: str = "sample_mean", explore=0):
    """Exact expectation of an estimate of E[Y(1)] under the two-stage adaptive design.

    ``estimator='sample_mean'`` is the mean outcome of treated units;
    ``'ipw'`` weights each treated outcome by its sequential propensity,
    (1/3) sum_j Y_j W_j / e_j.
    """
    one = Fraction(1) if isinstance(bern_param, Fraction) else 1.0
    total = 0 * one
    for path in two_stage_paths(bern_param, stage_two, explore):
        if estimator == "sample_mean":
            treated = [y for w, y in zip(path.w, path.y) if w == 1]
            est = one * sum(treated) / len(treated)
        elif estimator == "ipw":
            est = sum(y / e for w, y, e in zip(path.w, path.y, path.propensity) if w == 1) / 3
        else:
            raise DesignError("estimator must be 'sample_mean' or 'ipw'")
        total += path.prob * est
    return total
