"""Domain types shared by every solver: samples, assignments, designs,
partitions, permutations, covariates and panels.

Units are indexed 0..n-1 everywhere inside the library. The ``from_one_based``
constructors and the CSV layer translate from the 1..n numbering used in files.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import DesignError

PMF_TOL = 1e-12
MAX_EXPLICIT_N = 20


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


def make_rng(seed: int, stream: int | None = None) -> np.random.Generator:
    """Deterministic generator for ``seed``; ``stream`` selects an independent sub-stream.

    Sub-streams are keyed by (seed, stream) through ``SeedSequence.spawn_key``
    so that replication ``i`` draws the same numbers however work is split.
    """
    if stream is None:
        ss = np.random.SeedSequence(int(seed))
    else:
        ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class ScienceTable:
    """The 2n potential outcomes of a finite sample."""

    y1: np.ndarray
    y0: np.ndarray

    def __post_init__(self):
        y1 = _frozen(self.y1)
        y0 = _frozen(self.y0)
        if y1.ndim != 1 or y1.shape != y0.shape or y1.size == 0:
            raise DesignError("y1 and y0 must be non-empty vectors of equal length")
        if not (np.all(np.isfinite(y1)) and np.all(np.isfinite(y0))):
            raise DesignError("potential outcomes must be finite")
        object.__setattr__(self, "y1", y1)
        object.__setattr__(self, "y0", y0)

    @property
    def n(self) -> int:
        return self.y1.size

    def observed(self, w) -> np.ndarray:
        """Observed outcomes Y_j = Y_j(w_j)."""
        w = as_assignment(w, self.n)
        return np.where(w == 1, self.y1, self.y0)


def as_assignment(w, n: int | None = None) -> np.ndarray:
    """Validate a 0/1 assignment vector and return it as an int8 array."""
    arr = np.asarray(w)
    if arr.ndim != 1:
        raise DesignError("assignment must be a vector")
    if n is not None and arr.size != n:
        raise DesignError(f"assignment has length {arr.size}, expected {n}")
    if not np.all((arr == 0) | (arr == 1)):
        raise DesignError("assignment entries must be 0 or 1")
    return arr.astype(np.int8)


def sample_ate(t: ScienceTable) -> float:
    """Average causal effect of the finite sample, mean of y1 - y0."""
    return float(np.mean(t.y1 - t.y0))


@dataclass(frozen=True)
class Permutation:
    """A bijection on units; ``mapping[j]`` is the image of unit j."""

    mapping: np.ndarray

    def __post_init__(self):
        m = _frozen(self.mapping, dtype=np.int64)
        n = m.size
        if m.ndim != 1 or n == 0 or not np.array_equal(np.sort(m), np.arange(n)):
            raise DesignError("permutation must map {0..n-1} onto itself one-to-one")
        object.__setattr__(self, "mapping", m)

    @classmethod
    def from_one_based(cls, mapping: Sequence[int]) -> "Permutation":
        return cls(np.asarray(mapping, dtype=np.int64) - 1)

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(np.arange(n))

    @property
    def n(self) -> int:
        return self.mapping.size

    def inverse(self) -> "Permutation":
        inv = np.empty(self.n, dtype=np.int64)
        inv[self.mapping] = np.arange(self.n)
        return Permutation(inv)


def apply_permutation(pi: Permutation, v) -> np.ndarray:
    """Move entry j of ``v`` to position pi(j), i.e. out[i] = v[pi^{-1}(i)]."""
    v = np.asarray(v)
    if v.shape[-1] != pi.n:
        raise DesignError(f"vector has length {v.shape[-1]}, permutation acts on {pi.n}")
    out = np.empty_like(v)
    out[..., pi.mapping] = v
    return out


@dataclass(frozen=True)
class StrataPartition:
    """A disjoint cover of the units by non-empty strata."""

    strata: tuple
    n: int

    def __post_init__(self):
        strata = tuple(tuple(int(i) for i in s) for s in self.strata)
        seen = np.zeros(self.n, dtype=int)
        for l, s in enumerate(strata):
            if len(s) == 0:
                raise DesignError(f"stratum {l} is empty")
            for i in s:
                if not 0 <= i < self.n:
                    raise DesignError(f"stratum {l} names unit {i} outside 0..{self.n - 1}")
                seen[i] += 1
        if np.any(seen > 1):
            raise DesignError(f"units {np.flatnonzero(seen > 1).tolist()} appear in more than one stratum")
        if np.any(seen == 0):
            raise DesignError(f"units {np.flatnonzero(seen == 0).tolist()} are not covered")
        object.__setattr__(self, "strata", strata)

    @classmethod
    def from_one_based(cls, strata, n: int) -> "StrataPartition":
        return cls(tuple(tuple(i - 1 for i in s) for s in strata), n)

    @property
    def sizes(self) -> tuple:
        return tuple(len(s) for s in self.strata)

    @property
    def k(self) -> int:
        return len(self.strata)

    def labels(self) -> np.ndarray:
        """Stratum index of every unit."""
        lab = np.empty(self.n, dtype=np.int64)
        for l, s in enumerate(self.strata):
            lab[list(s)] = l
        return lab

    def canonical(self) -> frozenset:
        """Order-free form, for comparing partitions."""
        return frozenset(frozenset(s) for s in self.strata)

    def one_based(self) -> list:
        return [[i + 1 for i in s] for s in self.strata]


@dataclass(frozen=True)
class CovariateMatrix:
    values: np.ndarray
    labels: tuple = ()

    def __post_init__(self):
        v = _frozen(self.values)
        if v.ndim == 1:
            v = _frozen(v[:, None])
        if v.ndim != 2 or v.shape[1] < 1 or v.shape[0] < 1:
            raise DesignError("covariates must be an n x d matrix with d >= 1")
        if not np.all(np.isfinite(v)):
            raise DesignError("covariates must be finite")
        labels = tuple(self.labels) or tuple(f"x{i + 1}" for i in range(v.shape[1]))
        if len(labels) != v.shape[1]:
            raise DesignError("one label per covariate column is required")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class PanelData:
    """n units by T periods of outcomes; the first T0 periods are pre-experimental."""

    outcomes: np.ndarray
    T0: int

    def __post_init__(self):
        y = _frozen(self.outcomes)
        if y.ndim != 2:
            raise DesignError("panel outcomes must be an n x T matrix")
        if not np.all(np.isfinite(y)):
            raise DesignError("panel outcomes must be finite")
        if not 1 <= self.T0 < y.shape[1]:
            raise DesignError(f"T0 must satisfy 1 <= T0 < T (T0={self.T0}, T={y.shape[1]})")
        object.__setattr__(self, "outcomes", y)

    @property
    def n(self) -> int:
        return self.outcomes.shape[0]

    @property
    def T(self) -> int:
        return self.outcomes.shape[1]

    @property
    def pre(self) -> np.ndarray:
        return self.outcomes[:, : self.T0]


# ---------------------------------------------------------------- designs


@dataclass(frozen=True)
class DesignPmf:
    """Explicit probability mass over assignment vectors (rows of ``support``)."""

    support: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        sup = np.asarray(self.support)
        if sup.ndim != 2 or sup.shape[0] == 0:
            raise DesignError("support must be a non-empty m x n array")
        if sup.shape[1] > MAX_EXPLICIT_N:
            raise DesignError(f"explicit pmfs are limited to n <= {MAX_EXPLICIT_N}")
        if not np.all((sup == 0) | (sup == 1)):
            raise DesignError("support vectors must be 0/1")
        sup = _frozen(sup, dtype=np.int8)
        p = _frozen(self.probs)
        if p.shape != (sup.shape[0],):
            raise DesignError("one probability per support vector is required")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise DesignError("probabilities must be non-negative")
        if abs(p.sum() - 1.0) > PMF_TOL:
            raise DesignError(f"probabilities sum to {p.sum()!r}, not 1")
        if np.unique(_codes(sup)).size != sup.shape[0]:
            raise DesignError("support vectors must be distinct")
        object.__setattr__(self, "support", sup)
        object.__setattr__(self, "probs", p)

    @property
    def n(self) -> int:
        return self.support.shape[1]

    def prob_of(self, w) -> float:
        w = as_assignment(w, self.n)
        hit = np.all(self.support == w, axis=1)
        return float(self.probs[hit].sum())


def _codes(support: np.ndarray) -> np.ndarray:
    """Integer code of each row, first unit as the most significant bit."""
    n = support.shape[1]
    weights = (1 << np.arange(n - 1, -1, -1)).astype(np.int64)
    return support.astype(np.int64) @ weights


@dataclass(frozen=True)
class Bernoulli:
    """Independent coin flips with unit-specific treatment probabilities."""

    p: np.ndarray

    def __post_init__(self):
        p = _frozen(np.atleast_1d(self.p))
        if p.ndim != 1 or p.size == 0:
            raise DesignError("p must be a non-empty vector")
        if np.any(p <= 0) or np.any(p >= 1):
            raise DesignError("Bernoulli probabilities must lie strictly inside (0, 1)")
        object.__setattr__(self, "p", p)

    @classmethod
    def uniform(cls, n: int, p: float = 0.5) -> "Bernoulli":
        return cls(np.full(n, p))

    @property
    def n(self) -> int:
        return self.p.size


@dataclass(frozen=True)
class CompletelyRandomized:
    """Exactly ``n1`` of ``n`` units treated, uniformly over such vectors."""

    n: int
    n1: int

    def __post_init__(self):
        if not 1 <= self.n1 <= self.n - 1:
            raise DesignError(f"completely randomized design needs 1 <= n1 <= n-1 (n={self.n}, n1={self.n1})")


@dataclass(frozen=True)
class Stratified:
    """Independent inner designs, one per stratum.

    Inner design ``designs[l]`` acts on the units of ``partition.strata[l]`` in
    the order they are listed there.
    """

    partition: StrataPartition
    designs: tuple

    def __post_init__(self):
        designs = tuple(self.designs)
        if len(designs) != self.partition.k:
            raise DesignError("one inner design per stratum is required")
        for l, (s, d) in enumerate(zip(self.partition.strata, designs)):
            if design_size(d) != len(s):
                raise DesignError(f"inner design {l} has size {design_size(d)}, stratum has {len(s)} units")
        object.__setattr__(self, "designs", designs)

    @classmethod
    def balanced(cls, partition: StrataPartition) -> "Stratified":
        """Half treated within every (even-sized) stratum."""
        designs = []
        for s in partition.strata:
            if len(s) % 2:
                raise DesignError(f"stratum {list(s)} has odd size {len(s)}")
            designs.append(CompletelyRandomized(len(s), len(s) // 2))
        return cls(partition, tuple(designs))

    @property
    def n(self) -> int:
        return self.partition.n


@dataclass(frozen=True)
class Explicit:
    pmf: DesignPmf

    @property
    def n(self) -> int:
        return self.pmf.n


DesignSpec = Union[Bernoulli, CompletelyRandomized, Stratified, Explicit]


def design_size(d) -> int:
    if isinstance(d, (Bernoulli, CompletelyRandomized, Stratified, Explicit)):
        return d.n
    if isinstance(d, DesignPmf):
        return d.n
    raise DesignError(f"not a design: {d!r}")


def marginal_propensities(d) -> np.ndarray:
    """Per-unit marginal treatment probability Pr(W_j = 1) under design ``d``."""
    if isinstance(d, Bernoulli):
        return d.p.copy()
    if isinstance(d, CompletelyRandomized):
        return np.full(d.n, d.n1 / d.n)
    if isinstance(d, Stratified):
        out = np.empty(d.n)
        for s, inner in zip(d.partition.strata, d.designs):
            out[list(s)] = marginal_propensities(inner)
        return out
    if isinstance(d, DesignPmf):
        return d.probs @ d.support.astype(float)
    if isinstance(d, Explicit):
        return marginal_propensities(d.pmf)
    raise DesignError(f"not a design: {d!r}")
