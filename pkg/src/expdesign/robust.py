"""Minimax design under bounded or permutation-invariant uncertainty.

Closed-form risk of the completely randomized design under the additive
model, orbit averaging of designs, and the balanced Bernoulli design as the
minimax choice for IPW over a box of potential outcomes.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb

import numpy as np

from .core import DesignPmf, ScienceTable, _codes, _frozen
from .errors import DesignError, PositivityError
from .oracle import all_assignments, expand_design

MAX_SYMMETRIZE_N = 8


@dataclass(frozen=True)
class AdditiveModelSpec:
    """y_j(w) = alpha_w + g_j + eps_jw with independent noise of variance sigma2."""

    g: np.ndarray
    sigma2: float = 0.0
    alpha1: float = 0.0
    alpha0: float = 0.0

    def __post_init__(self):
        g = _frozen(np.atleast_1d(self.g))
        if g.ndim != 1 or not np.all(np.isfinite(g)):
            raise DesignError("g must be a finite vector")
        if not np.isfinite(self.sigma2) or self.sigma2 < 0:
            raise DesignError("sigma2 must be a non-negative finite number")
        if not (np.isfinite(self.alpha1) and np.isfinite(self.alpha0)):
            raise DesignError("arm effects must be finite")
        object.__setattr__(self, "g", g)

    @property
    def n(self) -> int:
        return self.g.size

    @property
    def tau(self) -> float:
        return self.alpha1 - self.alpha0


@dataclass(frozen=True)
class BoxUncertainty:
    """Every potential outcome lies in [-b, b]."""

    b: float

    def __post_init__(self):
        if not (np.isfinite(self.b) and self.b > 0):
            raise DesignError("box half-width b must be positive")


@dataclass(frozen=True)
class MinimaxResult:
    optimal_p: np.ndarray
    worst_case_risk: float
    worst_case_outcomes: str


def _check_split(n1: int, n0: int) -> None:
    if n1 < 1 or n0 < 1:
        raise DesignError(f"both arms need at least one unit (n1={n1}, n0={n0})")


def additive_crd_risk(n1: int, n0: int, m: AdditiveModelSpec) -> float:
    """Squared-error risk of difference in means under CRD(n1) and the additive model."""
    n = n1 + n0
    if n < 2:
        raise DesignError("additive CRD risk needs n >= 2")
    if m.n != n:
        raise DesignError(f"model has {m.n} units, split covers {n}")
    _check_split(n1, n0)
    g = m.g
    s = g.sum()
    sq = g @ g
    cross = s * s - sq  # sum over i != j of g_i g_j
    spread = sq / n - cross / (n * (n - 1))
    return float((1.0 / n1 + 1.0 / n0) * (spread + m.sigma2))


def additive_dm_loss(w, m: AdditiveModelSpec) -> np.ndarray:
    """Noise-averaged squared error of difference in means for each assignment row.

    Accepts one vector or a matrix of assignments; rows with an empty arm are
    rejected.
    """
    W = np.atleast_2d(np.asarray(w, dtype=float))
    if W.shape[1] != m.n:
        raise DesignError(f"assignment has length {W.shape[1]}, model has {m.n} units")
    n1 = W.sum(axis=1)
    n0 = m.n - n1
    if np.any(n1 == 0) or np.any(n0 == 0):
        raise DesignError("difference in means is undefined when an arm is empty")
    gap = (W @ m.g) / n1 - ((1.0 - W) @ m.g) / n0
    out = gap**2 + m.sigma2 * (1.0 / n1 + 1.0 / n0)
    return out if np.ndim(w) > 1 else out[0]


def optimal_crd_split(n: int) -> tuple:
    """The balanced split (n/2, n/2), minimax for even n."""
    if n < 2 or n % 2:
        raise DesignError(f"the balanced split requires even n >= 2 (got n={n})")
    return n // 2, n // 2


def symmetrize(d) -> DesignPmf:
    """Average a design over all n! relabelings of the units.

    The orbit of w under permutations is the set of vectors with the same
    number of treated units, so the result spreads each weight class's mass
    uniformly over that class.
    """
    pmf = d if isinstance(d, DesignPmf) else expand_design(d)
    n = pmf.n
    if n > MAX_SYMMETRIZE_N:
        raise DesignError(f"symmetrize enumerates n! permutations; limited to n <= {MAX_SYMMETRIZE_N}")
    weights = pmf.support.sum(axis=1)
    class_mass = np.bincount(weights, weights=pmf.probs, minlength=n + 1)
    sup = all_assignments(n)
    k = sup.sum(axis=1)
    sizes = np.array([comb(n, j) for j in range(n + 1)], dtype=float)
    probs = class_mass[k] / sizes[k]
    keep = probs > 0
    probs = probs[keep] / probs[keep].sum()
    return DesignPmf(sup[keep], probs)


def symmetrize_bruteforce(d) -> DesignPmf:
    """Direct (1/n!) sum over permutations; independent check of ``symmetrize``."""
    pmf = d if isinstance(d, DesignPmf) else expand_design(d)
    n = pmf.n
    if n > MAX_SYMMETRIZE_N:
        raise DesignError(f"symmetrize enumerates n! permutations; limited to n <= {MAX_SYMMETRIZE_N}")
    acc = np.zeros(1 << n)
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
    for row, p in zip(pmf.support, pmf.probs):
        # eta(pi(w)) summed over pi: every permuted image of w gets mass eta(w)
        images = row[perms]
        np.add.at(acc, _codes(images), p)
    acc /= perms.shape[0]
    sup = all_assignments(n)
    keep = acc > 0
    return DesignPmf(sup[keep], acc[keep] / acc[keep].sum())


def grid_worst_case_risk(d, grid_values, sigma2: float = 0.0) -> float:
    """max over g in G0^n of the exact DM risk under the additive model.

    ``grid_values`` is the finite per-unit set G0; the product grid is
    permutation closed by construction.
    """
    pmf = d if isinstance(d, DesignPmf) else expand_design(d)
    n = pmf.n
    G0 = np.asarray(grid_values, dtype=float).ravel()
    if G0.size == 0:
        raise DesignError("grid must contain at least one value")
    if G0.size**n > 2_000_000:
        raise DesignError("product grid too large to scan")
    W = pmf.support.astype(float)
    n1 = W.sum(axis=1)
    if np.any(n1 == 0) or np.any(n1 == n):
        raise DesignError("difference in means is undefined on part of the design's support")
    # contrast c_w with gap(w, g) = c_w . g
    C = W / n1[:, None] - (1.0 - W) / (n - n1)[:, None]
    noise = sigma2 * (1.0 / n1 + 1.0 / (n - n1))
    grid = np.array(list(itertools.product(G0, repeat=n)))
    risks = ((C @ grid.T) ** 2 + noise[:, None]).T @ pmf.probs
    return float(risks.max())


def _propensities(p, n=None) -> np.ndarray:
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if n is not None and p.size == 1:
        p = np.full(n, p[0])
    if np.any(p <= 0) or np.any(p >= 1):
        raise PositivityError("positivity violated: every p_j must lie strictly inside (0, 1)")
    return p


def reduced_bernoulli_objective(p, t: ScienceTable) -> float:
    """(1/n^2) sum_j (y_j(1)(1-p_j) + y_j(0)p_j)^2 / (p_j(1-p_j)): exact IPW risk under Bernoulli(p)."""
    p = _propensities(p, t.n)
    if p.size != t.n:
        raise DesignError("one probability per unit is required")
    num = (t.y1 * (1.0 - p) + t.y0 * p) ** 2
    return float(np.sum(num / (p * (1.0 - p))) / t.n**2)


def bernoulli_worst_case_risk(p, box: BoxUncertainty) -> float:
    """sup of the IPW risk over [-b, b]^{2n}: (b^2/n^2) sum_j 1/(p_j(1-p_j))."""
    p = _propensities(p)
    n = p.size
    return float(box.b**2 * np.sum(1.0 / (p * (1.0 - p))) / n**2)


def minimax_bernoulli(n: int, box: BoxUncertainty) -> MinimaxResult:
    """The balanced Bernoulli design and its worst-case IPW risk 4b^2/n."""
    if n < 1:
        raise DesignError("n must be at least 1")
    return MinimaxResult(
        optimal_p=np.full(n, 0.5),
        worst_case_risk=4.0 * box.b**2 / n,
        worst_case_outcomes=f"y_j(1) = y_j(0) = +b or -b for every unit (b = {box.b!r}), signs arbitrary",
    )


def symmetric_grid_scan(n: int, box: BoxUncertainty, grid=None) -> tuple:
    """Worst-case risk along p_j = q for each q on the grid; returns (grid, risks)."""
    q = np.round(np.arange(1, 10) / 10, 12) if grid is None else np.asarray(grid, dtype=float)
    risks = np.array([bernoulli_worst_case_risk(np.full(n, qq), box) for qq in q])
    return q, risks

