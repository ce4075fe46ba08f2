"""Deterministic designs under the linear model.

D_A-optimal treatment/control splits (maximize w'Mw with M the projection
onto the orthogonal complement of the covariates) and D-optimal k-subset
selection.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from math import comb

import numpy as np

from .core import CovariateMatrix, make_rng
from .errors import DesignError, EnumerationLimitError, SingularDesignError
from .oracle import MAX_SUBSETS

MAX_DA_EXHAUSTIVE_N = 22
SINGULAR_RTOL = 1e-12
_CHUNK = 1 << 15


def _covariates(x) -> np.ndarray:
    return x.values if isinstance(x, CovariateMatrix) else CovariateMatrix(x).values


@dataclass(frozen=True)
class DaProblem:
    """Covariates and the cached projection complement M = I - x(x'x)^{-1}x'."""

    x: CovariateMatrix
    projection_complement: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        x = self.x if isinstance(self.x, CovariateMatrix) else CovariateMatrix(self.x)
        xv = x.values
        if np.linalg.matrix_rank(xv) < xv.shape[1]:
            raise SingularDesignError("x'x is singular: covariate columns are linearly dependent")
        q, _ = np.linalg.qr(xv)
        M = np.eye(xv.shape[0]) - q @ q.T
        M = 0.5 * (M + M.T)
        M.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "projection_complement", M)

    @property
    def n(self) -> int:
        return self.x.n


def _problem(prob) -> DaProblem:
    return prob if isinstance(prob, DaProblem) else DaProblem(prob)


def da_objective(w, prob) -> float:
    """w'Mw, the inverse OLS variance of the treatment coefficient up to sigma^2."""
    prob = _problem(prob)
    w = np.asarray(w, dtype=float)
    if w.shape != (prob.n,):
        raise DesignError(f"assignment has shape {w.shape}, expected ({prob.n},)")
    return float(w @ prob.projection_complement @ w)


def _defined(f: np.ndarray, ww: np.ndarray) -> np.ndarray:
    # mirrors the collinearity cut in var_tau_ols
    return f > 1e-12 * np.maximum(1.0, ww)


def _bits(codes: np.ndarray, n: int) -> np.ndarray:
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    return ((codes[:, None] >> shifts) & 1).astype(float)


def da_exhaustive(prob) -> tuple:
    """Global maximizer of w'Mw over {0,1}^n (lexicographically smallest among ties)."""
    prob = _problem(prob)
    n = prob.n
    if n > MAX_DA_EXHAUSTIVE_N:
        raise EnumerationLimitError(f"exhaustive D_A search is limited to n <= {MAX_DA_EXHAUSTIVE_N} (got {n})")
    M = prob.projection_complement
    total = 1 << n
    values = np.full(total, -np.inf)
    for start in range(0, total, _CHUNK):
        codes = np.arange(start, min(start + _CHUNK, total), dtype=np.int64)
        W = _bits(codes, n)
        f = np.einsum("ij,ij->i", W @ M, W)
        ok = _defined(f, W.sum(axis=1))
        values[start : start + codes.size] = np.where(ok, f, -np.inf)
    best = values.max()
    if not np.isfinite(best):
        raise SingularDesignError("treatment is collinear with the covariates for every assignment")
    tol = 1e-9 * max(1.0, abs(best))
    idx = int(np.flatnonzero(values >= best - tol)[0])
    w = _bits(np.array([idx], dtype=np.int64), n)[0].astype(np.int8)
    return w, da_objective(w, prob)


def _climb(w: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Best-improvement ascent over single flips and treated/control swaps."""
    diag = np.diag(M)
    Mw = M @ w
    scale = max(1.0, float(np.abs(diag).max()))
    while True:
        sign = 1.0 - 2.0 * w
        flip = 2.0 * sign * Mw + diag
        j_flip = int(np.argmax(flip))
        best_gain, move = flip[j_flip], ("flip", j_flip)
        T = np.flatnonzero(w == 1)
        C = np.flatnonzero(w == 0)
        if T.size and C.size:
            swap = (-2.0 * Mw[T] + diag[T])[:, None] + (2.0 * Mw[C] + diag[C])[None, :] - 2.0 * M[np.ix_(T, C)]
            a, b = np.unravel_index(int(np.argmax(swap)), swap.shape)
            if swap[a, b] > best_gain:
                best_gain, move = swap[a, b], ("swap", (int(T[a]), int(C[b])))
        if best_gain <= 1e-12 * scale:
            return w
        if move[0] == "flip":
            j = move[1]
            Mw += sign[j] * M[:, j]
            w[j] = 1.0 - w[j]
        else:
            i, j = move[1]
            Mw += M[:, j] - M[:, i]
            w[i], w[j] = 0.0, 1.0


def da_local_search(prob, restarts: int = 50, seed: int = 0) -> tuple:
    """Best local optimum over seeded random restarts.

    Restart r draws its start from sub-stream (seed, r), so adding restarts
    can only keep or improve the result.
    """
    prob = _problem(prob)
    if restarts < 1:
        raise DesignError("restarts must be at least 1")
    M = prob.projection_complement
    best_w, best_f = None, -np.inf
    for r in range(restarts):
        rng = make_rng(seed, r)
        w = _climb((rng.random(prob.n) < 0.5).astype(float), M)
        f = float(w @ M @ w)
        if best_w is None or f > best_f + 1e-12 * max(1.0, abs(best_f)):
            best_w, best_f = w.astype(np.int8), f
    return best_w, best_f


# ------------------------------------------------------------- D-optimality


@dataclass(frozen=True)
class SubsetDesign:
    subset: tuple
    objective: float
    information_matrix: np.ndarray


def _logdet(A: np.ndarray) -> np.ndarray:
    """Log-determinant of a stack of PSD matrices, -inf where numerically singular."""
    eig = np.linalg.eigvalsh(A)
    top = np.maximum(eig[..., -1], 0.0)
    singular = (eig[..., 0] <= SINGULAR_RTOL * top) | (top <= 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ld = np.log(np.where(singular[..., None], 1.0, eig)).sum(axis=-1)
    return np.where(singular, -np.inf, ld)


def dopt_objective(s, x) -> float:
    """log det(sum_{j in s} x_j x_j'), -inf if singular."""
    xv = _covariates(x)
    idx = sorted(set(int(i) for i in s))
    if len(idx) != len(list(s)):
        raise DesignError("subset has repeated units")
    if any(not 0 <= i < xv.shape[0] for i in idx):
        raise DesignError("subset names a unit outside the covariate matrix")
    if len(idx) < xv.shape[1]:
        raise DesignError(f"subset smaller than dimension ({len(idx)} < {xv.shape[1]})")
    xs = xv[idx]
    return float(_logdet(xs.T @ xs))


def _design(subset, xv) -> SubsetDesign:
    subset = tuple(sorted(int(i) for i in subset))
    xs = xv[list(subset)]
    info = xs.T @ xs
    return SubsetDesign(subset, float(_logdet(info)), info)


def _check_k(n: int, d: int, k: int) -> None:
    if not d <= k <= n:
        raise DesignError(f"need d <= k <= n (d={d}, k={k}, n={n})")


def dopt_exhaustive(x, k: int) -> SubsetDesign:
    xv = _covariates(x)
    n, d = xv.shape
    _check_k(n, d, k)
    if comb(n, k) > MAX_SUBSETS:
        raise EnumerationLimitError(f"C({n},{k}) = {comb(n, k)} subsets exceeds the limit of {MAX_SUBSETS}")
    subs = np.array(list(combinations(range(n), k)), dtype=np.int64)
    values = np.empty(subs.shape[0])
    for start in range(0, subs.shape[0], _CHUNK):
        block = xv[subs[start : start + _CHUNK]]
        values[start : start + block.shape[0]] = _logdet(np.einsum("bki,bkj->bij", block, block))
    best = values.max()
    if np.isfinite(best):
        pick = int(np.flatnonzero(values >= best - 1e-12 * max(1.0, abs(best)))[0])
    else:
        pick = 0
    return _design(subs[pick], xv)


def dopt_greedy_exchange(x, k: int) -> SubsetDesign:
    """Greedy fill by the determinant lemma, then best-improvement 1-exchange."""
    xv = _covariates(x)
    n, d = xv.shape
    _check_k(n, d, k)
    eps = 1e-8 * max(float(np.trace(xv.T @ xv)) / d, 1e-300)
    A = eps * np.eye(d)
    chosen: list = []
    for _ in range(k):
        Ainv = np.linalg.inv(A)
        gain = np.einsum("ij,jk,ik->i", xv, Ainv, xv)
        gain[chosen] = -np.inf
        j = int(np.argmax(gain))
        chosen.append(j)
        A = A + np.outer(xv[j], xv[j])
    current = set(chosen)
    f = _design(current, xv).objective
    while True:
        best_gain, best_swap = 0.0, None
        outside = [j for j in range(n) if j not in current]
        for i in sorted(current):
            for j in outside:
                g = _design((current - {i}) | {j}, xv).objective
                if f == -np.inf:
                    gain = np.inf if g > -np.inf else 0.0
                else:
                    gain = g - f
                if gain > max(best_gain, 1e-12 * max(1.0, abs(f) if np.isfinite(f) else 1.0)):
                    best_gain, best_swap, best_f = gain, (i, j), g
        if best_swap is None:
            break
        current = (current - {best_swap[0]}) | {best_swap[1]}
        f = best_f
    return _design(current, xv)


def dopt_search(x, k: int, mode: str = "exhaustive") -> SubsetDesign:
    if mode == "exhaustive":
        return dopt_exhaustive(x, k)
    if mode == "greedy_exchange":
        return dopt_greedy_exchange(x, k)
    raise DesignError(f"unknown mode {mode!r}; use 'exhaustive' or 'greedy_exchange'")
