"""Synthetic control experiment design.

Treated and control weights u, v on the unit simplex with disjoint supports
and |support(u)| <= k, chosen to reproduce the f-weighted average of the
pre-period outcomes and covariates. Supports are searched explicitly; each
support's weights come from a simplex-constrained least-squares solve.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb, log, sqrt

import numpy as np
from numba import njit

from .core import CovariateMatrix, PanelData, _frozen
from .errors import DesignError, EnumerationLimitError
from .estimators import SIMPLEX_TOL

FW_GAP_TOL = 1e-10
FW_MAX_ITER = 50_000
MAX_SUPPORTS = 10**5


@dataclass(frozen=True)
class SynthProblem:
    panel: PanelData
    x: CovariateMatrix | None = None
    f: np.ndarray | None = None
    k: int = 1

    def __post_init__(self):
        n = self.panel.n
        f = np.full(n, 1.0 / n) if self.f is None else np.asarray(self.f, dtype=float)
        if f.shape != (n,):
            raise DesignError(f"f must have one weight per unit ({n})")
        if np.any(f < -SIMPLEX_TOL) or abs(f.sum() - 1.0) > SIMPLEX_TOL:
            raise DesignError("f must lie on the unit simplex")
        if self.x is not None and self.x.n != n:
            raise DesignError(f"covariates cover {self.x.n} units, panel has {n}")
        if not 1 <= self.k <= n - 1:
            raise DesignError(f"k must satisfy 1 <= k <= n-1 (k={self.k}, n={n})")
        object.__setattr__(self, "f", _frozen(f))

    @property
    def n(self) -> int:
        return self.panel.n

    @property
    def d(self) -> int:
        return 0 if self.x is None else self.x.d


@dataclass(frozen=True)
class SynthWeights:
    u: np.ndarray
    v: np.ndarray
    treated_set: tuple
    fit_loss: float
    u_loss: float = 0.0
    v_loss: float = 0.0


@dataclass(frozen=True)
class Theorem4Params:
    beta_bar: float
    lambda_bar: float
    r: int
    d: int
    zeta_lower: float
    c: float
    sigma_bar: float
    T0: int
    n: int

    def __post_init__(self):
        if not self.zeta_lower > 0:
            raise DesignError("zeta_lower must be positive")
        if self.r > self.T0:
            raise DesignError("the bias bound needs r <= T0")
        for name in ("beta_bar", "lambda_bar", "c", "sigma_bar"):
            if getattr(self, name) < 0:
                raise DesignError(f"{name} must be non-negative")
        if self.n < 1 or self.T0 < 1 or self.d < 0 or self.r < 1:
            raise DesignError("n, T0 and r must be positive and d non-negative")


def build_targets(prob: SynthProblem) -> tuple:
    """Per-unit targets z_j = (pre-period outcomes, covariates) as rows, and z_bar = sum f_j z_j."""
    Z = prob.panel.pre
    if prob.x is not None:
        Z = np.hstack([Z, prob.x.values])
    Z = np.ascontiguousarray(Z, dtype=float)
    return Z, prob.f @ Z


@njit(cache=True)
def _fw_core(G, b, c, tol, max_iter):
    m = b.shape[0]
    u = np.full(m, 1.0 / m)
    Gu = G @ u
    f = u @ Gu - 2.0 * (b @ u) + c
    hist = np.empty(max_iter + 1)
    grad = np.empty(m)
    d = np.empty(m)
    Gd = np.empty(m)
    it = 0
    while True:
        hist[it] = f
        gu = 0.0
        for i in range(m):
            grad[i] = 2.0 * (Gu[i] - b[i])
            gu += grad[i] * u[i]
        s = 0
        a = -1
        for i in range(m):
            if grad[i] < grad[s]:
                s = i
            if u[i] > 0.0 and (a < 0 or grad[i] > grad[a]):
                a = i
        gap = gu - grad[s]
        if gap <= tol or it >= max_iter:
            break
        away_gain = grad[a] - gu
        if gap >= away_gain:
            for i in range(m):
                d[i] = -u[i]
                Gd[i] = G[i, s] - Gu[i]
            d[s] += 1.0
            gmax = 1.0
            away = False
        else:
            for i in range(m):
                d[i] = u[i]
                Gd[i] = Gu[i] - G[i, a]
            d[a] -= 1.0
            gmax = u[a] / (1.0 - u[a])
            away = True
        dGd = 0.0
        gd = 0.0
        for i in range(m):
            dGd += d[i] * Gd[i]
            gd += grad[i] * d[i]
        if dGd <= 0.0:
            gamma = gmax
        else:
            gamma = min(gmax, -gd / (2.0 * dGd))
        if gamma <= 0.0:
            break
        for i in range(m):
            u[i] += gamma * d[i]
            Gu[i] += gamma * Gd[i]
        if away and gamma == gmax:
            u[a] = 0.0
        f = f + gamma * gd + gamma * gamma * dGd
        it += 1
    return u, hist[: it + 1]


def _finish(u: np.ndarray) -> np.ndarray:
    u = np.clip(u, 0.0, None)
    return u / u.sum()


def _simplex_ls_gram(G, b, c, scale):
    u, hist = _fw_core(G, b, c, FW_GAP_TOL * scale, FW_MAX_ITER)
    return _finish(u), hist


def simplex_least_squares(columns, target, return_history: bool = False):
    """Simplex weights minimizing ||target - sum_i w_i columns[i]||^2.

    Away-step conditional gradient from uniform weights with exact line
    search, stopped at duality gap <= FW_GAP_TOL * max(1, ||target||^2) or
    FW_MAX_ITER iterations.
    """
    cols = [np.asarray(c, dtype=float).ravel() for c in columns]
    if not cols:
        raise DesignError("need at least one column")
    A = np.column_stack(cols)
    z = np.asarray(target, dtype=float).ravel()
    if A.shape[0] != z.size:
        raise DesignError(f"columns have length {A.shape[0]}, target has length {z.size}")
    c = float(z @ z)
    w, hist = _simplex_ls_gram(np.ascontiguousarray(A.T @ A), A.T @ z, c, max(1.0, c))
    r = z - A @ w
    loss = float(r @ r)
    return (w, loss, hist) if return_history else (w, loss)


class _Solver:
    """Subset solves sharing one Gram matrix of all unit targets."""

    def __init__(self, prob: SynthProblem):
        self.Z, self.zbar = build_targets(prob)
        self.n = prob.n
        self.G = np.ascontiguousarray(self.Z @ self.Z.T)
        self.b = self.Z @ self.zbar
        self.c = float(self.zbar @ self.zbar)
        self.scale = max(1.0, self.c)
        self._cache: dict = {}

    def solve(self, idx: tuple):
        hit = self._cache.get(idx)
        if hit is None:
            sel = np.asarray(idx)
            w, _ = _simplex_ls_gram(np.ascontiguousarray(self.G[np.ix_(sel, sel)]), self.b[sel], self.c, self.scale)
            r = self.zbar - w @ self.Z[sel]
            hit = (w, float(r @ r))
            self._cache[idx] = hit
        return hit

    def total(self, S: tuple) -> float:
        rest = tuple(j for j in range(self.n) if j not in S)
        return self.solve(S)[1] + self.solve(rest)[1]

    def weights(self, S: tuple) -> SynthWeights:
        rest = tuple(j for j in range(self.n) if j not in S)
        wu, lu = self.solve(S)
        wv, lv = self.solve(rest)
        u = np.zeros(self.n)
        v = np.zeros(self.n)
        u[list(S)] = wu
        v[list(rest)] = wv
        return SynthWeights(u, v, S, lu + lv, lu, lv)


def _better(a: float, b: float) -> bool:
    return a < b - 1e-12 * max(1.0, abs(b))


def _exhaustive(solver: _Solver, k: int) -> tuple:
    best, best_loss = None, np.inf
    for size in range(1, k + 1):
        for S in combinations(range(solver.n), size):
            loss = solver.total(S)
            if best is None or _better(loss, best_loss):
                best, best_loss = S, loss
    return best


DEEP_CANDIDATES = 3


def _greedy(solver: _Solver, k: int) -> tuple:
    """Forward selection plus single-move exchange, restarted from every singleton.

    The best few distinct local optima then get a double-swap refinement.
    """
    n = solver.n
    S: tuple = ()
    best, best_loss = None, np.inf
    for _ in range(k):
        cands = [tuple(sorted(S + (j,))) for j in range(n) if j not in S]
        losses = [solver.total(c) for c in cands]
        S = cands[int(np.argmin(losses))]
        if best is None or _better(min(losses), best_loss):
            best, best_loss = S, min(losses)
    optima = [_exchange(solver, k, best, best_loss)]
    for j in range(n):
        optima.append(_exchange(solver, k, (j,), solver.total((j,))))
    # stable sort keeps the forward-selection optimum first among equals
    ranked = sorted(dict.fromkeys(optima), key=solver.total)[:DEEP_CANDIDATES]
    S, loss = None, np.inf
    for T in ranked:
        T = _exchange(solver, k, T, solver.total(T), deep=True)
        t_loss = solver.total(T)
        if S is None or _better(t_loss, loss):
            S, loss = T, t_loss
    return S


def _neighbours(S: tuple, n: int, k: int):
    """Swap one member for a non-member, add a unit, or drop one (keeping |S| in 1..k)."""
    inside = set(S)
    outside = [j for j in range(n) if j not in inside]
    for i in S:
        for j in outside:
            yield tuple(sorted(inside - {i} | {j}))
    if len(S) < k:
        for j in outside:
            yield tuple(sorted(inside | {j}))
    if len(S) > 1:
        for i in S:
            yield tuple(sorted(inside - {i}))


def _double_swaps(S: tuple, n: int):
    inside = set(S)
    outside = [j for j in range(n) if j not in inside]
    for out_pair in combinations(S, 2):
        for in_pair in combinations(outside, 2):
            yield tuple(sorted(inside.difference(out_pair) | set(in_pair)))


def _exchange(solver: _Solver, k: int, S: tuple, loss: float, deep: bool = False) -> tuple:
    """Best-improvement local search until no neighbour is strictly better.

    With ``deep``, a local optimum is also tested against double swaps and the
    search resumes from the first one that improves.
    """
    while True:
        best_T, best_loss = None, loss
        for T in _neighbours(S, solver.n, k):
            t_loss = solver.total(T)
            if _better(t_loss, best_loss):
                best_T, best_loss = T, t_loss
        if best_T is None and deep:
            for T in _double_swaps(S, solver.n):
                t_loss = solver.total(T)
                if _better(t_loss, loss):
                    best_T, best_loss = T, t_loss
                    break
        if best_T is None:
            return S
        S, loss = best_T, best_loss


def solve_synth_design(prob: SynthProblem, mode: str = "exhaustive") -> SynthWeights:
    """Treated support and weights minimizing the two-sided fit loss."""
    solver = _Solver(prob)
    if mode == "exhaustive":
        count = sum(comb(prob.n, s) for s in range(1, prob.k + 1))
        if count > MAX_SUPPORTS:
            raise EnumerationLimitError(f"{count} candidate supports exceeds the limit of {MAX_SUPPORTS}")
        S = _exhaustive(solver, prob.k)
    elif mode == "greedy":
        S = _greedy(solver, prob.k)
    else:
        raise DesignError(f"unknown mode {mode!r}; use 'exhaustive' or 'greedy'")
    return solver.weights(S)


def theorem4_bound(params: Theorem4Params) -> float:
    """Upper bound on the ex-post bias of the synthetic control estimator (natural log)."""
    p = params
    ratio = p.lambda_bar**2 * p.r / p.zeta_lower
    first = 2.0 * (p.beta_bar * p.d + (1.0 + p.beta_bar * p.d) * ratio) * p.c
    second = 2.0 * ratio * sqrt(2.0 * log(2 * p.n)) * p.sigma_bar / sqrt(p.T0)
    return float(first + second)


def check_fit_constants(prob: SynthProblem, w: SynthWeights) -> tuple:
    """Smallest c meeting the covariate and pre-period fit conditions, as (c_covariates, c_outcomes)."""
    pre = prob.panel.pre
    target_y = prob.f @ pre
    T0 = prob.panel.T0
    c_out = max(float(np.linalg.norm(a @ pre - target_y)) / sqrt(T0) for a in (w.u, w.v))
    if prob.d == 0:
        return 0.0, c_out
    X = prob.x.values
    target_x = prob.f @ X
    c_cov = max(float(np.linalg.norm(a @ X - target_x)) / sqrt(prob.d) for a in (w.u, w.v))
    return c_cov, c_out
