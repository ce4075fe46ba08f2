"""Seeded Monte Carlo: outcome generators, a replication engine and the
adaptive-sampling examples.

Replication i (or chunk i for the vectorized studies) always draws from
sub-stream (seed, i), and results are merged in index order, so every
report is bit-identical whatever the number of worker threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

import numpy as np

from .core import CovariateMatrix, PanelData, ScienceTable, make_rng, marginal_propensities, sample_ate
from .designs import sample_assignment
from .errors import DegenerateAssignmentError, DesignError, PositivityError, SingularDesignError
from .estimators import Aggregate, aggregate_estimate, dm_estimate, ipw_estimate, ols_fit
from .robust import AdditiveModelSpec
from .synth import SynthProblem, Theorem4Params, check_fit_constants, solve_synth_design, theorem4_bound

NOISE_KINDS = ("gaussian", "rademacher")
CHUNK = 1000


def _noise(rng: np.random.Generator, kind: str, scale: float, size) -> np.ndarray:
    if kind == "gaussian":
        return scale * rng.standard_normal(size)
    if kind == "rademacher":
        return scale * (2.0 * rng.integers(0, 2, size=size) - 1.0)
    raise DesignError(f"unknown noise kind {kind!r}; use one of {NOISE_KINDS}")


def _check_noise(kind: str, scale: float) -> None:
    if kind not in NOISE_KINDS:
        raise DesignError(f"unknown noise kind {kind!r}; use one of {NOISE_KINDS}")
    if not scale >= 0:
        raise DesignError("noise scale must be non-negative")


@dataclass(frozen=True)
class Additive:
    """y_j(w) = alpha_w + g_j + eps_jw, independent noise with variance model.sigma2."""

    model: AdditiveModelSpec
    noise: str = "gaussian"

    def __post_init__(self):
        _check_noise(self.noise, self.model.sigma2)


@dataclass(frozen=True)
class Linear:
    """y_j(0) = x_j'beta + eps_j and y_j(1) = y_j(0) + tau (shared noise)."""

    tau: float
    beta: np.ndarray
    x: CovariateMatrix
    sigma: float = 0.0
    noise: str = "gaussian"

    def __post_init__(self):
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        if beta.shape != (self.x.d,):
            raise DesignError(f"beta has {beta.size} entries, x has {self.x.d} columns")
        _check_noise(self.noise, self.sigma)
        object.__setattr__(self, "beta", beta)


@dataclass(frozen=True)
class FactorPanel:
    """Y_jt(w) = alpha_t(w) + beta_t(w)'X_j + lambda_t(w)'mu_j + eps_jt(w).

    ``alpha`` is (2, T), ``beta`` is (2, T, d) and ``lam`` is (2, T, r); index 0
    is control, 1 is treatment. ``mu`` is (n, r).
    """

    alpha: np.ndarray
    beta: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    x: CovariateMatrix
    sigma: float = 0.0
    noise: str = "gaussian"

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        beta = np.asarray(self.beta, dtype=float)
        lam = np.asarray(self.lam, dtype=float)
        mu = np.asarray(self.mu, dtype=float)
        if alpha.ndim != 2 or alpha.shape[0] != 2:
            raise DesignError("alpha must have shape (2, T)")
        T = alpha.shape[1]
        if beta.shape != (2, T, self.x.d):
            raise DesignError(f"beta must have shape (2, {T}, {self.x.d})")
        if mu.ndim != 2 or mu.shape[0] != self.x.n:
            raise DesignError("mu must have one row per unit")
        if lam.shape != (2, T, mu.shape[1]):
            raise DesignError(f"lam must have shape (2, {T}, {mu.shape[1]})")
        _check_noise(self.noise, self.sigma)
        for name, a in (("alpha", alpha), ("beta", beta), ("lam", lam), ("mu", mu)):
            object.__setattr__(self, name, a)

    @property
    def n(self) -> int:
        return self.mu.shape[0]

    @property
    def T(self) -> int:
        return self.alpha.shape[1]

    @property
    def r(self) -> int:
        return self.mu.shape[1]


DgpSpec = Union[Additive, Linear, FactorPanel]


def draw_science_table(dgp, rng: np.random.Generator):
    """One draw of the potential outcomes; FactorPanel returns (Y(1), Y(0)) as n x T arrays."""
    if isinstance(dgp, Additive):
        m = dgp.model
        sd = np.sqrt(m.sigma2)
        e1 = _noise(rng, dgp.noise, sd, m.n)
        e0 = _noise(rng, dgp.noise, sd, m.n)
        return ScienceTable(m.alpha1 + m.g + e1, m.alpha0 + m.g + e0)
    if isinstance(dgp, Linear):
        y0 = dgp.x.values @ dgp.beta + _noise(rng, dgp.noise, dgp.sigma, dgp.x.n)
        return ScienceTable(y0 + dgp.tau, y0)
    if isinstance(dgp, FactorPanel):
        X = dgp.x.values
        out = []
        for w in (1, 0):
            mean = dgp.alpha[w][None, :] + X @ dgp.beta[w].T + dgp.mu @ dgp.lam[w].T
            out.append(mean + _noise(rng, dgp.noise, dgp.sigma, mean.shape))
        return out[0], out[1]
    raise DesignError(f"not a data-generating process: {dgp!r}")


def population_ate(dgp) -> float:
    if isinstance(dgp, Additive):
        return dgp.model.tau
    if isinstance(dgp, Linear):
        return float(dgp.tau)
    raise DesignError("population estimand is defined for Additive and Linear models")


@dataclass(frozen=True)
class McReport:
    replications: int
    excluded: int
    mean: float
    bias: float
    variance: float
    mse: float
    mc_standard_error: float
    mse_standard_error: float
    seed: int

    def __post_init__(self):
        if abs(self.mse - (self.variance + self.bias**2)) > 1e-9 * max(1.0, self.mse):
            raise DesignError("inconsistent report: mse != variance + bias^2")


def summarize(estimates, targets, seed: int, excluded: int = 0) -> McReport:
    est = np.asarray(estimates, dtype=float)
    err = est - np.asarray(targets, dtype=float)
    m = err.size
    if m < 2:
        raise DesignError(f"only {m} usable replications; need at least 2")
    bias = float(err.mean())
    variance = float(np.mean((err - bias) ** 2))
    sq = err**2
    mse = float(sq.mean())
    return McReport(
        replications=m,
        excluded=int(excluded),
        mean=float(est.mean()),
        bias=bias,
        variance=variance,
        mse=mse,
        mc_standard_error=float(err.std(ddof=1) / np.sqrt(m)),
        mse_standard_error=float(sq.std(ddof=1) / np.sqrt(m)),
        seed=int(seed),
    )


def _estimate(estimator, t: ScienceTable, w: np.ndarray, design, dgp) -> float:
    y = t.observed(w)
    if estimator == "dm":
        return dm_estimate(y, w)
    if estimator == "ipw":
        return ipw_estimate(y, w, marginal_propensities(design))
    if isinstance(estimator, Aggregate):
        return aggregate_estimate(y, w, estimator.partition)
    if estimator == "ols":
        if not isinstance(dgp, Linear):
            raise DesignError("the OLS estimator needs a Linear model with covariates")
        return ols_fit(w, dgp.x, y).tau_hat
    raise DesignError(f"unknown estimator {estimator!r}; use 'dm', 'ipw', 'ols' or Aggregate(partition)")


def _map_ordered(fn, n_items: int, workers: int) -> list:
    """fn(i) for i in range(n_items), computed on ``workers`` threads, returned in index order."""
    if workers <= 1:
        return [fn(i) for i in range(n_items)]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, range(n_items)))


def run_replications(dgp, design, estimator="dm", estimand="sample", reps: int = 1000, seed: int = 0, workers: int = 1) -> McReport:
    """Monte Carlo bias, variance and MSE of an estimator under a design.

    ``estimand`` is 'sample' (the drawn table's average effect), 'population'
    (the model's tau) or a number. Replications where the estimator is
    undefined (an empty arm) are excluded and counted.
    """
    if reps < 2:
        raise DesignError("need at least 2 replications")
    if isinstance(dgp, FactorPanel):
        raise DesignError("panel models are simulated by synth_bias_study")
    if estimand not in ("sample", "population") and not isinstance(estimand, (int, float)):
        raise DesignError("estimand must be 'sample', 'population' or a number")
    fixed = population_ate(dgp) if estimand == "population" else estimand

    def one(i):
        rng = make_rng(seed, i)
        t = draw_science_table(dgp, rng)
        w = sample_assignment(design, rng)
        try:
            est = _estimate(estimator, t, w, design, dgp)
        except (DegenerateAssignmentError, SingularDesignError):
            return None
        target = sample_ate(t) if estimand == "sample" else float(fixed)
        return est, target

    out = _map_ordered(one, reps, workers)
    kept = [r for r in out if r is not None]
    if len(kept) < 2:
        raise DesignError(f"{reps - len(kept)} of {reps} replications were degenerate; too few remain")
    est, tgt = zip(*kept)
    return summarize(est, tgt, seed, excluded=reps - len(kept))


# ------------------------------------------------------------ stopping rule


@dataclass(frozen=True)
class StoppingResult:
    stop_fraction: float
    conditional_mean: float
    conditional_mean_exact: Fraction | None
    stopped: int
    replications: int
    min_stopped_value: Fraction | None


def stopping_rule_simulation(threshold, horizon: int, reps: int, seed: int = 0, workers: int = 1) -> StoppingResult:
    """Stop each Bernoulli(1/2) path at the first j with running mean >= threshold.

    A Fraction threshold is compared exactly in integers. The conditional
    mean over stopped paths is returned both as a float and exactly; it is
    NaN / None when no path stops.
    """
    if not threshold > 0:
        raise DesignError("threshold must be positive")
    if horizon < 1 or reps < 1:
        raise DesignError("horizon and reps must be at least 1")
    exact = isinstance(threshold, Fraction)
    j = np.arange(1, horizon + 1, dtype=np.int64)

    def chunk(c):
        size = min(CHUNK, reps - c * CHUNK)
        rng = make_rng(seed, c)
        draws = rng.integers(0, 2, size=(size, horizon), dtype=np.int8)
        S = np.cumsum(draws, axis=1, dtype=np.int64)
        if exact:
            hit = S * threshold.denominator >= threshold.numerator * j
        else:
            hit = S / j >= threshold
        any_hit = hit.any(axis=1)
        tau = hit.argmax(axis=1)
        rows = np.flatnonzero(any_hit)
        return [(int(S[r, tau[r]]), int(tau[r]) + 1) for r in rows]

    n_chunks = -(-reps // CHUNK)
    stops = [s for part in _map_ordered(chunk, n_chunks, workers) for s in part]
    if not stops:
        return StoppingResult(0.0, float("nan"), None, 0, reps, None)
    values = [Fraction(s, t) for s, t in stops]
    mean_exact = sum(values, Fraction(0)) / len(values)
    return StoppingResult(len(stops) / reps, float(mean_exact), mean_exact, len(stops), reps, min(values))


# ------------------------------------------------- two-stage adaptive example


def adaptive_two_stage_mc(q: float = 0.5, reps: int = 100_000, seed: int = 0, estimator: str = "sample_mean",
                          explore: float = 0.0, workers: int = 1) -> McReport:
    """Simulate the three-unit, two-stage adaptive experiment; target is E[Y(1)] = q.

    Stage one treats one of units 1, 2 at random. Unit 3 goes to the arm
    whose stage-one outcome was higher (fair coin on ties), except that with
    probability ``explore`` it gets a fair coin instead.
    """
    if estimator not in ("sample_mean", "ipw"):
        raise DesignError("estimator must be 'sample_mean' or 'ipw'")
    if estimator == "ipw" and explore <= 0:
        raise PositivityError("IPW needs explore > 0: the greedy rule gives unit 3 a propensity of 0 or 1")

    def chunk(c):
        size = min(CHUNK, reps - c * CHUNK)
        rng = make_rng(seed, c)
        first = rng.integers(0, 2, size=size)  # 0: unit 1 treated first
        y1 = (rng.random((size, 3)) < q).astype(float)  # Y_j(1)
        y0 = (rng.random((size, 3)) < q).astype(float)  # Y_j(0)
        a = np.where(first == 0, y1[:, 0], y1[:, 1])  # treated stage-one outcome
        c0 = np.where(first == 0, y0[:, 1], y0[:, 0])  # control stage-one outcome
        greedy = np.where(a > c0, 1.0, np.where(a < c0, 0.0, 0.5))
        p3 = (1.0 - explore) * greedy + explore * 0.5
        w3 = rng.random(size) < p3
        y3 = np.where(w3, y1[:, 2], y0[:, 2])
        if estimator == "sample_mean":
            est = np.where(w3, (a + y3) / 2.0, a)
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                est = (a / 0.5 + np.where(w3, y3 / p3, 0.0)) / 3.0
        return est

    n_chunks = -(-reps // CHUNK)
    est = np.concatenate(_map_ordered(chunk, n_chunks, workers))
    return summarize(est, np.full(est.size, q), seed)


# ------------------------------------------------ synthetic control bias study


def factor_fixture(n: int = 20, T0: int = 50, T_post: int = 3, sigma: float = 1.0, noise: str = "gaussian",
                   seed: int = 0) -> FactorPanel:
    """Factor model with r = 2, d = 1 and lambda_t = (1, (-1)^t) for both arms.

    For even T0 the pre-period loading Gram matrix is T0 * I, so the scaled
    smallest eigenvalue is exactly 1. Coefficients are bounded by 1, the
    treatment shifts alpha by 1, and mu, X are fixed uniform(-1, 1) draws.
    """
    if T0 % 2:
        raise DesignError("factor_fixture needs an even T0")
    T = T0 + T_post
    rng = make_rng(seed)
    t = np.arange(1, T + 1)
    lam_t = np.column_stack([np.ones(T), (-1.0) ** t])
    alpha = np.vstack([np.zeros(T), np.where(t > T0, 1.0, 0.0)])
    beta = np.ones((2, T, 1))
    mu = rng.uniform(-1, 1, size=(n, 2))
    x = CovariateMatrix(rng.uniform(-1, 1, size=(n, 1)))
    return FactorPanel(alpha, beta, np.stack([lam_t, lam_t]), mu, x, sigma, noise)


def loading_constants(dgp: FactorPanel, T0: int) -> dict:
    """beta_bar, lambda_bar and the scaled smallest eigenvalue of lambda(0)'lambda(0) over the pre-period."""
    L = dgp.lam[0, :T0]
    zeta = float(np.linalg.eigvalsh(L.T @ L)[0])
    return {
        "beta_bar": float(np.abs(dgp.beta).max()),
        "lambda_bar": float(np.abs(dgp.lam).max()),
        "zeta_lower": zeta / T0,
    }


@dataclass(frozen=True)
class SynthBiasStudy:
    bias: np.ndarray
    standard_error: np.ndarray
    c: float
    bound: float
    bound_noise_term: float
    replications: int
    seed: int


def synth_bias_study(dgp: FactorPanel, T0: int, k: int = 1, f=None, reps: int = 10_000, seed: int = 0,
                     workers: int = 1) -> SynthBiasStudy:
    """Ex-post bias of the synthetic control estimator in every experimental period.

    Each replication draws both potential-outcome panels, solves the design
    on the observed pre-period (all units untreated), then compares the
    estimate with tau_t = sum_j f_j (Y_jt(1) - Y_jt(0)). The fit constant c
    is the largest value seen over replications.
    """
    n = dgp.n
    f = np.full(n, 1.0 / n) if f is None else np.asarray(f, dtype=float)

    def one(i):
        rng = make_rng(seed, i)
        Y1, Y0 = draw_science_table(dgp, rng)
        prob = SynthProblem(PanelData(Y0, T0), dgp.x, f, k)
        w = solve_synth_design(prob, "exhaustive")
        post1, post0 = Y1[:, T0:], Y0[:, T0:]
        est = w.u @ post1 - w.v @ post0
        tau = f @ (post1 - post0)
        return est - tau, max(check_fit_constants(prob, w))

    out = _map_ordered(one, reps, workers)
    err = np.array([o[0] for o in out])
    c = float(max(o[1] for o in out))
    consts = loading_constants(dgp, T0)
    params = Theorem4Params(consts["beta_bar"], consts["lambda_bar"], dgp.r, dgp.x.d, consts["zeta_lower"], c,
                            dgp.sigma, T0, n)
    noise_only = Theorem4Params(**{**params.__dict__, "c": 0.0})
    return SynthBiasStudy(
        bias=err.mean(axis=0),
        standard_error=err.std(axis=0, ddof=1) / np.sqrt(reps),
        c=c,
        bound=theorem4_bound(params),
        bound_noise_term=theorem4_bound(noise_only),
        replications=reps,
        seed=seed,
    )
