"""Point estimators of the average treatment effect.

Difference in means, inverse propensity weighting, the stratum-aggregated
difference in means, OLS with a treatment column, and the synthetic-control
weighted difference.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CovariateMatrix, StrataPartition, as_assignment
from .errors import DegenerateAssignmentError, DesignError, PositivityError, SingularDesignError

SIMPLEX_TOL = 1e-9


def _outcomes(y_obs, n=None) -> np.ndarray:
    y = np.asarray(y_obs, dtype=float)
    if y.ndim != 1 or (n is not None and y.size != n):
        raise DesignError("observed outcomes must be a vector matching the assignment")
    return y


def dm_estimate(y_obs, w) -> float:
    """Mean outcome of treated units minus mean outcome of control units."""
    w = as_assignment(w)
    y = _outcomes(y_obs, w.size)
    n1 = int(w.sum())
    if n1 == 0 or n1 == w.size:
        raise DegenerateAssignmentError(
            "degenerate assignment: difference in means needs at least one treated and one control unit"
        )
    treated = w == 1
    return float(y[treated].mean() - y[~treated].mean())


def ipw_estimate(y_obs, w, propensities) -> float:
    """Horvitz-Thompson style IPW estimate with known propensities."""
    w = as_assignment(w)
    y = _outcomes(y_obs, w.size)
    e = np.asarray(propensities, dtype=float)
    if e.size == 1:
        e = np.full(w.size, float(e.reshape(-1)[0]))
    if e.shape != w.shape:
        raise DesignError("one propensity per unit is required")
    if np.any(e <= 0) or np.any(e >= 1):
        raise PositivityError("positivity violated: every propensity must lie strictly inside (0, 1)")
    n = w.size
    return float(np.sum(y * w / e) / n - np.sum(y * (1 - w) / (1 - e)) / n)


def aggregate_estimate(y_obs, w, partition: StrataPartition) -> float:
    """Stratum-size weighted average of within-stratum differences in means."""
    w = as_assignment(w, partition.n)
    y = _outcomes(y_obs, partition.n)
    total = 0.0
    for l, s in enumerate(partition.strata):
        idx = list(s)
        n1 = int(w[idx].sum())
        if n1 == 0 or n1 == len(idx):
            raise DegenerateAssignmentError(f"degenerate stratum {l}: needs at least one treated and one control unit")
        total += len(idx) / partition.n * dm_estimate(y[idx], w[idx])
    return float(total)


@dataclass(frozen=True)
class Aggregate:
    """Estimator selector for the stratum-aggregated difference in means."""

    partition: StrataPartition


@dataclass(frozen=True)
class OlsFit:
    """Least-squares fit of y on Z = [w | x].

    ``theta_hat[0]`` is the treatment coefficient; ``covariance`` is
    sigma2 (Z'Z)^{-1} for the caller-supplied noise variance.
    """

    theta_hat: np.ndarray
    covariance: np.ndarray
    residuals: np.ndarray
    sigma2: float

    @property
    def tau_hat(self) -> float:
        return float(self.theta_hat[0])

    @property
    def beta_hat(self) -> np.ndarray:
        return self.theta_hat[1:]

    def residual_variance(self) -> float:
        """Residual-based estimate ||r||^2 / (n - d - 1); not the model sigma2."""
        n, p = self.residuals.size, self.theta_hat.size
        if n <= p:
            raise DesignError("residual variance needs n > d + 1")
        return float(self.residuals @ self.residuals / (n - p))


def _xvalues(x) -> np.ndarray:
    if isinstance(x, CovariateMatrix):
        return x.values
    a = np.asarray(x, dtype=float)
    return a[:, None] if a.ndim == 1 else a


def _design_matrix(w, x) -> np.ndarray:
    xv = _xvalues(x)
    w = as_assignment(w, xv.shape[0])
    return np.column_stack([w.astype(float), xv])


def ols_fit(w, x, y_obs, sigma2: float = 1.0) -> OlsFit:
    """Regress observed outcomes on treatment and covariates via a QR factorization."""
    if sigma2 < 0:
        raise DesignError("sigma2 must be non-negative")
    z = _design_matrix(w, x)
    y = _outcomes(y_obs, z.shape[0])
    if np.linalg.matrix_rank(z) < z.shape[1]:
        raise SingularDesignError("singular design matrix: [w | x] does not have full column rank")
    q, r = np.linalg.qr(z)
    theta = np.linalg.solve(r, q.T @ y)
    r_inv = np.linalg.solve(r, np.eye(r.shape[0]))
    cov = sigma2 * (r_inv @ r_inv.T)
    cov = 0.5 * (cov + cov.T)
    return OlsFit(theta, cov, y - z @ theta, float(sigma2))


def var_tau_ols(w, x, sigma2: float = 1.0) -> float:
    """Variance of the OLS treatment coefficient, sigma2 / (w'w - w'x(x'x)^{-1}x'w)."""
    xv = _xvalues(x)
    w = as_assignment(w, xv.shape[0]).astype(float)
    if np.linalg.matrix_rank(xv) < xv.shape[1]:
        raise SingularDesignError("covariate matrix x'x is singular")
    coef, *_ = np.linalg.lstsq(xv, w, rcond=None)
    denom = float(w @ w - w @ (xv @ coef))
    if denom <= 1e-12 * max(1.0, float(w @ w)):
        raise SingularDesignError("treatment collinear with covariates")
    return sigma2 / denom


def _check_simplex(a, name) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if np.any(a < -SIMPLEX_TOL) or abs(a.sum() - 1.0) > SIMPLEX_TOL:
        raise DesignError(f"{name} must lie on the unit simplex")
    return a


def sc_estimate(outcomes_t, u, v) -> float:
    """Synthetic treated unit minus synthetic control unit at one period."""
    y = np.asarray(outcomes_t, dtype=float)
    u = _check_simplex(u, "u")
    v = _check_simplex(v, "v")
    if not (u.shape == v.shape == y.shape):
        raise DesignError("u, v and outcomes must have the same length")
    if np.any((u > SIMPLEX_TOL) & (v > SIMPLEX_TOL)):
        raise DesignError("u and v must have disjoint supports")
    return float(u @ y - v @ y)
