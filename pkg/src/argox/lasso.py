"""L1-penalized least squares via cyclic coordinate descent.

Minimizes (1/(2n))·sum((y - b0 - X·b)^2) + lam·||b||_1 with an unpenalized
intercept. Features are standardized to zero mean and unit variance
internally (population scaling) and coefficients are mapped back, so a
single lam is meaningful across heterogeneous search terms; lam therefore
lives on the standardized-feature, 1/(2n)-objective scale.

The hot loops (single fits, warm-started lambda paths, blocked
cross-validation) are numba-compiled; every fit is deterministic.
"""

from __future__ import annotations

import warnings

import numpy as np
from numba import njit
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

DEFAULT_TOL = 1e-7
DEFAULT_MAX_SWEEPS = 10_000
PATH_SIZE = 50
PATH_RATIO = 1e-3
# Cross-validation ranks penalties, so its inner solves run at a looser
# tolerance: with p > n the saturated small-lambda fits are non-unique and
# crawl toward 1e-7, while their out-of-fold error is stable at 1e-5.
CV_TOL = 1e-5
CV_MAX_SWEEPS = 2_000


def soft_threshold(z: float, gamma: float) -> float:
    """sign(z) * max(|z| - gamma, 0); gamma must be nonnegative."""
    if gamma < 0:
        raise ValueError("soft threshold requires gamma >= 0")
    if z > gamma:
        return z - gamma
    if z < -gamma:
        return z + gamma
    return 0.0


@njit(cache=True)
def _one_sweep(G, beta, grad, lam, active_only):
    # One cyclic pass; grad[j] tracks c_j - sum_k G[j,k]*beta[k].
    p = G.shape[0]
    max_change = 0.0
    for j in range(p):
        if active_only and beta[j] == 0.0:
            continue
        gjj = G[j, j]
        if gjj <= 0.0:
            continue
        z = grad[j] + gjj * beta[j]
        if z > lam:
            bn = (z - lam) / gjj
        elif z < -lam:
            bn = (z + lam) / gjj
        else:
            bn = 0.0
        d = bn - beta[j]
        if d != 0.0:
            beta[j] = bn
            for k in range(p):
                grad[k] -= G[k, j] * d
            ad = abs(d)
            if ad > max_change:
                max_change = ad
    return max_change


@njit(cache=True)
def _run_cd(G, beta, grad, lam, tol, max_sweeps):
    # Converged means a FULL pass moved no coefficient by tol or more;
    # cheap active-set passes in between just accelerate the path.
    sweeps = 0
    converged = False
    while sweeps < max_sweeps:
        sweeps += 1
        if _one_sweep(G, beta, grad, lam, False) < tol:
            converged = True
            break
        while sweeps < max_sweeps:
            sweeps += 1
            if _one_sweep(G, beta, grad, lam, True) < tol:
                break
    return sweeps, converged


@njit(cache=True)
def _cd_path(G, c, lambdas, tol, max_sweeps):
    # Warm-started descent down a decreasing lambda path.
    p = G.shape[0]
    nlam = lambdas.shape[0]
    betas = np.zeros((nlam, p))
    sweeps = np.zeros(nlam, np.int64)
    converged = np.zeros(nlam, np.bool_)
    beta = np.zeros(p)
    grad = c.copy()
    for li in range(nlam):
        it, ok = _run_cd(G, beta, grad, lambdas[li], tol, max_sweeps)
        sweeps[li] = it
        converged[li] = ok
        betas[li] = beta
    return betas, sweeps, converged


@njit(cache=True)
def _objective(G, c, beta, yty_over_n, lam):
    p = G.shape[0]
    quad = 0.0
    lin = 0.0
    l1 = 0.0
    for j in range(p):
        lin += c[j] * beta[j]
        l1 += abs(beta[j])
        acc = 0.0
        for k in range(p):
            acc += G[j, k] * beta[k]
        quad += beta[j] * acc
    return 0.5 * quad - lin + 0.5 * yty_over_n + lam * l1


@njit(cache=True)
def _cd_recorded(G, c, yty_over_n, lam, tol, max_sweeps):
    # Mirrors _run_cd pass for pass, logging the penalized objective after
    # every pass (full or active) so descent can be asserted sweep by sweep.
    p = G.shape[0]
    beta = np.zeros(p)
    grad = c.copy()
    objs = np.empty(max_sweeps)
    sweeps = 0
    converged = False
    while sweeps < max_sweeps:
        change = _one_sweep(G, beta, grad, lam, False)
        objs[sweeps] = _objective(G, c, beta, yty_over_n, lam)
        sweeps += 1
        if change < tol:
            converged = True
            break
        while sweeps < max_sweeps:
            change = _one_sweep(G, beta, grad, lam, True)
            objs[sweeps] = _objective(G, c, beta, yty_over_n, lam)
            sweeps += 1
            if change < tol:
                break
    return beta, sweeps, converged, objs[:sweeps]


@njit(cache=True)
def _cv_sse(X, y, starts, ends, lambdas, tol, max_sweeps):
    # Out-of-fold squared error per lambda; folds are contiguous row blocks,
    # each fold standardized from its own training rows.
    n, p = X.shape
    nlam = lambdas.shape[0]
    sse = np.zeros(nlam)
    for f in range(starts.shape[0]):
        lo, hi = starts[f], ends[f]
        ntr = n - (hi - lo)
        mean = np.zeros(p)
        ybar = 0.0
        for i in range(n):
            if lo <= i < hi:
                continue
            ybar += y[i]
            for j in range(p):
                mean[j] += X[i, j]
        ybar /= ntr
        for j in range(p):
            mean[j] /= ntr
        scale = np.zeros(p)
        for i in range(n):
            if lo <= i < hi:
                continue
            for j in range(p):
                d = X[i, j] - mean[j]
                scale[j] += d * d
        for j in range(p):
            scale[j] = np.sqrt(scale[j] / ntr)
        Xs = np.zeros((ntr, p))
        yc = np.empty(ntr)
        r = 0
        for i in range(n):
            if lo <= i < hi:
                continue
            yc[r] = y[i] - ybar
            for j in range(p):
                if scale[j] > 0.0:
                    Xs[r, j] = (X[i, j] - mean[j]) / scale[j]
            r += 1
        G = Xs.T @ Xs / ntr
        c = Xs.T @ yc / ntr
        for j in range(p):
            if scale[j] == 0.0:
                G[j, j] = 1.0  # keeps the dropped coordinate inert
        beta = np.zeros(p)
        grad = c.copy()
        for li in range(nlam):
            _run_cd(G, beta, grad, lambdas[li], tol, max_sweeps)
            for i in range(lo, hi):
                pred = ybar
                for j in range(p):
                    if beta[j] != 0.0 and scale[j] > 0.0:
                        pred += beta[j] * (X[i, j] - mean[j]) / scale[j]
                d = y[i] - pred
                sse[li] += d * d
    return sse


def _standardized(X, y, standardize):
    n = X.shape[0]
    mean = X.mean(axis=0)
    if standardize:
        scale = X.std(axis=0)
    else:
        scale = np.ones(X.shape[1])
        scale[X.std(axis=0) == 0.0] = 0.0  # still drop constants
    kept = scale > 0.0
    Xs = (X[:, kept] - mean[kept]) / scale[kept]
    ybar = float(y.mean())
    yc = y - ybar
    G = Xs.T @ Xs / n
    c = Xs.T @ yc / n
    return Xs, yc, G, c, mean, scale, kept, ybar


def lambda_max(X, y, standardize: bool = True) -> float:
    """Smallest penalty that zeroes every coefficient (standardized scale)."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _, _, _, c, *_ = _standardized(X, y, standardize)
    return float(np.max(np.abs(c))) if c.size else 0.0


def lambda_path(X, y, num: int = PATH_SIZE, ratio: float = PATH_RATIO,
                standardize: bool = True) -> np.ndarray:
    """Decreasing log-spaced penalty grid from lambda_max down to ratio*lambda_max."""
    lmax = lambda_max(X, y, standardize)
    if lmax <= 0.0:
        return np.zeros(1)
    return np.geomspace(lmax, ratio * lmax, num)


def select_lambda(X, y, folds: int = 10, num: int = PATH_SIZE, ratio: float = PATH_RATIO,
                  tol: float = CV_TOL, max_sweeps: int = CV_MAX_SWEEPS) -> float:
    """Pick the penalty minimizing mean out-of-fold squared error.

    Folds are contiguous, time-ordered blocks (no shuffling, respecting
    serial dependence); ties break toward the larger penalty.
    """
    X, y = check_X_y(X, y, dtype=np.float64)
    n = X.shape[0]
    if not 2 <= folds <= n:
        raise ValueError(f"need 2 <= folds <= {n} rows, got {folds}")
    path = lambda_path(X, y, num, ratio)
    if path.size == 1:
        return float(path[0])
    bounds = np.linspace(0, n, folds + 1).astype(np.int64)
    sse = _cv_sse(X, y, bounds[:-1], bounds[1:], path, tol, max_sweeps)
    return float(path[int(np.argmin(sse))])  # first minimum = largest lambda


class LassoRegression(RegressorMixin, BaseEstimator):
    """Coordinate-descent lasso with unpenalized intercept.

    Parameters
    ----------
    lam : float
        L1 penalty on the standardized-feature, 1/(2n)-objective scale.
    standardize : bool
        Scale features to unit variance internally (coefficients are always
        reported on the original scale).
    tol : float
        Convergence threshold on the largest per-sweep coefficient change.
    max_sweeps : int
        Hard cap on full coordinate sweeps.
    record_objective : bool
        Track the penalized objective after every sweep (slower; used to
        assert the per-sweep descent property).

    Attributes
    ----------
    intercept_, coef_ : original-scale fit
    n_sweeps_, converged_ : solver diagnostics
    objective_sweeps_ : per-sweep objective values when recording
    """

    def __init__(self, lam: float = 1.0, standardize: bool = True,
                 tol: float = DEFAULT_TOL, max_sweeps: int = DEFAULT_MAX_SWEEPS,
                 record_objective: bool = False):
        self.lam = lam
        self.standardize = standardize
        self.tol = tol
        self.max_sweeps = max_sweeps
        self.record_objective = record_objective

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        if self.lam < 0:
            raise ValueError("penalty must be nonnegative")
        if X.shape[0] < 2:
            raise ValueError("need at least 2 training rows")
        _, yc, G, c, mean, scale, kept, ybar = _standardized(X, y, self.standardize)
        self.n_features_in_ = X.shape[1]
        self.feature_means_ = mean
        self.feature_scales_ = scale
        self.kept_ = kept
        if not kept.any():
            # Every feature constant: intercept-only model.
            self.coef_ = np.zeros(X.shape[1])
            self.intercept_ = ybar
            self.n_sweeps_ = 0
            self.converged_ = True
            if self.record_objective:
                self.objective_sweeps_ = np.empty(0)
            return self
        if self.record_objective:
            yty_over_n = float(yc @ yc) / X.shape[0]
            beta, sweeps, ok, objs = _cd_recorded(
                G, c, yty_over_n, float(self.lam), self.tol, self.max_sweeps
            )
            self.objective_sweeps_ = objs
        else:
            betas, all_sweeps, conv = _cd_path(
                G, c, np.array([float(self.lam)]), self.tol, self.max_sweeps
            )
            beta, sweeps, ok = betas[0], int(all_sweeps[0]), bool(conv[0])
        if not ok:
            warnings.warn(
                f"coordinate descent did not converge in {sweeps} sweeps "
                f"(tol={self.tol})", RuntimeWarning,
            )
        coef = np.zeros(X.shape[1])
        coef[kept] = beta / scale[kept]
        self.coef_ = coef
        self.intercept_ = ybar - float(coef @ mean)
        self.n_sweeps_ = int(sweeps)
        self.converged_ = bool(ok)
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64, ensure_2d=True)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, fit used {self.n_features_in_}"
            )
        return self.intercept_ + X @ self.coef_


def kkt_residual(est: LassoRegression, X, y) -> float:
    """Largest stationarity violation at the fitted point (standardized scale)."""
    check_is_fitted(est, "coef_")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _, _, G, c, mean, scale, kept, _ = _standardized(X, y, est.standardize)
    beta = est.coef_[kept] * scale[kept]
    grad = G @ beta - c
    lam = est.lam
    viol = np.where(
        beta == 0.0,
        np.maximum(np.abs(grad) - lam, 0.0),
        np.abs(grad + lam * np.sign(beta)),
    )
    return float(viol.max()) if viol.size else 0.0
