"""Closed-form and iterative linear-family regressors (numpy only).

All fitters take X without a bias column and add one internally; the
intercept is never penalized.  Multi-output targets are handled as
independent per-column problems.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from ..errors import DomainError, HierfcstError, IllConditionedError


def _with_bias(X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.hstack([np.ones((X.shape[0], 1)), X])


def _soft_threshold(rho, lam):
    return np.sign(rho) * max(abs(rho) - lam, 0.0)


class RidgePayload:
    """coef has shape (1 + n_features, n_targets), bias first."""

    def __init__(self, coef):
        self.coef = coef

    def predict_raw(self, X):
        return _with_bias(X) @ self.coef


def fit_ridge(X, Y, lam: float) -> RidgePayload:
    """Exact ridge solution of (X'X + lam*D) b = X'Y with unpenalized bias."""
    Xb = _with_bias(X)
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    A = Xb.T @ Xb
    penalty = np.eye(Xb.shape[1]) * lam
    penalty[0, 0] = 0.0
    A = A + penalty
    B = Xb.T @ Y
    try:
        factor = cho_factor(A)
    except np.linalg.LinAlgError:
        raise IllConditionedError(
            "singular normal equations; increase the ridge penalty lam above 0"
        ) from None
    return RidgePayload(cho_solve(factor, B))


class LassoPayload:
    def __init__(self, intercepts, coefs, objective_histories):
        self.intercepts = np.asarray(intercepts)
        self.coefs = np.asarray(coefs)  # (n_features, n_targets)
        self.objective_histories = objective_histories

    def predict_raw(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return X @ self.coefs + self.intercepts


def _lasso_objective(X, y, w, b, lam):
    resid = y - b - X @ w
    return 0.5 * np.mean(resid ** 2) + lam * np.sum(np.abs(w))


def _lasso_single(X, y, lam, max_sweeps, tol):
    n, k = X.shape
    col_sq = np.sum(X ** 2, axis=0) / n
    w = np.zeros(k)
    b = float(np.mean(y))
    resid = y - b - X @ w
    history = [_lasso_objective(X, y, w, b, lam)]
    for _ in range(max_sweeps):
        max_delta = 0.0
        for j in range(k):
            if col_sq[j] == 0.0:
                continue
            old = w[j]
            if old != 0.0:
                resid += old * X[:, j]
            rho = (X[:, j] @ resid) / n
            w[j] = _soft_threshold(rho, lam) / col_sq[j]
            if w[j] != 0.0:
                resid -= w[j] * X[:, j]
            max_delta = max(max_delta, abs(w[j] - old))
        b_old = b
        b = b_old + float(np.mean(resid))
        resid -= b - b_old
        history.append(_lasso_objective(X, y, w, b, lam))
        if max_delta < tol and abs(b - b_old) < tol:
            break
    return w, b, history


def fit_lasso(X, Y, lam: float, max_sweeps: int = 500, tol: float = 1e-8) -> LassoPayload:
    """Coordinate-descent lasso, objective 0.5*mean(r^2) + lam*||w||_1."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    coefs, intercepts, histories = [], [], []
    for c in range(Y.shape[1]):
        w, b, hist = _lasso_single(X, Y[:, c], lam, max_sweeps, tol)
        coefs.append(w)
        intercepts.append(b)
        histories.append(hist)
    return LassoPayload(np.array(intercepts), np.array(coefs).T, histories)


class PoissonPayload:
    def __init__(self, coef, ll_histories):
        self.coef = np.asarray(coef)  # (1 + n_features, n_targets)
        self.ll_histories = ll_histories

    def predict_raw(self, X):
        eta = _with_bias(X) @ self.coef
        return np.exp(eta)


def _poisson_ll(Xb, y, beta):
    eta = np.clip(Xb @ beta, -500, 500)
    return float(y @ eta - np.sum(np.exp(eta)))


def _poisson_single(Xb, y, lam, max_iter, tol):
    """IRLS with step halving; works for fractional y >= 0 (quasi deviance)."""
    k = Xb.shape[1]
    beta = np.zeros(k)
    beta[0] = np.log(np.mean(y) + 1e-8)
    penalty = np.eye(k) * lam
    penalty[0, 0] = 0.0
    ll = _poisson_ll(Xb, y, beta) - 0.5 * lam * beta[1:] @ beta[1:]
    history = [ll]
    for _ in range(max_iter):
        eta = np.clip(Xb @ beta, -500, 500)
        mu = np.exp(eta)
        z = eta + (y - mu) / np.maximum(mu, 1e-12)
        A = Xb.T @ (mu[:, None] * Xb) + penalty
        b = Xb.T @ (mu * z)
        try:
            proposal = np.linalg.solve(A, b)
        except np.linalg.LinAlgError:
            proposal = np.linalg.lstsq(A, b, rcond=None)[0]
        # Step halving keeps the penalized log-likelihood non-decreasing.
        step = 1.0
        direction = proposal - beta
        for _ in range(60):
            candidate = beta + step * direction
            cand_ll = (_poisson_ll(Xb, y, candidate)
                       - 0.5 * lam * candidate[1:] @ candidate[1:])
            if cand_ll >= ll - 1e-12:
                break
            step *= 0.5
        beta = beta + step * direction
        new_ll = _poisson_ll(Xb, y, beta) - 0.5 * lam * beta[1:] @ beta[1:]
        history.append(new_ll)
        if abs(new_ll - ll) < tol * (1 + abs(ll)):
            ll = new_ll
            break
        ll = new_ll
    return beta, history


def fit_poisson(X, Y, lam: float = 0.0, max_iter: int = 200,
                tol: float = 1e-10) -> PoissonPayload:
    """Log-link Poisson regression by iteratively reweighted least squares."""
    Xb = _with_bias(X)
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if np.any(Y < 0):
        raise DomainError("Poisson regression requires non-negative targets")
    coefs, histories = [], []
    for c in range(Y.shape[1]):
        beta, hist = _poisson_single(Xb, Y[:, c], lam, max_iter, tol)
        coefs.append(beta)
        histories.append(hist)
    return PoissonPayload(np.array(coefs).T, histories)


class KernelRidgePayload:
    def __init__(self, X_train, alpha, bandwidth):
        self.X_train = X_train
        self.alpha = alpha          # (n_train, n_targets)
        self.bandwidth = bandwidth

    def predict_raw(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        K = rbf_kernel(X, self.X_train, self.bandwidth)
        return K @ self.alpha


def pairwise_sq_dists(A, B):
    aa = np.sum(A ** 2, axis=1)[:, None]
    bb = np.sum(B ** 2, axis=1)[None, :]
    return np.maximum(aa + bb - 2.0 * A @ B.T, 0.0)


def rbf_kernel(A, B, bandwidth):
    return np.exp(-pairwise_sq_dists(A, B) / (2.0 * bandwidth ** 2))


def median_bandwidth(X) -> float:
    """Median nonzero pairwise distance; 1.0 for degenerate point clouds."""
    d2 = pairwise_sq_dists(X, X)
    dists = np.sqrt(d2[np.triu_indices_from(d2, k=1)])
    dists = dists[dists > 0]
    if dists.size == 0:
        return 1.0
    return float(np.median(dists))


def fit_kernel_ridge(X, Y, lam: float, bandwidth="median") -> KernelRidgePayload:
    """RBF kernel ridge: alpha = (K + lam*I)^-1 Y."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    bw = median_bandwidth(X) if bandwidth == "median" else float(bandwidth)
    if bw <= 0:
        raise HierfcstError(f"kernel bandwidth must be > 0, got {bw}")
    K = rbf_kernel(X, X, bw) + lam * np.eye(X.shape[0])
    try:
        alpha = np.linalg.solve(K, Y)
        # One round of iterative refinement; K is near-singular when lam -> 0.
        alpha += np.linalg.solve(K, Y - K @ alpha)
    except np.linalg.LinAlgError:
        alpha = np.linalg.lstsq(K, Y, rcond=None)[0]
    return KernelRidgePayload(X, alpha, bw)
