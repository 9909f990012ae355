"""Least-squares autoregression with optional exogenous regressors.

This is the declared surrogate for the ARIMAX/ARIMA baselines: AR(p) plus
exogenous terms fitted by ordinary least squares, no differencing and no
moving-average component.  Multi-step forecasts roll the recursion forward
on their own predictions.
"""

from __future__ import annotations

import numpy as np

from ..errors import HierfcstError


class ArxPayload:
    """intercept + phi (AR coefficients, lag 1 first) + beta (exog)."""

    def __init__(self, intercept, phi, beta):
        self.intercept = float(intercept)
        self.phi = np.asarray(phi, dtype=float)
        self.beta = np.asarray(beta, dtype=float)

    @property
    def p(self):
        return self.phi.shape[0]

    def predict_raw(self, X):
        """Rows are [y_{t-1}, ..., y_{t-p}, exog_t...]."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        coef = np.concatenate([self.phi, self.beta])
        return (self.intercept + X @ coef)[:, None]

    def one_step(self, history, exog_row=None):
        history = np.asarray(history, dtype=float)
        if history.shape[0] < self.p:
            raise HierfcstError(f"need at least {self.p} history values")
        lags = history[::-1][:self.p]
        value = self.intercept + self.phi @ lags
        if self.beta.size:
            if exog_row is None:
                raise HierfcstError("model was fitted with exogenous inputs")
            value += self.beta @ np.asarray(exog_row, dtype=float)
        return float(value)

    def forecast(self, history, steps, exog_future=None):
        """Multi-step forecast feeding predictions back in as history."""
        if self.beta.size and (exog_future is None or len(exog_future) < steps):
            raise HierfcstError("exog_future must cover every forecast step")
        buf = list(np.asarray(history, dtype=float))
        out = []
        for s in range(steps):
            row = None if not self.beta.size else exog_future[s]
            value = self.one_step(np.asarray(buf), row)
            out.append(value)
            buf.append(value)
        return np.array(out)


def lag_matrix(series, p, exog=None):
    """Design rows [y_{t-1}..y_{t-p}, exog_t] and targets y_t for t >= p."""
    series = np.asarray(series, dtype=float)
    T = series.shape[0]
    rows = []
    for t in range(p, T):
        row = [series[t - i] for i in range(1, p + 1)]
        if exog is not None:
            row.extend(np.asarray(exog[t], dtype=float))
        rows.append(row)
    return np.array(rows), series[p:]


def fit_arx_payload(series, exog=None, p: int = 1) -> ArxPayload:
    series = np.asarray(series, dtype=float)
    k = 0 if exog is None else np.atleast_2d(exog).shape[1]
    if exog is not None and len(exog) != len(series):
        raise HierfcstError("exog must have one row per series value")
    if series.shape[0] <= p + k + 1:
        raise HierfcstError(
            f"series of length {series.shape[0]} too short for p={p} "
            f"with {k} exogenous columns")
    X, y = lag_matrix(series, p, exog)
    Xb = np.hstack([np.ones((X.shape[0], 1)), X])
    coef, *_ = np.linalg.lstsq(Xb, y, rcond=None)
    return ArxPayload(coef[0], coef[1:1 + p], coef[1 + p:])
