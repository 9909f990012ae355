"""SMAPE scoring, the fixed train/test backtest, and the model leaderboard.

Forecasts are always scored in original quantity units on the gross demand
series q^0.  Evaluation is walk-forward: a model is fitted once on the
training periods and each test period is predicted from information
available strictly before it (actuals are revealed as time advances).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import trmf as trmf_mod
from .dataset import DEFAULT_MAX_LEAD, PreorderTensor
from .errors import HierfcstError
from .features import extract_features
from .models import ModelSpec, fit, fit_arx
from .preprocess import TargetTransform, build_training_set, feature_frame, window_index

# Lag count for the small-feature (non-diagonal) regression baseline.
NODF_LAGS = 3


def smape(forecast, actual) -> float:
    """Symmetric mean absolute percentage error in [0, 200].

    (200/n) * sum |F_t - A_t| / (|A_t| + |F_t|), with a 0/0 term counting
    as 0: a zero forecast of a zero actual is a correct prediction.
    """
    F = np.asarray(forecast, dtype=float).ravel()
    A = np.asarray(actual, dtype=float).ravel()
    if F.shape[0] != A.shape[0]:
        raise HierfcstError(f"length mismatch: {F.shape[0]} vs {A.shape[0]}")
    if F.shape[0] == 0:
        raise HierfcstError("smape needs at least one point")
    if not (np.all(np.isfinite(F)) and np.all(np.isfinite(A))):
        raise HierfcstError("smape requires finite inputs")
    den = np.abs(A) + np.abs(F)
    num = np.abs(F - A)
    terms = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    return float(200.0 * np.mean(terms))


@dataclass(frozen=True)
class BacktestSplit:
    """Contiguous train periods [0, train) followed by test periods."""

    train_periods: int = 37
    test_periods: int = 8

    def __post_init__(self):
        if self.train_periods < 2 or self.test_periods < 1:
            raise HierfcstError("need at least 2 train and 1 test periods")

    @property
    def train_range(self):
        return range(self.train_periods)

    @property
    def test_range(self):
        return range(self.train_periods, self.train_periods + self.test_periods)

    def validate(self, n_periods: int):
        if self.train_periods + self.test_periods > n_periods:
            raise HierfcstError(
                f"split needs {self.train_periods + self.test_periods} periods, "
                f"tensor has {n_periods}")


# ---------------------------------------------------------------------------
# Per-family walk-forward forecasting
# ---------------------------------------------------------------------------

def _df_anchor_for(test_period: int, T: int, W: int) -> int:
    """Latest anchor with computable inputs that still covers the period.

    One step ahead (anchor = period - 1) whenever the input cells fit in
    the tensor; the last periods fall back to deeper diagonal positions of
    the final feasible anchor.
    """
    return min(test_period - 1, T - W + 1)


def _fit_item_transforms(tensor, kind, split):
    tfs = {}
    for i in range(tensor.n_items):
        tfs[i] = TargetTransform.fit(kind, tensor.values[i, list(split.train_range)])
    return tfs


def _df_forecasts(tensor, spec, split, W, H):
    """DF-mode forecasts of q^0 over the test periods for every item.

    Returns (forecasts (n_items, n_test), diagonal_smape per item).
    """
    T = tensor.n_periods
    tfs = _fit_item_transforms(tensor, spec.transform, split)
    train_anchors = range(split.train_periods - W + 1)
    y_index = window_index(W, H)[1]

    fitted = {}
    if spec.feeding == "df_all_items":
        sset = build_training_set(tensor, "all", W, H, anchors=train_anchors,
                                  transforms=tfs)
        shared = fit(spec, sset.X, sset.Y)
        for i in range(tensor.n_items):
            fitted[i] = shared
    else:
        for i in range(tensor.n_items):
            sset = build_training_set(tensor, i, W, H, anchors=train_anchors,
                                      transforms=tfs)
            fitted[i] = fit(spec, sset.X, sset.Y)

    n_test = split.test_periods
    out = np.zeros((tensor.n_items, n_test))
    diag_smape = np.zeros(tensor.n_items)
    for i in range(tensor.n_items):
        tf = tfs[i]
        model = fitted[i]
        for c, tau in enumerate(split.test_range):
            a = _df_anchor_for(tau, T, W)
            x = tf.forward(feature_frame(tensor, i, a, W, H))
            y_hat = model.predict_transformed(x[None, :])[0]
            y_hat = np.maximum(tf.inverse(y_hat), 0.0)
            pos = y_index.index((tau - a, 0))
            out[i, c] = y_hat[pos]
        # Multi-horizon diagonal targets: the frame anchored on the last
        # training period has inputs known by the end of training and its
        # whole y block inside the test zone.
        a = split.train_periods - 1
        if a + W - 1 < T:
            x = tf.forward(feature_frame(tensor, i, a, W, H))
            y_hat = np.maximum(tf.inverse(model.predict_transformed(x[None, :])[0]), 0.0)
            actual = np.array([tensor.values[i, a + s, h] for (s, h) in y_index])
            diag_smape[i] = smape(y_hat, actual)
    return out, diag_smape


def _nodf_feature_row(series_tf, series_raw, tau):
    lags = [series_tf[tau - l] for l in range(1, NODF_LAGS + 1)]
    stats = extract_features(series_raw[:tau])
    return np.concatenate([lags, stats])


def _nodf_forecasts(tensor, spec, split):
    """Small-feature regression on the gross series, one model per item."""
    T = tensor.n_periods
    out = np.zeros((tensor.n_items, split.test_periods))
    for i in range(tensor.n_items):
        raw = tensor.gross_series(i)
        tf = TargetTransform.fit(spec.transform, raw[list(split.train_range)])
        series_tf = tf.forward(raw)
        rows, targets = [], []
        for tau in range(NODF_LAGS, split.train_periods):
            rows.append(_nodf_feature_row(series_tf, raw, tau))
            targets.append(series_tf[tau])
        model = fit(spec, np.array(rows), np.array(targets)[:, None], transform=tf)
        for c, tau in enumerate(split.test_range):
            row = _nodf_feature_row(series_tf, raw, tau)
            out[i, c] = model.predict(row[None, :])[0, 0]
    return out


def _arx_exog(tensor, item, tf):
    """Pre-order columns known before the delivery period (leads >= 1)."""
    if tensor.n_leads < 2:
        return None
    exog = tensor.values[item, :, 1:]
    return tf.forward(exog)


def _arx_forecasts(tensor, spec, split):
    p = spec.hyperparams["p"]
    use_exog = spec.hyperparams["exog"] == "preorders"
    out = np.zeros((tensor.n_items, split.test_periods))
    for i in range(tensor.n_items):
        raw = tensor.gross_series(i)
        tf = TargetTransform.fit(spec.transform, raw[list(split.train_range)])
        series_tf = tf.forward(raw)
        exog = _arx_exog(tensor, i, tf) if use_exog else None
        train_exog = None if exog is None else exog[:split.train_periods]
        model = fit_arx(series_tf[:split.train_periods], train_exog, p, spec=spec)
        for c, tau in enumerate(split.test_range):
            row = None if exog is None else exog[tau]
            value = model.payload.one_step(series_tf[:tau], row)
            out[i, c] = max(float(tf.inverse(value)), 0.0)
    return out


def _trmf_forecasts(tensor, spec, split):
    """Joint factorization of the gross-demand matrix with one-step
    re-estimated forecasts across the test periods (the recommended use)."""
    hp = spec.hyperparams
    cfg = trmf_mod.TrmfConfig(rank=hp["rank"], ar_order=hp["ar_order"],
                              lam_f=hp["lam_f"], lam_z=hp["lam_z"],
                              lam_ar=hp["lam_ar"], max_sweeps=hp["max_sweeps"],
                              tol=hp["tol"], seed=hp["seed"],
                              allow_low_density=True)
    tfs = _fit_item_transforms(tensor, spec.transform, split)
    Y = np.empty((tensor.n_periods, tensor.n_items))
    for i in range(tensor.n_items):
        Y[:, i] = tfs[i].forward(tensor.gross_series(i))
    observed = tensor.observed_mask[:, :, 0].T.copy()
    Y = np.where(observed, Y, np.nan)

    Y0 = Y[:split.train_periods]
    stream = [Y[tau] for tau in split.test_range]
    rows = trmf_mod.rolling_refit(Y0, stream, cfg)

    out = np.zeros((tensor.n_items, split.test_periods))
    for c, row in enumerate(rows):
        for i in range(tensor.n_items):
            out[i, c] = max(float(tfs[i].inverse(row[i])), 0.0)
    return out


def forecast_matrix(tensor, spec: ModelSpec, split: BacktestSplit,
                    W=None, H=None):
    """Test-period q^0 forecasts for every item under one spec.

    Returns (forecasts (n_items, n_test), extras dict).
    """
    split.validate(tensor.n_periods)
    extras = {}
    if spec.family == "trmf":
        return _trmf_forecasts(tensor, spec, split), extras
    if spec.family == "arx":
        return _arx_forecasts(tensor, spec, split), extras
    if spec.feeding in ("df_one_by_one", "df_all_items"):
        if H is None:
            H = min(tensor.n_leads, DEFAULT_MAX_LEAD)
        if W is None:
            W = H + 1
        fc, diag = _df_forecasts(tensor, spec, split, W, H)
        extras["diagonal_smape"] = diag
        return fc, extras
    return _nodf_forecasts(tensor, spec, split), extras


# ---------------------------------------------------------------------------
# Leaderboard
# ---------------------------------------------------------------------------

@dataclass
class LeaderboardRow:
    spec_name: str
    mean_smape: float
    median_smape: float
    n_items: int
    best_count: int


@dataclass
class Leaderboard:
    rows: list
    scores: dict                 # spec_name -> {item_id: smape}
    best_model: dict             # item_id -> spec_name
    failures: list               # (spec_name, item_id, message)
    forecasts: dict              # (spec_name, item_id) -> np.ndarray
    history: dict                # item_id -> full q^0 series
    split: BacktestSplit
    scored_items: list = field(default_factory=list)

    def row(self, spec_name) -> LeaderboardRow:
        for r in self.rows:
            if r.spec_name == spec_name:
                return r
        raise KeyError(spec_name)

    def to_csv(self) -> str:
        lines = ["spec,mean_smape,median_smape,n_items,best_count"]
        for r in self.rows:
            lines.append(f"{r.spec_name},{r.mean_smape:.12g},"
                         f"{r.median_smape:.12g},{r.n_items},{r.best_count}")
        return "\n".join(lines) + "\n"

    def best_counts(self) -> dict:
        counts = {}
        for name in sorted(self.scores):
            counts[name] = sum(1 for v in self.best_model.values() if v == name)
        return counts


def backtest(tensor: PreorderTensor, specs, split: BacktestSplit | None = None,
             W=None, H=None) -> Leaderboard:
    """Fit every spec on the training periods and score test-period SMAPE.

    Mean/median per spec are computed over the items every spec scored
    (identical item set across rows); a per-item fitting failure is
    recorded and excludes that model from the item's argmin instead of
    being silently scored.  Ties in the per-item best model break by
    spec name.
    """
    split = split or BacktestSplit()
    split.validate(tensor.n_periods)
    specs = list(specs)
    if not specs:
        raise HierfcstError("no specs to backtest")
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise HierfcstError(f"duplicate spec names: {sorted(names)}")

    test_idx = list(split.test_range)
    actuals = {tensor.items[i]: tensor.gross_series(i)[test_idx]
               for i in range(tensor.n_items)}

    scores = {name: {} for name in names}
    forecasts = {}
    failures = []
    for spec, name in zip(specs, names):
        try:
            fc, _extras = forecast_matrix(tensor, spec, split, W=W, H=H)
        except (HierfcstError, np.linalg.LinAlgError) as exc:
            for item in tensor.items:
                failures.append((name, item, str(exc)))
            continue
        for i, item in enumerate(tensor.items):
            forecasts[(name, item)] = fc[i]
            scores[name][item] = smape(fc[i], actuals[item])

    # Mean/median rows stay comparable: aggregate over the items scored by
    # every spec that scored anything at all (wholesale failures drop out).
    common = None
    for name in names:
        scored = set(scores[name])
        if not scored:
            continue
        common = scored if common is None else common & scored
    common = common or set()
    scored_items = sorted(common, key=lambda it: tensor.items.index(it))

    best_model = {}
    for item in tensor.items:
        candidates = [(scores[name][item], name) for name in names
                      if item in scores[name]]
        if candidates:
            best_model[item] = min(candidates)[1]

    rows = []
    for name in names:
        vals = [scores[name][it] for it in scored_items if it in scores[name]]
        mean = float(np.mean(vals)) if vals else float("nan")
        med = float(np.median(vals)) if vals else float("nan")
        count = sum(1 for v in best_model.values() if v == name)
        rows.append(LeaderboardRow(spec_name=name, mean_smape=mean,
                                   median_smape=med, n_items=len(vals),
                                   best_count=count))
    rows.sort(key=lambda r: (r.mean_smape, r.spec_name))

    history = {tensor.items[i]: tensor.gross_series(i).copy()
               for i in range(tensor.n_items)}
    return Leaderboard(rows=rows, scores=scores, best_model=best_model,
                       failures=failures, forecasts=forecasts, history=history,
                       split=split, scored_items=scored_items)


# ---------------------------------------------------------------------------
# Per-item report with the lag-1 mimicry diagnostic
# ---------------------------------------------------------------------------

def _corr(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.std() == 0.0 or b.std() == 0.0:
        return 0.0
    return float(np.corrcoef(a, b)[0, 1])


def lag1_mimicry(forecast, actual, prev_actual) -> tuple:
    """Detect forecasts that merely echo the previous actual value.

    Compares corr(F_t, A_{t-1}) against corr(F_t, A_t); the flag fires when
    the lagged correlation exceeds the contemporaneous one by more than 0.1
    (a low SMAPE can hide a model that just repeats the last observation).
    Returns (flag, corr_lagged, corr_now).
    """
    F = np.asarray(forecast, dtype=float).ravel()
    A = np.asarray(actual, dtype=float).ravel()
    lagged = np.concatenate([[float(prev_actual)], A[:-1]])
    corr_lag = _corr(F, lagged)
    corr_now = _corr(F, A)
    return corr_lag > corr_now + 0.1, corr_lag, corr_now


@dataclass
class ForecastReport:
    item_id: str
    spec_name: str
    periods: list
    actual: np.ndarray
    forecast: np.ndarray
    smape: float
    corr_lagged: float
    corr_now: float
    mimicry_flag: bool

    def to_csv(self) -> str:
        lines = ["period,actual,forecast"]
        for t, a, f in zip(self.periods, self.actual, self.forecast):
            lines.append(f"{t},{a:.12g},{f:.12g}")
        return "\n".join(lines) + "\n"


def best_forecast_report(board: Leaderboard, item_id: str) -> ForecastReport:
    """Plot-ready forecast/actual pairs for the item's best model, with the
    lag-1 mimicry diagnostic."""
    if item_id not in board.best_model:
        raise HierfcstError(f"item {item_id!r} was not scored")
    spec_name = board.best_model[item_id]
    forecast = board.forecasts[(spec_name, item_id)]
    periods = list(board.split.test_range)
    actual = board.history[item_id][periods]
    prev = board.history[item_id][periods[0] - 1]
    flag, corr_lag, corr_now = lag1_mimicry(forecast, actual, prev)
    return ForecastReport(
        item_id=item_id, spec_name=spec_name, periods=periods,
        actual=actual, forecast=forecast,
        smape=smape(forecast, actual),
        corr_lagged=corr_lag, corr_now=corr_now, mimicry_flag=flag)
