"""Compact statistical descriptors of a demand series.

Seven features summarize level, dispersion, shape, memory and
intermittency.  They feed both the TDA model-selection pipeline and the
small-feature (non-diagonal) regression baselines.
"""

from __future__ import annotations

import numpy as np

from .errors import HierfcstError

FEATURE_NAMES = ("mean", "variance", "skewness", "kurtosis",
                 "autocorr1", "zero_fraction", "max_mean_ratio")


def extract_features(series) -> np.ndarray:
    """Seven-value descriptor of one series (length >= 2).

    Degenerate rules keep everything finite: a constant series reports
    variance, skewness, excess kurtosis and lag-1 autocorrelation of 0 and
    a max/mean ratio of 1 (0 when the mean itself is 0).
    """
    x = np.asarray(series, dtype=float).ravel()
    if x.shape[0] < 2:
        raise HierfcstError(f"need a series of length >= 2, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise HierfcstError("series must be finite")

    mean = float(np.mean(x))
    dev = x - mean
    m2 = float(np.mean(dev ** 2))
    zero_fraction = float(np.mean(x == 0.0))

    if m2 == 0.0:
        ratio = 1.0 if mean != 0.0 else 0.0
        return np.array([mean, 0.0, 0.0, 0.0, 0.0, zero_fraction, ratio])

    skew = float(np.mean(dev ** 3)) / m2 ** 1.5
    kurt = float(np.mean(dev ** 4)) / m2 ** 2 - 3.0
    autocorr = float(dev[:-1] @ dev[1:]) / float(dev @ dev)
    ratio = float(np.max(x)) / mean if mean != 0.0 else 0.0
    return np.array([mean, m2, skew, kurt, autocorr, zero_fraction, ratio])


def extract_feature_matrix(series_list) -> np.ndarray:
    """Stack extract_features over a list of series."""
    return np.array([extract_features(s) for s in series_list])
