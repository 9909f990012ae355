"""Temporal-regularized matrix factorization with AR-driven forecasting.

Y (T x n) is factorized as Z F with Z (T x d) factor time series and
F (d x n) loadings, minimizing

    1/(2|O|) * sum_{(t,i) in O} (Y_ti - z_t.f_i)^2
      + lam_f/2 ||F||^2 + lam_z/2 ||Z||^2
      + lam_ar/2 * sum_j sum_{t>=p} (Z_tj - sum_i phi_ji Z_{t-i,j})^2

by exact alternating block minimization: closed-form ridge per loading
column, one banded positive-definite solve for all of Z, and per-factor
least squares for the AR coefficients phi.  The data term is scaled by the
observed-entry count so the lambdas are density-independent.  Forecasts
roll the fitted AR recursion forward on its own outputs, so accuracy decays
with horizon and one-step-ahead use with re-estimation is the intended
mode.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solveh_banded

from .errors import DensityError, DomainError, HierfcstError, IllConditionedError

DEFAULT_DENSITY_FLOOR = 0.25


@dataclass
class TrmfConfig:
    rank: int = 3
    ar_order: int = 2
    lam_f: float = 0.5
    lam_z: float = 0.5
    lam_ar: float = 10.0
    max_sweeps: int = 60
    tol: float = 1e-6
    seed: int = 0
    density_floor: float = DEFAULT_DENSITY_FLOOR
    allow_low_density: bool = False

    def __post_init__(self):
        if self.rank < 1:
            raise HierfcstError("rank must be >= 1")
        if self.ar_order < 1:
            raise HierfcstError("ar_order must be >= 1")
        for name in ("lam_f", "lam_z", "lam_ar"):
            if getattr(self, name) < 0:
                raise HierfcstError(f"{name} must be >= 0")
        if self.max_sweeps < 1:
            raise HierfcstError("max_sweeps must be >= 1")


@dataclass
class FactorModel:
    """Factorization state after alternating minimization."""

    Z: np.ndarray            # (T, d)
    F: np.ndarray            # (d, n)
    phi: np.ndarray          # (d, p), row j = AR coefficients of factor j
    lam_f: float
    lam_z: float
    lam_ar: float
    mask: np.ndarray         # (T, n) observed-entry pattern
    objective_history: list = field(default_factory=list)

    @property
    def rank(self):
        return self.Z.shape[1]

    @property
    def ar_order(self):
        return self.phi.shape[1]

    def parameter_count(self) -> int:
        """T*d + d*n + d*p learned values."""
        return self.Z.size + self.F.size + self.phi.size

    def reconstruction(self) -> np.ndarray:
        return self.Z @ self.F


def ar_residuals(Z, phi) -> np.ndarray:
    """(T - p) x d matrix of AR(p) residuals of the factor series."""
    T, d = Z.shape
    p = phi.shape[1]
    acc = np.zeros((T - p, d))
    for i in range(1, p + 1):
        acc += Z[p - i:T - i] * phi[:, i - 1][None, :]
    return Z[p:] - acc


def objective(Y, mask, Z, F, phi, lam_f, lam_z, lam_ar) -> float:
    """Full regularized objective; the quantity factorize drives down."""
    m = int(mask.sum())
    resid = (Y - Z @ F)[mask]
    value = 0.5 * float(resid @ resid) / m
    value += 0.5 * lam_f * float(np.sum(F ** 2))
    value += 0.5 * lam_z * float(np.sum(Z ** 2))
    if lam_ar > 0:
        value += 0.5 * lam_ar * float(np.sum(ar_residuals(Z, phi) ** 2))
    return value


def _f_step(Y, mask, Z, lam_f, m):
    d = Z.shape[1]
    n = Y.shape[1]
    F = np.zeros((d, n))
    eye = np.eye(d)
    for i in range(n):
        rows = mask[:, i]
        if not rows.any():
            continue
        Zi = Z[rows]
        G = Zi.T @ Zi / m + lam_f * eye
        b = Zi.T @ Y[rows, i] / m
        try:
            F[:, i] = np.linalg.solve(G, b)
        except np.linalg.LinAlgError:
            F[:, i] = np.linalg.lstsq(G, b, rcond=None)[0]
    return F


def _ar_band(phi_j, T, p):
    """Banded (p+1) x T representation of D'D for one factor's AR operator.

    band[k, t] holds the (t, t+k) entry.  Row s of D (s = p..T-1) carries
    coefficient 1 at column s and -phi_j[i-1] at column s-i.
    """
    c = np.concatenate([[1.0], -phi_j])  # c[i] multiplies column s-i
    band = np.zeros((p + 1, T))
    for s in range(p, T):
        for i in range(p + 1):
            for l in range(i, p + 1):
                band[l - i, s - l] += c[l] * c[i]
    return band


def _z_step(Y, mask, F, phi, lam_z, lam_ar, m):
    T = Y.shape[0]
    d = F.shape[0]
    p = phi.shape[1]
    u = p * d  # half bandwidth of the stacked (t, j) system
    M = T * d
    ab = np.zeros((u + 1, M))
    rhs = np.zeros(M)

    for t in range(T):
        cols = mask[t]
        if cols.any():
            Ft = F[:, cols]
            G = Ft @ Ft.T / m
            rhs[t * d:(t + 1) * d] = Ft @ Y[t, cols] / m
        else:
            G = np.zeros((d, d))
        for j in range(d):
            ab[u, t * d + j] += G[j, j] + lam_z
            for j2 in range(j + 1, d):
                ab[u - (j2 - j), t * d + j2] += G[j, j2]

    if lam_ar > 0:
        for j in range(d):
            band = _ar_band(phi[j], T, p)
            for t in range(T):
                ab[u, t * d + j] += lam_ar * band[0, t]
                for k in range(1, p + 1):
                    if t + k < T:
                        ab[u - k * d, (t + k) * d + j] += lam_ar * band[k, t]

    try:
        z = solveh_banded(ab, rhs, lower=False)
    except np.linalg.LinAlgError:
        jitter = 1e-10 * (1.0 + np.abs(ab[u]).max())
        warnings.warn("factor system near-singular; adding jitter "
                      "(consider lam_z > 0)", RuntimeWarning, stacklevel=2)
        ab_j = ab.copy()
        ab_j[u] += jitter
        try:
            z = solveh_banded(ab_j, rhs, lower=False)
        except np.linalg.LinAlgError:
            raise IllConditionedError(
                "factor update system singular; set lam_z > 0") from None
    return z.reshape(T, d)


def _phi_step(Z, p):
    T, d = Z.shape
    phi = np.zeros((d, p))
    for j in range(d):
        design = np.column_stack([Z[p - i:T - i, j] for i in range(1, p + 1)])
        target = Z[p:, j]
        phi[j], *_ = np.linalg.lstsq(design, target, rcond=None)
    return phi


def factorize(Y, mask=None, cfg: TrmfConfig | None = None, init=None) -> FactorModel:
    """Alternating minimization of the temporal-regularized objective.

    mask marks observed entries; None treats every finite entry as observed
    (NaNs unobserved).  init, when given, is a (Z, F, phi) warm start.
    Raises DensityError when fewer than cfg.density_floor of the entries
    are observed, unless cfg.allow_low_density (then it warns), since the
    missing dynamics are not reliably recoverable below roughly a quarter
    coverage.
    """
    cfg = cfg or TrmfConfig()
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2:
        raise HierfcstError(f"Y must be 2-d, got shape {Y.shape}")
    if mask is None:
        mask = np.isfinite(Y)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != Y.shape:
        raise HierfcstError("mask shape must match Y")
    if not np.all(np.isfinite(Y[mask])):
        raise DomainError("observed entries must be finite")
    Y = np.nan_to_num(Y, nan=0.0)

    T, n = Y.shape
    d, p = cfg.rank, cfg.ar_order
    if T <= p:
        raise HierfcstError(f"need more than ar_order={p} periods, got {T}")
    m = int(mask.sum())
    if m == 0:
        raise DensityError("no observed entries")
    density = m / mask.size
    if density < cfg.density_floor:
        message = (f"observed density {density:.3f} below floor "
                   f"{cfg.density_floor:.2f}")
        if not cfg.allow_low_density:
            raise DensityError(message + "; set allow_low_density to override")
        warnings.warn(message + "; proceeding anyway", RuntimeWarning, stacklevel=2)

    if init is not None:
        Z, F, phi = (np.array(a, dtype=float, copy=True) for a in init)
        if Z.shape != (T, d) or F.shape != (d, n) or phi.shape != (d, p):
            raise HierfcstError("warm-start shapes do not match configuration")
    else:
        rng = np.random.default_rng(cfg.seed)
        scale = 0.5 / np.sqrt(d)
        Z = rng.uniform(-scale, scale, size=(T, d))
        F = rng.uniform(-scale, scale, size=(d, n))
        phi = np.zeros((d, p))

    history = [objective(Y, mask, Z, F, phi, cfg.lam_f, cfg.lam_z, cfg.lam_ar)]
    for _ in range(cfg.max_sweeps):
        F = _f_step(Y, mask, Z, cfg.lam_f, m)
        Z = _z_step(Y, mask, F, phi, cfg.lam_z, cfg.lam_ar, m)
        phi = _phi_step(Z, p)
        value = objective(Y, mask, Z, F, phi, cfg.lam_f, cfg.lam_z, cfg.lam_ar)
        history.append(value)
        prev = history[-2]
        if prev - value < cfg.tol * (abs(prev) + 1e-12):
            break

    return FactorModel(Z=Z, F=F, phi=phi, lam_f=cfg.lam_f, lam_z=cfg.lam_z,
                       lam_ar=cfg.lam_ar, mask=mask, objective_history=history)


def is_stationary(phi_j, tol: float = 1e-9) -> bool:
    """True when the AR characteristic roots lie inside the unit disk."""
    poly = np.concatenate([[1.0], -np.asarray(phi_j, dtype=float)])
    roots = np.roots(poly)
    return bool(roots.size == 0 or np.max(np.abs(roots)) < 1.0 + tol)


def forecast(model: FactorModel, horizon: int) -> np.ndarray:
    """Dynamic multi-step forecast: factor paths roll the AR recursion
    forward on prior forecasts, then map through the loadings.

    Returns the raw horizon x n matrix without clipping; quantity semantics
    (clipping at zero) belong to the reporting layer.
    """
    if horizon < 1:
        raise HierfcstError("horizon must be >= 1")
    Z, phi = model.Z, model.phi
    d, p = phi.shape
    if not all(is_stationary(phi[j]) for j in range(d)):
        warnings.warn("non-stationary AR coefficients; dynamic forecasts may "
                      "diverge", RuntimeWarning, stacklevel=2)
    hist = [Z[t] for t in range(max(0, Z.shape[0] - p), Z.shape[0])]
    if len(hist) < p:
        raise HierfcstError("factor history shorter than AR order")
    out = np.empty((horizon, d))
    for step in range(horizon):
        z_new = np.zeros(d)
        for i in range(1, p + 1):
            z_new += phi[:, i - 1] * hist[-i]
        out[step] = z_new
        hist.append(z_new)
    return out @ model.F


def one_step_forecast(model: FactorModel) -> np.ndarray:
    return forecast(model, 1)[0]


def rolling_refit(Y_initial, stream, cfg: TrmfConfig | None = None,
                  window_policy: str | tuple = "expanding"):
    """One-step forecasts with re-estimation as new rows arrive.

    For each incoming row: emit the one-step forecast from the current
    model, append the row, refit warm-started from the previous (Z, F, phi)
    with the forecast factor state as the new row's initialization.
    window_policy is "expanding" or ("rolling", w) to keep only the last w
    rows.  Returns the list of one-step forecasts (one per streamed row).
    """
    cfg = cfg or TrmfConfig()
    Y = np.asarray(Y_initial, dtype=float)
    if isinstance(window_policy, tuple):
        kind, window = window_policy
        if kind != "rolling" or window < cfg.ar_order + 1:
            raise HierfcstError(f"bad window policy {window_policy!r}")
    elif window_policy != "expanding":
        raise HierfcstError(f"bad window policy {window_policy!r}")
    else:
        window = None

    model = factorize(Y, cfg=cfg)
    forecasts = []
    for row in stream:
        row = np.asarray(row, dtype=float).reshape(-1)
        if row.shape[0] != Y.shape[1]:
            raise HierfcstError("streamed row width does not match Y")
        forecasts.append(one_step_forecast(model))
        z_next = forecast_factors(model, 1)
        Y = np.vstack([Y, row[None, :]])
        Z0 = np.vstack([model.Z, z_next])
        if window is not None and Y.shape[0] > window:
            Y = Y[-window:]
            Z0 = Z0[-window:]
        model = factorize(Y, cfg=cfg, init=(Z0, model.F, model.phi))
    return forecasts


def forecast_factors(model: FactorModel, horizon: int) -> np.ndarray:
    """Factor-space forecasts (horizon x d), same recursion as forecast."""
    Z, phi = model.Z, model.phi
    d, p = phi.shape
    hist = [Z[t] for t in range(max(0, Z.shape[0] - p), Z.shape[0])]
    out = np.empty((horizon, d))
    for step in range(horizon):
        z_new = np.zeros(d)
        for i in range(1, p + 1):
            z_new += phi[:, i - 1] * hist[-i]
        out[step] = z_new
        hist.append(z_new)
    return out
