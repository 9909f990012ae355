"""Diagonal Feeding reshaping and invertible target transforms.

A W x H window of the (delivery period x lead time) quantity matrix,
anchored at period t, splits into cells already known at t (inputs x) and
future cells (targets y): cell (s, h) holds q_{t+s}^h and is known at t
exactly when s <= h.  With W = H + 1 the split runs down the diagonal and
|x| = |y| = H(H+1)/2.  Reshaping every anchor this way turns anticipatory
pre-order data into a plain multi-output regression problem.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import PreorderTensor
from .errors import DomainError, HierfcstError, NotFittedError, WindowRangeError

SUPERVISED_CACHE_VERSION = 1

TRANSFORM_KINDS = ("identity", "log1p", "minmax")


@dataclass
class TargetTransform:
    """Invertible per-series value transform (identity, log1p or minmax)."""

    kind: str = "identity"
    vmin: float | None = None
    vmax: float | None = None

    def __post_init__(self):
        if self.kind not in TRANSFORM_KINDS:
            raise HierfcstError(
                f"unknown transform {self.kind!r}; expected one of {TRANSFORM_KINDS}")

    @classmethod
    def fit(cls, kind: str, values) -> "TargetTransform":
        """Fit transform parameters on the given values (min/max for minmax)."""
        if kind == "minmax":
            values = np.asarray(values, dtype=float)
            if values.size == 0:
                raise HierfcstError("cannot fit minmax on empty values")
            return cls(kind=kind, vmin=float(values.min()), vmax=float(values.max()))
        return cls(kind=kind)

    @property
    def fitted(self) -> bool:
        return self.kind != "minmax" or self.vmin is not None

    def forward(self, v):
        v = np.asarray(v, dtype=float)
        if self.kind == "identity":
            return v.copy()
        if self.kind == "log1p":
            if np.any(v <= -1.0 + 1e-12):
                raise DomainError("log1p transform requires values > -1")
            return np.log1p(v)
        if not self.fitted:
            raise NotFittedError("minmax transform used before fit")
        span = self.vmax - self.vmin
        if span == 0.0:
            # Degenerate series: every value maps to 0.
            return np.zeros_like(v)
        return (v - self.vmin) / span

    def inverse(self, v):
        v = np.asarray(v, dtype=float)
        if self.kind == "identity":
            return v.copy()
        if self.kind == "log1p":
            return np.expm1(v)
        if not self.fitted:
            raise NotFittedError("minmax transform used before fit")
        span = self.vmax - self.vmin
        if span == 0.0:
            return np.full_like(v, self.vmin)
        return v * span + self.vmin


def window_index(W: int, H: int):
    """Row-major (s, h) index lists for the known/future cell partition.

    Requires the square-cornered geometry W = H + 1; every cell of the
    window lands in exactly one list (x if s <= h, y otherwise).
    """
    if H < 1:
        raise HierfcstError(f"H must be >= 1, got {H}")
    if W != H + 1:
        raise HierfcstError(f"window must satisfy W = H + 1, got W={W}, H={H}")
    x_index = [(s, h) for s in range(W) for h in range(H) if s <= h]
    y_index = [(s, h) for s in range(W) for h in range(H) if s > h]
    return x_index, y_index


@dataclass
class SupervisedFrame:
    """One diagonal-feeding sample: known-cell inputs x, future-cell targets y."""

    item: int
    anchor: int
    x: np.ndarray
    y: np.ndarray
    x_index: list
    y_index: list


def diagonal_feed(tensor: PreorderTensor, item: int, anchor: int,
                  W: int, H: int) -> SupervisedFrame:
    """Extract the diagonal-feeding frame anchored at ``anchor`` for one item."""
    x_index, y_index = window_index(W, H)
    if H > tensor.n_leads:
        raise WindowRangeError(f"H={H} exceeds tensor lead count {tensor.n_leads}")
    if anchor < 0 or anchor + W - 1 >= tensor.n_periods:
        raise WindowRangeError(
            f"window [{anchor}, {anchor + W - 1}] exceeds periods [0, {tensor.n_periods})")
    cells = tensor.values[item]
    x = np.array([cells[anchor + s, h] for (s, h) in x_index])
    y = np.array([cells[anchor + s, h] for (s, h) in y_index])
    return SupervisedFrame(item=item, anchor=anchor, x=x, y=y,
                           x_index=x_index, y_index=y_index)


def feature_frame(tensor: PreorderTensor, item: int, anchor: int,
                  W: int, H: int) -> np.ndarray:
    """Known cells x only, for prediction at anchors whose future cells may
    fall outside the tensor.  Needs periods up to anchor + W - 2 because the
    last row of the window contributes no known cell."""
    x_index, _ = window_index(W, H)
    if anchor < 0 or anchor + W - 2 >= tensor.n_periods:
        raise WindowRangeError(
            f"inputs for anchor {anchor} need period {anchor + W - 2}, "
            f"tensor has [0, {tensor.n_periods})")
    cells = tensor.values[item]
    return np.array([cells[anchor + s, h] for (s, h) in x_index])


@dataclass
class SupervisedSet:
    """Stacked diagonal-feeding samples ready for model fitting."""

    X: np.ndarray
    Y: np.ndarray
    samples: list            # (item index, anchor) per row
    transforms: dict         # item index -> fitted TargetTransform
    W: int
    H: int

    @property
    def x_index(self):
        return window_index(self.W, self.H)[0]

    @property
    def y_index(self):
        return window_index(self.W, self.H)[1]


def build_training_set(tensor: PreorderTensor, scope, W: int, H: int,
                       transform: str = "identity", anchors=None,
                       fit_periods=None, transforms=None) -> SupervisedSet:
    """Stack diagonal-feeding frames into matrices X, Y.

    scope        -- a single item index, a sequence of item indices, or
                    "all" for every item (the all-items training mode).
    anchors      -- anchor periods to sample; defaults to every anchor whose
                    window fits (stride 1, maximal overlap).
    fit_periods  -- periods used to fit per-item transform parameters;
                    defaults to all periods.  Pass the training periods to
                    keep test values out of the minmax range.
    transforms   -- pre-fitted per-item transforms; overrides fitting.

    The transform is applied to both X and Y entries, so models operate
    entirely in transformed space and predictions must be mapped back with
    the recorded per-item transform.
    """
    if scope == "all":
        items = list(range(tensor.n_items))
    elif np.isscalar(scope):
        items = [int(scope)]
    else:
        items = [int(i) for i in scope]
    if not items:
        raise HierfcstError("empty item scope")

    if anchors is None:
        last = tensor.n_periods - W
        if last < 0:
            raise WindowRangeError(
                f"tensor has {tensor.n_periods} periods, too short for W={W}")
        anchors = range(last + 1)
    anchors = list(anchors)
    if not anchors:
        raise HierfcstError("no valid anchors")

    if transforms is None:
        transforms = {}
        for i in items:
            cells = tensor.values[i]
            fitted = cells if fit_periods is None else cells[list(fit_periods)]
            transforms[i] = TargetTransform.fit(transform, fitted)

    X_rows, Y_rows, samples = [], [], []
    for i in items:
        tf = transforms[i]
        for a in anchors:
            frame = diagonal_feed(tensor, i, a, W, H)
            X_rows.append(tf.forward(frame.x))
            Y_rows.append(tf.forward(frame.y))
            samples.append((i, a))

    return SupervisedSet(X=np.array(X_rows), Y=np.array(Y_rows), samples=samples,
                         transforms=transforms, W=W, H=H)


def save_supervised(sset: SupervisedSet, path) -> None:
    """Versioned binary cache of a supervised dataset."""
    items = np.array([s[0] for s in sset.samples])
    anchors = np.array([s[1] for s in sset.samples])
    keys = sorted(sset.transforms)
    kinds = np.array([sset.transforms[k].kind for k in keys], dtype=str)
    vmins = np.array([sset.transforms[k].vmin if sset.transforms[k].vmin is not None
                      else np.nan for k in keys])
    vmaxs = np.array([sset.transforms[k].vmax if sset.transforms[k].vmax is not None
                      else np.nan for k in keys])
    np.savez_compressed(
        path,
        cache_version=np.array(SUPERVISED_CACHE_VERSION),
        kind=np.array("supervised_set"),
        X=sset.X, Y=sset.Y, sample_items=items, sample_anchors=anchors,
        W=np.array(sset.W), H=np.array(sset.H),
        tf_items=np.array(keys), tf_kinds=kinds, tf_vmins=vmins, tf_vmaxs=vmaxs,
    )


def load_supervised(path) -> SupervisedSet:
    with np.load(path, allow_pickle=False) as data:
        if "cache_version" not in data or int(data["cache_version"]) != SUPERVISED_CACHE_VERSION:
            raise HierfcstError(f"unsupported or missing cache version in {path}")
        if str(data["kind"]) != "supervised_set":
            raise HierfcstError(f"{path} is not a supervised cache")
        transforms = {}
        for key, kind, vmin, vmax in zip(data["tf_items"], data["tf_kinds"],
                                         data["tf_vmins"], data["tf_vmaxs"]):
            transforms[int(key)] = TargetTransform(
                kind=str(kind),
                vmin=None if np.isnan(vmin) else float(vmin),
                vmax=None if np.isnan(vmax) else float(vmax))
        samples = list(zip(data["sample_items"].tolist(),
                           data["sample_anchors"].tolist()))
        return SupervisedSet(X=data["X"], Y=data["Y"], samples=samples,
                             transforms=transforms, W=int(data["W"]), H=int(data["H"]))
