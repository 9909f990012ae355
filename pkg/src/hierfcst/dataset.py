"""Pre-order demand data: CSV ingestion, validation, caching, synthesis.

A record (item, delivery_period t, lead_time h, quantity) holds the total
volume ordered h periods ahead of delivery period t.  The cube of all
records for an item is the raw input of every downstream stage.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, DuplicateKeyError, HierfcstError, ParseError

CSV_HEADER = ("item_id", "delivery_period", "lead_time", "quantity")

# Lead-time slots kept by default; pre-orders further out carry little
# signal for next-period demand and the reference layout uses 3-4 columns.
DEFAULT_MAX_LEAD = 4

CACHE_VERSION = 1


@dataclass(frozen=True)
class PreorderRecord:
    """One (item, delivery period, lead time) -> quantity observation."""

    item_id: str
    delivery_period: int
    lead_time: int
    quantity: float

    def __post_init__(self):
        if self.delivery_period < 0:
            raise DomainError(f"delivery_period must be >= 0, got {self.delivery_period}")
        if self.lead_time < 0:
            raise DomainError(f"lead_time must be >= 0, got {self.lead_time}")
        if self.quantity < 0:
            raise DomainError(f"quantity must be >= 0, got {self.quantity}")


@dataclass
class PreorderTensor:
    """Dense item x period x lead cube with an observed-entry mask.

    ``values[i, t, h]`` is the quantity ordered h periods ahead for
    delivery by end of period t.  Missing records are stored as 0 with
    ``observed_mask`` False, so factorization can treat them as unobserved
    while regressors read them as zero orders.  Instances are immutable by
    convention: no method mutates ``values`` after construction.
    """

    items: list[str]
    values: np.ndarray        # (n_items, T, H)
    observed_mask: np.ndarray  # same shape, bool
    _index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.observed_mask = np.asarray(self.observed_mask, dtype=bool)
        if self.values.shape != self.observed_mask.shape:
            raise HierfcstError("values and observed_mask shapes differ")
        if self.values.ndim != 3 or self.values.shape[0] != len(self.items):
            raise HierfcstError(f"expected (n_items, T, H) cube, got {self.values.shape}")
        if np.any(self.values < 0) or not np.all(np.isfinite(self.values)):
            raise DomainError("quantities must be finite and >= 0")
        self._index = {item: i for i, item in enumerate(self.items)}

    @property
    def n_items(self) -> int:
        return len(self.items)

    @property
    def n_periods(self) -> int:
        return self.values.shape[1]

    @property
    def n_leads(self) -> int:
        return self.values.shape[2]

    def item_index(self, item_id: str) -> int:
        try:
            return self._index[item_id]
        except KeyError:
            raise KeyError(f"unknown item_id {item_id!r}") from None

    def gross_series(self, item: int) -> np.ndarray:
        """Total demand series q^0 for one item (the primary target)."""
        return self.values[item, :, 0]

    def zero_fraction(self) -> float:
        return float(np.mean(self.values == 0))


def is_known_at(tensor: PreorderTensor, item: int, t: int, h: int, now: int) -> bool:
    """True iff cell (item, t, h) is available by the end of period ``now``.

    An h-period-ahead pre-order for delivery period t accumulates by the
    end of period t - h, so the cell is known exactly when t - h <= now.
    """
    if not 0 <= item < tensor.n_items:
        raise IndexError(f"item index {item} out of range")
    if not 0 <= t < tensor.n_periods:
        raise IndexError(f"period {t} out of range")
    if not 0 <= h < tensor.n_leads:
        raise IndexError(f"lead {h} out of range")
    return t - h <= now


def load_csv(path, missing_as_zero: bool = True, max_lead: int = DEFAULT_MAX_LEAD,
             periods: int | None = None, leads: int | None = None) -> PreorderTensor:
    """Load a pre-order CSV into a dense tensor.

    The file must be UTF-8 with header ``item_id,delivery_period,lead_time,
    quantity`` and one record per line.  Dimensions are inferred from the
    data maxima unless ``periods``/``leads`` pin them explicitly.  Records
    with lead_time >= max_lead are dropped (the default cap keeps the 4
    actionable lead columns; pass a larger ``max_lead`` to keep more).

    With ``missing_as_zero`` (default) absent (item, t, h) combinations
    load as quantity 0 with observed_mask False.  With it off, any absent
    combination inside the grid is an error, which is useful as a
    completeness check on export pipelines.
    """
    records = {}
    dropped = 0
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", line_number=1) from None
        if [c.strip() for c in header] != list(CSV_HEADER):
            raise ParseError(
                f"expected header {','.join(CSV_HEADER)!r}, got {','.join(header)!r}",
                line_number=1)
        for row in reader:
            line = reader.line_num
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 4:
                raise ParseError(f"expected 4 fields, got {len(row)}", line_number=line)
            item = row[0].strip()
            if not item:
                raise ParseError("empty item_id", line_number=line)
            try:
                t = int(row[1])
                h = int(row[2])
                q = float(row[3])
            except ValueError as exc:
                raise ParseError(str(exc), line_number=line) from None
            if t < 0:
                raise ParseError(f"delivery_period must be >= 0, got {t}", line_number=line)
            if h < 0:
                raise ParseError(f"lead_time must be >= 0, got {h}", line_number=line)
            if not np.isfinite(q) or q < 0:
                raise DomainError(f"line {line}: quantity must be finite and >= 0, got {q}")
            if h >= max_lead and leads is None:
                dropped += 1
                continue
            key = (item, t, h)
            if key in records:
                raise DuplicateKeyError(
                    f"line {line}: duplicate record for item={item!r}, "
                    f"delivery_period={t}, lead_time={h}")
            records[key] = q

    if not records:
        raise ParseError("no data rows", line_number=1)

    items = sorted({key[0] for key in records})
    T = 1 + max(key[1] for key in records)
    H = 1 + max(key[2] for key in records)
    if periods is not None:
        if periods < T:
            raise HierfcstError(f"periods={periods} below observed maximum {T}")
        T = periods
    if leads is not None:
        if leads < H:
            raise HierfcstError(f"leads={leads} below observed maximum {H}")
        H = leads

    values = np.zeros((len(items), T, H))
    mask = np.zeros((len(items), T, H), dtype=bool)
    index = {item: i for i, item in enumerate(items)}
    for (item, t, h), q in records.items():
        i = index[item]
        values[i, t, h] = q
        mask[i, t, h] = True

    if not missing_as_zero and not mask.all():
        n_missing = int(mask.size - mask.sum())
        raise HierfcstError(
            f"{n_missing} grid cells have no record and missing_as_zero is off")

    return PreorderTensor(items=items, values=values, observed_mask=mask)


def save_csv(tensor: PreorderTensor, path) -> None:
    """Write observed cells back out in the load_csv schema.

    Quantities are printed with repr precision, so load(save(tensor))
    reproduces the tensor exactly as long as the boundary cells are
    observed (dimensions are re-inferred from data maxima on load).
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for i, item in enumerate(tensor.items):
            ts, hs = np.nonzero(tensor.observed_mask[i])
            for t, h in zip(ts.tolist(), hs.tolist()):
                writer.writerow([item, t, h, repr(float(tensor.values[i, t, h]))])


def save_cache(tensor: PreorderTensor, path) -> None:
    """Binary tensor cache (versioned npz container)."""
    np.savez_compressed(
        path,
        cache_version=np.array(CACHE_VERSION),
        kind=np.array("preorder_tensor"),
        items=np.array(tensor.items, dtype=str),
        values=tensor.values,
        observed_mask=tensor.observed_mask,
    )


def load_cache(path) -> PreorderTensor:
    with np.load(path, allow_pickle=False) as data:
        if "cache_version" not in data or int(data["cache_version"]) != CACHE_VERSION:
            raise HierfcstError(f"unsupported or missing cache version in {path}")
        if str(data["kind"]) != "preorder_tensor":
            raise HierfcstError(f"{path} is not a tensor cache")
        return PreorderTensor(
            items=[str(s) for s in data["items"]],
            values=data["values"],
            observed_mask=data["observed_mask"],
        )


REGIMES = ("smooth", "sparse-spiky", "anticipatory")


def synthesize(seed: int, n_items: int, T: int, H: int = DEFAULT_MAX_LEAD,
               regime: str = "smooth") -> PreorderTensor:
    """Generate a deterministic synthetic pre-order tensor.

    Regimes:
      smooth        -- positive level + trend + seasonality, fully observed.
      sparse-spiky  -- heavy-tailed spikes on a mostly-zero cube; at least
                       half the cells are zero orders and zeros are left
                       unobserved, mimicking sporadically requested items.
      anticipatory  -- an i.i.d. positive driver shared by all lead columns,
                       so one-period-ahead pre-orders all but determine the
                       next period's gross demand (corr(q^0, q^1) >= 0.9 by
                       construction) while the gross series itself has no
                       usable autocorrelation.
    """
    if n_items < 1 or T < 1 or H < 1:
        raise HierfcstError("n_items, T and H must all be >= 1")
    if regime not in REGIMES:
        raise HierfcstError(f"unknown regime {regime!r}; expected one of {REGIMES}")

    rng = np.random.default_rng(seed)
    items = [f"item{idx:04d}" for idx in range(n_items)]
    values = np.zeros((n_items, T, H))
    mask = np.ones((n_items, T, H), dtype=bool)
    t_axis = np.arange(T)

    if regime == "smooth":
        for i in range(n_items):
            base = rng.uniform(20.0, 120.0)
            slope = rng.uniform(-0.3, 0.6)
            amp = rng.uniform(0.05, 0.3)
            phase = rng.uniform(0, 2 * np.pi)
            level = base + slope * t_axis + base * amp * np.sin(2 * np.pi * t_axis / 12 + phase)
            level = np.maximum(level, 0.5)
            for h in range(H):
                noise = 1.0 + 0.02 * rng.standard_normal(T)
                values[i, :, h] = np.maximum(level * 0.9 ** h * noise, 0.0)

    elif regime == "sparse-spiky":
        # Exactly 35% of cells carry an order, so the zero fraction is a
        # guaranteed 65% regardless of dimensions.
        n_cells = n_items * T * H
        n_nonzero = max(1, int(0.35 * n_cells))
        flat = rng.choice(n_cells, size=n_nonzero, replace=False)
        magnitudes = np.exp(rng.normal(2.0, 1.2, size=n_nonzero)) + 1.0
        values.reshape(-1)[flat] = magnitudes
        mask = values > 0

    else:  # anticipatory
        for i in range(n_items):
            base = rng.uniform(30.0, 150.0)
            driver = base * np.exp(0.5 * rng.standard_normal(T))
            fade = np.maximum(1.0 - 0.2 * np.maximum(np.arange(H) - 1, 0), 0.2)
            for h in range(H):
                noise = 1.0 + 0.03 * rng.standard_normal(T)
                values[i, :, h] = np.maximum(driver * fade[h] * noise, 0.0)

    return PreorderTensor(items=items, values=values, observed_mask=mask)
