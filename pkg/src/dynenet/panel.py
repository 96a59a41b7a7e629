"""Country-month panel: loading, validation, targets and lead-k design matrices."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateData, ParseError, SchemaError

logger = logging.getLogger(__name__)

SOURCE_CLASSES = ("GED", "ACLED", "WDI", "VDEM", "FVP", "REIGN", "ICGCW", "GDELT")
CONTENT_CLASSES = ("violent-event", "nonviolent-event", "structural", "political")
STEPS = tuple(range(2, 8))
MONTH_ORIGIN = 1990  # month index 0 is 1990-01
DEFAULT_MIN_MONTHS = 24
ID_COLUMNS = ("country", "month", "fatalities")


def month_to_index(label):
    """``"YYYY-MM"`` -> months since 1990-01."""
    try:
        year, month = label.strip().split("-")
        y, m = int(year), int(month)
    except (ValueError, AttributeError):
        raise ValueError(f"bad month {label!r}, expected YYYY-MM") from None
    if not 1 <= m <= 12 or len(year) != 4:
        raise ValueError(f"bad month {label!r}, expected YYYY-MM")
    return (y - MONTH_ORIGIN) * 12 + (m - 1)


def index_to_month(index):
    y, m = divmod(int(index), 12)
    return f"{y + MONTH_ORIGIN:04d}-{m + 1:02d}"


@dataclass(frozen=True)
class FeatureMeta:
    source_class: str
    content_class: str

    @property
    def code(self):
        return f"{self.source_class}-{self.content_class}"


@dataclass(frozen=True)
class PanelDataset:
    """Immutable country x month x feature panel.

    ``values`` has shape (countries, months, features) and ``fatalities`` shape
    (countries, months); missing cells are NaN in both.  ``months`` is the
    contiguous integer timeline shared by all countries.
    """

    countries: tuple
    months: np.ndarray
    features: tuple
    feature_meta: dict
    values: np.ndarray
    fatalities: np.ndarray
    present: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        C, T, P = len(self.countries), len(self.months), len(self.features)
        if self.values.shape != (C, T, P) or self.fatalities.shape != (C, T):
            raise SchemaError("panel arrays do not match countries/months/features")
        if T and np.any(np.diff(self.months) != 1):
            raise SchemaError("panel months must be contiguous and increasing")
        if set(self.feature_meta) != set(self.features):
            raise SchemaError("feature_meta must cover exactly the feature columns")
        f = self.fatalities[~np.isnan(self.fatalities)]
        if np.any(f < 0) or np.any(f != np.round(f)):
            raise SchemaError("fatalities must be nonnegative integers")
        present = self.present
        if present is None:
            present = np.zeros((C, T), dtype=bool)
        for arr in (self.values, self.fatalities, present):
            arr.setflags(write=False)
        object.__setattr__(self, "present", present)
        object.__setattr__(self, "_country_index", {c: i for i, c in enumerate(self.countries)})
        object.__setattr__(self, "_feature_index", {f: j for j, f in enumerate(self.features)})

    def country_index(self, country):
        try:
            return self._country_index[country]
        except KeyError:
            raise KeyError(f"country {country!r} not in panel") from None

    def feature_index(self, name):
        return self._feature_index[name]

    def month_position(self, month):
        pos = int(month) - int(self.months[0])
        if not 0 <= pos < len(self.months):
            raise IndexError(f"month {index_to_month(month)} outside panel")
        return pos

    @property
    def last_month(self):
        return int(self.months[-1])

    def country_months(self, country):
        """Months for which the country has a row in the source file."""
        return self.months[self.present[self.country_index(country)]]

    def with_features(self, names, meta, block):
        """New panel with extra feature columns ``block`` of shape (C, T, len(names))."""
        clash = set(names) & set(self.features)
        if clash:
            raise SchemaError(f"feature columns already present: {sorted(clash)[:5]}")
        merged_meta = dict(self.feature_meta)
        merged_meta.update(meta)
        return PanelDataset(
            countries=self.countries, months=self.months.copy(),
            features=self.features + tuple(names), feature_meta=merged_meta,
            values=np.concatenate([self.values, block], axis=2),
            fatalities=self.fatalities.copy(), present=self.present.copy(),
        )

    def drop_features(self, names):
        names = set(names)
        keep = [j for j, f in enumerate(self.features) if f not in names]
        return PanelDataset(
            countries=self.countries, months=self.months.copy(),
            features=tuple(self.features[j] for j in keep),
            feature_meta={self.features[j]: self.feature_meta[self.features[j]] for j in keep},
            values=self.values[:, :, keep].copy(), fatalities=self.fatalities.copy(),
            present=self.present.copy(),
        )

    def truncate(self, through):
        """Panel restricted to months up to and including ``through``."""
        end = self.month_position(through) + 1
        return PanelDataset(
            countries=self.countries, months=self.months[:end].copy(), features=self.features,
            feature_meta=dict(self.feature_meta), values=self.values[:, :end].copy(),
            fatalities=self.fatalities[:, :end].copy(), present=self.present[:, :end].copy(),
        )


def load_metadata(path):
    meta = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != ["feature", "source_class", "content_class"]:
            raise SchemaError(f"{path}: header must be feature,source_class,content_class")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ParseError(f"{path}: expected 3 fields, got {len(row)}", lineno)
            name, source, content = (x.strip() for x in row)
            if source not in SOURCE_CLASSES:
                raise SchemaError(f"{path}:{lineno}: unknown source class {source!r}")
            if content not in CONTENT_CLASSES:
                raise SchemaError(f"{path}:{lineno}: unknown content class {content!r}")
            if name in meta:
                raise SchemaError(f"{path}:{lineno}: duplicate feature {name!r}")
            meta[name] = FeatureMeta(source, content)
    return meta


def _parse_float(text, lineno, column):
    text = text.strip()
    if text == "":
        return math.nan
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"column {column!r}: not a number: {text!r}", lineno) from None
    if not math.isfinite(value):
        raise ParseError(f"column {column!r}: non-finite value {text!r}", lineno)
    return value


def load_panel(path, metadata_path):
    """Read the panel CSV and its feature-metadata sidecar; validate the schema."""
    meta = load_metadata(metadata_path)
    rows = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{path}: empty file")
        header = [h.strip() for h in header]
        if tuple(header[:3]) != ID_COLUMNS:
            raise SchemaError(f"{path}: header must start with country,month,fatalities")
        features = tuple(header[3:])
        if not features:
            raise SchemaError(f"{path}: no feature columns")
        if len(set(features)) != len(features):
            raise SchemaError(f"{path}: duplicate feature columns")
        missing_meta = [f for f in features if f not in meta]
        if missing_meta:
            raise SchemaError(f"features without metadata: {missing_meta[:5]}")
        width = len(header)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise ParseError(f"expected {width} fields, got {len(row)}", lineno)
            country = row[0].strip()
            if not country:
                raise ParseError("empty country", lineno)
            try:
                month = month_to_index(row[1])
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from None
            fat = _parse_float(row[2], lineno, "fatalities")
            if not math.isnan(fat) and (fat < 0 or fat != round(fat)):
                raise ParseError(f"fatalities must be a nonnegative integer, got {row[2]!r}", lineno)
            per_country = rows.setdefault(country, [])
            if per_country and month <= per_country[-1][0]:
                raise SchemaError(f"line {lineno}: months for {country} are not strictly increasing")
            if per_country and month != per_country[-1][0] + 1:
                raise SchemaError(
                    f"line {lineno}: month gap for {country}: "
                    f"{index_to_month(per_country[-1][0])} -> {index_to_month(month)}"
                )
            vals = [_parse_float(x, lineno, features[j]) for j, x in enumerate(row[3:])]
            per_country.append((month, fat, vals))
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    countries = tuple(rows)
    start = min(r[0][0] for r in rows.values())
    end = max(r[-1][0] for r in rows.values())
    months = np.arange(start, end + 1)
    C, T, P = len(countries), len(months), len(features)
    values = np.full((C, T, P), np.nan)
    fatalities = np.full((C, T), np.nan)
    present = np.zeros((C, T), dtype=bool)
    for c, country in enumerate(countries):
        for month, fat, vals in rows[country]:
            t = month - start
            values[c, t] = vals
            fatalities[c, t] = fat
            present[c, t] = True
    return PanelDataset(
        countries=countries, months=months, features=features,
        feature_meta={f: meta[f] for f in features}, values=values, fatalities=fatalities,
        present=present,
    )


def _fmt(x):
    return "" if math.isnan(x) else repr(float(x))


def _fmt_count(x):
    return "" if math.isnan(x) else str(int(x))


def save_panel(panel, path, metadata_path=None):
    """Write the panel (and optionally the metadata sidecar) in the input format.

    Float values are written with ``repr`` so a reload is exact.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(ID_COLUMNS) + list(panel.features))
        for c, country in enumerate(panel.countries):
            for t in np.flatnonzero(panel.present[c]):
                writer.writerow(
                    [country, index_to_month(panel.months[t]), _fmt_count(panel.fatalities[c, t])]
                    + [_fmt(x) for x in panel.values[c, t]]
                )
    if metadata_path is not None:
        save_metadata(panel.feature_meta, metadata_path, order=panel.features)


def save_metadata(meta, path, order=None):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["feature", "source_class", "content_class"])
        for name in order or meta:
            writer.writerow([name, meta[name].source_class, meta[name].content_class])


def validation_report(panel):
    """Row/column counts and missingness profile, JSON-serialisable."""
    n_rows = int(panel.present.sum())
    rows_mask = panel.present
    missing_by_feature = {}
    if n_rows:
        observed = panel.values[rows_mask]
        frac = np.isnan(observed).mean(axis=0)
        missing_by_feature = {f: round(float(v), 6) for f, v in zip(panel.features, frac) if v > 0}
    by_source = {}
    for f in panel.features:
        src = panel.feature_meta[f].source_class
        by_source[src] = by_source.get(src, 0) + 1
    return {
        "rows": n_rows,
        "countries": len(panel.countries),
        "months": len(panel.months),
        "first_month": index_to_month(panel.months[0]) if len(panel.months) else None,
        "last_month": index_to_month(panel.months[-1]) if len(panel.months) else None,
        "features": len(panel.features),
        "features_by_source": dict(sorted(by_source.items())),
        "fatalities_missing": int(np.isnan(panel.fatalities[rows_mask]).sum()),
        "features_with_missing": len(missing_by_feature),
        "missing_fraction": missing_by_feature,
        "rows_by_country": {c: int(panel.present[i].sum()) for i, c in enumerate(panel.countries)},
    }


def write_report(report, path):
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass(frozen=True)
class TargetSeries:
    country: str
    step: int
    months: np.ndarray
    values: np.ndarray

    def __len__(self):
        return len(self.values)


def _check_step(s):
    if int(s) != s or not 2 <= s <= 7:
        raise ValueError(f"step must be an integer in [2, 7], got {s!r}")


def log_delta(f_now, f_later):
    """Change in ln(1 + fatalities) between two months."""
    return np.log1p(f_later) - np.log1p(f_now)


def compute_target(panel, country, s, through=None):
    """Delta ``ln(1 + F[t+s]) - ln(1 + F[t])`` for every t where both exist.

    ``months`` holds t (the origin month).  With ``through`` only realisations
    at or before that month are used.
    """
    _check_step(s)
    c = panel.country_index(country)
    F = panel.fatalities[c]
    if through is not None:
        F = F[: panel.month_position(through) + 1]
    if F.size <= s:
        return TargetSeries(country, s, np.empty(0, dtype=int), np.empty(0))
    now, later = F[:-s], F[s:]
    ok = ~(np.isnan(now) | np.isnan(later))
    months = panel.months[: now.size][ok]
    return TargetSeries(country, s, months, log_delta(now[ok], later[ok]))


@dataclass(frozen=True)
class MissingPolicy:
    """Drop columns missing more than ``drop_threshold`` of the window, then
    forward-fill and back-fill the leading gap."""

    drop_threshold: float = 0.2

    def __post_init__(self):
        if not 0.0 <= self.drop_threshold <= 1.0:
            raise ValueError("drop_threshold must lie in [0, 1]")


def _ffill_bfill(block):
    """Forward-fill along axis 0, then back-fill the leading NaNs of each column."""
    out = block.copy()
    T = out.shape[0]
    idx = np.where(~np.isnan(out), np.arange(T)[:, None], 0)
    np.maximum.accumulate(idx, axis=0, out=idx)
    out = out[idx, np.arange(out.shape[1])]
    first_valid = np.argmax(~np.isnan(out), axis=0)
    lead = np.arange(T)[:, None] < first_valid[None, :]
    out = np.where(lead, out[first_valid, np.arange(out.shape[1])], out)
    return out


@dataclass
class DesignMatrix:
    country: str
    k: int
    columns: tuple
    X: np.ndarray
    y: np.ndarray
    row_months: np.ndarray
    trained_through: int
    x_latest: np.ndarray
    latest_month: int
    dropped: dict

    @property
    def n_rows(self):
        return self.X.shape[0]

    @property
    def target_months(self):
        return self.row_months + self.k


def build_design(panel, country, k, missing_policy=None, through=None, min_months=DEFAULT_MIN_MONTHS,
                 exclude=(), window=None):
    """Pair covariates at month t with the k-month target delta realised at t + k.

    Only information up to ``through`` (default: the last panel month) is used:
    rows satisfy ``t + k <= through``.  The missing-data policy is fitted on the
    covariate months of the window, so imputation never looks past ``through``.
    ``x_latest`` is the imputed covariate row at ``through``, the input for a
    forecast made at that month.  ``window`` keeps only the last ``window``
    rows.  Columns listed in ``exclude`` are masked out.

    Raises ``DegenerateData`` when fewer than ``min_months`` rows are usable.
    """
    _check_step(k)
    policy = missing_policy or MissingPolicy()
    c = panel.country_index(country)
    through = panel.last_month if through is None else int(through)
    end = panel.month_position(through) + 1
    have = np.flatnonzero(panel.present[c, :end])
    if have.size == 0:
        raise DegenerateData(f"{country}: no rows up to {index_to_month(through)}")
    start = have[0]
    raw = panel.values[c, start:end]
    fat = panel.fatalities[c, start:end]
    months = panel.months[start:end]
    T = months.size

    dropped = {}
    keep = []
    excluded = set(exclude)
    miss = np.isnan(raw).mean(axis=0) if T else np.ones(raw.shape[1])
    for j, name in enumerate(panel.features):
        if name in excluded:
            continue
        if miss[j] > policy.drop_threshold:
            dropped[name] = f"missing fraction {miss[j]:.3f} > {policy.drop_threshold}"
        else:
            keep.append(j)
    filled = _ffill_bfill(raw[:, keep]) if keep else np.empty((T, 0))

    row_pos = np.arange(T - k) if T > k else np.empty(0, dtype=int)
    ok = ~(np.isnan(fat[row_pos]) | np.isnan(fat[row_pos + k]))
    row_pos = row_pos[ok]
    if window is not None and window > 0:
        row_pos = row_pos[-window:]
    if row_pos.size < max(min_months, 2):
        raise DegenerateData(f"{country} k={k}: {row_pos.size} usable rows < {min_months}")
    X = filled[row_pos]
    y = log_delta(fat[row_pos], fat[row_pos + k])

    # constant columns carry no information and break standardisation
    spread = np.ptp(X, axis=0) if X.size else np.empty(0)
    cols, final = [], []
    for pos, j in enumerate(keep):
        if spread[pos] > 0:
            cols.append(pos)
            final.append(panel.features[j])
        else:
            dropped[panel.features[j]] = "constant in training window"
    if not final:
        raise DegenerateData(f"{country} k={k}: no informative covariates")
    return DesignMatrix(
        country=country, k=k, columns=tuple(final), X=X[:, cols], y=y,
        row_months=months[row_pos], trained_through=through, x_latest=filled[-1, cols],
        latest_month=int(months[-1]), dropped=dropped,
    )
