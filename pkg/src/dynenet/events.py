"""GDELT-style event records -> 100 monthly index series per country.

For each CAMEO macro-category (01..20) and country-month five indexes are
summed over root, de-duplicated events:

    m    NumMentions
    e    1 per event
    eg   Goldstein score g
    eq   QuadClass weight q
    egq  g * q

Goldstein scores come on a 0.1 grid, so sums are kept as exact integer
tenths; adding index sets built from disjoint events then reproduces the
index of their union bit for bit.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import RangeError, SchemaError
from .panel import FeatureMeta, index_to_month, month_to_index

CATEGORIES = tuple(f"{c:02d}" for c in range(1, 21))
WEIGHTS = ("m", "e", "eg", "eq", "egq")
# CAMEO 18 assault, 19 fight, 20 unconventional mass violence
VIOLENT_CATEGORIES = frozenset({"18", "19", "20"})
QUAD_SCHEMES = ("direct", "swapped", "conflict_only")


def column_name(category, weight):
    return f"gdelt_{category}_{weight}"


INDEX_COLUMNS = tuple(column_name(c, w) for c in CATEGORIES for w in WEIGHTS)


@dataclass(frozen=True)
class EventColumns:
    """Zero-based column positions in the tab-separated export.

    Defaults follow the GDELT 1.0 daily event files (58 columns).  GDELT's
    geographic country codes are FIPS 10-4; map them to the panel's codes
    upstream if they differ.
    """

    event_id: int = 0
    date: int = 1
    is_root: int = 25
    root_code: int = 28
    quad_class: int = 29
    goldstein: int = 30
    num_mentions: int = 31
    country: int = 51

    @property
    def width(self):
        return max(self.__dict__.values()) + 1


@dataclass(frozen=True)
class EventRecord:
    global_event_id: str
    date: dt.date
    country: str
    root_code: str
    goldstein: float
    quad_class: int
    num_mentions: int
    is_root_event: bool

    @property
    def month(self):
        return (self.date.year - 1990) * 12 + self.date.month - 1


@dataclass
class ParseResult:
    records: list
    rejects: list = field(default_factory=list)  # (line number, reason)

    @property
    def n_rejected(self):
        return len(self.rejects)

    def reject_counts(self):
        out = {}
        for _, reason in self.rejects:
            out[reason] = out.get(reason, 0) + 1
        return out


def _parse_row(fields, cols):
    if len(fields) < cols.width:
        return None, "too few columns"
    event_id = fields[cols.event_id].strip()
    if not event_id:
        return None, "missing event id"
    try:
        date = dt.datetime.strptime(fields[cols.date].strip(), "%Y%m%d").date()
    except ValueError:
        return None, "unparseable date"
    country = fields[cols.country].strip()
    if not country:
        return None, "missing country"
    try:
        root = int(fields[cols.root_code].strip())
    except ValueError:
        return None, "root_code out of range"
    if not 1 <= root <= 20:
        return None, "root_code out of range"
    try:
        g = float(fields[cols.goldstein])
    except ValueError:
        return None, "goldstein out of range"
    if not (math.isfinite(g) and -10.0 <= g <= 10.0):
        return None, "goldstein out of range"
    if abs(g * 10 - round(g * 10)) > 1e-6:
        return None, "goldstein not on 0.1 grid"
    try:
        q = int(fields[cols.quad_class].strip())
    except ValueError:
        return None, "quad_class out of range"
    if q not in (1, 2, 3, 4):
        return None, "quad_class out of range"
    try:
        mentions = int(fields[cols.num_mentions].strip())
    except ValueError:
        return None, "num_mentions out of range"
    if mentions < 1:
        return None, "num_mentions out of range"
    flag = fields[cols.is_root].strip()
    if flag not in ("0", "1"):
        return None, "is_root_event not 0/1"
    return EventRecord(event_id, date, country, f"{root:02d}", g, q, mentions, flag == "1"), None


def parse_event_records(stream, columns=None):
    """Parse a tab-separated event export.

    Invalid rows are not dropped silently: each appears in ``rejects`` with its
    line number and reason.
    """
    cols = columns or EventColumns()
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    result = ParseResult(records=[])
    for lineno, line in enumerate(stream, start=1):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        record, reason = _parse_row(line.split("\t"), cols)
        if record is None:
            result.rejects.append((lineno, reason))
        else:
            result.records.append(record)
    return result


def filter_root_dedupe(records):
    """Keep root events only; of repeated ``global_event_id`` keep the first."""
    seen = set()
    out = []
    for rec in records:
        if not rec.is_root_event or rec.global_event_id in seen:
            continue
        seen.add(rec.global_event_id)
        out.append(rec)
    return out


def quad_weight(q, scheme="direct"):
    if scheme == "direct":
        return q
    if scheme == "swapped":
        return {1: 2, 2: 1}.get(q, q)
    if scheme == "conflict_only":
        return q if q >= 3 else 0
    raise ValueError(f"unknown quad_weight_scheme {scheme!r}; expected one of {QUAD_SCHEMES}")


@dataclass
class EventIndexSet:
    """Sparse (country, month) -> (20, 5) array of index values.

    Country-months without events are implicit zeros.
    """

    cells: dict = field(default_factory=dict)
    quad_weight_scheme: str = "direct"

    def get(self, country, month):
        cell = self.cells.get((country, int(month)))
        return np.zeros((len(CATEGORIES), len(WEIGHTS))) if cell is None else cell.copy()

    @property
    def countries(self):
        return sorted({c for c, _ in self.cells})

    def month_range(self):
        months = [m for _, m in self.cells]
        return (min(months), max(months)) if months else None

    def __add__(self, other):
        if self.quad_weight_scheme != other.quad_weight_scheme:
            raise ValueError("cannot add index sets built with different QuadClass schemes")
        acc = {k: _tenths(v) for k, v in self.cells.items()}
        for key, cell in other.cells.items():
            acc[key] = acc[key] + _tenths(cell) if key in acc else _tenths(cell)
        return EventIndexSet({k: v / 10 for k, v in acc.items()}, self.quad_weight_scheme)

    def series(self, country, months):
        """Dense (len(months), 100) block in ``INDEX_COLUMNS`` order."""
        return np.stack([self.get(country, m).ravel() for m in months]) if len(months) else np.empty((0, 100))

    def to_csv(self, path, months=None):
        """Write ``country,month,gdelt_<cat>_<weight>...``; zero rows are written
        for event-free months inside ``months`` (default: overall range)."""
        if months is None:
            rng = self.month_range()
            months = range(rng[0], rng[1] + 1) if rng else range(0)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["country", "month"] + list(INDEX_COLUMNS))
            for country in self.countries:
                for m in months:
                    writer.writerow([country, index_to_month(m)] + [repr(float(x)) for x in self.get(country, m).ravel()])


def _tenths(cell):
    return np.rint(cell * 10).astype(np.int64)


def build_monthly_indexes(records, quad_weight_scheme="direct"):
    """Aggregate root, de-duplicated records into monthly index sums."""
    acc = {}
    for rec in records:
        key = (rec.country, rec.month)
        cell = acc.get(key)
        if cell is None:
            cell = acc[key] = np.zeros((len(CATEGORIES), len(WEIGHTS)), dtype=np.int64)
        q = quad_weight(rec.quad_class, quad_weight_scheme)
        g = round(rec.goldstein * 10)
        row = cell[int(rec.root_code) - 1]
        row[0] += 10 * rec.num_mentions
        row[1] += 10
        row[2] += g
        row[3] += 10 * q
        row[4] += g * q
    return EventIndexSet({k: v / 10 for k, v in acc.items()}, quad_weight_scheme)


def load_index_csv(path, quad_weight_scheme="direct"):
    cells = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != ("country", "month") + INDEX_COLUMNS:
            raise SchemaError(f"{path}: unexpected header for event index CSV")
        for row in reader:
            vals = np.array([float(x) for x in row[2:]]).reshape(len(CATEGORIES), len(WEIGHTS))
            if np.any(vals):
                cells[(row[0], month_to_index(row[1]))] = vals
    return EventIndexSet(cells, quad_weight_scheme)


def index_feature_meta():
    return {
        column_name(c, w): FeatureMeta("GDELT", "violent-event" if c in VIOLENT_CATEGORIES else "nonviolent-event")
        for c in CATEGORIES
        for w in WEIGHTS
    }


def merge_into_panel(panel, indexes):
    """Append the 100 ``gdelt_<cat>_<weight>`` columns to the panel.

    Country-months with no events get 0, not missing.
    """
    for country in indexes.countries:
        if country not in panel.countries:
            raise RangeError(f"event indexes for country {country!r} absent from panel")
    rng = indexes.month_range()
    if rng is not None and len(panel.months) and (rng[0] < panel.months[0] or rng[1] > panel.months[-1]):
        raise RangeError(
            f"event months {index_to_month(rng[0])}..{index_to_month(rng[1])} outside panel range "
            f"{index_to_month(panel.months[0])}..{index_to_month(panel.months[-1])}"
        )
    block = np.stack([indexes.series(country, panel.months) for country in panel.countries])
    meta = index_feature_meta()
    return panel.with_features(INDEX_COLUMNS, meta, block)
