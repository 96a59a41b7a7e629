"""Synthetic panels with a planted generating model, plus a GDELT-layout event file.

Each planted country has a two-dimensional driver state rotating at angular
frequency omega, z[t] = (cos(omega t + phi), sin(omega t + phi)), stored
(affinely rescaled) in two monthly covariate columns.  Log fatalities follow

    L[t+1] = L[t] + h . z[t]
    F[t]   = round(exp(L[t] + e[t]) - 1),   e[t] ~ N(0, sigma^2 / 2)

so the k-step log delta is exactly beta_k . z[t] plus noise of variance
sigma^2, with beta_k = (I + R + ... + R^(k-1))^T h for the rotation R.  The
direction of h and the omega range keep beta_k[0] > 0 and beta_k[1] < 0 for
every k in 2..7.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass

import numpy as np

from .events import CATEGORIES
from .panel import (
    FeatureMeta, PanelDataset, STEPS, index_to_month, month_to_index, save_panel,
)

# column counts per source class of the base panel (653 in total)
SOURCE_COUNTS = {"GED": 48, "ACLED": 8, "WDI": 363, "VDEM": 129, "FVP": 51, "REIGN": 49, "ICGCW": 5}
CONTENT_OF = {
    "GED": "violent-event", "ACLED": "violent-event", "WDI": "structural", "VDEM": "political",
    "FVP": "political", "REIGN": "political", "ICGCW": "political",
}
COUNTRY_CODES = (
    "AO BF BI BJ CD CF CG CI CM DJ DZ EG ER ET GH GM KE LS LY ML MR MW MZ NA NE NG RW SD SN SO "
    "SS TD TN UG ZA ZM ZW TZ TG SL LR GN GW GA GQ BW SZ MG MA CV KM ST"
).split()
N_EVENT_COLUMNS = 58


@dataclass(frozen=True)
class FixtureSpec:
    n_countries: int = 30  # planted countries
    n_months: int = 120
    start: str = "2010-01"
    n_zero: int = 2  # constant zero fatalities -> fallback
    n_short: int = 1  # only the last ``short_months`` rows -> fallback
    n_skipped: int = 1  # rows stop before the last month -> skipped
    short_months: int = 10
    omega_min: float = 2 * math.pi / 30  # cycle periods of 20-30 months
    omega_max: float = 2 * math.pi / 20
    h_min: float = 0.06
    h_max: float = 0.12
    h_angle: float = -math.radians(15)
    sigma: float = 0.1
    events_per_month: float = 6.0
    n_malformed: int = 5
    with_events: bool = True

    def __post_init__(self):
        total = self.n_countries + self.n_zero + self.n_short + self.n_skipped
        if total > len(COUNTRY_CODES):
            raise ValueError(f"at most {len(COUNTRY_CODES)} countries")
        if not 0 < self.omega_min <= self.omega_max:
            raise ValueError("need 0 < omega_min <= omega_max")
        # beta_k turns monotonically with k and omega; checking the corners suffices
        for omega in (self.omega_min, self.omega_max):
            for k in (min(STEPS), max(STEPS)):
                b = step_coefficients(_unit(self.h_angle), omega, k)
                if not (b[0] > 0 and b[1] < 0):
                    raise ValueError(f"h_angle/omega give a sign flip at step {k}")
        if self.n_months < 12:
            raise ValueError("n_months must be >= 12")


def base_features():
    names, meta = [], {}
    for src, n in SOURCE_COUNTS.items():
        for i in range(n):
            name = f"{src.lower()}_{i:03d}"
            names.append(name)
            meta[name] = FeatureMeta(src, CONTENT_OF[src])
    return names, meta


def driver_candidates(names):
    # monthly, fully observed continuous columns
    return [n for n in names if n.startswith(("ged_", "acled_"))][:48]


def _unit(angle):
    return np.array([math.cos(angle), math.sin(angle)])


def rotation(omega):
    c, s = math.cos(omega), math.sin(omega)
    return np.array([[c, -s], [s, c]])


def step_coefficients(h, omega, k):
    """beta_k with delta_k(t) = beta_k . z[t] (noise aside)."""
    R = rotation(omega)
    acc, P = np.zeros((2, 2)), np.eye(2)
    for _ in range(k):
        acc += P
        P = R @ P
    return acc.T @ np.asarray(h, dtype=float)


def _yearly(rng, months, n, drift=0.1):
    years = (months // 12) - (months[0] // 12)
    steps = rng.standard_normal((years.max() + 1, n)) * drift
    levels = rng.standard_normal(n) + np.cumsum(steps, axis=0)
    return levels[years]


def _covariates(rng, months, names):
    """One country's (T, P) covariate block; NaN marks missing."""
    T = len(months)
    block = np.empty((T, len(names)))
    groups = {}
    for j, name in enumerate(names):
        groups.setdefault(name.split("_")[0], []).append(j)
    for prefix, cols in groups.items():
        n = len(cols)
        if prefix in ("ged", "acled"):
            rhos = rng.uniform(0.3, 0.95, n)
            vals = np.empty((T, n))
            vals[0] = rng.standard_normal(n)
            for t in range(1, T):
                vals[t] = rhos * vals[t - 1] + rng.standard_normal(n) * np.sqrt(1 - rhos ** 2)
        elif prefix == "icgcw":
            vals = (rng.random((T, n)) < 0.15).astype(float)
        elif prefix == "reign":
            # regime-type indicators: rare switches, often constant
            vals = np.cumsum(rng.random((T, n)) < 0.01, axis=0).astype(float)
        else:
            vals = _yearly(rng, months, n, drift=0.2 if prefix == "wdi" else 0.05)
        block[:, cols] = vals * rng.uniform(0.5, 20, n) + rng.uniform(-50, 50, n)
    # sparse missingness: a few columns lightly gappy (imputed), a few heavily (dropped)
    P = len(names)
    light = rng.choice(P, size=P // 20, replace=False)
    for j in light:
        block[rng.random(T) < 0.1, j] = np.nan
    heavy = rng.choice(P, size=P // 50, replace=False)
    for j in heavy:
        block[rng.random(T) < 0.4, j] = np.nan
    return np.round(block, 4), light, heavy


def _planted_fatalities(rng, spec, T):
    omega = float(rng.uniform(spec.omega_min, spec.omega_max))
    phase = float(rng.uniform(0, 2 * math.pi))
    size = float(rng.uniform(spec.h_min, spec.h_max))
    h = size * np.array([math.cos(spec.h_angle), math.sin(spec.h_angle)])
    angle = omega * np.arange(T) + phase
    z = np.column_stack([np.cos(angle), np.sin(angle)])
    L = np.concatenate([[0.0], np.cumsum(z[:-1] @ h)])
    L = L + spec.sigma / math.sqrt(2) * rng.standard_normal(T)
    L = L - L.min() + 5.0
    params = {"omega": omega, "phase": phase, "h": [float(h[0]), float(h[1])]}
    return z, np.round(np.expm1(L)), params


def _quad_of(cat):
    c = int(cat)
    return 1 if c <= 5 else 2 if c <= 8 else 3 if c <= 13 else 4


# rough Goldstein centre per CAMEO root: cooperative positive, conflictual negative
_GOLDSTEIN_CENTRE = {c: g for c, g in zip(CATEGORIES, (
    1.0, 3.0, 4.0, 1.0, 3.5, 6.0, 7.0, 5.0, -2.0, -2.0, -2.0, -4.0, -6.0, -6.5, -7.0, -5.0, -7.0, -9.0, -10.0, -10.0,
))}


def _event_lines(rng, spec, countries, months):
    lines = []
    counts = {"root_unique": 0, "non_root": 0, "duplicates": 0, "malformed": 0}
    next_id = 100000000
    cats = np.array(CATEGORIES)
    for country in countries:
        for m in months:
            n = rng.poisson(spec.events_per_month)
            label = index_to_month(m).replace("-", "")
            for _ in range(n):
                cat = str(rng.choice(cats))
                g = float(np.clip(round(_GOLDSTEIN_CENTRE[cat] + rng.normal(0, 1.0), 1), -10, 10))
                day = int(rng.integers(1, 29))
                fields = [""] * N_EVENT_COLUMNS
                fields[0] = str(next_id)
                fields[1] = f"{label}{day:02d}"
                root = rng.random() >= 0.2
                fields[25] = "1" if root else "0"
                fields[26] = f"{cat}0"
                fields[27] = cat
                fields[28] = cat
                fields[29] = str(_quad_of(cat))
                fields[30] = repr(g)
                fields[31] = str(1 + int(rng.poisson(3)))
                fields[51] = country
                line = "\t".join(fields)
                lines.append(line)
                next_id += 1
                if root:
                    counts["root_unique"] += 1
                else:
                    counts["non_root"] += 1
                if rng.random() < 0.02:
                    lines.append(line)
                    counts["duplicates"] += 1
    # corrupt a few rows in place of extra rows, at deterministic positions
    bad_kinds = ("quad", "date", "goldstein", "root", "short")
    for i in range(spec.n_malformed):
        fields = [""] * N_EVENT_COLUMNS
        fields[0], fields[1], fields[25], fields[28] = str(next_id + i), "20150115", "1", "14"
        fields[29], fields[30], fields[31], fields[51] = "4", "-6.5", "3", countries[0]
        kind = bad_kinds[i % len(bad_kinds)]
        if kind == "quad":
            fields[29] = "5"
        elif kind == "date":
            fields[1] = "2015-13-40"
        elif kind == "goldstein":
            fields[30] = "12.5"
        elif kind == "root":
            fields[28] = "23"
        else:
            fields = fields[:20]
        pos = int(rng.integers(0, len(lines) + 1))
        lines.insert(pos, "\t".join(fields))
        counts["malformed"] += 1
    counts["lines"] = len(lines)
    return lines, counts


def make_fixtures(out_dir, seed=1, spec=None):
    """Write panel.csv, metadata.csv, events.tsv and truth.json into ``out_dir``.

    Returns the ground-truth dict (also written to truth.json).
    """
    spec = spec or FixtureSpec()
    os.makedirs(out_dir, exist_ok=True)
    root = np.random.SeedSequence(seed)
    cov_seq, fat_seq, ev_seq = root.spawn(3)
    names, meta = base_features()
    start = month_to_index(spec.start)
    months = np.arange(start, start + spec.n_months)
    T = len(months)

    roles = (["planted"] * spec.n_countries + ["zero"] * spec.n_zero + ["short"] * spec.n_short
             + ["skipped"] * spec.n_skipped)
    countries = tuple(COUNTRY_CODES[: len(roles)])
    candidates = driver_candidates(names)
    col = {n: j for j, n in enumerate(names)}

    C, P = len(countries), len(names)
    values = np.full((C, T, P), np.nan)
    fatalities = np.full((C, T), np.nan)
    present = np.zeros((C, T), dtype=bool)
    truth_countries = {}
    cov_rngs = [np.random.default_rng(s) for s in cov_seq.spawn(C)]
    fat_rngs = [np.random.default_rng(s) for s in fat_seq.spawn(C)]
    for c, (country, role) in enumerate(zip(countries, roles)):
        rng = cov_rngs[c]
        block, light, heavy = _covariates(rng, months, names)
        entry = {"role": role}
        frng = fat_rngs[c]
        if role == "planted":
            d1, d2 = (str(x) for x in frng.choice(candidates, size=2, replace=False))
            D, F, params = _planted_fatalities(frng, spec, T)
            transforms = {}
            for name, series in ((d1, D[:, 0]), (d2, D[:, 1])):
                scale = float(np.round(frng.uniform(0.5, 5.0), 3))
                offset = float(np.round(frng.uniform(-10, 10), 3))
                block[:, col[name]] = np.round(offset + scale * series, 6)
                transforms[name] = {"offset": offset, "scale": scale}
            entry.update(drivers=[d1, d2], signs={d1: 1, d2: -1}, transforms=transforms, **params)
            rows = np.ones(T, dtype=bool)
        elif role == "zero":
            F = np.zeros(T)
            rows = np.ones(T, dtype=bool)
        elif role == "short":
            F = np.round(np.expm1(3 + 0.3 * frng.standard_normal(T)))
            rows = np.arange(T) >= T - spec.short_months
        else:
            F = np.round(np.expm1(3 + 0.3 * frng.standard_normal(T)))
            rows = np.arange(T) < T - 3
        values[c][rows] = block[rows]
        fatalities[c][rows] = F[rows]
        present[c] = rows
        truth_countries[country] = entry

    panel = PanelDataset(
        countries=countries, months=months, features=tuple(names), feature_meta=meta,
        values=values, fatalities=fatalities, present=present,
    )
    panel_path = os.path.join(out_dir, "panel.csv")
    meta_path = os.path.join(out_dir, "metadata.csv")
    save_panel(panel, panel_path, meta_path)

    truth = {
        "seed": seed,
        "spec": asdict(spec),
        "countries": truth_countries,
        "months": [index_to_month(months[0]), index_to_month(months[-1])],
        "n_base_features": len(names),
        "noise_variance": spec.sigma ** 2,
        "expected_counts": {
            "dynenet": spec.n_countries, "fallback": spec.n_zero + spec.n_short, "skipped": spec.n_skipped,
        },
        "files": {"panel": "panel.csv", "metadata": "metadata.csv"},
    }
    if spec.with_events:
        erng = np.random.default_rng(ev_seq)
        lines, counts = _event_lines(erng, spec, countries, months)
        with open(os.path.join(out_dir, "events.tsv"), "w") as fh:
            fh.write("\n".join(lines) + "\n")
        truth["events"] = counts
        truth["files"]["events"] = "events.tsv"
    with open(os.path.join(out_dir, "truth.json"), "w") as fh:
        json.dump(truth, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return truth


def load_truth(path):
    with open(path) as fh:
        return json.load(fh)


def oracle_delta(panel, truth, country, k, origin):
    """Noise-free k-step delta implied by the planted drivers at ``origin``."""
    entry = truth["countries"][country]
    if entry["role"] != "planted":
        raise ValueError(f"{country} has no planted model")
    c, t = panel.country_index(country), panel.month_position(origin)
    z = []
    for name in entry["drivers"]:
        tr = entry["transforms"][name]
        z.append((panel.values[c, t, panel.feature_index(name)] - tr["offset"]) / tr["scale"])
    return float(step_coefficients(entry["h"], entry["omega"], k) @ np.array(z))
