"""Back-test scoring: MSE, TADDA-A/B, efficiency ratios and data-ablation losses."""

from __future__ import annotations

import csv
import json
import math
import statistics
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import RangeError
from .forecaster import ForecastConfig, _map, fit_country
from .panel import STEPS, index_to_month, log_delta

METRICS = ("MSE", "TADDA_A", "TADDA_B")
VARIANTS = ("dynenet_full", "dynenet_no_gdelt", "lasso")
AVERAGE = "AVERAGE"
TADDA_B_LEVEL = 0.995


def _pair(y, f):
    y = np.asarray(y, dtype=float).ravel()
    f = np.asarray(f, dtype=float).ravel()
    if y.shape != f.shape:
        raise ValueError(f"length mismatch: {y.size} actuals vs {f.size} forecasts")
    if y.size == 0:
        raise ValueError("need at least one observation")
    return y, f


def mse(y, f):
    y, f = _pair(y, f)
    return float(np.mean((y - f) ** 2))


def mae(y, f):
    y, f = _pair(y, f)
    return float(np.mean(np.abs(y - f)))


def _sign(x, three_way):
    if three_way:
        return np.sign(x)
    return np.where(x >= 0, 1.0, -1.0)


def tadda(y, f, eps, three_way_sign=False):
    """Mean absolute error plus |f| wherever the signs of y and f differ and
    the miss exceeds ``eps``.  sign(0) counts as positive unless
    ``three_way_sign``."""
    y, f = _pair(y, f)
    if eps < 0 or math.isnan(eps):
        raise ValueError("eps must be nonnegative")
    err = np.abs(y - f)
    wrong_way = _sign(y, three_way_sign) != _sign(f, three_way_sign)
    penalty = np.abs(f) * (wrong_way & (err > eps))
    return float(np.mean(err + penalty))


def _deltas(actuals):
    t = np.asarray(getattr(actuals, "values", actuals), dtype=float).ravel()
    if t.size < 2:
        raise ValueError("need at least two observed target deltas")
    return t


def tadda_epsilon_a(actuals):
    """Sample standard deviation of the realised k-step deltas."""
    return float(np.std(_deltas(actuals), ddof=1))


def z_quantile(level=TADDA_B_LEVEL):
    return abs(statistics.NormalDist().inv_cdf(level))


def tadda_epsilon_b(actuals, level=TADDA_B_LEVEL):
    """|z_level| * sd / sqrt(n): half-width of a confidence band on the mean delta."""
    t = _deltas(actuals)
    return z_quantile(level) * float(np.std(t, ddof=1)) / math.sqrt(t.size)


@dataclass(frozen=True)
class MetricValue:
    metric: str
    step: int
    country: str
    value: float
    variant: str = ""

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")
        if not self.value >= 0:
            raise ValueError("metric values are nonnegative")


def _value(em):
    return em.value if isinstance(em, MetricValue) else float(em)


def _check_same(a, b):
    if isinstance(a, MetricValue) and isinstance(b, MetricValue):
        if (a.metric, a.step, a.country) != (b.metric, b.step, b.country):
            raise ValueError(
                f"cannot compare {a.metric}/s{a.step}/{a.country} with {b.metric}/s{b.step}/{b.country}"
            )


def efficiency_ratio(em_a, em_b):
    """em_a / em_b; below 1 favours model a.  0/0 is 1, x/0 is +inf."""
    _check_same(em_a, em_b)
    a, b = _value(em_a), _value(em_b)
    if b == 0:
        return 1.0 if a == 0 else math.inf
    return a / b


def data_ablation_loss(em_full, em_ablated):
    """em_full - em_ablated; negative when dropping the data hurts."""
    _check_same(em_full, em_ablated)
    return _value(em_full) - _value(em_ablated)


def default_variants(config=None, panel=None, gdelt_prefix="gdelt_"):
    """The three model variants compared in a back-test, keyed by name."""
    config = config or ForecastConfig()
    gdelt = ()
    if panel is not None:
        gdelt = tuple(f for f in panel.features if f.startswith(gdelt_prefix))
    return {
        "dynenet_full": config,
        "dynenet_no_gdelt": replace(config, exclude=tuple(config.exclude) + gdelt),
        "lasso": replace(config, alpha=1.0),
    }


@dataclass(frozen=True)
class Prediction:
    variant: str
    country: str
    step: int
    month: int  # target month
    origin: int  # month whose covariates feed the forecast
    actual: float
    predicted: float
    method: str
    trained_through: int
    last_training_target: int  # latest target month seen in training, -1 if none


@dataclass
class EvaluationReport:
    window: tuple
    steps: tuple
    variants: tuple
    predictions: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)  # (variant, country, step, metric) -> MetricValue
    epsilons: dict = field(default_factory=dict)  # step -> {"TADDA_A": eps, "TADDA_B": eps}
    excluded: dict = field(default_factory=dict)
    countries: tuple = ()

    def value(self, variant, country, step, metric):
        return self.metrics[(variant, country, step, metric)]

    def derived(self, reference="lasso", full="dynenet_full", ablated="dynenet_no_gdelt"):
        """Rows of (country, step, metric, efficiency_ratio, dal) recomputed from stored metrics."""
        rows = []
        for country in self.countries + (AVERAGE,):
            for step in self.steps:
                for metric in METRICS:
                    key = (country, step, metric)
                    a = self.metrics.get((full,) + key)
                    if a is None:
                        continue
                    b = self.metrics.get((reference,) + key)
                    c = self.metrics.get((ablated,) + key)
                    rows.append({
                        "country": country, "step": step, "metric": metric,
                        "efficiency_ratio": efficiency_ratio(a, b) if b is not None else math.nan,
                        "dal": data_ablation_loss(a, c) if c is not None else math.nan,
                    })
        return rows

    def summary(self):
        """Nested dict laid out like the published comparison tables."""
        derived = self.derived()
        avg = [r for r in derived if r["country"] == AVERAGE]
        out = {
            "window": [index_to_month(self.window[0]), index_to_month(self.window[1])],
            "variants": list(self.variants),
            "countries": list(self.countries),
            "excluded": self.excluded,
            "epsilon": {str(s): e for s, e in sorted(self.epsilons.items())},
            "efficiency_ratio_full_vs_lasso": {
                m: {f"s{r['step']}": _finite(r["efficiency_ratio"]) for r in avg if r["metric"] == m} for m in METRICS
            },
            "gdelt_data_ablation_loss": {
                m: {f"s{r['step']}": _finite(r["dal"]) for r in avg if r["metric"] == m} for m in METRICS
            },
        }
        last = max(self.steps)
        table = {}
        for country in self.countries:
            row = {}
            for variant in self.variants:
                mv = self.metrics.get((variant, country, last, "MSE"))
                if mv is not None:
                    row[f"{variant}_mse"] = mv.value
            if {"dynenet_full_mse", "dynenet_no_gdelt_mse"} <= row.keys():
                row["dal"] = row["dynenet_full_mse"] - row["dynenet_no_gdelt_mse"]
            if {"dynenet_full_mse", "lasso_mse"} <= row.keys():
                row["ratio_full_lasso"] = _finite(efficiency_ratio(row["dynenet_full_mse"], row["lasso_mse"]))
            if {"dynenet_no_gdelt_mse", "lasso_mse"} <= row.keys():
                row["ratio_no_gdelt_lasso"] = _finite(efficiency_ratio(row["dynenet_no_gdelt_mse"], row["lasso_mse"]))
            table[country] = row
        out[f"country_mse_step{last}"] = table
        return out


def _finite(x):
    # JSON has no inf/nan
    return x if math.isfinite(x) else None


def _cell(args):
    panel, variant, config, country, k, month = args
    origin = month - k
    c = panel.country_index(country)
    F = panel.fatalities[c]
    f_origin, f_target = F[panel.month_position(origin)], F[panel.month_position(month)]
    if math.isnan(f_origin) or math.isnan(f_target):
        return None
    model = fit_country(panel, country, k, config, through=origin)
    design = model.design
    last_target = int(design.target_months.max()) if design is not None else -1
    return Prediction(
        variant=variant, country=country, step=k, month=month, origin=origin,
        actual=float(log_delta(f_origin, f_target)), predicted=model.predict_latest(),
        method=model.method, trained_through=model.trained_through, last_training_target=last_target,
    )


def backtest(panel, window, variants=None, steps=STEPS, config=None, jobs=1, countries=None):
    """Rolling-origin back-test over target months ``window = (start, end)``.

    Every (variant, country, step, month) cell trains only on data up to the
    forecast origin ``month - step`` and scores the delta realised at
    ``month``.  Metrics are averaged over months per country, then across
    countries (``AVERAGE``).  TADDA tolerances pool the realised deltas of all
    countries and months per step.
    """
    start, end = (int(w) for w in window)
    config = config or ForecastConfig()
    if variants is None:
        variants = default_variants(config, panel)
    steps = tuple(steps)
    if start > end:
        raise RangeError("back-test window start after end")
    first, last = int(panel.months[0]), panel.last_month
    if start < first or end > last:
        raise RangeError(
            f"window {index_to_month(start)}..{index_to_month(end)} outside panel "
            f"{index_to_month(first)}..{index_to_month(last)}"
        )
    earliest_origin = start - max(steps)
    if earliest_origin - first < config.min_months:
        raise RangeError(
            f"window start {index_to_month(start)} leaves fewer than {config.min_months} months of training history"
        )

    report = EvaluationReport(window=(start, end), steps=steps, variants=tuple(variants))
    todo = []
    for country in countries or panel.countries:
        c = panel.country_index(country)
        history = int(panel.present[c, : panel.month_position(earliest_origin) + 1].sum())
        if history < config.min_months:
            report.excluded[country] = f"{history} months of history before the window < {config.min_months}"
        else:
            todo.append(country)

    cells = [
        (panel, name, cfg, country, k, month)
        for name, cfg in variants.items()
        for country in todo
        for k in steps
        for month in range(start, end + 1)
    ]
    report.predictions = [p for p in _map(_cell, cells, jobs) if p is not None]
    scored = {p.country for p in report.predictions}
    for country in todo:
        if country not in scored:
            report.excluded[country] = "no month in the window with observed fatalities at origin and target"
    report.countries = tuple(c for c in todo if c in scored)
    _score(report)
    return report


def _score(report):
    preds = report.predictions
    first_variant = report.variants[0] if report.variants else None
    for k in report.steps:
        pool = [p.actual for p in preds if p.step == k and p.variant == first_variant]
        if len(pool) >= 2:
            report.epsilons[k] = {"TADDA_A": tadda_epsilon_a(pool), "TADDA_B": tadda_epsilon_b(pool)}
        else:
            report.epsilons[k] = {"TADDA_A": 0.0, "TADDA_B": 0.0}
    groups = {}
    for p in preds:
        groups.setdefault((p.variant, p.country, p.step), []).append(p)
    for variant in report.variants:
        for k in report.steps:
            per_metric = {m: [] for m in METRICS}
            for country in report.countries:
                cell = groups.get((variant, country, k))
                if not cell:
                    continue
                y = [p.actual for p in cell]
                f = [p.predicted for p in cell]
                vals = {
                    "MSE": mse(y, f),
                    "TADDA_A": tadda(y, f, report.epsilons[k]["TADDA_A"]),
                    "TADDA_B": tadda(y, f, report.epsilons[k]["TADDA_B"]),
                }
                for m, v in vals.items():
                    report.metrics[(variant, country, k, m)] = MetricValue(m, k, country, v, variant)
                    per_metric[m].append(v)
            for m, vs in per_metric.items():
                if vs:
                    report.metrics[(variant, AVERAGE, k, m)] = MetricValue(m, k, AVERAGE, float(np.mean(vs)), variant)


def write_metrics(report, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variant", "country", "step", "metric", "value"])
        for (variant, country, step, metric), mv in report.metrics.items():
            w.writerow([variant, country, step, metric, repr(mv.value)])


def write_derived(report, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["country", "step", "metric", "efficiency_ratio", "dal"])
        for r in report.derived():
            w.writerow([r["country"], r["step"], r["metric"], repr(r["efficiency_ratio"]), repr(r["dal"])])


def write_predictions(report, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variant", "country", "step", "month", "origin", "actual", "predicted", "method"])
        for p in report.predictions:
            w.writerow([
                p.variant, p.country, p.step, index_to_month(p.month), index_to_month(p.origin),
                repr(p.actual), repr(p.predicted), p.method,
            ])


def write_summary(report, path):
    with open(path, "w") as fh:
        json.dump(report.summary(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_metrics(path):
    """Reload a metrics CSV into ``{(variant, country, step, metric): MetricValue}``."""
    out = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            step = int(row["step"])
            out[(row["variant"], row["country"], step, row["metric"])] = MetricValue(
                row["metric"], step, row["country"], float(row["value"]), row["variant"]
            )
    return out
