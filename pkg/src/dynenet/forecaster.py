"""Per-country, per-step DynENet fitting with the running-mean fallback."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import elasticnet as en
from .errors import DegenerateColumn, DegenerateData
from .panel import STEPS, MissingPolicy, build_design, compute_target, index_to_month

logger = logging.getLogger(__name__)

DYNENET = "dynenet"
RUNNING_MEAN = "running_mean"


@dataclass(frozen=True)
class ForecastConfig:
    alpha: float = 0.5
    n_lambda: int = en.DEFAULT_N_LAMBDA
    lambda_ratio: float = en.DEFAULT_RATIO
    deviance_floor: float = 0.5
    cv_folds: int = 5
    min_months: int = 24
    missing_threshold: float = 0.2
    tolerance: float = en.DEFAULT_TOLERANCE
    max_sweeps: int = en.DEFAULT_MAX_SWEEPS
    # target variance below this over the training rows routes to fallback
    variance_floor: float = 1e-10
    exclude: tuple = ()

    def __post_init__(self):
        if not 0 <= self.alpha <= 1:
            raise ValueError("alpha must lie in [0, 1]")
        if self.cv_folds < 2:
            raise ValueError("cv_folds must be >= 2")
        if self.min_months < self.cv_folds + 1:
            raise ValueError("min_months must exceed cv_folds")
        if not 0 <= self.deviance_floor <= 1:
            raise ValueError("deviance_floor must lie in [0, 1]")

    @property
    def missing_policy(self):
        return MissingPolicy(self.missing_threshold)


@dataclass(frozen=True)
class Fallback:
    reason: str
    prediction: float
    n_history: int


@dataclass
class CountryModel:
    country: str
    k: int
    trained_through: int
    fit: en.FitResult | None = None
    fallback: Fallback | None = None
    selected: list = field(default_factory=list)
    design: object = None

    def __post_init__(self):
        if (self.fit is None) == (self.fallback is None):
            raise ValueError("exactly one of fit / fallback must be set")

    @property
    def method(self):
        return DYNENET if self.fit is not None else RUNNING_MEAN

    def predict_latest(self):
        if self.fallback is not None:
            return self.fallback.prediction
        return float(self.fit.predict(self.design.x_latest[None, :])[0])

    def summary(self):
        out = {
            "country": self.country,
            "step": self.k,
            "method": self.method,
            "trained_through": index_to_month(self.trained_through),
            "selected": {name: coef for name, coef in self.selected},
        }
        if self.fit is not None:
            out.update(
                lambda_star=self.fit.lambda_star, deviance=self.fit.deviance,
                floor_met=self.fit.floor_met, converged=self.fit.converged,
                intercept=self.fit.coefficients.intercept,
            )
        else:
            out.update(fallback_reason=self.fallback.reason, n_history=self.fallback.n_history)
        return out


def fallback_running_mean(target):
    """Mean of all past target deltas; 0 for an empty history."""
    values = getattr(target, "values", target)
    values = np.asarray(values, dtype=float)
    return float(values.mean()) if values.size else 0.0


def _fallback_model(panel, country, k, through, reason, design=None):
    target = compute_target(panel, country, k, through=through)
    fb = Fallback(reason=reason, prediction=fallback_running_mean(target), n_history=len(target))
    return CountryModel(country=country, k=k, trained_through=through, fallback=fb, design=design)


def fit_country(panel, country, k, config=None, through=None, window=None):
    """Fit the lead-k model for one country on every month up to ``through``.

    Degenerate cases (too few rows, no informative covariates, near-constant
    target, or no converged lambda) return a running-mean fallback instead of
    raising.
    """
    config = config or ForecastConfig()
    through = panel.last_month if through is None else int(through)
    try:
        design = build_design(
            panel, country, k, config.missing_policy, through=through, min_months=config.min_months,
            exclude=config.exclude, window=window,
        )
    except DegenerateData as exc:
        return _fallback_model(panel, country, k, through, str(exc))
    if np.var(design.y) < config.variance_floor:
        return _fallback_model(panel, country, k, through, "target variance below floor", design)
    problem = en.ElasticNetProblem(
        design.X, design.y, alpha=config.alpha, tolerance=config.tolerance,
        max_sweeps=config.max_sweeps, feature_names=design.columns,
    )
    try:
        fit = en.cross_validate(
            problem, deviance_floor=config.deviance_floor, n_folds=config.cv_folds,
            n_lambda=config.n_lambda, ratio=config.lambda_ratio,
        )
    except (DegenerateData, DegenerateColumn) as exc:
        return _fallback_model(panel, country, k, through, str(exc), design)
    if not fit.path_converged.any():
        return _fallback_model(panel, country, k, through, "no lambda converged", design)
    beta = fit.coefficients.beta
    selected = [(design.columns[j], float(beta[j])) for j in np.flatnonzero(beta)]
    return CountryModel(country=country, k=k, trained_through=through, fit=fit, selected=selected, design=design)


@dataclass
class ForecastSet:
    country: str
    origin: int
    steps: tuple
    months: tuple
    deltas: tuple
    methods: tuple

    @property
    def cumulative_delta(self):
        return float(sum(self.deltas))

    def rows(self):
        for s, m, d, meth in zip(self.steps, self.months, self.deltas, self.methods):
            yield {"country": self.country, "month": index_to_month(m), "step": s, "delta": d, "method": meth}


def forecast_steps(panel, country, config=None, through=None, steps=STEPS):
    """Fit (or fall back) for each step and predict from the row at ``through``.

    Returns ``(ForecastSet, models)``.
    """
    config = config or ForecastConfig()
    through = panel.last_month if through is None else int(through)
    models = [fit_country(panel, country, s, config, through=through) for s in steps]
    fs = ForecastSet(
        country=country, origin=through, steps=tuple(steps),
        months=tuple(through + s for s in steps),
        deltas=tuple(m.predict_latest() for m in models),
        methods=tuple(m.method for m in models),
    )
    return fs, models


@dataclass
class RunReport:
    fitted: list = field(default_factory=list)
    fallback: list = field(default_factory=list)
    skipped: dict = field(default_factory=dict)
    step_methods: dict = field(default_factory=dict)

    @property
    def counts(self):
        return {"dynenet": len(self.fitted), "fallback": len(self.fallback), "skipped": len(self.skipped)}

    def to_dict(self):
        return {
            "counts": self.counts,
            "fitted": self.fitted,
            "fallback": self.fallback,
            "skipped": self.skipped,
            "step_methods": self.step_methods,
        }


def skip_reason(panel, country, through):
    """Why a country cannot be forecast at all, or None.

    A country is skipped when it has no row at the forecast origin or no
    observed fatality history to learn from (not even a running mean).
    """
    c = panel.country_index(country)
    pos = panel.month_position(through)
    if not panel.present[c, pos]:
        return f"no data at forecast origin {index_to_month(through)}"
    if all(len(compute_target(panel, country, s, through=through)) == 0 for s in STEPS):
        return "no fatality history"
    return None


def fit_all(panel, config=None, through=None, jobs=1):
    """Forecast every country; returns ``(forecasts, models, report)``.

    A country counts as dynenet-fitted when at least one step has a fitted
    model, as fallback when every step fell back, and as skipped when
    ``skip_reason`` applies.  Results are ordered by panel country order.
    """
    config = config or ForecastConfig()
    forecasts, models, report = [], {}, RunReport()
    if not panel.countries or not len(panel.months):
        return forecasts, models, report
    through = panel.last_month if through is None else int(through)
    todo = []
    for country in panel.countries:
        reason = skip_reason(panel, country, through)
        if reason:
            report.skipped[country] = reason
        else:
            todo.append(country)
    results = _map(_forecast_one, [(panel, c, config, through) for c in todo], jobs)
    for country, (fs, ms) in zip(todo, results):
        forecasts.append(fs)
        for m in ms:
            models[(country, m.k)] = m
        report.step_methods[country] = list(fs.methods)
        (report.fitted if DYNENET in fs.methods else report.fallback).append(country)
    return forecasts, models, report


def _forecast_one(args):
    panel, country, config, through = args
    return forecast_steps(panel, country, config, through=through)


def _map(fn, items, jobs):
    if jobs and jobs > 1 and len(items) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def write_forecasts(forecasts, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["country", "month", "step", "delta", "method"])
        for fs in forecasts:
            for row in fs.rows():
                writer.writerow([row["country"], row["month"], row["step"], repr(row["delta"]), row["method"]])


def write_run_report(report, models, path, config=None):
    payload = report.to_dict()
    payload["models"] = [m.summary() for _, m in sorted(models.items())]
    if config is not None:
        payload["config"] = asdict(config)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
