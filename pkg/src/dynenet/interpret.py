"""Driver analysis: ex-post forest importance heatmaps, overall scores, class
matrices and country clustering."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import MappingError, NotApplicable
from .forecaster import DYNENET, ForecastConfig, fit_country
from .forest import ForestParams, fit_random_forest, impurity_importance, permutation_importance
from .kmeans import classical_mds, kmeans, silhouette_sweep
from .panel import FeatureMeta, index_to_month

IMPORTANCE_KINDS = ("impurity", "permutation")


@dataclass(frozen=True)
class InterpretConfig:
    forest: ForestParams = field(default_factory=ForestParams)
    importance: str = "impurity"
    # rows of the most recent training data the forest sees; 0 = all (expanding)
    forest_window: int = 0
    # heatmap months: the last ``months`` fitted months; None = all
    months: int | None = None
    step: int = 2
    k: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.importance not in IMPORTANCE_KINDS:
            raise ValueError(f"importance must be one of {IMPORTANCE_KINDS}")
        if self.forest_window < 0:
            raise ValueError("forest_window must be >= 0")
        if self.months is not None and self.months < 1:
            raise ValueError("months must be >= 1")


@dataclass
class ImportanceMap:
    country: str
    step: int
    months: np.ndarray
    predictors: tuple
    values: np.ndarray  # (months, predictors) in [0, 1]
    selected: np.ndarray  # bool, same shape

    def row(self, month):
        return dict(zip(self.predictors, self.values[list(self.months).index(month)]))


def _month_importance(design, selected_cols, config, month):
    cols = [design.columns.index(name) for name in selected_cols]
    X, y = design.X[:, cols], design.y
    if config.forest_window:
        X, y = X[-config.forest_window:], y[-config.forest_window:]
    params = config.forest
    if len(y) < 2 * params.min_leaf:
        return np.zeros(len(cols))
    seed = int(np.random.SeedSequence([params.seed, config.seed, int(month)]).generate_state(1)[0])
    params = ForestParams(
        n_trees=params.n_trees, max_depth=params.max_depth, min_leaf=params.min_leaf,
        max_features=params.max_features, bootstrap=params.bootstrap, seed=seed,
    )
    forest = fit_random_forest(X, y, params)
    if config.importance == "permutation":
        return permutation_importance(forest, X, y, seed=seed)
    return impurity_importance(forest)


def importance_heatmap(panel, country, step=None, config=None, forecast_config=None, through=None):
    """Month x predictor importance for one country and step.

    For every month t with a fitted model (expanding window through t), the
    predictors selected at t are scored by an ex-post forest on the training
    rows through t (only the last ``forest_window`` rows when it is nonzero) and
    max-normalised; unselected predictors get 0.  If the forest finds no split, every selected predictor gets 1.
    """
    config = config or InterpretConfig()
    fcfg = forecast_config or ForecastConfig()
    k = config.step if step is None else step
    through = panel.last_month if through is None else int(through)
    final = fit_country(panel, country, k, fcfg, through=through)
    if final.method != DYNENET:
        raise NotApplicable(f"{country} step {k} uses the running-mean fallback; no predictors to rank")
    c = panel.country_index(country)
    candidates = [int(m) for m in panel.months if m <= through and panel.present[c, panel.month_position(m)]]
    rows = []
    for m in reversed(candidates):
        model = final if m == through else fit_country(panel, country, k, fcfg, through=m)
        if model.method != DYNENET:
            break  # earlier months only have less data
        rows.append((m, model))
        if config.months is not None and len(rows) >= config.months:
            break
    rows.reverse()
    names = []
    seen = set()
    for _, model in rows:
        for name, _ in model.selected:
            if name not in seen:
                seen.add(name)
                names.append(name)
    order = {f: j for j, f in enumerate(panel.features)}
    predictors = tuple(sorted(names, key=order.__getitem__))
    pos = {name: j for j, name in enumerate(predictors)}
    values = np.zeros((len(rows), len(predictors)))
    selected = np.zeros_like(values, dtype=bool)
    for i, (m, model) in enumerate(rows):
        sel = [name for name, _ in model.selected]
        if not sel:
            continue
        imp = _month_importance(model.design, sel, config, m)
        if not np.any(imp > 0):
            imp = np.ones(len(sel))
        for name, v in zip(sel, imp):
            values[i, pos[name]] = v
            selected[i, pos[name]] = True
    return ImportanceMap(
        country=country, step=k, months=np.array([m for m, _ in rows], dtype=int),
        predictors=predictors, values=values, selected=selected,
    )


def _average_ranks(scores):
    """Rank 1 = largest; ties share their mean rank."""
    order = np.argsort(-scores, kind="mergesort")
    ranks = np.empty(len(scores))
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def rank_history(heatmap):
    """Per month, ``{predictor: rank}`` among that month's selected predictors."""
    out = []
    for i in range(len(heatmap.months)):
        idx = np.flatnonzero(heatmap.selected[i])
        ranks = _average_ranks(heatmap.values[i, idx]) if idx.size else []
        out.append({heatmap.predictors[j]: float(r) for j, r in zip(idx, ranks)})
    return out


def overall_importance_from_ranks(history, p, inverted=True):
    """count(months selected) x average rank; inverted rank is (p - rank + 1) / p."""
    if p < 1:
        raise ValueError("p must be >= 1")
    acc = {}
    for month in history:
        for name, rank in month.items():
            value = (p - rank + 1) / p if inverted else rank
            n, s = acc.get(name, (0, 0.0))
            acc[name] = (n + 1, s + value)
    return {name: n * (s / n) for name, (n, s) in acc.items()}


def overall_importance(heatmap, inverted=True):
    scores = overall_importance_from_ranks(rank_history(heatmap), max(len(heatmap.predictors), 1), inverted)
    return {name: scores.get(name, 0.0) for name in heatmap.predictors}


def selection_counts(heatmap):
    return {name: int(heatmap.selected[:, j].sum()) for j, name in enumerate(heatmap.predictors)}


def _code(entry):
    if isinstance(entry, FeatureMeta):
        return entry.code
    if isinstance(entry, tuple):
        return f"{entry[0]}-{entry[1]}"
    return str(entry)


@dataclass
class ClassMatrix:
    countries: tuple
    codes: tuple
    matrix: np.ndarray  # int 0/1

    def row(self, country):
        return dict(zip(self.codes, self.matrix[self.countries.index(country)]))


def class_matrix(importances, mapping, codes=None):
    """Binary country x (source-content) matrix: 1 where any feature with that
    code has a positive overall importance for the country."""
    countries = tuple(importances)
    hits = {}
    for country, scores in importances.items():
        for name, score in scores.items():
            if not score > 0:
                continue
            if name not in mapping:
                raise MappingError(f"feature {name!r} has no source/content mapping")
            hits.setdefault(country, set()).add(_code(mapping[name]))
    if codes is None:
        codes = sorted(set().union(*hits.values())) if hits else []
    codes = tuple(codes)
    col = {c: j for j, c in enumerate(codes)}
    M = np.zeros((len(countries), len(codes)), dtype=int)
    for i, country in enumerate(countries):
        for code in hits.get(country, ()):
            if code in col:
                M[i, col[code]] = 1
    return ClassMatrix(countries, codes, M)


def cluster_countries(cm, k, seed=0, n_init=10):
    return kmeans(cm.matrix, k, seed=seed, n_init=n_init, countries=cm.countries)


def silhouette_advice(cm, ks=range(2, 11), seed=0, n_init=10):
    """Mean silhouette per k; advice for choosing k, never applied automatically."""
    return silhouette_sweep(cm.matrix, ks, seed=seed, n_init=n_init)


def write_heatmap(heatmap, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["month"] + list(heatmap.predictors))
        for m, row in zip(heatmap.months, heatmap.values):
            w.writerow([index_to_month(m)] + [repr(float(v)) for v in row])


def write_overall(rows, path):
    """``rows``: iterable of (country, predictor, score, months_selected)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["country", "predictor", "score", "months_selected"])
        for country, name, score, count in rows:
            w.writerow([country, name, repr(float(score)), count])


def write_class_matrix(cm, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["country"] + list(cm.codes))
        for country, row in zip(cm.countries, cm.matrix):
            w.writerow([country] + [int(v) for v in row])


def write_clusters(assignment, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["country", "cluster"])
        for country, label in zip(assignment.countries, assignment.labels):
            w.writerow([country, int(label)])


def write_mds(countries, coords, labels, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["country", "x", "y", "cluster"])
        for country, (x, y), label in zip(countries, coords, labels):
            w.writerow([country, repr(float(x)), repr(float(y)), int(label)])


def mds_coordinates(cm):
    return classical_mds(cm.matrix, dims=2)
