"""Run configuration: sectioned key = value file, env-var default path, CLI overrides."""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, replace

from .elasticnet import DEFAULT_MAX_SWEEPS, DEFAULT_N_LAMBDA, DEFAULT_RATIO, DEFAULT_TOLERANCE
from .errors import InputError
from .evaluation import VARIANTS
from .events import QUAD_SCHEMES
from .forecaster import ForecastConfig
from .forest import ForestParams
from .interpret import IMPORTANCE_KINDS, InterpretConfig
from .panel import month_to_index

CONFIG_ENV = "DYNENET_CONFIG"

DEFAULT_CONFIG_TEXT = f"""\
[paths]
# panel CSV: country,month,fatalities,<features...>
panel = panel.csv
# feature metadata sidecar: feature,source_class,content_class
metadata = metadata.csv
# tab-separated event export; empty = no event features
events =
# output directory for every command
output = out

[events]
# QuadClass weighting: {", ".join(QUAD_SCHEMES)}
quad_weight_scheme = direct

[model]
# elastic-net mixing; 0.5 = DynENet, 1 = LASSO
alpha = 0.5
# lambda grid: n_lambda log-spaced values from lambda_max down to lambda_ratio * lambda_max
n_lambda = {DEFAULT_N_LAMBDA}
lambda_ratio = {DEFAULT_RATIO}
# smallest explained deviance a selected lambda must reach
deviance_floor = 0.5
cv_folds = 5
# fewer usable training rows than this -> running-mean fallback
min_months = 24
# drop a feature whose missing fraction in the training window exceeds this
missing_threshold = 0.2
tolerance = {DEFAULT_TOLERANCE}
max_sweeps = {DEFAULT_MAX_SWEEPS}

[backtest]
# target months, inclusive (YYYY-MM)
window_start = 2017-01
window_end = 2019-12
# comma-separated subset of: dynenet_full, dynenet_no_gdelt, lasso
variants = dynenet_full, dynenet_no_gdelt, lasso
# comma-separated country codes; empty = all
countries =

[interpret]
# forecast step whose selections are analysed
step = 2
# impurity or permutation
importance = impurity
n_trees = 200
min_leaf = 5
# empty = no depth cap
max_depth =
# empty = ceil(p / 3)
max_features =
# training rows the forest sees; 0 = all rows through t
forest_window = 0
# heatmap rows: last N fitted months; empty = all
months =
# number of k-means clusters
k = 8
n_init = 10

[run]
seed = 0
jobs = 1
"""


def _parser():
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=None)
    parser.optionxform = str
    parser.read_string(DEFAULT_CONFIG_TEXT)
    return parser


def _list(text):
    return tuple(x.strip() for x in text.split(",") if x.strip())


def _int_or_none(text):
    return None if text.strip() == "" else int(text)


@dataclass(frozen=True)
class RunConfig:
    panel: str = "panel.csv"
    metadata: str = "metadata.csv"
    events: str | None = None
    output: str = "out"
    quad_weight_scheme: str = "direct"
    forecast: ForecastConfig = field(default_factory=ForecastConfig)
    window: tuple = (month_to_index("2017-01"), month_to_index("2019-12"))
    variants: tuple = VARIANTS
    countries: tuple = ()
    interpret: InterpretConfig = field(default_factory=InterpretConfig)
    n_init: int = 10
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        if self.quad_weight_scheme not in QUAD_SCHEMES:
            raise InputError(f"quad_weight_scheme must be one of {QUAD_SCHEMES}")
        if self.window[0] > self.window[1]:
            raise InputError("backtest window_start is after window_end")
        unknown = set(self.variants) - set(VARIANTS)
        if unknown or not self.variants:
            raise InputError(f"variants must be a non-empty subset of {VARIANTS}")
        if self.jobs < 1:
            raise InputError("jobs must be >= 1")
        if self.n_init < 1:
            raise InputError("n_init must be >= 1")

    def with_seed(self, seed):
        forest = replace(self.interpret.forest, seed=seed)
        return replace(self, seed=seed, interpret=replace(self.interpret, forest=forest, seed=seed))


def _from_parser(parser, base_dir):
    def path(key, optional=False):
        text = parser.get("paths", key).strip()
        if not text:
            if optional:
                return None
            raise InputError(f"[paths] {key} is required")
        return text if os.path.isabs(text) else os.path.normpath(os.path.join(base_dir, text))

    m = parser["model"]
    it = parser["interpret"]
    try:
        seed = parser.getint("run", "seed")
        forecast = ForecastConfig(
            alpha=m.getfloat("alpha"), n_lambda=m.getint("n_lambda"), lambda_ratio=m.getfloat("lambda_ratio"),
            deviance_floor=m.getfloat("deviance_floor"), cv_folds=m.getint("cv_folds"),
            min_months=m.getint("min_months"), missing_threshold=m.getfloat("missing_threshold"),
            tolerance=m.getfloat("tolerance"), max_sweeps=m.getint("max_sweeps"),
        )
        if it["importance"] not in IMPORTANCE_KINDS:
            raise InputError(f"[interpret] importance must be one of {IMPORTANCE_KINDS}")
        forest = ForestParams(
            n_trees=it.getint("n_trees"), min_leaf=it.getint("min_leaf"), max_depth=_int_or_none(it["max_depth"]),
            max_features=_int_or_none(it["max_features"]), seed=seed,
        )
        interpret = InterpretConfig(
            forest=forest, importance=it["importance"], forest_window=it.getint("forest_window"),
            months=_int_or_none(it["months"]), step=it.getint("step"), k=it.getint("k"), seed=seed,
        )
        window = (month_to_index(parser.get("backtest", "window_start")),
                  month_to_index(parser.get("backtest", "window_end")))
        return RunConfig(
            panel=path("panel"), metadata=path("metadata"), events=path("events", optional=True),
            output=path("output"), quad_weight_scheme=parser.get("events", "quad_weight_scheme"),
            forecast=forecast, window=window, variants=_list(parser.get("backtest", "variants")),
            countries=_list(parser.get("backtest", "countries")), interpret=interpret, n_init=it.getint("n_init"),
            seed=seed, jobs=parser.getint("run", "jobs"),
        )
    except InputError:
        raise
    except ValueError as exc:
        raise InputError(f"invalid configuration value: {exc}") from exc


def apply_overrides(parser, overrides):
    """``overrides``: iterable of ``section.key=value`` strings."""
    for item in overrides:
        key, sep, value = item.partition("=")
        section, dot, option = key.strip().partition(".")
        if not sep or not dot:
            raise InputError(f"override {item!r} is not of the form section.key=value")
        if not parser.has_option(section, option):
            raise InputError(f"unknown configuration key {section}.{option}")
        parser.set(section, option, value.strip())


def load_config(path=None, overrides=()):
    """Defaults, then the file (argument, else ``$DYNENET_CONFIG``), then overrides.

    Relative paths in the file resolve against the file's directory.
    """
    parser = _parser()
    path = path or os.environ.get(CONFIG_ENV) or None
    base_dir = os.getcwd()
    if path:
        if not os.path.isfile(path):
            raise InputError(f"config file not found: {path}")
        with open(path) as fh:
            text = fh.read()
        user = configparser.ConfigParser(interpolation=None)
        user.optionxform = str
        try:
            user.read_string(text, source=path)
        except configparser.Error as exc:
            raise InputError(f"{path}: {exc}") from exc
        for section in user.sections():
            for option, value in user.items(section):
                if not parser.has_option(section, option):
                    raise InputError(f"{path}: unknown configuration key {section}.{option}")
                parser.set(section, option, value)
        base_dir = os.path.dirname(os.path.abspath(path))
    apply_overrides(parser, overrides)
    return _from_parser(parser, base_dir)


def config_keys():
    parser = _parser()
    return {s: tuple(parser[s]) for s in parser.sections()}


__all__ = [
    "CONFIG_ENV", "DEFAULT_CONFIG_TEXT", "RunConfig", "apply_overrides", "config_keys", "load_config",
]
