"""Command-line entry point.

Exit codes: 0 success, 2 input error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import evaluation, events, fixtures, forecaster, interpret, render
from .config import CONFIG_ENV, DEFAULT_CONFIG_TEXT, load_config
from .errors import DynENetError, InputError, NotApplicable, NumericError
from .panel import index_to_month, load_panel, month_to_index, save_panel, validation_report, write_report

log = logging.getLogger("dynenet")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


def _require(path, what):
    if not path or not os.path.isfile(path):
        raise InputError(f"{what} not found: {path}")


def _out(cfg, *parts):
    path = os.path.join(cfg.output, *parts)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    return path


def _event_indexes(cfg):
    with open(cfg.events) as fh:
        parsed = events.parse_event_records(fh)
    kept = events.filter_root_dedupe(parsed.records)
    log.info("events: %d parsed, %d rejected, %d kept after root/dedupe filter",
             len(parsed.records), parsed.n_rejected, len(kept))
    return parsed, kept, events.build_monthly_indexes(kept, cfg.quad_weight_scheme)


def _load_inputs(cfg):
    """Panel plus event-index columns when an event file is configured."""
    _require(cfg.panel, "panel CSV")
    _require(cfg.metadata, "metadata sidecar")
    if cfg.events:
        _require(cfg.events, "event file")
    panel = load_panel(cfg.panel, cfg.metadata)
    parsed = None
    if cfg.events:
        parsed, _, indexes = _event_indexes(cfg)
        panel = events.merge_into_panel(panel, indexes)
    return panel, parsed


def _write_rejects(parsed, path):
    with open(path, "w") as fh:
        fh.write("line,reason\n")
        for line, reason in parsed.rejects:
            fh.write(f"{line},{reason}\n")


def cmd_ingest(cfg):
    panel, parsed = _load_inputs(cfg)
    save_panel(panel, _out(cfg, "panel.csv"), _out(cfg, "metadata.csv"))
    report = validation_report(panel)
    if parsed is not None:
        report["event_rejects"] = parsed.reject_counts()
        _write_rejects(parsed, _out(cfg, "event_rejects.csv"))
    write_report(report, _out(cfg, "validation.json"))
    log.info("ingest: %d countries, %d months, %d features", len(panel.countries), len(panel.months),
             len(panel.features))


def cmd_features(cfg):
    _require(cfg.events, "event file")
    parsed, kept, indexes = _event_indexes(cfg)
    indexes.to_csv(_out(cfg, "event_indexes.csv"))
    _write_rejects(parsed, _out(cfg, "event_rejects.csv"))
    write_report({"parsed": len(parsed.records), "rejected": parsed.reject_counts(), "kept": len(kept),
                  "quad_weight_scheme": cfg.quad_weight_scheme}, _out(cfg, "event_report.json"))


def cmd_forecast(cfg):
    panel, _ = _load_inputs(cfg)
    forecasts, models, report = forecaster.fit_all(panel, cfg.forecast, jobs=cfg.jobs)
    forecaster.write_forecasts(forecasts, _out(cfg, "forecasts.csv"))
    forecaster.write_run_report(report, models, _out(cfg, "run_report.json"), cfg.forecast)
    log.info("forecast: %s", report.counts)


def cmd_backtest(cfg):
    panel, _ = _load_inputs(cfg)
    variants = {k: v for k, v in evaluation.default_variants(cfg.forecast, panel).items() if k in cfg.variants}
    report = evaluation.backtest(panel, cfg.window, variants, config=cfg.forecast, jobs=cfg.jobs,
                                 countries=cfg.countries or None)
    evaluation.write_metrics(report, _out(cfg, "metrics.csv"))
    evaluation.write_derived(report, _out(cfg, "derived.csv"))
    evaluation.write_predictions(report, _out(cfg, "predictions.csv"))
    evaluation.write_summary(report, _out(cfg, "summary.json"))
    log.info("backtest: %d predictions over %s..%s", len(report.predictions), index_to_month(cfg.window[0]),
             index_to_month(cfg.window[1]))


def _heatmap_one(args):
    panel, country, cfg = args
    try:
        return interpret.importance_heatmap(panel, country, cfg.interpret.step, cfg.interpret, cfg.forecast)
    except NotApplicable as exc:
        log.info("interpret: %s", exc)
        return None


def cmd_interpret(cfg):
    panel, _ = _load_inputs(cfg)
    last = panel.last_month
    todo = [c for c in panel.countries if forecaster.skip_reason(panel, c, last) is None]
    maps = forecaster._map(_heatmap_one, [(panel, c, cfg) for c in todo], cfg.jobs)
    maps = [h for h in maps if h is not None]
    importances, overall_rows = {}, []
    for h in maps:
        interpret.write_heatmap(h, _out(cfg, "heatmaps", f"{h.country}.csv"))
        render.write_svg(render.heatmap_svg(h), _out(cfg, "heatmaps", f"{h.country}.svg"))
        scores = interpret.overall_importance(h)
        counts = interpret.selection_counts(h)
        importances[h.country] = scores
        overall_rows += [(h.country, n, scores[n], counts[n]) for n in h.predictors]
    interpret.write_overall(overall_rows, _out(cfg, "overall_importance.csv"))
    cm = interpret.class_matrix(importances, panel.feature_meta)
    interpret.write_class_matrix(cm, _out(cfg, "class_matrix.csv"))
    summary = {"countries": list(cm.countries), "codes": list(cm.codes)}
    if cm.countries:
        k = min(cfg.interpret.k, len(cm.countries))
        if k < cfg.interpret.k:
            log.warning("interpret: only %d countries; using k=%d", len(cm.countries), k)
        assignment = interpret.cluster_countries(cm, k, seed=cfg.seed, n_init=cfg.n_init)
        interpret.write_clusters(assignment, _out(cfg, "clusters.csv"))
        coords = interpret.mds_coordinates(cm)
        interpret.write_mds(cm.countries, coords, assignment.labels, _out(cfg, "mds.csv"))
        render.write_svg(render.scatter_svg(cm.countries, coords, assignment.labels), _out(cfg, "mds.svg"))
        summary.update(k=k, inertia=assignment.inertia,
                       silhouette={str(k): v for k, v in
                                   interpret.silhouette_advice(cm, seed=cfg.seed, n_init=cfg.n_init).items()})
    write_report(summary, _out(cfg, "interpret_summary.json"))
    log.info("interpret: %d heatmaps", len(maps))


def cmd_make_fixtures(cfg, args):
    out = args.out or cfg.output
    spec = fixtures.FixtureSpec(**{k: v for k, v in (("n_countries", args.countries),
                                                       ("n_months", args.months)) if v is not None})
    truth = fixtures.make_fixtures(out, seed=args.seed if args.seed is not None else 1, spec=spec)
    # a ready-to-use config next to the data
    text = DEFAULT_CONFIG_TEXT.replace("events =\n", "events = events.tsv\n" if spec.with_events else "events =\n")
    first, last = truth["months"]
    text = text.replace("window_start = 2017-01", f"window_start = {_shift(last, -11)}")
    text = text.replace("window_end = 2019-12", f"window_end = {last}")
    with open(os.path.join(out, "dynenet.ini"), "w") as fh:
        fh.write(text)
    log.info("make-fixtures: %s..%s written to %s", first, last, out)


def _shift(label, months):
    return index_to_month(month_to_index(label) + months)


COMMANDS = {
    "ingest": cmd_ingest,
    "features": cmd_features,
    "forecast": cmd_forecast,
    "backtest": cmd_backtest,
    "interpret": cmd_interpret,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help=f"config file (default: ${CONFIG_ENV})")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override a config value; repeatable")
    common.add_argument("-o", "--output", help="output directory")
    common.add_argument("-j", "--jobs", type=int, help="worker processes")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="dynenet", description="Per-country elastic-net conflict forecasting.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("ingest", parents=[common], help="validate the panel, merge event features, write artifacts")
    sub.add_parser("features", parents=[common], help="build the 100 monthly event indexes")
    sub.add_parser("forecast", parents=[common], help="fit every country and forecast steps 2..7")
    sub.add_parser("backtest", parents=[common], help="rolling-origin back-test of the model variants")
    sub.add_parser("interpret", parents=[common], help="importance heatmaps, class matrix, clusters")
    mk = sub.add_parser("make-fixtures", parents=[common], help="write a synthetic panel with planted drivers")
    mk.add_argument("--out", help="fixture directory (default: output directory)")
    mk.add_argument("--countries", type=int, help="number of planted countries")
    mk.add_argument("--months", type=int, help="panel length in months")
    sub.add_parser("default-config", help="print the documented default config")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "default-config":
        sys.stdout.write(DEFAULT_CONFIG_TEXT)
        return EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = list(args.set)
        if args.output:
            overrides.append(f"paths.output={os.path.abspath(args.output)}")
        if args.jobs is not None:
            overrides.append(f"run.jobs={args.jobs}")
        if args.seed is not None:
            overrides.append(f"run.seed={args.seed}")
        cfg = load_config(args.config, overrides)
        if args.command == "make-fixtures":
            cmd_make_fixtures(cfg, args)
        else:
            COMMANDS[args.command](cfg)
    except InputError as exc:
        print(f"dynenet: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericError, FloatingPointError) as exc:
        print(f"dynenet: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DynENetError as exc:
        print(f"dynenet: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FileNotFoundError as exc:
        print(f"dynenet: error: file not found: {exc.filename}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
