"""
Command-line entry point.

Every subcommand takes ``--config`` (a flat ``key: value`` file) and
``--out`` (output directory).  Relative data paths in the config resolve
against the config file's directory.

Exit codes: 0 on success, 1 when the pipeline rejects the data, 2 on usage
errors including a missing config file.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import pandas as pd

from .backtest import PhaseSpec, build_training_pool, run_protocol
from .config import Config, dump_config, load_config
from .errors import ConfigError, PipelineError
from .features import FEATURE_ROW_COLUMNS, compute_features, export_frame
from .panel import IngestReport, PointInTimePanel, build_panel, load_benchmark, midcap_filter
from .preprocess import fit_feature_selection
from .report import write_report
from .synthetic import generate_synthetic

logger = logging.getLogger(__name__)

COMMANDS = ("synth", "ingest", "features", "preprocess", "backtest", "report")


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="midcap-neutral", description="Mid-cap dollar-neutral long-short research pipeline")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress at INFO level")
    sub = p.add_subparsers(dest="command", metavar="{" + ",".join(COMMANDS) + "}")
    sub.required = True
    helps = {
        "synth": "write synthetic input CSVs",
        "ingest": "build the point-in-time panel and ingest report",
        "features": "compute per-row ratio features for mid-cap rows",
        "preprocess": "run feature selection on the train fit window",
        "backtest": "run the train / validate / test protocol",
        "report": "render SVG figures and a text summary from backtest output",
    }
    for name in COMMANDS:
        sp = sub.add_parser(name, help=helps[name])
        sp.add_argument("--config", required=True, help="flat key: value config file")
        sp.add_argument("--out", default=None, help="output directory (default: the config's directory)")
        if name == "report":
            sp.add_argument("--backtest-dir", default=None, help="where backtest output lives (default: --out)")
    return p


def _load_panel(config: Config) -> tuple[PointInTimePanel, IngestReport]:
    sentiment = config.resolve("sentiment_path")
    return build_panel(
        config.resolve("crsp_path"),
        config.resolve("compustat_path"),
        config.resolve("links_path"),
        sentiment if sentiment is not None and sentiment.is_file() else None,
        max_staleness_months=config.max_staleness_months,
    )


def _load_benchmark(config: Config) -> pd.Series | None:
    path = config.resolve("benchmark_path")
    if path is None or not path.is_file():
        logger.info("no benchmark file; comparison skipped")
        return None
    return load_benchmark(path)


def cmd_synth(config: Config, out: Path) -> None:
    data = generate_synthetic(config)
    paths = data.write(out)
    print(f"wrote {', '.join(str(p) for p in paths.values())}")


def cmd_ingest(config: Config, out: Path) -> None:
    panel, report = _load_panel(config)
    filtered = midcap_filter(panel, config.midcap_min, config.midcap_max)
    report.rows_filtered_out = len(panel) - len(filtered)
    report.rows_final = len(filtered)
    export_frame(filtered).to_csv(out / "panel.csv", index=False, date_format="%Y-%m-%d", float_format="%.10g")
    filtered.fill_log.to_csv(out / "fill_log.csv", index=False, date_format="%Y-%m-%d")
    (out / "ingest_report.json").write_text(report.to_json())
    print(f"panel: {len(filtered)} mid-cap rows over {len(filtered.dates)} dates -> {out / 'panel.csv'}")


def cmd_features(config: Config, out: Path) -> None:
    panel, _ = _load_panel(config)
    filtered = midcap_filter(panel, config.midcap_min, config.midcap_max)
    feats = compute_features(filtered)[FEATURE_ROW_COLUMNS]
    feats.to_csv(out / "features.csv", index=False, date_format="%Y-%m-%d", float_format="%.10g")
    print(f"features: {len(feats)} rows -> {out / 'features.csv'}")


def cmd_preprocess(config: Config, out: Path) -> None:
    panel, _ = _load_panel(config)
    spec = PhaseSpec.from_config(config, "train")
    pool = build_training_pool(panel, spec.fit_start, spec.fit_end, config)
    survivors, report = fit_feature_selection(
        pool.features, pool.labels, config.vif_threshold, config.corr_threshold
    )
    report.dropped_features[:0] = pool.dropped
    (out / "preprocess_report.json").write_text(report.to_json())
    pool.features.corr().to_csv(out / "correlation_matrix.csv", float_format="%.10g")
    matrix = pool.features[survivors].copy()
    matrix.insert(0, "date", pd.DatetimeIndex(pool.dates))
    matrix["forward_return"] = pool.labels
    matrix.to_csv(out / "training_matrix.csv", index=False, date_format="%Y-%m-%d", float_format="%.10g")
    print(f"preprocess: {len(survivors)} of {len(pool.candidates)} features kept: {', '.join(survivors)}")


def cmd_backtest(config: Config, out: Path) -> None:
    panel, _ = _load_panel(config)
    result = run_protocol(panel, config, _load_benchmark(config))
    (out / "backtest_report.json").write_text(result.to_json())
    (out / "config_effective.txt").write_text(dump_config(config))
    for name, phase in result.phases.items():
        phase.returns_frame().to_csv(out / f"returns_{name}.csv", date_format="%Y-%m-%d", float_format="%.17g")
        phase.weights_frame().to_csv(
            out / f"weights_{name}.csv", index=False, date_format="%Y-%m-%d", float_format="%.17g"
        )
    for name, sharpe in result.to_dict()["sharpe"].items():
        print(f"{name:<9} sharpe {sharpe:8.4f}")


def cmd_report(config: Config, out: Path, backtest_dir: Path) -> None:
    for path in write_report(backtest_dir, out):
        print(f"wrote {path}")


HANDLERS = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "features": cmd_features,
    "preprocess": cmd_preprocess,
    "backtest": cmd_backtest,
}


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = load_config(args.config)
    except (FileNotFoundError, ConfigError) as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2

    out = Path(args.out) if args.out else Path(config.base_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        if args.command == "report":
            cmd_report(config, out, Path(args.backtest_dir) if args.backtest_dir else out)
        else:
            HANDLERS[args.command](config, out)
    except (PipelineError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
