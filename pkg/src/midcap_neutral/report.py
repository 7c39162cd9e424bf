"""
Static SVG figures and a plain-text summary of a finished backtest.

Everything here reads the files written by the ``backtest`` command
(``backtest_report.json``, ``returns_<phase>.csv``, ``weights_<phase>.csv``)
so a report can be re-rendered without rerunning the pipeline.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from .config import PHASE_NAMES  # noqa: E402

logger = logging.getLogger(__name__)

LONG_COLOR = "#1f77b4"
SHORT_COLOR = "#d62728"
# no timestamp and a fixed id salt keep the SVG bytes reproducible
_SVG_METADATA = {"Date": None}


def _save_svg(fig, path: Path) -> Path:
    with plt.rc_context({"svg.hashsalt": "midcap-neutral"}):
        fig.savefig(path, format="svg", metadata=_SVG_METADATA)
    plt.close(fig)
    return path


def plot_cumulative(returns: pd.DataFrame, path, title: str = "") -> Path:
    """Compounded portfolio return against the benchmark over one phase.

    ``returns`` has a ``portfolio`` column and optionally ``benchmark``,
    indexed by realization date.
    """
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for col, color, label in (("portfolio", LONG_COLOR, "strategy"), ("benchmark", "0.4", "benchmark")):
        if col in returns and returns[col].notna().any():
            r = returns[col].fillna(0.0)
            ax.plot(returns.index, (1.0 + r).cumprod() - 1.0, color=color, label=label)
    ax.axhline(0.0, color="0.8", linewidth=0.8)
    ax.set_ylabel("cumulative return")
    ax.set_title(title)
    ax.legend(loc="upper left")
    fig.autofmt_xdate()
    fig.tight_layout()
    return _save_svg(fig, Path(path))


def plot_weights(weights: pd.Series, path, title: str = "", max_bars: int = 60) -> Path:
    """Bar chart of one rebalance's weights, longs and shorts in different colours.

    With more than ``max_bars`` names only the largest positions on each
    side are drawn.
    """
    w = weights[weights != 0].sort_values(ascending=False)
    if len(w) > max_bars:
        half = max_bars // 2
        w = pd.concat([w.iloc[:half], w.iloc[-half:]])
    fig, ax = plt.subplots(figsize=(10, 4.5))
    x = np.arange(len(w))
    colors = [LONG_COLOR if v > 0 else SHORT_COLOR for v in w.to_numpy()]
    ax.bar(x, w.to_numpy(), color=colors)
    ax.set_xticks(x)
    ax.set_xticklabels([str(i) for i in w.index], rotation=90, fontsize=6)
    ax.axhline(0.0, color="0.3", linewidth=0.8)
    ax.set_ylabel("weight")
    ax.set_xlabel("permno")
    ax.set_title(title)
    handles = [plt.Rectangle((0, 0), 1, 1, color=c) for c in (LONG_COLOR, SHORT_COLOR)]
    ax.legend(handles, ["long", "short"], loc="upper right")
    fig.tight_layout()
    return _save_svg(fig, Path(path))


def render_summary(report: dict) -> str:
    """Human-readable digest of a backtest report dictionary."""
    lines = ["Mid-cap dollar-neutral long-short backtest", ""]
    cfg = report.get("config", {})
    lines.append(
        f"risk aversion {cfg.get('risk_aversion')}, gross target {cfg.get('gross_target')}, "
        f"mid-cap band [{cfg.get('midcap_min'):.3g}, {cfg.get('midcap_max'):.3g}]"
    )
    lines.append("")
    header = f"{'phase':<10}{'eval window':<25}{'months':>7}{'sharpe':>9}{'cum ret':>10}{'bench':>10}{'turnover':>10}"
    lines.append(header)
    lines.append("-" * len(header))
    for name in PHASE_NAMES:
        ph = report.get("phases", {}).get(name)
        if ph is None:
            continue
        spec = ph["phase"]
        bench = ph.get("benchmark", {}).get("cumulative_benchmark")
        bench_txt = f"{bench:>10.2%}" if bench is not None else f"{'n/a':>10}"
        lines.append(
            f"{name:<10}{spec['eval_start'] + '..' + spec['eval_end']:<25}{ph['months']:>7d}"
            f"{ph['sharpe_annualized']:>9.3f}{ph['cumulative_return']:>10.2%}{bench_txt}{ph['turnover']:>10.3f}"
        )
    lines.append("")
    for name in PHASE_NAMES:
        ph = report.get("phases", {}).get(name)
        if ph is None:
            continue
        lines.append(f"[{name}] fit {ph['phase']['fit_start']}..{ph['phase']['fit_end']}"
                     f"{' (in-sample)' if ph['phase']['in_sample'] else ''}")
        lines.append(f"  surviving features: {', '.join(ph['surviving_features'])}")
        dropped = ph["preprocess"]["dropped_features"]
        if dropped:
            lines.append("  dropped: " + ", ".join(f"{d['feature']} ({d['reason']})" for d in dropped))
        lines.append(f"  max |sum w|: {ph['max_neutrality_residual']:.2e}")
        if ph["skipped_months"]:
            lines.append(f"  skipped months: {len(ph['skipped_months'])}")
        if ph["delisted_positions"]:
            lines.append(f"  positions closed at zero return (delisted): {ph['delisted_positions']}")
    return "\n".join(lines) + "\n"


def write_report(backtest_dir, out_dir) -> list[Path]:
    """Render cumulative-return and weight figures per phase plus ``summary.txt``."""
    backtest_dir, out_dir = Path(backtest_dir), Path(out_dir)
    report_path = backtest_dir / "backtest_report.json"
    if not report_path.is_file():
        raise FileNotFoundError(f"no backtest report at {report_path}; run the backtest command first")
    report = json.loads(report_path.read_text())
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name in PHASE_NAMES:
        if name not in report.get("phases", {}):
            continue
        rets_path = backtest_dir / f"returns_{name}.csv"
        if rets_path.is_file():
            rets = pd.read_csv(rets_path, parse_dates=["date"]).set_index("date")
            written.append(plot_cumulative(rets, out_dir / f"cumulative_{name}.svg", f"{name}: strategy vs benchmark"))
        weights_path = backtest_dir / f"weights_{name}.csv"
        if weights_path.is_file():
            wf = pd.read_csv(weights_path, parse_dates=["date"])
            if len(wf):
                last = wf["date"].max()
                w = wf[wf["date"] == last].set_index("permno")["weight"]
                written.append(
                    plot_weights(w, out_dir / f"weights_{name}.svg", f"{name}: weights on {last:%Y-%m-%d}")
                )
    summary = out_dir / "summary.txt"
    summary.write_text(render_summary(report))
    written.append(summary)
    logger.info("wrote %d report files to %s", len(written), out_dir)
    return written
