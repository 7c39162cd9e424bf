"""
Point-in-time panel construction.

Reads CRSP-, Compustat-, link-table-, sentiment- and benchmark-shaped CSV
files, joins fundamentals to security-months through the permno/gvkey link
table, forward fills gaps and exposes as-of-date views.

Conventions
-----------
* ``shrout`` is in thousands of shares, so ``market_cap = prc * shrout * 1000``.
* Fundamentals are joined from the latest Compustat record whose
  ``datadate`` is on or before the security-month date.  Nothing is ever
  back-filled.
* Every input date is ISO-8601; missing values are empty fields.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import AmbiguousLinkError, RowParseError, SchemaError, ValidationError

logger = logging.getLogger(__name__)

CRSP_COLUMNS = ["permno", "date", "prc", "shrout", "ret", "retx"]
FUNDAMENTAL_FIELDS = [
    "at", "lt", "ceq", "revt", "gp", "oiadp", "ni", "act",
    "lct", "dltt", "dlc", "che", "xint", "ebitda", "epspx",
]
COMPUSTAT_COLUMNS = ["gvkey", "datadate", "tic", *FUNDAMENTAL_FIELDS]
LINK_COLUMNS = ["permno", "gvkey", "linktype", "linkprim", "linkdt", "linkenddt"]
SENTIMENT_COLUMNS = ["gvkey", "date", "avg_sentiment"]
BENCHMARK_COLUMNS = ["date", "ret"]

# linkprim codes treated as primary links (CRSP/Compustat merged convention)
PRIMARY_LINKPRIM = ("P", "C")

FILL_FIELDS = [*FUNDAMENTAL_FIELDS, "avg_sentiment"]

PANEL_COLUMNS = [
    "permno", "date", "prc", "shrout", "market_cap", "ret", "retx",
    "gvkey", "datadate", "tic", *FUNDAMENTAL_FIELDS,
    "linktype", "linkprim", "linkdt", "linkenddt", "avg_sentiment",
]

FILL_LOG_COLUMNS = ["permno", "field", "source_date", "target_date"]


@dataclass
class IngestReport:
    """Row accounting for one panel build."""

    rows_read: int = 0
    rows_dropped: dict = field(default_factory=dict)
    duplicates_replaced: int = 0
    cells_filled: int = 0
    filled_by_field: dict = field(default_factory=dict)
    rows_linked: int = 0
    rows_unlinked: int = 0
    rows_filtered_out: int = 0
    rows_final: int = 0

    def drop(self, reason: str, count: int) -> None:
        if count:
            self.rows_dropped[reason] = self.rows_dropped.get(reason, 0) + int(count)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


@dataclass(frozen=True)
class PointInTimePanel:
    """Merged monthly panel, one row per (permno, date).

    Rows are stored date-major (sorted by date, then permno), so dates are
    increasing within every permno and an as-of view is a leading slice.
    ``frame`` must be treated as read-only once the panel is built; every
    operation in this module returns a new panel rather than editing one.
    ``fill_log`` holds one row per forward-filled cell.
    """

    frame: pd.DataFrame
    fill_log: pd.DataFrame
    as_of_date: pd.Timestamp | None = None
    before_start: bool = False

    @cached_property
    def _date_values(self) -> np.ndarray:
        return self.frame["date"].to_numpy()

    @cached_property
    def dates(self) -> pd.DatetimeIndex:
        return pd.DatetimeIndex(np.unique(self._date_values))

    def __len__(self) -> int:
        return len(self.frame)

    def cross_section(self, t) -> pd.DataFrame:
        t = np.datetime64(pd.Timestamp(t))
        lo, hi = np.searchsorted(self._date_values, t, "left"), np.searchsorted(self._date_values, t, "right")
        return self.frame.iloc[lo:hi]

    def rows_until(self, t) -> int:
        """Number of leading rows dated on or before ``t``."""
        return int(np.searchsorted(self._date_values, np.datetime64(pd.Timestamp(t)), "right"))

    def with_frame(self, frame: pd.DataFrame) -> "PointInTimePanel":
        """Copy of this panel with a replacement frame (used for what-if edits)."""
        return PointInTimePanel(_date_major(frame), self.fill_log, self.as_of_date, self.before_start)


def _date_major(frame: pd.DataFrame) -> pd.DataFrame:
    return frame.sort_values(["date", "permno"], kind="mergesort").reset_index(drop=True)


# -- file loading -------------------------------------------------------------


def _read_table(
    path,
    required: list[str],
    *,
    ids: tuple[str, ...] = (),
    dates: tuple[str, ...] = (),
    strings: tuple[str, ...] = (),
    optional_dates: tuple[str, ...] = (),
) -> pd.DataFrame:
    path = Path(path)
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise SchemaError(f"{path}: file is empty, expected header {','.join(required)}") from None
    raw.columns = [c.strip() for c in raw.columns]
    missing = [c for c in required if c not in raw.columns]
    if missing:
        raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")

    out = {}
    for col in required:
        text = raw[col].str.strip()
        blank = text == ""
        if col in strings:
            out[col] = text.where(~blank, None)
            continue
        if col in dates or col in optional_dates:
            parsed = pd.to_datetime(text.where(~blank), format="ISO8601", errors="coerce")
        else:
            parsed = pd.to_numeric(text.where(~blank), errors="coerce")
        bad = parsed.isna() & ~blank
        if col in ids or col in dates:
            bad |= blank
        if col in ids:
            bad |= parsed.notna() & (parsed != np.floor(parsed))
        if bad.any():
            i = int(np.flatnonzero(bad.to_numpy())[0])
            # header is line 1
            raise RowParseError(path, i + 2, col, raw[col].iloc[i])
        if col in ids:
            parsed = parsed.astype("int64")
        elif col not in dates and col not in optional_dates:
            parsed = parsed.astype("float64")
        out[col] = parsed
    return pd.DataFrame(out, columns=required)


def _dedupe(frame: pd.DataFrame, keys: list[str], what: str, report: IngestReport | None) -> pd.DataFrame:
    dup = frame.duplicated(keys, keep="last")
    if dup.any():
        logger.warning("%s: %d duplicate %s rows, keeping the last occurrence", what, int(dup.sum()), keys)
        if report is not None:
            report.duplicates_replaced += int(dup.sum())
        frame = frame[~dup]
    return frame


def load_crsp(path, report: IngestReport | None = None) -> pd.DataFrame:
    """Load monthly security rows (permno, date, prc, shrout, ret, retx).

    Negative prices (CRSP bid/ask midpoints) are replaced by their absolute
    value.  Rows with a missing price or non-positive share count are dropped
    and counted in ``report``.
    """
    frame = _read_table(path, CRSP_COLUMNS, ids=("permno",), dates=("date",))
    if report is not None:
        report.rows_read += len(frame)
    no_price = frame["prc"].isna() | (frame["prc"] == 0)
    bad_shares = ~(frame["shrout"] > 0)
    if report is not None:
        report.drop("missing_price", int(no_price.sum()))
        report.drop("nonpositive_shrout", int((bad_shares & ~no_price).sum()))
    frame = frame[~no_price & ~bad_shares].copy()
    frame["prc"] = frame["prc"].abs()
    frame["market_cap"] = frame["prc"] * frame["shrout"] * 1000.0
    frame = frame.sort_values(["permno", "date"], kind="mergesort")
    frame = _dedupe(frame, ["permno", "date"], "crsp", report)
    return frame.reset_index(drop=True)


def load_compustat(path, report: IngestReport | None = None) -> pd.DataFrame:
    frame = _read_table(
        path, COMPUSTAT_COLUMNS, ids=("gvkey",), dates=("datadate",), strings=("tic",)
    )
    frame = frame.sort_values(["gvkey", "datadate"], kind="mergesort")
    return _dedupe(frame, ["gvkey", "datadate"], "compustat", report).reset_index(drop=True)


def load_links(path) -> pd.DataFrame:
    frame = _read_table(
        path,
        LINK_COLUMNS,
        ids=("permno", "gvkey"),
        strings=("linktype", "linkprim"),
        optional_dates=("linkdt", "linkenddt"),
    )
    reversed_window = frame["linkdt"].notna() & frame["linkenddt"].notna() & (frame["linkdt"] > frame["linkenddt"])
    if reversed_window.any():
        row = frame[reversed_window].iloc[0]
        raise ValidationError(
            f"link permno={row.permno} gvkey={row.gvkey}: linkdt {row.linkdt:%Y-%m-%d} "
            f"after linkenddt {row.linkenddt:%Y-%m-%d}"
        )
    return frame.sort_values(["permno", "linkdt"], kind="mergesort").reset_index(drop=True)


def load_sentiment(path, report: IngestReport | None = None) -> pd.DataFrame:
    frame = _read_table(path, SENTIMENT_COLUMNS, ids=("gvkey",), dates=("date",))
    outside = frame["avg_sentiment"].notna() & (frame["avg_sentiment"].abs() > 1.0)
    if outside.any():
        i = int(np.flatnonzero(outside.to_numpy())[0])
        raise ValidationError(
            f"{path}, line {i + 2}: avg_sentiment={frame['avg_sentiment'].iloc[i]} outside [-1, 1]"
        )
    frame = frame.sort_values(["gvkey", "date"], kind="mergesort")
    return _dedupe(frame, ["gvkey", "date"], "sentiment", report).reset_index(drop=True)


def load_benchmark(path) -> pd.Series:
    frame = _read_table(path, BENCHMARK_COLUMNS, dates=("date",))
    frame = frame.drop_duplicates("date", keep="last").sort_values("date")
    return pd.Series(frame["ret"].to_numpy(), index=pd.DatetimeIndex(frame["date"]), name="benchmark")


# -- merge / fill / filter ----------------------------------------------------


def merge_link(
    crsp: pd.DataFrame,
    compustat: pd.DataFrame,
    links: pd.DataFrame,
    sentiment: pd.DataFrame | None = None,
    report: IngestReport | None = None,
) -> PointInTimePanel:
    """Attach fundamentals and sentiment to each security-month.

    For a row dated ``t`` every link active at ``t`` is a candidate; each
    candidate gvkey contributes its latest Compustat record with
    ``datadate <= t``.  The winner is the candidate with the latest
    ``datadate``, then a primary link, then the smaller gvkey.  Rows without
    an active link keep empty fundamentals.
    """
    left = crsp.reset_index(drop=True)
    left = left.assign(_row=np.arange(len(left)))

    cand = left[["_row", "permno", "date"]].merge(links, on="permno", how="inner")
    active = (cand["linkdt"].isna() | (cand["linkdt"] <= cand["date"])) & (
        cand["linkenddt"].isna() | (cand["date"] <= cand["linkenddt"])
    )
    cand = cand[active].copy()
    cand["_primary"] = cand["linkprim"].isin(PRIMARY_LINKPRIM)

    prim = cand.loc[cand["_primary"], ["_row", "permno", "date", "gvkey"]].drop_duplicates()
    n_prim = prim.groupby("_row")["gvkey"].transform("size")
    if (n_prim > 1).any():
        first = prim.loc[n_prim > 1, "_row"].min()
        clash = prim[prim["_row"] == first]
        raise AmbiguousLinkError(
            int(clash["permno"].iloc[0]), clash["date"].iloc[0], sorted(clash["gvkey"].tolist())
        )

    comp = compustat.sort_values(["datadate", "gvkey"], kind="mergesort")
    cand = cand.sort_values(["date", "_row"], kind="mergesort")
    if len(cand):
        joined = pd.merge_asof(
            cand, comp, left_on="date", right_on="datadate", by="gvkey", direction="backward"
        )
    else:
        joined = cand.reindex(columns=[*cand.columns, *[c for c in COMPUSTAT_COLUMNS if c != "gvkey"]])
    joined = joined.sort_values(
        ["_row", "datadate", "_primary", "gvkey"],
        ascending=[True, False, False, True],
        na_position="last",
        kind="mergesort",
    ).drop_duplicates("_row", keep="first")

    keep = ["_row", "gvkey", "datadate", "tic", *FUNDAMENTAL_FIELDS, "linktype", "linkprim", "linkdt", "linkenddt"]
    frame = left.merge(joined[keep], on="_row", how="left")
    frame["gvkey"] = frame["gvkey"].astype("Int64")

    if sentiment is not None and len(sentiment):
        sent = sentiment[["gvkey", "date", "avg_sentiment"]].copy()
        sent["gvkey"] = sent["gvkey"].astype("Int64")
        frame = frame.merge(sent, on=["gvkey", "date"], how="left")
    else:
        frame["avg_sentiment"] = np.nan

    frame = _date_major(frame.drop(columns="_row"))[PANEL_COLUMNS]
    if report is not None:
        report.rows_linked = int(frame["gvkey"].notna().sum())
        report.rows_unlinked = int(frame["gvkey"].isna().sum())
        report.rows_final = len(frame)
    return PointInTimePanel(frame, pd.DataFrame(columns=FILL_LOG_COLUMNS))


def _month_gap(later: pd.Series, earlier: pd.Series) -> pd.Series:
    return (later.dt.year - earlier.dt.year) * 12 + (later.dt.month - earlier.dt.month)


def forward_fill(
    panel: PointInTimePanel,
    max_staleness_months: int | None = None,
    report: IngestReport | None = None,
) -> PointInTimePanel:
    """Carry the last observed fundamental/sentiment value forward per permno.

    Leading gaps stay missing.  With ``max_staleness_months`` set, a value
    older than that many months is not carried.
    """
    frame = panel.frame.copy()
    by = frame["permno"]
    logs = [panel.fill_log] if len(panel.fill_log) else []
    for name in FILL_FIELDS:
        present = frame[name].notna()
        source = frame["date"].where(present).groupby(by).ffill()
        carried = frame[name].groupby(by).ffill()
        fill = ~present & source.notna()
        if max_staleness_months is not None:
            fill &= _month_gap(frame["date"], source) <= max_staleness_months
        if not fill.any():
            continue
        frame.loc[fill, name] = carried[fill]
        logs.append(
            pd.DataFrame(
                {
                    "permno": frame.loc[fill, "permno"].to_numpy(),
                    "field": name,
                    "source_date": source[fill].to_numpy(),
                    "target_date": frame.loc[fill, "date"].to_numpy(),
                }
            )
        )
        if report is not None:
            report.filled_by_field[name] = report.filled_by_field.get(name, 0) + int(fill.sum())
    if logs:
        fill_log = pd.concat(logs, ignore_index=True)
        fill_log = fill_log.sort_values(["permno", "target_date"], kind="mergesort").reset_index(drop=True)
    else:
        fill_log = pd.DataFrame(columns=FILL_LOG_COLUMNS)
    if report is not None:
        report.cells_filled = len(fill_log)
    return PointInTimePanel(frame, fill_log, panel.as_of_date, panel.before_start)


def midcap_mask(frame: pd.DataFrame, min_cap: float, max_cap: float) -> pd.Series:
    return (frame["market_cap"] >= min_cap) & (frame["market_cap"] <= max_cap)


def midcap_filter(
    panel: PointInTimePanel, min_cap: float = 2e9, max_cap: float = 10e9
) -> PointInTimePanel:
    """Keep rows whose market cap lies in ``[min_cap, max_cap]`` on that row's date."""
    if not min_cap < max_cap:
        raise ValueError(f"min_cap ({min_cap}) must be below max_cap ({max_cap})")
    keep = midcap_mask(panel.frame, min_cap, max_cap)
    frame = panel.frame[keep].reset_index(drop=True)
    log = panel.fill_log
    if len(log):
        kept = frame[["permno", "date"]].rename(columns={"date": "target_date"})
        log = log.merge(kept, on=["permno", "target_date"], how="inner")
    return PointInTimePanel(frame, log, panel.as_of_date, panel.before_start)


def as_of(panel: PointInTimePanel, t) -> PointInTimePanel:
    """View of ``panel`` restricted to rows dated on or before ``t``.

    The result never depends on rows dated after ``t``.  A date before the
    first row yields an empty panel with ``before_start`` set.
    """
    t = pd.Timestamp(t)
    frame = panel.frame
    before = len(frame) == 0 or t < frame["date"].iloc[0]
    view = frame.iloc[: panel.rows_until(t)]
    log = panel.fill_log
    if len(log):
        log = log[log["target_date"] <= t].reset_index(drop=True)
    return PointInTimePanel(view, log, t, bool(before))


def build_panel(
    crsp_path,
    compustat_path,
    links_path,
    sentiment_path=None,
    *,
    max_staleness_months: int | None = None,
) -> tuple[PointInTimePanel, IngestReport]:
    """Load, merge and forward fill the four input files (no mid-cap filter)."""
    report = IngestReport()
    crsp = load_crsp(crsp_path, report)
    comp = load_compustat(compustat_path, report)
    links = load_links(links_path)
    sent = load_sentiment(sentiment_path, report) if sentiment_path else None
    panel = merge_link(crsp, comp, links, sent, report)
    panel = forward_fill(panel, max_staleness_months, report)
    return panel, report


def serialize(panel: PointInTimePanel) -> bytes:
    """Canonical byte form of a panel, used for equality audits."""
    return panel.frame.to_csv(index=False, date_format="%Y-%m-%d", float_format="%.17g").encode()
