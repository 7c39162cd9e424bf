"""
Financial ratio features per security-month.

Valuation ratios are kept in reciprocal form (earnings-to-price and
book-to-price); P/E and P/B only appear in the wide panel export and never
in the model matrix.  Any ratio whose denominator is zero or missing is
emitted as missing, so no infinities leave this module.
"""

from __future__ import annotations

import numpy as np
import pandas as pd

from .panel import FUNDAMENTAL_FIELDS, PointInTimePanel

FEATURE_NAMES = [
    "ep_ratio",
    "bp_ratio",
    "ps_ratio",
    "enterprise_value",
    "ev_to_ebitda",
    "gross_margin",
    "operating_margin",
    "net_margin",
    "current_ratio",
    "debt_to_equity",
    "interest_coverage",
    "avg_sentiment",
    "ret_lag",
]

FEATURE_ROW_COLUMNS = ["permno", "date", *FEATURE_NAMES]

EXPORT_COLUMNS = [
    "permno", "date", "prc", "shrout", "market_cap", "ret", "retx",
    "gvkey", "datadate", "tic", *FUNDAMENTAL_FIELDS,
    "pe_ratio", "pb_ratio", "ps_ratio", "enterprise_value", "ev_to_ebitda",
    "gross_margin", "operating_margin", "net_margin", "current_ratio",
    "debt_to_equity", "interest_coverage",
    "linktype_y", "linkprim_y", "linkdt_y", "linkenddt_y", "avg_sentiment",
]


def safe_divide(num, den) -> np.ndarray:
    """Elementwise ``num / den`` with zero, missing or non-finite results as NaN."""
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = num / den
    out[(den == 0) | ~np.isfinite(out)] = np.nan
    return out


def _col(frame: pd.DataFrame, name: str) -> np.ndarray:
    return frame[name].to_numpy(dtype=float, na_value=np.nan)


def compute_features(view: PointInTimePanel | pd.DataFrame) -> pd.DataFrame:
    """Ratio features for every row of a merged, forward-filled panel view.

    Returns one row per input row with the columns of ``FEATURE_ROW_COLUMNS``.
    ``ret_lag`` is the return over the month that ended at the row date.
    """
    frame = view.frame if isinstance(view, PointInTimePanel) else view
    prc = _col(frame, "prc")
    shares = _col(frame, "shrout") * 1000.0
    market_cap = _col(frame, "market_cap")
    revt = _col(frame, "revt")
    ebitda = _col(frame, "ebitda")

    book_per_share = safe_divide(_col(frame, "ceq"), shares)
    sales_per_share = safe_divide(revt, shares)
    enterprise_value = market_cap + _col(frame, "dltt") + _col(frame, "dlc") - _col(frame, "che")

    out = {
        "permno": frame["permno"].to_numpy(),
        "date": frame["date"].to_numpy(),
        "ep_ratio": safe_divide(_col(frame, "epspx"), prc),
        "bp_ratio": safe_divide(book_per_share, prc),
        "ps_ratio": safe_divide(prc, sales_per_share),
        "enterprise_value": np.where(np.isfinite(enterprise_value), enterprise_value, np.nan),
        "ev_to_ebitda": safe_divide(enterprise_value, ebitda),
        "gross_margin": safe_divide(_col(frame, "gp"), revt),
        "operating_margin": safe_divide(_col(frame, "oiadp"), revt),
        "net_margin": safe_divide(_col(frame, "ni"), revt),
        "current_ratio": safe_divide(_col(frame, "act"), _col(frame, "lct")),
        "debt_to_equity": safe_divide(_col(frame, "lt"), _col(frame, "ceq")),
        "interest_coverage": safe_divide(ebitda, _col(frame, "xint")),
        "avg_sentiment": _col(frame, "avg_sentiment"),
        "ret_lag": _col(frame, "ret"),
    }
    return pd.DataFrame(out, columns=FEATURE_ROW_COLUMNS, index=frame.index)


def export_frame(view: PointInTimePanel | pd.DataFrame) -> pd.DataFrame:
    """The 41-column wide panel: merged fields plus every ratio."""
    frame = view.frame if isinstance(view, PointInTimePanel) else view
    feats = compute_features(frame)
    out = frame.copy()
    prc = _col(frame, "prc")
    shares = _col(frame, "shrout") * 1000.0
    out["pe_ratio"] = safe_divide(prc, _col(frame, "epspx"))
    out["pb_ratio"] = safe_divide(prc, safe_divide(_col(frame, "ceq"), shares))
    for name in FEATURE_NAMES:
        if name not in ("ep_ratio", "bp_ratio", "avg_sentiment", "ret_lag"):
            out[name] = feats[name]
    out = out.rename(
        columns={
            "linktype": "linktype_y",
            "linkprim": "linkprim_y",
            "linkdt": "linkdt_y",
            "linkenddt": "linkenddt_y",
        }
    )
    return out[EXPORT_COLUMNS]
