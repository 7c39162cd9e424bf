"""
Synthetic stand-in for the CRSP / Compustat / link / sentiment inputs.

The generator plants a known linear signal: next-month returns load on the
cross-sectional z-scores of the currently observable gross margin and
sentiment, plus a market factor and idiosyncratic noise.  With
``planted_beta = 0`` returns carry no feature information at all.

Fundamentals are built from a few firm-level drivers so that the margin
ratios are strongly collinear, which gives the VIF and correlation pruning
something to remove.  Output is deterministic for a given seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .config import Config
from .panel import COMPUSTAT_COLUMNS, CRSP_COLUMNS, LINK_COLUMNS, SENTIMENT_COLUMNS

FLOAT_FORMAT = "%.10g"


@dataclass
class SyntheticData:
    crsp: pd.DataFrame
    compustat: pd.DataFrame
    links: pd.DataFrame
    sentiment: pd.DataFrame
    benchmark: pd.DataFrame

    def write(self, directory) -> dict[str, Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = {}
        for name in ("crsp", "compustat", "links", "sentiment", "benchmark"):
            path = directory / f"{name}.csv"
            getattr(self, name).to_csv(path, index=False, float_format=FLOAT_FORMAT, date_format="%Y-%m-%d")
            paths[name] = path
        return paths


def _zscore(x: np.ndarray, live: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    v = x[live]
    if v.size > 1 and v.std() > 0:
        out[live] = (v - v.mean()) / v.std()
    return out


def generate_synthetic(config: Config | None = None, seed: int | None = None) -> SyntheticData:
    """Simulate ``synth_n_stocks`` securities over ``synth_n_months`` month-start dates."""
    config = config or Config()
    seed = config.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    n = config.synth_n_stocks
    n_months = config.synth_n_months
    dates = pd.date_range(config.synth_start, periods=n_months, freq="MS")
    planted = config.planted_beta

    permno = 10001 + np.arange(n)
    gvkey = 100001 + np.arange(n)

    # listing windows: most names live throughout, some list late or delist early
    first = np.zeros(n, dtype=int)
    last = np.full(n, n_months - 1)
    late = rng.random(n) < 0.08
    first[late] = rng.integers(1, n_months // 2, late.sum())
    early = (rng.random(n) < 0.08) & ~late
    last[early] = rng.integers(n_months // 2, n_months - 1, early.sum())

    # firm drivers
    base_gm = rng.uniform(0.20, 0.60, n)
    base_opex = rng.uniform(0.05, 0.25, n)
    tax = rng.uniform(0.18, 0.30, n)
    da_ratio = rng.uniform(0.02, 0.08, n)
    turnover = rng.uniform(0.5, 1.5, n)
    equity_ratio = rng.uniform(0.3, 0.7, n)
    ca_share = rng.uniform(0.2, 0.5, n)
    cur_ratio = np.exp(rng.normal(np.log(1.8), 0.3, n))
    lt_debt_share = rng.uniform(0.3, 0.6, n)
    st_debt_share = rng.uniform(0.05, 0.15, n)
    cash_share = rng.uniform(0.03, 0.15, n)
    rate = rng.uniform(0.03, 0.07, n)
    sales_yield = np.exp(rng.normal(np.log(0.7), 0.4, n))
    mkt_beta = rng.normal(1.0, 0.15, n)
    idio_vol = 0.065 * np.exp(rng.normal(0.0, 0.15, n))
    div_yield = np.where(rng.random(n) < 0.6, rng.uniform(0.0, 0.03, n), 0.0) / 12.0

    cap0 = np.exp(rng.normal(np.log(4.5e9), 0.6, n))
    prc = rng.uniform(15.0, 120.0, n)
    shrout = np.round(cap0 / (prc * 1000.0), 3)

    market = rng.normal(0.008, 0.04, n_months)
    benchmark = market + rng.normal(0.0, 0.004, n_months)

    # quarterly state, refreshed at calendar quarter ends
    gm_shock = np.zeros(n)
    opex_shock = np.zeros(n)
    revt_annual = cap0 * sales_yield
    sent_latent = rng.normal(0.0, 1.0, n)
    obs_gm = np.full(n, np.nan)
    obs_sent = np.full(n, np.nan)

    crsp_rows, comp_rows, sent_rows = [], [], []
    for m, t in enumerate(dates):
        live = (first <= m) & (m <= last)

        # returns realized over the month ending at t, driven by signals observed at t-1
        if m > 0:
            signal = (_zscore(obs_gm, live & np.isfinite(obs_gm))
                      + _zscore(obs_sent, live & np.isfinite(obs_sent))) / np.sqrt(2.0)
            ret = planted * signal + mkt_beta * market[m] + idio_vol * rng.standard_normal(n)
            ret = np.maximum(ret, -0.9)
            retx = ret - div_yield
            prc = prc * (1.0 + retx)
            ret = np.where(first < m, ret, np.nan)
        else:
            ret = np.full(n, np.nan)
            retx = ret
        retx = np.where(np.isfinite(ret), retx, np.nan)

        if t.month in (1, 4, 7, 10) or m == 0:
            datadate = t - pd.Timedelta(days=1)
            gm_shock = 0.8 * gm_shock + rng.normal(0.0, 0.03, n)
            opex_shock = 0.8 * opex_shock + rng.normal(0.0, 0.015, n)
            revt_annual = revt_annual * np.exp(rng.normal(0.01, 0.04, n))
            gm = np.clip(base_gm + gm_shock, 0.05, 0.90)
            om = gm - np.clip(base_opex + opex_shock, 0.01, 0.5)
            revt = revt_annual / 4.0
            at = revt_annual / turnover
            ceq = at * equity_ratio * np.exp(rng.normal(0.0, 0.05, n))
            lt = at - ceq
            act = at * ca_share
            lct = act / cur_ratio
            dltt = lt * lt_debt_share
            dlc = lt * st_debt_share
            che = at * cash_share
            xint = (dltt + dlc) * rate / 4.0
            oiadp = om * revt
            nm = om * (1.0 - tax) - xint / revt
            fields = {
                "at": at, "lt": lt, "ceq": ceq, "revt": revt, "gp": gm * revt,
                "oiadp": oiadp, "ni": nm * revt, "act": act, "lct": lct,
                "dltt": dltt, "dlc": dlc, "che": che, "xint": xint,
                "ebitda": oiadp + da_ratio * revt, "epspx": nm * revt / (shrout * 1000.0),
            }
            reported = live & (rng.random(n) > 0.03)
            idx = np.flatnonzero(reported)
            block = pd.DataFrame({k: v[idx] for k, v in fields.items()})
            # sparse missing cells exercise forward fill
            block = block.mask(rng.random(block.shape) < 0.02)
            block.insert(0, "tic", [f"S{i:04d}" for i in idx])
            block.insert(0, "datadate", datadate)
            block.insert(0, "gvkey", gvkey[idx])
            comp_rows.append(block)
            obs_gm = np.where(reported, gm, obs_gm)

        sent_latent = 0.7 * sent_latent + rng.normal(0.0, 0.7, n)
        sentiment = np.tanh(0.6 * sent_latent)
        has_news = live & (rng.random(n) > 0.15)
        obs_sent = np.where(has_news, sentiment, obs_sent)
        sent_rows.append(pd.DataFrame({"gvkey": gvkey[has_news], "date": t, "avg_sentiment": sentiment[has_news]}))

        # a few prices stored CRSP-style as negative bid/ask midpoints
        price_out = np.where(rng.random(n) < 0.02, -prc, prc)
        crsp_rows.append(
            pd.DataFrame(
                {"permno": permno[live], "date": t, "prc": price_out[live], "shrout": shrout[live],
                 "ret": ret[live], "retx": retx[live]}
            )
        )

    crsp = pd.concat(crsp_rows, ignore_index=True)[CRSP_COLUMNS]
    crsp = crsp.sort_values(["permno", "date"], kind="mergesort").reset_index(drop=True)
    compustat = pd.concat(comp_rows, ignore_index=True)[COMPUSTAT_COLUMNS]

    link_start = np.where(rng.random(n) < 0.03, dates[min(12, n_months - 1)], pd.Timestamp("1990-01-01"))
    links = pd.DataFrame(
        {
            "permno": permno,
            "gvkey": gvkey,
            "linktype": "LC",
            "linkprim": "P",
            "linkdt": pd.to_datetime(link_start),
            "linkenddt": [dates[last[i]] if early[i] else pd.NaT for i in range(n)],
        },
        columns=LINK_COLUMNS,
    )
    sentiment = pd.concat(sent_rows, ignore_index=True)[SENTIMENT_COLUMNS]
    bench = pd.DataFrame({"date": dates, "ret": benchmark})
    return SyntheticData(crsp, compustat, links, sentiment, bench)
