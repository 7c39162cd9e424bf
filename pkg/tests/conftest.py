from __future__ import annotations

import numpy as np
import pandas as pd
import pytest

from midcap_neutral.config import Config
from midcap_neutral.panel import (
    COMPUSTAT_COLUMNS,
    CRSP_COLUMNS,
    FUNDAMENTAL_FIELDS,
    LINK_COLUMNS,
    SENTIMENT_COLUMNS,
    build_panel,
    load_benchmark,
)
from midcap_neutral.synthetic import generate_synthetic


def write_csv(path, frame: pd.DataFrame):
    frame.to_csv(path, index=False, date_format="%Y-%m-%d")
    return path


def fundamentals(gvkey, datadate, **overrides) -> dict:
    """One Compustat row with round numbers; override any field."""
    row = {"gvkey": gvkey, "datadate": datadate, "tic": f"T{gvkey}"}
    base = dict(
        at=1000.0, lt=400.0, ceq=600.0, revt=500.0, gp=200.0, oiadp=80.0, ni=50.0,
        act=300.0, lct=150.0, dltt=100.0, dlc=20.0, che=30.0, xint=10.0, ebitda=100.0, epspx=2.0,
    )
    base.update(overrides)
    row.update(base)
    return row


@pytest.fixture
def tiny_inputs(tmp_path):
    """Two securities over four months, hand-sized for exact assertions."""
    dates = ["2015-01-01", "2015-02-01", "2015-03-01", "2015-04-01"]
    crsp = pd.DataFrame(
        [
            (1001, d, 50.0, 100000.0, r, r) for d, r in zip(dates, [np.nan, 0.01, -0.02, 0.03])
        ]
        + [(1002, d, -20.0, 50000.0, r, r) for d, r in zip(dates, [np.nan, 0.02, 0.00, -0.01])],
        columns=CRSP_COLUMNS,
    )
    comp = pd.DataFrame(
        [
            fundamentals(5001, "2014-12-31"),
            fundamentals(5001, "2015-03-31", ni=70.0),
            fundamentals(5002, "2015-01-31", ni=np.nan),
            fundamentals(5002, "2015-02-28"),
        ],
        columns=COMPUSTAT_COLUMNS,
    )
    links = pd.DataFrame(
        [
            (1001, 5001, "LC", "P", "2000-01-01", ""),
            (1002, 5002, "LU", "P", "2000-01-01", ""),
        ],
        columns=LINK_COLUMNS,
    )
    sent = pd.DataFrame(
        [(5001, "2015-01-01", 0.5), (5001, "2015-03-01", -0.25), (5002, "2015-02-01", 0.1)],
        columns=SENTIMENT_COLUMNS,
    )
    paths = {
        "crsp": write_csv(tmp_path / "crsp.csv", crsp),
        "compustat": write_csv(tmp_path / "compustat.csv", comp),
        "links": write_csv(tmp_path / "links.csv", links),
        "sentiment": write_csv(tmp_path / "sentiment.csv", sent),
    }
    return paths


@pytest.fixture(scope="session")
def default_config() -> Config:
    return Config()


@pytest.fixture(scope="session")
def synthetic_dir(tmp_path_factory, default_config):
    out = tmp_path_factory.mktemp("synthetic")
    generate_synthetic(default_config).write(out)
    return out


@pytest.fixture(scope="session")
def default_build(synthetic_dir):
    return build_panel(
        synthetic_dir / "crsp.csv",
        synthetic_dir / "compustat.csv",
        synthetic_dir / "links.csv",
        synthetic_dir / "sentiment.csv",
    )


@pytest.fixture(scope="session")
def default_panel(default_build):
    return default_build[0]


@pytest.fixture(scope="session")
def default_benchmark(synthetic_dir):
    return load_benchmark(synthetic_dir / "benchmark.csv")


@pytest.fixture(scope="session")
def default_protocol(default_panel, default_config, default_benchmark):
    from midcap_neutral.backtest import run_protocol

    return run_protocol(default_panel, default_config, default_benchmark)


def random_spd(rng: np.random.Generator, n: int) -> np.ndarray:
    a = rng.standard_normal((n, n))
    return a @ a.T / n + 0.05 * np.eye(n)


__all__ = ["FUNDAMENTAL_FIELDS", "fundamentals", "random_spd", "write_csv"]


# -- acceptance reporting ------------------------------------------------------------

_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Record one acceptance line; the lines are repeated in the terminal summary."""

    def record(number: int, passed: bool, detail: str) -> None:
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(line)
        request.config.stash.setdefault(_ACCEPTANCE, {})[number] = line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])
