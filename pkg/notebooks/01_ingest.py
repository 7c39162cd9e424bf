# ---
# jupyter:
#   jupytext:
#     text_representation:
#       extension: .py
#       format_name: light
#       format_version: '1.5'
#       jupytext_version: 1.16.1
#   kernelspec:
#     display_name: Python 3
#     language: python
#     name: python3
# ---

# # Building the point-in-time panel
#
# Simulate the four raw inputs, merge them into one monthly panel and look
# at what the merge did: forward fills, price sign handling and the mid-cap
# band.

# +
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd

from midcap_neutral import Config, as_of, build_panel, generate_synthetic, midcap_filter

workdir = Path(tempfile.mkdtemp(prefix="midcap_ingest_"))
config = Config(seed=0)
paths = generate_synthetic(config).write(workdir)
{name: path.name for name, path in paths.items()}
# -

# The security file quotes some prices negative (bid/ask midpoints).
# Market cap always uses the absolute price, and shares are in thousands.

crsp = pd.read_csv(paths["crsp"])
crsp[crsp["prc"] < 0].head()

panel, report = build_panel(paths["crsp"], paths["compustat"], paths["links"], paths["sentiment"])
print(report.to_json())

# Fundamentals arrive quarterly and are carried forward month by month
# until the next filing.  Every carried value is logged.

panel.fill_log.groupby("field").size().sort_values(ascending=False).head(8)

# Only rows inside the 2 to 10 billion band are traded.  Membership is
# re-checked every month, so names drift in and out.

mid = midcap_filter(panel, config.midcap_min, config.midcap_max)
per_month = mid.frame.groupby("date")["permno"].nunique()
per_month.describe()

# +
caps = panel.frame["market_cap"] / 1e9
np.histogram(np.log10(caps.dropna()), bins=10)
# -

# A view at date t holds only rows dated on or before t.  Anything computed
# from it cannot see later data.

t = pd.Timestamp("2018-06-01")
view = as_of(panel, t)
view.frame["date"].max(), len(view.frame), len(panel.frame)
