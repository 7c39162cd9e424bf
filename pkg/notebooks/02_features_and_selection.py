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

# # Features and feature selection
#
# Compute the ratio features on the training window, standardize each month
# cross-sectionally, then prune collinear features.

# +
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd

from midcap_neutral import Config, build_panel, generate_synthetic
from midcap_neutral.backtest import PhaseSpec, build_training_pool
from midcap_neutral.features import FEATURE_NAMES, compute_features
from midcap_neutral.preprocess import fit_feature_selection, variance_inflation

workdir = Path(tempfile.mkdtemp(prefix="midcap_features_"))
config = Config(seed=0)
paths = generate_synthetic(config).write(workdir)
panel, _ = build_panel(paths["crsp"], paths["compustat"], paths["links"], paths["sentiment"])
# -

# Raw ratios for one month.  A zero or missing denominator gives NaN rather
# than an infinite value.

feats = compute_features(panel.cross_section("2017-03-01"))
feats[FEATURE_NAMES].describe().T[["count", "mean", "50%", "max"]]

# The training pool stacks every month of the fit window.  Each month is
# median-imputed, z-scored and clipped at 3 on its own cross-section.

spec = PhaseSpec.from_config(config, "train")
pool = build_training_pool(panel, spec.fit_start, spec.fit_end, config)
pool.features.shape, float(np.abs(pool.features.to_numpy()).max())

# The margin ratios are built from shared drivers, so they are strongly
# collinear before selection.

pd.Series(variance_inflation(pool.features.to_numpy()), index=pool.features.columns).round(1)

# Greedy VIF removal first, then one representative per group of highly
# correlated survivors, chosen by rank correlation with next-month returns.

survivors, report = fit_feature_selection(pool.features, pool.labels, config.vif_threshold, config.corr_threshold)
print("kept:", survivors)
print("removed by VIF:", [(name, round(v, 1)) for name, v in report.elimination_order])
report.correlation_groups

# +
kept = pool.features[survivors]
corr = kept.corr().abs().to_numpy()
np.fill_diagonal(corr, 0.0)
print("max VIF after selection:", variance_inflation(kept.to_numpy()).max().round(3))
print("max |corr| after selection:", corr.max().round(3))
