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

# # The dollar-neutral optimizer
#
# Maximize expected return minus a risk penalty subject to longs and shorts
# cancelling.  The solution is closed form, so its properties can be checked
# directly.

# +
import numpy as np

from midcap_neutral import OptimizerParams, normalize_gross, solve_dollar_neutral
from midcap_neutral.optimizer import objective

rng = np.random.default_rng(1)
n = 8
a = rng.standard_normal((n, n))
sigma = a @ a.T / n + 0.05 * np.eye(n)
mu = rng.normal(0, 0.02, n)
res = solve_dollar_neutral(mu, sigma, OptimizerParams(risk_aversion=2.0))
res.w.round(4), res.w.sum()
# -

# Stationarity holds to machine precision: the gradient of the objective is
# a constant vector, the multiplier of the budget constraint.

grad = mu - 2 * 2.0 * sigma @ res.w
grad.round(12)

# Adding the same number to every expected return changes nothing, since a
# zero-sum portfolio has no exposure to a common level.

shifted = solve_dollar_neutral(mu + 0.3, sigma)
np.abs(shifted.w - res.w).max()

# Doubling risk aversion halves the raw weights exactly.

half = solve_dollar_neutral(mu, sigma, OptimizerParams(risk_aversion=4.0))
np.abs(half.w - res.w / 2).max()

# Any zero-sum nudge lowers the objective.

d = rng.standard_normal(n)
d -= d.mean()
for step in (1e-3, 1e-2, 1e-1):
    print(step, objective(res.w + step * d, mu, sigma, 2.0) - res.objective_value)

# Raw weights are small; for trading they are scaled so each side holds the
# gross target.  Scaling keeps neutrality and leaves the Sharpe ratio alone.

scaled = normalize_gross(res, OptimizerParams(gross_target=1.0))
scaled.long_dollars, scaled.short_dollars, scaled.w.sum()
