"""
Second-stage panel regressions on efficiency scores
===================================================

Score the bundled synthetic panel, then explain the scores with the
macro regressors: pooled OLS, fixed and random effects, the Hausman
choice, and the diagnostics run before any of it.
"""

from camelg.dea import DeaSpec, efficiency
from camelg.diagkit import breusch_pagan, vif
from camelg.panelreg import (
    MACRO_REGRESSORS,
    RegressionSpec,
    fixed_effects,
    hausman,
    ols,
    random_effects,
    second_stage_frame,
)
from camelg.panelstore import compute_growth, load_panel
from camelg.synthetic import bundled_paths

data = compute_growth(load_panel(*bundled_paths()))
spec = DeaSpec(
    desirable_inputs=("total_assets", "shareholders_equity"),
    desirable_outputs=("net_operating_profit", "total_comprehensive_income", "growth"),
    undesirable_outputs=("uncollectible_loans",),
)
frame = second_stage_frame(data, efficiency(spec, data))
print(frame.groupby("year")["score"].mean().round(3))

# Collinearity and heteroskedasticity checks on the regressors.
print(vif(frame[list(MACRO_REGRESSORS)]))
reg = RegressionSpec()
pooled = ols(reg, frame)
print(breusch_pagan(pooled.resid, frame[list(MACRO_REGRESSORS)]).row())
print(pooled.coef_table())

fe = fixed_effects(reg, frame)
re = random_effects(reg, frame)
print(fe.coef_table())
print(re.coef_table())

# The regressors vary only by year, so in a balanced panel FE and RE
# slopes coincide and the Hausman statistic is zero up to round-off.
print(hausman(fe, re))
