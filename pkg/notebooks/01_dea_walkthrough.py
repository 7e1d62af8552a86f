"""
Slack-based efficiency of a small bank panel
============================================

Score five banks on one year of data, check one score against the
linear program it comes from, and look at the benchmark a weak bank is
measured against.
"""

import numpy as np
import pandas as pd

from camelg import DeaSpec, efficiency, solve
from camelg.dea import benchmark, build_dmu_lp, projection
from camelg.panelstore import PanelDataset

# Two inputs, two desirable outputs and one undesirable output per bank.
banks = pd.DataFrame({
    "bank_id": ["A", "B", "C", "D", "E"],
    "year": 2020,
    "bank_type": "private",
    "bank_size": 3,
    "total_assets": [100.0, 120.0, 90.0, 150.0, 110.0],
    "shareholders_equity": [10.0, 14.0, 9.0, 12.0, 11.0],
    "net_operating_profit": [5.0, 6.5, 4.0, 5.5, 3.0],
    "total_comprehensive_income": [4.0, 5.0, 3.5, 4.0, 2.0],
    "uncollectible_loans": [1.0, 0.8, 1.5, 2.0, 2.5],
})
macro = pd.DataFrame({"year": [2020], "trade_openness": [60.0], "financial_openness": [1.0],
                      "poverty_rate": [14.0], "innovation": [40.0]})
data = PanelDataset(banks, macro)

spec = DeaSpec(
    desirable_inputs=("total_assets", "shareholders_equity"),
    desirable_outputs=("net_operating_profit", "total_comprehensive_income"),
    undesirable_outputs=("uncollectible_loans",),
)
panel = efficiency(spec, data)
print(panel.cells[["bank_id", "score", "status"]])

# The score of bank E is the reciprocal of its LP optimum.
lp = build_dmu_lp(spec, data, "E", 2020)
sol = solve(lp)
print("LP optimum", sol.objective, "-> score", 1.0 / sol.objective)
print("duality gap", sol.duality_gap)

# Bank E's projection onto the frontier equals the peer combination.
target = projection(panel, "E", 2020)
peers = benchmark(panel, "E", 2020)
print(pd.DataFrame({"observed": banks.set_index("bank_id").loc["E", list(spec.variables)],
                    "projection": target, "peer mix": peers}))

# Rescaling any variable (thousands to millions, say) leaves every score unchanged.
rescaled = data.with_observations(banks.assign(total_assets=banks["total_assets"] / 1000))
print("max score change", np.abs(efficiency(spec, rescaled).cells["score"].to_numpy()
                                 - panel.cells["score"].to_numpy()).max())
