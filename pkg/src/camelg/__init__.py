"""Two-stage bank efficiency analysis: SBM-DEA scores and panel regressions on them."""

__version__ = "0.1.0"

from .dea import DeaSpec, EfficiencyPanel, efficiency  # noqa: E402
from .lpcore import LinearProgram, LpSolution, LpStatus, solve  # noqa: E402
from .panelstore import PanelDataset, compute_growth, load_panel  # noqa: E402

__all__ = [
    "DeaSpec",
    "EfficiencyPanel",
    "LinearProgram",
    "LpSolution",
    "LpStatus",
    "PanelDataset",
    "__version__",
    "compute_growth",
    "efficiency",
    "load_panel",
    "solve",
]
