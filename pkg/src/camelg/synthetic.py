"""Synthetic bank-year panel with the same layout as the proprietary source data.

The bundled CSV files under ``camelg/data`` were produced by
``write_bundled(seed=2024)``; regenerate them only together with the golden
pipeline outputs.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd

__all__ = ["bundled_paths", "make_synthetic_panel", "write_bundled"]

BANK_TYPES = ("state", "private", "foreign", "participation")


def make_synthetic_panel(seed: int = 2024, n_banks: int = 18,
                         years: range = range(2010, 2024)) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Return ``(banks, macro)`` frames in the CSV input layout.

    Monetary columns are integers in thousands of local currency; the panel is
    balanced over ``years``.
    """
    rng = np.random.default_rng(seed)
    T = len(years)
    sizes = np.resize(np.arange(1, 6), n_banks)
    rng.shuffle(sizes)
    types = np.array([BANK_TYPES[i % len(BANK_TYPES)] for i in range(n_banks)])
    rng.shuffle(types)

    rows = []
    for k in range(n_banks):
        size = int(sizes[k])
        base = np.exp(rng.normal(11.0 + 1.6 * size, 0.5))
        growth = rng.normal(0.17, 0.08, size=T)
        assets_path = base * np.exp(np.cumsum(growth))
        skill = rng.normal(0.0, 0.6)
        for t, year in enumerate(years):
            ta = assets_path[t]
            equity = ta * np.clip(rng.normal(0.10, 0.025), 0.02, None)
            roa = rng.normal(0.012 + 0.006 * skill, 0.012)
            profit = ta * roa
            income = profit * rng.normal(0.9, 0.35)
            npl = ta * max(rng.normal(0.012, 0.008), 0.0) * (rng.random() > 0.04)
            loans = ta * np.clip(rng.normal(0.58, 0.06), 0.2, 0.9)
            fin_assets = ta * np.clip(rng.normal(0.28, 0.05), 0.05, 0.6)
            bank_dep = ta * np.clip(rng.normal(0.05, 0.02), 0.005, 0.2)
            other_dep = ta * np.clip(rng.normal(0.55, 0.07), 0.2, 0.9)
            rows.append({
                "bank_id": f"B{k + 1:02d}",
                "year": year,
                "bank_type": types[k],
                "bank_size": size,
                "total_assets": round(ta),
                "shareholders_equity": round(equity),
                "net_operating_profit": round(profit),
                "total_comprehensive_income": round(income),
                "uncollectible_loans": round(npl),
                "loans": round(loans),
                "assets": round(fin_assets),
                "bank_deposits": round(bank_dep),
                "other_deposits": round(other_dep),
            })
    banks = pd.DataFrame(rows)

    trend = np.linspace(0.0, 1.0, T)
    macro = pd.DataFrame({
        "year": list(years),
        "trade_openness": np.round(13.0 + 6.0 * trend ** 2 + rng.normal(0, 1.2, T), 4),
        "financial_openness": np.round(3.8 + rng.normal(0, 4.0, T), 4),
        "poverty_rate": np.round(10.0 - 2.4 * trend + rng.normal(0, 0.3, T), 4),
        "innovation": np.round(34.5 + 4.0 * trend + rng.normal(0, 0.5, T), 4),
    })
    return banks, macro


def write_bundled(directory: str | Path, seed: int = 2024) -> tuple[Path, Path]:
    directory = Path(directory)
    banks, macro = make_synthetic_panel(seed)
    bank_path = directory / "synthetic_banks.csv"
    macro_path = directory / "synthetic_macro.csv"
    banks.to_csv(bank_path, index=False, lineterminator="\n")
    macro.to_csv(macro_path, index=False, lineterminator="\n")
    return bank_path, macro_path


def bundled_paths() -> tuple[Path, Path]:
    """Paths of the shipped synthetic bank and macro CSV files."""
    root = resources.files("camelg") / "data"
    return Path(str(root / "synthetic_banks.csv")), Path(str(root / "synthetic_macro.csv"))
