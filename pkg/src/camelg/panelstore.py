"""Bank-year panel ingest, validation and growth derivation.

Bank rows and macro rows arrive as two CSV files. Column names in the files
may differ from the logical names used here; a plain ``key=value`` mapping
(logical name on the left) translates them.
"""

from __future__ import annotations

import io
import os
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
import pandas as pd

__all__ = [
    "BANK_COLUMNS",
    "GROWTH_SOURCES",
    "MACRO_COLUMNS",
    "ColumnSchema",
    "DuplicateKey",
    "EmptyInput",
    "MissingColumn",
    "NonNumericCell",
    "PanelDataset",
    "PanelError",
    "SingleYearEntity",
    "ValidationReport",
    "compute_growth",
    "load_panel",
    "parse_keyvalue",
    "serialize_panel",
    "validate_panel",
]

BANK_KEYS = ("bank_id", "year")
BANK_CATEGORICAL = ("bank_type",)
BANK_NUMERIC = (
    "bank_size",
    "total_assets",
    "shareholders_equity",
    "net_operating_profit",
    "total_comprehensive_income",
    "uncollectible_loans",
    "loans",
    "assets",
    "bank_deposits",
    "other_deposits",
)
BANK_COLUMNS = BANK_KEYS + BANK_CATEGORICAL + BANK_NUMERIC
MACRO_COLUMNS = ("year", "trade_openness", "financial_openness", "poverty_rate", "innovation")

# level column -> derived first-difference column
GROWTH_SOURCES = {
    "loans": "growth_loans",
    "assets": "growth_assets",
    "bank_deposits": "growth_bank_deposits",
    "other_deposits": "growth_other_deposits",
}


class PanelError(ValueError):
    pass


class MissingColumn(PanelError):
    pass


class DuplicateKey(PanelError):
    def __init__(self, bank, year):
        super().__init__(f"duplicate observation for bank {bank!r} in {year}")
        self.bank = bank
        self.year = year


class NonNumericCell(PanelError):
    def __init__(self, row, col, value):
        super().__init__(f"row {row}, column {col!r}: {value!r} is not numeric")
        self.row = row
        self.col = col


class EmptyInput(PanelError):
    pass


class SingleYearEntity(UserWarning):
    pass


def parse_keyvalue(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment, blank lines are skipped."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


@dataclass(frozen=True)
class ColumnSchema:
    """Maps logical column names to the names used in the input files."""

    mapping: Mapping[str, str] = field(default_factory=dict)
    year_range: tuple[int, int] = (1900, 2100)

    @classmethod
    def from_text(cls, text: str) -> "ColumnSchema":
        kv = parse_keyvalue(text)
        years = kv.pop("year_range", None)
        year_range = (1900, 2100)
        if years:
            lo, hi = years.replace("-", " ").replace(",", " ").split()
            year_range = (int(lo), int(hi))
        return cls(kv, year_range)

    @classmethod
    def from_file(cls, path) -> "ColumnSchema":
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())

    def source(self, logical: str) -> str:
        return self.mapping.get(logical, logical)


@dataclass(frozen=True, eq=False)
class PanelDataset:
    """Bank-year panel plus the yearly macro series.

    Treated as immutable: operations return new datasets instead of editing
    the frames in place.

    ``observations`` is indexed 0..N-1 and sorted by ``(bank_id, year)``;
    ``macro`` is sorted by year. Missing cells are ``NaN``.
    """

    observations: pd.DataFrame
    macro: pd.DataFrame

    def __post_init__(self):
        obs = self.observations.sort_values(list(BANK_KEYS), kind="mergesort").reset_index(drop=True)
        mac = self.macro.sort_values("year", kind="mergesort").reset_index(drop=True)
        object.__setattr__(self, "observations", obs)
        object.__setattr__(self, "macro", mac)

    @property
    def banks(self) -> list:
        return list(pd.unique(self.observations["bank_id"]))

    @property
    def years(self) -> list[int]:
        return sorted(int(y) for y in pd.unique(self.observations["year"]))

    @property
    def n_entities(self) -> int:
        return len(self.banks)

    @property
    def n_periods(self) -> int:
        return len(self.years)

    def rows_per_entity(self) -> dict:
        counts = self.observations.groupby("bank_id", sort=True).size()
        return {k: int(v) for k, v in counts.items()}

    @property
    def balanced(self) -> bool:
        sets = self.observations.groupby("bank_id")["year"].apply(frozenset)
        return sets.nunique() <= 1

    def merged(self) -> pd.DataFrame:
        """Bank rows joined with the macro row of their year."""
        return self.observations.merge(self.macro, on="year", how="left", validate="many_to_one")

    def with_observations(self, observations: pd.DataFrame) -> "PanelDataset":
        return PanelDataset(observations, self.macro)


def _read_csv(source, what: str) -> pd.DataFrame:
    if isinstance(source, (bytes, bytearray)):
        source = io.BytesIO(source)
    elif isinstance(source, (str, os.PathLike)) and not os.path.exists(source):
        raise FileNotFoundError(f"{what} file not found: {source}")
    try:
        frame = pd.read_csv(source, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError as exc:
        raise EmptyInput(f"{what} input is empty") from exc
    if frame.empty:
        raise EmptyInput(f"{what} input has a header but no rows")
    return frame


def _numeric(frame: pd.DataFrame, col: str, header: str) -> pd.Series:
    out = np.empty(len(frame))
    for i, raw in enumerate(frame[header]):
        text = raw.strip()
        if text == "" or text.upper() in ("NA", "NAN"):
            out[i] = np.nan
            continue
        try:
            out[i] = float(text)
        except ValueError:
            # +2: 1-based rows and the header line
            raise NonNumericCell(i + 2, header, raw) from None
    return pd.Series(out, name=col)


def _select(frame: pd.DataFrame, schema: ColumnSchema, required: Iterable[str],
            optional: Iterable[str], what: str) -> dict[str, str]:
    cols = {}
    for logical in required:
        header = schema.source(logical)
        if header not in frame.columns:
            raise MissingColumn(f"{what} input lacks column {header!r} (for {logical})")
        cols[logical] = header
    for logical in optional:
        header = schema.source(logical)
        if header in frame.columns:
            cols[logical] = header
    return cols


def load_panel(bank_source, macro_source, schema: ColumnSchema | None = None) -> PanelDataset:
    """Read bank and macro CSV inputs into a :class:`PanelDataset`.

    Parameters
    ----------
    bank_source, macro_source : path, bytes or binary file object
        UTF-8 comma-separated text with a header row.
    schema : ColumnSchema, optional
        Logical-to-file column mapping; identity when omitted.

    Raises
    ------
    EmptyInput, MissingColumn, NonNumericCell, DuplicateKey
    """
    schema = schema or ColumnSchema()
    raw = _read_csv(bank_source, "bank")
    growth_cols = tuple(GROWTH_SOURCES.values()) + ("growth",)
    cols = _select(raw, schema, BANK_COLUMNS, growth_cols, "bank")
    data = {}
    for logical, header in cols.items():
        if logical in ("bank_id", "bank_type"):
            data[logical] = raw[header].str.strip()
        else:
            data[logical] = _numeric(raw, logical, header)
    obs = pd.DataFrame(data)
    if obs["year"].isna().any():
        raise PanelError("year must be present on every row")
    obs["year"] = obs["year"].astype(int)
    dup = obs.duplicated(list(BANK_KEYS), keep="first")
    if dup.any():
        first = obs.loc[dup].iloc[0]
        raise DuplicateKey(first["bank_id"], int(first["year"]))

    mraw = _read_csv(macro_source, "macro")
    mcols = _select(mraw, schema, MACRO_COLUMNS, (), "macro")
    macro = pd.DataFrame({k: _numeric(mraw, k, h) for k, h in mcols.items()})
    if macro["year"].isna().any():
        raise PanelError("year must be present on every macro row")
    macro["year"] = macro["year"].astype(int)
    if macro["year"].duplicated().any():
        year = int(macro.loc[macro["year"].duplicated(), "year"].iloc[0])
        raise DuplicateKey("<macro>", year)
    return PanelDataset(obs, macro)


def _frame_to_csv(frame: pd.DataFrame) -> bytes:
    buf = io.StringIO()
    frame.to_csv(buf, index=False, float_format=lambda v: repr(float(v)), na_rep="", lineterminator="\n")
    return buf.getvalue().encode("utf-8")


def serialize_panel(dataset: PanelDataset) -> tuple[bytes, bytes]:
    """Inverse of :func:`load_panel` with the identity schema."""
    return _frame_to_csv(dataset.observations), _frame_to_csv(dataset.macro)


def compute_growth(dataset: PanelDataset, components: Iterable[str] | None = None) -> PanelDataset:
    """Add first-difference growth columns and the aggregate ``growth``.

    Each ``growth_*`` column is ``value(t) - value(t-1)`` within a bank; the
    first year of a bank, and any year whose predecessor is absent, is NaN.
    ``growth`` sums the selected components (all four by default).
    """
    components = list(components or GROWTH_SOURCES)
    unknown = [c for c in components if c not in GROWTH_SOURCES]
    if unknown:
        raise ValueError(f"unknown growth components {unknown}")
    obs = dataset.observations.copy()
    counts = obs.groupby("bank_id")["year"].transform("size")
    for bank in pd.unique(obs.loc[counts < 2, "bank_id"]):
        warnings.warn(f"bank {bank!r} has a single year; its growth is missing",
                      SingleYearEntity, stacklevel=2)
    grouped = obs.groupby("bank_id", sort=False)
    prev_year = grouped["year"].shift(1)
    consecutive = (obs["year"] - prev_year) == 1
    for level, derived in GROWTH_SOURCES.items():
        diff = obs[level] - grouped[level].shift(1)
        obs[derived] = diff.where(consecutive)
    obs["growth"] = obs[[GROWTH_SOURCES[c] for c in components]].sum(axis=1, min_count=len(components))
    return dataset.with_observations(obs)


@dataclass
class ValidationReport:
    issues: list[str] = field(default_factory=list)
    missing_macro_years: list[int] = field(default_factory=list)
    balanced: bool = True
    rows_per_entity: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.issues

    def __bool__(self) -> bool:
        return bool(self.issues)


def validate_panel(dataset: PanelDataset, year_range: tuple[int, int] = (1900, 2100)) -> ValidationReport:
    """Collect invariant violations without raising."""
    obs, mac = dataset.observations, dataset.macro
    report = ValidationReport(balanced=dataset.balanced, rows_per_entity=dataset.rows_per_entity())
    lo, hi = year_range
    for i, row in obs.iterrows():
        tag = f"bank {row['bank_id']!r} {int(row['year'])}"
        if not lo <= row["year"] <= hi:
            report.issues.append(f"{tag}: year outside {lo}-{hi}")
        if not row["total_assets"] > 0:
            report.issues.append(f"{tag}: total_assets must be positive")
        if row["uncollectible_loans"] < 0:
            report.issues.append(f"{tag}: uncollectible_loans is negative")
        size = row["bank_size"]
        if not (size in (1, 2, 3, 4, 5)):
            report.issues.append(f"{tag}: bank_size {size!r} not in 1..5")
    missing = sorted(set(dataset.years) - set(int(y) for y in mac["year"]))
    for year in missing:
        report.issues.append(f"macro series has no row for {year}")
    report.missing_macro_years = missing
    for _, row in mac.iterrows():
        if not row["trade_openness"] > 0:
            report.issues.append(f"macro {int(row['year'])}: trade_openness must be positive")
        if not 0 <= row["poverty_rate"] <= 100:
            report.issues.append(f"macro {int(row['year'])}: poverty_rate outside [0, 100]")
    if not report.balanced:
        report.issues.append("panel is unbalanced")
    return report
