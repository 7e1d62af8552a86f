"""Descriptive statistics, two-way ANOVA, lagged correlation and mutual information."""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
import pandas as pd

from .distkit import f_sf

__all__ = [
    "AnovaTable",
    "ConstantSeries",
    "DegenerateRange",
    "DescriptiveStats",
    "EmptyCellUnbalanced",
    "EmptySeries",
    "InsufficientLength",
    "LengthMismatch",
    "SingletonLevel",
    "anova_two_way",
    "describe",
    "describe_frame",
    "lagged_correlation",
    "mi_label",
    "mutual_information",
    "mutual_information_matrix",
    "sturges_bins",
    "yearly_summary",
]

# column order of the descriptive tables
STAT_COLUMNS = ("mean", "median", "std", "variance", "kurtosis", "skewness", "minimum", "maximum")


class EmptySeries(ValueError):
    pass


class ConstantSeries(UserWarning):
    pass


class SingletonLevel(ValueError):
    pass


class EmptyCellUnbalanced(UserWarning):
    pass


class InsufficientLength(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


class DegenerateRange(UserWarning):
    pass


@dataclass(frozen=True)
class DescriptiveStats:
    """Sample moments of one series.

    ``kurtosis`` is the bias-corrected excess kurtosis and ``skewness`` the
    bias-corrected sample skewness; both are NaN when undefined (fewer than 4
    resp. 3 values, or a constant series).
    """

    n: int
    mean: float
    median: float
    std: float
    variance: float
    kurtosis: float
    skewness: float
    minimum: float
    maximum: float

    def row(self) -> dict[str, float]:
        d = asdict(self)
        return {k: d[k] for k in STAT_COLUMNS}


def describe(series) -> DescriptiveStats:
    """Mean, median, sample (n-1) variance, skewness, excess kurtosis, range."""
    x = np.asarray(series, dtype=float).ravel()
    if x.size == 0:
        raise EmptySeries("cannot describe an empty series")
    if np.isnan(x).any():
        raise ValueError("series contains missing values")
    n = x.size
    mean = float(np.mean(x))
    dev = x - mean
    var = float(dev @ dev / (n - 1)) if n > 1 else math.nan
    skew = kurt = math.nan
    if n > 1 and var == 0.0:
        warnings.warn("constant series: skewness and kurtosis undefined", ConstantSeries,
                      stacklevel=2)
    elif n > 2:
        z = dev / math.sqrt(var)
        skew = float(n / ((n - 1) * (n - 2)) * np.sum(z ** 3))
        if n > 3:
            kurt = float(n * (n + 1) / ((n - 1) * (n - 2) * (n - 3)) * np.sum(z ** 4)
                         - 3.0 * (n - 1) ** 2 / ((n - 2) * (n - 3)))
    return DescriptiveStats(
        n=n, mean=mean, median=float(np.median(x)),
        std=math.sqrt(var) if not math.isnan(var) else math.nan,
        variance=var, kurtosis=kurt, skewness=skew,
        minimum=float(x.min()), maximum=float(x.max()),
    )


def describe_frame(frame: pd.DataFrame, columns: Sequence[str]) -> pd.DataFrame:
    """One :func:`describe` row per column, missing cells dropped."""
    rows = []
    for col in columns:
        stats = describe(frame[col].dropna())
        rows.append({"variable": col, "n": stats.n, **stats.row()})
    return pd.DataFrame(rows)


def yearly_summary(panel) -> pd.DataFrame:
    """Per-year moments of the solved efficiency scores of an ``EfficiencyPanel``."""
    cells = panel.solved() if hasattr(panel, "solved") else panel
    rows = []
    for year, group in cells.groupby("year", sort=True):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConstantSeries)
            stats = describe(group["score"])
        rows.append({"year": int(year), "n": stats.n, **stats.row()})
    return pd.DataFrame(rows, columns=["year", "n", *STAT_COLUMNS])


@dataclass(frozen=True)
class AnovaTable:
    """Sequential (type I) sums of squares; rows: factor A, factor B, A:B, residual."""

    table: pd.DataFrame

    def __getitem__(self, source: str) -> pd.Series:
        return self.table.set_index("source").loc[source]


def _dummies(codes: np.ndarray, levels: int) -> np.ndarray:
    out = np.zeros((codes.size, levels - 1))
    for j in range(1, levels):
        out[codes == j, j - 1] = 1.0
    return out


def _rss_rank(X: np.ndarray, y: np.ndarray) -> tuple[float, int]:
    beta, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    return float(resid @ resid), int(rank)


def anova_two_way(values, factor_a, factor_b, names: tuple[str, str] = ("A", "B")) -> AnovaTable:
    """Two-way ANOVA with interaction, sequential sums of squares.

    Degrees of freedom come from rank increments of the nested dummy-coded
    designs, so empty factor combinations reduce the interaction df instead
    of failing.
    """
    y = np.asarray(values, dtype=float)
    a = pd.Categorical(np.asarray(factor_a))
    b = pd.Categorical(np.asarray(factor_b))
    if not (y.size == len(a) == len(b)):
        raise LengthMismatch("values and factors must have equal length")
    for name, fac in zip(names, (a, b)):
        if len(fac.categories) < 2:
            raise SingletonLevel(f"factor {name} has fewer than two levels")
    ca, cb = a.codes, b.codes
    la, lb = len(a.categories), len(b.categories)
    Da, Db = _dummies(ca, la), _dummies(cb, lb)
    inter = np.column_stack([Da[:, i] * Db[:, j] for i in range(la - 1) for j in range(lb - 1)])
    cells = pd.crosstab(ca, cb)
    if (cells.to_numpy() == 0).any() or cells.shape != (la, lb):
        warnings.warn("some factor combinations are empty; interaction df reduced",
                      EmptyCellUnbalanced, stacklevel=2)
    ones = np.ones((y.size, 1))
    designs = [ones, np.hstack([ones, Da]), np.hstack([ones, Da, Db]),
               np.hstack([ones, Da, Db, inter])]
    fits = [_rss_rank(X, y) for X in designs]
    n = y.size
    rss_full, rank_full = fits[-1]
    df_res = n - rank_full
    ms_res = rss_full / df_res if df_res > 0 else math.nan
    rows = []
    labels = [names[0], names[1], f"{names[0]}:{names[1]}"]
    for label, (rss0, r0), (rss1, r1) in zip(labels, fits[:-1], fits[1:]):
        df = r1 - r0
        ss = max(rss0 - rss1, 0.0)
        ms = ss / df if df > 0 else math.nan
        if ss <= 1e-12 * max(1.0, float(np.sum((y - y.mean()) ** 2))):
            F, p = 0.0, 1.0
        elif df_res > 0 and ms_res > 0:
            F = ms / ms_res
            p = f_sf(F, df, df_res)
        else:
            F, p = math.inf, 0.0
        rows.append({"source": label, "df": df, "sum_sq": ss, "mean_sq": ms, "F": F, "p_value": p})
    rows.append({"source": "Residuals", "df": df_res, "sum_sq": rss_full, "mean_sq": ms_res,
                 "F": math.nan, "p_value": math.nan})
    return AnovaTable(pd.DataFrame(rows))


def lagged_correlation(frame: pd.DataFrame, variables: Sequence[str], lag: int,
                       entity: str = "bank_id", time: str = "year") -> pd.DataFrame:
    """Pooled Pearson correlation of variable i at t with variable j at t - lag.

    Pairs are formed within each entity where both years are present and
    both cells are non-missing for the (i, j) pair.
    """
    if lag < 0:
        raise ValueError("lag must be nonnegative")
    variables = list(variables)
    lens = frame.groupby(entity)[time].size()
    if (lens <= lag + 1).all():
        raise InsufficientLength(f"no entity has more than {lag + 1} periods")
    cur = frame[[entity, time, *variables]]
    past = cur.copy()
    past[time] = past[time] + lag
    joined = cur.merge(past, on=[entity, time], suffixes=("", "@lag"))
    out = np.empty((len(variables), len(variables)))
    for i, vi in enumerate(variables):
        for j, vj in enumerate(variables):
            pair = joined[[vi, f"{vj}@lag"]].dropna().to_numpy()
            if pair.shape[0] < 3:
                raise InsufficientLength(f"fewer than 3 aligned pairs for {vi}/{vj}")
            a = pair[:, 0] - pair[:, 0].mean()
            b = pair[:, 1] - pair[:, 1].mean()
            denom = math.sqrt(float(a @ a) * float(b @ b))
            out[i, j] = float(a @ b) / denom if denom > 0 else math.nan
    return pd.DataFrame(np.clip(out, -1.0, 1.0), index=variables, columns=variables)


def sturges_bins(n: int) -> int:
    return int(math.ceil(math.log2(n))) + 1


def mutual_information(x, y, bins: int | None = None) -> float:
    """Histogram plug-in mutual information in nats on an equal-width grid."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size:
        raise LengthMismatch("x and y must have equal length")
    if x.size < 10:
        raise InsufficientLength("mutual information needs at least 10 observations")
    bins = sturges_bins(x.size) if bins is None else int(bins)
    if bins < 2:
        raise ValueError("bins must be at least 2")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        warnings.warn("constant series carries no information", DegenerateRange, stacklevel=2)
        return 0.0
    # integer counts and fsum keep MI(x, y) == MI(y, x) bit for bit
    counts, _, _ = np.histogram2d(x, y, bins=bins)
    counts = counts.astype(np.int64)
    n = int(counts.sum())
    row = counts.sum(axis=1)
    col = counts.sum(axis=0)
    i, j = np.nonzero(counts)
    c = counts[i, j].astype(float)
    terms = c / n * np.log(c * n / (row[i] * col[j]).astype(float))
    return max(math.fsum(terms), 0.0)


def mi_label(mi: float) -> str:
    if mi < 0.5:
        return "no nonlinear relationship"
    if mi > 1.0:
        return "nonlinear relationship"
    return "inconclusive"


def mutual_information_matrix(frame: pd.DataFrame, variables: Sequence[str],
                              bins: int | None = None) -> pd.DataFrame:
    data = frame[list(variables)].dropna()
    out = pd.DataFrame(np.nan, index=list(variables), columns=list(variables))
    for i, a in enumerate(variables):
        for b in variables[i + 1:]:
            mi = mutual_information(data[a], data[b], bins)
            out.loc[a, b] = out.loc[b, a] = mi
    return out
