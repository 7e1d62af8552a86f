"""Pre-regression diagnostics: ADF, KPSS, VIF and Breusch-Pagan."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .distkit import chi2_sf, f_sf

__all__ = [
    "ADF_SURFACE",
    "BreuschPaganResult",
    "ConstantSeries",
    "KPSS_CRITICAL",
    "PerfectCollinearity",
    "RankDeficientAux",
    "StationarityResult",
    "TooShort",
    "adf",
    "adf_critical_values",
    "breusch_pagan",
    "kpss",
    "kpss_bandwidth",
    "vif",
]

LEVELS = ("1%", "5%", "10%")

# MacKinnon (2010) response surfaces, one series: c(T) = b0 + b1/T + b2/T^2 + b3/T^3
ADF_SURFACE = {
    "c": {"1%": (-3.43035, -6.5393, -16.786, -79.433),
          "5%": (-2.86154, -2.8903, -4.234, -40.040),
          "10%": (-2.56677, -1.5384, -2.809, 0.0)},
    "ct": {"1%": (-3.95877, -9.0531, -28.428, -134.155),
           "5%": (-3.41049, -4.3904, -9.036, -45.374),
           "10%": (-3.12705, -2.5856, -3.925, -22.380)},
}

# asymptotic upper-tail points of the KPSS statistic
KPSS_CRITICAL = {
    "c": {"1%": 0.739, "5%": 0.463, "10%": 0.347},
    "ct": {"1%": 0.216, "5%": 0.146, "10%": 0.119},
}


class ConstantSeries(ValueError):
    pass


class TooShort(ValueError):
    pass


class RankDeficientAux(np.linalg.LinAlgError):
    pass


class PerfectCollinearity(UserWarning):
    pass


@dataclass(frozen=True)
class StationarityResult:
    """Outcome of a unit-root (ADF) or stationarity (KPSS) test.

    ``p_bracket`` locates the statistic between tabulated critical values
    instead of quoting a smooth p-value. ``reject`` is the 5% decision on
    the test's own null hypothesis.
    """

    test: str
    statistic: float
    lags: int
    critical_values: dict = field(default_factory=dict)
    reject: bool = False
    nobs: int = 0
    p_bracket: str = ""
    null: str = ""

    def row(self) -> dict:
        return {"test": self.test, "statistic": self.statistic, "lags_used": self.lags,
                "nobs": self.nobs, **{f"cv_{k}": v for k, v in self.critical_values.items()},
                "p_bracket": self.p_bracket, "reject_5pct": self.reject}


def _check_series(series, min_len: int) -> np.ndarray:
    y = np.asarray(series, dtype=float).ravel()
    if y.size < min_len:
        raise TooShort(f"series of length {y.size}; need at least {min_len}")
    if not np.all(np.isfinite(y)):
        raise ValueError("series contains missing or infinite values")
    if np.ptp(y) == 0:
        raise ConstantSeries("series is constant")
    return y


def _bracket(stat: float, cvs: dict, lower_tail: bool) -> str:
    # cvs ordered 1%, 5%, 10%
    c1, c5, c10 = (cvs[k] for k in LEVELS)
    beyond = (lambda c: stat < c) if lower_tail else (lambda c: stat > c)
    if beyond(c1):
        return "p<0.01"
    if beyond(c5):
        return "0.01<p<0.05"
    if beyond(c10):
        return "0.05<p<0.10"
    return "p>0.10"


def adf_critical_values(nobs: int, regression: str = "c") -> dict[str, float]:
    surface = ADF_SURFACE[regression]
    return {lvl: b0 + b1 / nobs + b2 / nobs ** 2 + b3 / nobs ** 3
            for lvl, (b0, b1, b2, b3) in surface.items()}


def _adf_design(y: np.ndarray, lags: int, start: int, regression: str):
    dy = np.diff(y)
    rows = np.arange(start, dy.size)
    cols = [y[rows]]  # lagged level y_{t-1} aligned with dy_t
    cols += [dy[rows - j] for j in range(1, lags + 1)]
    cols.append(np.ones(rows.size))
    if regression == "ct":
        cols.append(rows.astype(float) + 1.0)
    return np.column_stack(cols), dy[rows]


def _ols(X, y):
    beta, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    e = y - X @ beta
    return beta, e, rank


def adf(series, max_lags: int | None = None, regression: str = "c",
        autolag: bool = True) -> StationarityResult:
    """Augmented Dickey-Fuller test with constant (``regression="ct"`` adds a trend).

    The lag order minimizes AIC over ``0..max_lags`` on the common sample
    that the largest order leaves; the chosen model is then refit on all
    available observations. ``max_lags`` defaults to ``12 (n/100)^(1/4)``,
    capped so that at least 10 observations remain.
    """
    if regression not in ADF_SURFACE:
        raise ValueError(f"unknown regression {regression!r}")
    y = np.asarray(series, dtype=float).ravel()
    if max_lags is None:
        max_lags = int(math.ceil(12.0 * (y.size / 100.0) ** 0.25))
        max_lags = max(0, min(max_lags, y.size - 12))
    y = _check_series(y, max_lags + 10)
    if autolag:
        best, best_aic = 0, math.inf
        for p in range(max_lags + 1):
            X, dy = _adf_design(y, p, max_lags, regression)
            _, e, _ = _ols(X, dy)
            n = dy.size
            aic = n * math.log(float(e @ e) / n) + 2.0 * X.shape[1]
            if aic < best_aic - 1e-12:
                best, best_aic = p, aic
        lags = best
    else:
        lags = max_lags
    X, dy = _adf_design(y, lags, lags, regression)
    beta, e, rank = _ols(X, dy)
    if rank < X.shape[1]:
        raise np.linalg.LinAlgError("ADF regression is rank deficient")
    n, k = X.shape
    sigma2 = float(e @ e) / (n - k)
    se = math.sqrt(sigma2 * np.linalg.inv(X.T @ X)[0, 0])
    stat = float(beta[0] / se)
    cvs = adf_critical_values(n, regression)
    return StationarityResult("ADF", stat, lags, cvs, stat < cvs["5%"], n,
                              _bracket(stat, cvs, lower_tail=True), "unit root")


def kpss_bandwidth(n: int) -> int:
    return int(math.floor(4.0 * (n / 100.0) ** 0.25))


def kpss(series, lags: int | None = None, regression: str = "c") -> StationarityResult:
    """KPSS level (or trend) stationarity test with a Bartlett-kernel long-run variance."""
    if regression not in KPSS_CRITICAL:
        raise ValueError(f"unknown regression {regression!r}")
    y = _check_series(series, 20)
    n = y.size
    lags = kpss_bandwidth(n) if lags is None else int(lags)
    if not 0 <= lags < n:
        raise ValueError("lags must lie in [0, n)")
    if regression == "c":
        e = y - y.mean()
    else:
        t = np.arange(1.0, n + 1)
        X = np.column_stack([np.ones(n), t])
        _, e, _ = _ols(X, y)
    S = np.cumsum(e)
    s2 = float(e @ e)
    for j in range(1, lags + 1):
        s2 += 2.0 * (1.0 - j / (lags + 1.0)) * float(e[j:] @ e[:-j])
    s2 /= n
    stat = float(S @ S) / (n * n * s2)
    cvs = dict(KPSS_CRITICAL[regression])
    return StationarityResult("KPSS", stat, lags, cvs, stat > cvs["5%"], n,
                              _bracket(stat, cvs, lower_tail=False), "stationary")


def vif(design, names=None) -> pd.DataFrame:
    """Variance inflation factors ``1 / (1 - R2_j)``.

    Each auxiliary regression includes an intercept; pass the regressors
    without a constant column. Perfectly collinear columns get ``inf`` and a
    ``perfect_collinearity`` flag. ``frame.attrs["mean_vif"]`` holds the mean
    over finite values.
    """
    if isinstance(design, pd.DataFrame):
        names = list(design.columns) if names is None else list(names)
        X = design.to_numpy(dtype=float)
    else:
        X = np.asarray(design, dtype=float)
        names = [f"x{j}" for j in range(X.shape[1])] if names is None else list(names)
    n, k = X.shape
    if k < 2:
        raise ValueError("VIF needs at least two columns")
    out, flags = [], []
    for j in range(k):
        others = np.column_stack([np.ones(n), np.delete(X, j, axis=1)])
        _, e, _ = _ols(others, X[:, j])
        d = X[:, j] - X[:, j].mean()
        tss = float(d @ d)
        ssr = float(e @ e)
        if tss == 0 or ssr <= 1e-12 * tss:
            warnings.warn(f"column {names[j]!r} is perfectly collinear", PerfectCollinearity,
                          stacklevel=2)
            out.append(math.inf)
            flags.append(True)
        else:
            out.append(tss / ssr)  # 1 / (1 - R2)
            flags.append(False)
    frame = pd.DataFrame({"variable": names, "vif": out, "perfect_collinearity": flags})
    finite = [v for v in out if math.isfinite(v)]
    frame.attrs["mean_vif"] = float(np.mean(finite)) if finite else math.inf
    return frame


@dataclass(frozen=True)
class BreuschPaganResult:
    lm: float
    lm_pvalue: float
    fvalue: float
    f_pvalue: float
    df: int
    nobs: int
    r2_aux: float

    def row(self) -> dict:
        return {"lm_statistic": self.lm, "lm_pvalue": self.lm_pvalue,
                "f_statistic": self.fvalue, "f_pvalue": self.f_pvalue}


def breusch_pagan(residuals, design) -> BreuschPaganResult:
    """LM = n R2 of squared residuals on the regressors (studentized form).

    Constant columns in ``design`` are dropped; an intercept is always added.
    """
    e = np.asarray(residuals, dtype=float).ravel()
    X = np.asarray(design, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != e.size:
        raise ValueError("residuals and design differ in length")
    X = X[:, np.ptp(X, axis=0) > 0]
    n, k = X.shape
    if k == 0:
        raise RankDeficientAux("no non-constant regressors")
    A = np.column_stack([np.ones(n), X])
    if np.linalg.matrix_rank(A) < A.shape[1]:
        raise RankDeficientAux("auxiliary design is rank deficient")
    u = e ** 2
    _, r, _ = _ols(A, u)
    d = u - u.mean()
    tss = float(d @ d)
    r2 = max(0.0, 1.0 - float(r @ r) / tss) if tss > 0 else 0.0
    lm = n * r2
    df2 = n - k - 1
    fval = (r2 / k) / ((1.0 - r2) / df2) if r2 < 1 else math.inf
    return BreuschPaganResult(lm, chi2_sf(lm, k), fval,
                              f_sf(fval, k, df2) if math.isfinite(fval) else 0.0, k, n, r2)
