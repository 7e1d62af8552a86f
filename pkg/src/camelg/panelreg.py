"""Static second-stage regressions: pooled OLS, within (FE), GLS random effects, Hausman.

All estimators take a long-format :class:`pandas.DataFrame` (or anything with a
``merged()`` method returning one) holding the entity key, time key, dependent
variable and regressors. Rows with a missing value in any used column are
dropped before estimation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd

from .distkit import chi2_sf, f_sf, norm_sf, t_quantile, t_sf

__all__ = [
    "CoefficientSetMismatch",
    "HausmanResult",
    "NegativeVarianceComponent",
    "NoWithinVariation",
    "RankDeficient",
    "RegressionResult",
    "RegressionSpec",
    "SingletonEntities",
    "TooFewObservations",
    "durbin_watson",
    "fixed_effects",
    "hausman",
    "information_criteria",
    "jarque_bera",
    "moment_shape",
    "ols",
    "omnibus",
    "random_effects",
    "second_stage_frame",
]

MACRO_REGRESSORS = ("trade_openness", "financial_openness", "poverty_rate", "innovation")


class RankDeficient(np.linalg.LinAlgError):
    pass


class TooFewObservations(ValueError):
    pass


class NoWithinVariation(ValueError):
    def __init__(self, regressor):
        super().__init__(f"regressor {regressor!r} has no within-entity variation")
        self.regressor = regressor


class CoefficientSetMismatch(ValueError):
    pass


class SingletonEntities(UserWarning):
    pass


class NegativeVarianceComponent(UserWarning):
    pass


@dataclass(frozen=True)
class RegressionSpec:
    dependent: str = "score"
    regressors: tuple[str, ...] = MACRO_REGRESSORS
    entity: str = "bank_id"
    time: str = "year"
    intercept: bool = True

    def __post_init__(self):
        object.__setattr__(self, "regressors", tuple(self.regressors))
        if len(set(self.regressors)) != len(self.regressors):
            raise ValueError("regressors must be distinct")
        if self.dependent in self.regressors:
            raise ValueError("dependent variable listed among regressors")
        if not self.regressors and not self.intercept:
            raise ValueError("empty design")

    @property
    def columns(self) -> list[str]:
        return [self.entity, self.time, self.dependent, *self.regressors]


@dataclass(frozen=True, eq=False)
class RegressionResult:
    """Coefficients, inference and the fit/diagnostic block of one estimation.

    ``kurtosis`` is the raw fourth standardized moment of the residuals
    (3 for a normal sample), the convention used by the Jarque-Bera formula.
    ``condition_number`` is computed on the design with unit-norm columns;
    ``condition_number_raw`` on the design as given.
    """

    estimator: str
    params: pd.Series
    bse: pd.Series
    tvalues: pd.Series
    pvalues: pd.Series
    conf_int: pd.DataFrame
    cov: pd.DataFrame
    nobs: int
    df_model: int
    df_resid: int
    rsquared: float
    rsquared_adj: float
    ssr: float
    llf: float
    aic: float
    bic: float
    fvalue: float
    f_pvalue: float
    durbin_watson: float
    omnibus: float
    omnibus_pvalue: float
    jarque_bera: float
    jb_pvalue: float
    skew: float
    kurtosis: float
    condition_number: float
    condition_number_raw: float
    resid: np.ndarray = field(repr=False)
    cov_type: str = "classical"
    dist: str = "t"
    extra: dict = field(default_factory=dict)

    @property
    def slopes(self) -> pd.Series:
        return self.params.drop("const", errors="ignore")

    def coef_table(self) -> pd.DataFrame:
        stat = "t" if self.dist == "t" else "z"
        return pd.DataFrame({
            "coef": self.params, "std_err": self.bse, stat: self.tvalues,
            "p_value": self.pvalues, "ci_lower": self.conf_int["lower"],
            "ci_upper": self.conf_int["upper"],
        }).rename_axis("variable").reset_index()

    def fit_block(self) -> dict[str, float]:
        return {
            "estimator": self.estimator, "nobs": self.nobs, "df_model": self.df_model,
            "df_resid": self.df_resid, "r_squared": self.rsquared,
            "adj_r_squared": self.rsquared_adj, "ssr": self.ssr, "log_likelihood": self.llf,
            "aic": self.aic, "bic": self.bic, "f_statistic": self.fvalue,
            "f_pvalue": self.f_pvalue, "durbin_watson": self.durbin_watson,
            "omnibus": self.omnibus, "omnibus_pvalue": self.omnibus_pvalue,
            "jarque_bera": self.jarque_bera, "jb_pvalue": self.jb_pvalue,
            "skew": self.skew, "kurtosis_raw": self.kurtosis,
            "condition_number": self.condition_number,
            "condition_number_raw": self.condition_number_raw, **self.extra,
        }


@dataclass(frozen=True)
class HausmanResult:
    statistic: float
    df: int
    p_value: float
    chosen: str

    @classmethod
    def from_statistic(cls, statistic: float, df: int, alpha: float = 0.05) -> "HausmanResult":
        p = chi2_sf(statistic, df)
        return cls(float(statistic), int(df), p, "FE" if p < alpha else "RE")


# -- diagnostic formulas ---------------------------------------------------

def information_criteria(llf: float, k: int, n: int) -> tuple[float, float]:
    """``(AIC, BIC)`` from a log-likelihood with ``k`` estimated coefficients."""
    return -2.0 * llf + 2.0 * k, -2.0 * llf + k * math.log(n)


def jarque_bera(skew: float, kurtosis: float, n: int) -> tuple[float, float]:
    """JB statistic and chi2(2) p-value; ``kurtosis`` is the raw moment."""
    jb = n / 6.0 * (skew ** 2 + (kurtosis - 3.0) ** 2 / 4.0)
    return jb, chi2_sf(jb, 2)


def moment_shape(e: np.ndarray) -> tuple[float, float]:
    """Population skewness and raw kurtosis ``m3/m2^1.5``, ``m4/m2^2``."""
    d = e - e.mean()
    m2 = float(np.mean(d ** 2))
    if m2 == 0.0:
        return math.nan, math.nan
    return float(np.mean(d ** 3)) / m2 ** 1.5, float(np.mean(d ** 4)) / m2 ** 2


def durbin_watson(e: np.ndarray) -> float:
    e = np.asarray(e, dtype=float)
    denom = float(e @ e)
    return float(np.sum(np.diff(e) ** 2)) / denom if denom > 0 else math.nan


def _skew_z(e: np.ndarray) -> float:
    # D'Agostino transformation of sample skewness
    n = e.size
    b2, _ = moment_shape(e)
    y = b2 * math.sqrt((n + 1) * (n + 3) / (6.0 * (n - 2)))
    beta2 = 3.0 * (n * n + 27 * n - 70) * (n + 1) * (n + 3) / ((n - 2.0) * (n + 5) * (n + 7) * (n + 9))
    w2 = -1.0 + math.sqrt(2.0 * (beta2 - 1.0))
    delta = 1.0 / math.sqrt(0.5 * math.log(w2))
    alpha = math.sqrt(2.0 / (w2 - 1.0))
    return delta * math.asinh(y / alpha)


def _kurt_z(e: np.ndarray) -> float:
    # Anscombe-Glynn transformation of sample kurtosis
    n = e.size
    _, b2 = moment_shape(e)
    mean = 3.0 * (n - 1) / (n + 1)
    var = 24.0 * n * (n - 2) * (n - 3) / ((n + 1.0) ** 2 * (n + 3) * (n + 5))
    x = (b2 - mean) / math.sqrt(var)
    sqrtbeta1 = (6.0 * (n * n - 5 * n + 2) / ((n + 7.0) * (n + 9))
                 * math.sqrt(6.0 * (n + 3) * (n + 5) / (n * (n - 2.0) * (n - 3))))
    A = 6.0 + 8.0 / sqrtbeta1 * (2.0 / sqrtbeta1 + math.sqrt(1 + 4.0 / sqrtbeta1 ** 2))
    term1 = 1 - 2 / (9.0 * A)
    denom = 1 + x * math.sqrt(2 / (A - 4.0))
    term2 = np.sign(denom) * np.abs((1 - 2.0 / A) / denom) ** (1 / 3.0) if denom != 0 else -math.inf
    return (term1 - term2) / math.sqrt(2 / (9.0 * A))


def omnibus(e: np.ndarray) -> tuple[float, float]:
    """D'Agostino-Pearson K2 normality statistic and chi2(2) p-value (n >= 8)."""
    e = np.asarray(e, dtype=float)
    if e.size < 8 or np.ptp(e) == 0:
        return math.nan, math.nan
    k2 = _skew_z(e) ** 2 + _kurt_z(e) ** 2
    return float(k2), chi2_sf(float(k2), 2)


def _condition(X: np.ndarray) -> tuple[float, float]:
    norms = np.linalg.norm(X, axis=0)
    norms[norms == 0] = 1.0
    return float(np.linalg.cond(X / norms)), float(np.linalg.cond(X))


# -- core fit ----------------------------------------------------------------

def _frame(data, spec: RegressionSpec) -> pd.DataFrame:
    frame = data.merged() if hasattr(data, "merged") else data
    missing = [c for c in spec.columns if c not in frame.columns]
    if missing:
        raise KeyError(f"columns not found: {missing}")
    return frame[spec.columns].dropna().sort_values([spec.entity, spec.time]).reset_index(drop=True)


def _fit(estimator: str, X: np.ndarray, y: np.ndarray, names: Sequence[str], *, centered: bool,
         df_resid: int | None = None, groups: np.ndarray | None = None,
         cov_type: str = "classical", tss: float | None = None, extra: dict | None = None,
         dist: str = "t") -> RegressionResult:
    n, k = X.shape
    if n <= k:
        raise TooFewObservations(f"{n} observations for {k} coefficients")
    rank = np.linalg.matrix_rank(X)
    if rank < k:
        raise RankDeficient(f"design has rank {rank} < {k} columns")
    Q, R = np.linalg.qr(X)
    beta = np.linalg.solve(R, Q.T @ y)
    e = y - X @ beta
    ssr = float(e @ e)
    df_resid = n - k if df_resid is None else df_resid
    if df_resid <= 0:
        raise TooFewObservations("no residual degrees of freedom")
    sigma2 = ssr / df_resid
    Rinv = np.linalg.inv(R)
    xtx_inv = Rinv @ Rinv.T
    if cov_type == "classical":
        cov = sigma2 * xtx_inv
    elif cov_type == "cluster":
        if groups is None:
            raise ValueError("cluster covariance needs entity groups")
        labels, codes = np.unique(groups, return_inverse=True)
        scores = np.zeros((labels.size, k))
        np.add.at(scores, codes, X * e[:, None])
        G = labels.size
        meat = scores.T @ scores
        cov = xtx_inv @ meat @ xtx_inv * (G / (G - 1.0)) * ((n - 1.0) / (n - k))
    else:
        raise ValueError(f"unknown cov_type {cov_type!r}")
    bse = np.sqrt(np.diag(cov))
    tvals = beta / bse
    if dist == "t":
        pvals = np.array([2.0 * t_sf(abs(t), df_resid) for t in tvals])
        q = t_quantile(0.975, df_resid)
    else:
        pvals = np.array([2.0 * norm_sf(abs(t)) for t in tvals])
        q = 1.959963984540054
    if tss is None:
        tss = float(np.sum((y - y.mean()) ** 2)) if centered else float(y @ y)
    r2 = 1.0 - ssr / tss if tss > 0 else math.nan
    df_model = k - 1 if centered else k
    r2_adj = 1.0 - (1.0 - r2) * (df_resid + df_model) / df_resid if tss > 0 else math.nan
    if df_model > 0 and tss > 0 and ssr > 0:
        fval = ((tss - ssr) / df_model) / sigma2
        f_p = f_sf(max(fval, 0.0), df_model, df_resid)
    else:
        fval, f_p = math.nan, math.nan
    llf = -0.5 * n * (math.log(2.0 * math.pi) + math.log(ssr / n) + 1.0) if ssr > 0 else math.inf
    aic, bic = information_criteria(llf, k, n)
    skew, kurt = moment_shape(e)
    jb, jb_p = jarque_bera(skew, kurt, n) if not math.isnan(skew) else (math.nan, math.nan)
    om, om_p = omnibus(e)
    cond, cond_raw = _condition(X)
    idx = pd.Index(list(names))
    return RegressionResult(
        estimator=estimator,
        params=pd.Series(beta, index=idx), bse=pd.Series(bse, index=idx),
        tvalues=pd.Series(tvals, index=idx), pvalues=pd.Series(pvals, index=idx),
        conf_int=pd.DataFrame({"lower": beta - q * bse, "upper": beta + q * bse}, index=idx),
        cov=pd.DataFrame(cov, index=idx, columns=idx),
        nobs=n, df_model=df_model, df_resid=df_resid, rsquared=r2, rsquared_adj=r2_adj,
        ssr=ssr, llf=llf, aic=aic, bic=bic, fvalue=fval, f_pvalue=f_p,
        durbin_watson=durbin_watson(e), omnibus=om, omnibus_pvalue=om_p,
        jarque_bera=jb, jb_pvalue=jb_p, skew=skew, kurtosis=kurt,
        condition_number=cond, condition_number_raw=cond_raw, resid=e,
        cov_type=cov_type, dist=dist, extra=dict(extra or {}),
    )


def ols(spec: RegressionSpec, data, cov_type: str = "classical") -> RegressionResult:
    """Pooled least squares with classical (or entity-clustered) covariance."""
    frame = _frame(data, spec)
    X = frame[list(spec.regressors)].to_numpy(dtype=float)
    names = list(spec.regressors)
    if spec.intercept:
        X = np.column_stack([np.ones(len(frame)), X])
        names = ["const", *names]
    y = frame[spec.dependent].to_numpy(dtype=float)
    return _fit("OLS", X, y, names, centered=spec.intercept,
                groups=frame[spec.entity].to_numpy(), cov_type=cov_type)


def _drop_singletons(frame: pd.DataFrame, entity: str) -> pd.DataFrame:
    sizes = frame.groupby(entity)[entity].transform("size")
    if (sizes < 2).any():
        dropped = sorted(frame.loc[sizes < 2, entity].unique())
        warnings.warn(f"dropping single-observation entities {dropped}", SingletonEntities,
                      stacklevel=3)
        frame = frame[sizes >= 2].reset_index(drop=True)
    return frame


def _demean(frame: pd.DataFrame, cols: list[str], entity: str, theta=1.0) -> pd.DataFrame:
    means = frame.groupby(entity)[cols].transform("mean")
    theta = np.asarray(theta, dtype=float)
    if theta.ndim:
        theta = theta[:, None]
    return frame[cols] - theta * means


def fixed_effects(spec: RegressionSpec, data, cov_type: str = "classical") -> RegressionResult:
    """Within estimator; residual dof is ``n - N - k``.

    Only slope coefficients are reported; the entity intercepts are absorbed.
    ``rsquared`` is the within R-squared.
    """
    frame = _drop_singletons(_frame(data, spec), spec.entity)
    cols = [spec.dependent, *spec.regressors]
    within = _demean(frame, cols, spec.entity)
    X = within[list(spec.regressors)].to_numpy(dtype=float)
    raw = frame[list(spec.regressors)].to_numpy(dtype=float)
    scale = np.maximum(np.abs(raw).max(axis=0), 1.0)
    for j, name in enumerate(spec.regressors):
        if np.abs(X[:, j]).max() <= 1e-10 * scale[j]:
            raise NoWithinVariation(name)
    y = within[spec.dependent].to_numpy(dtype=float)
    n_groups = frame[spec.entity].nunique()
    df_resid = len(frame) - n_groups - X.shape[1]
    return _fit("FE", X, y, list(spec.regressors), centered=False, df_resid=df_resid,
                groups=frame[spec.entity].to_numpy(), cov_type=cov_type,
                tss=float(y @ y), extra={"n_entities": n_groups})


def _variance_components(spec: RegressionSpec, frame: pd.DataFrame) -> tuple[float, float, float]:
    """Swamy-Arora ``(sigma2_e, sigma2_u, T_bar)``; ``T_bar`` is the harmonic mean of T_i."""
    fe = fixed_effects(spec, frame)
    sigma2_e = fe.ssr / fe.df_resid
    means = frame.groupby(spec.entity)[[spec.dependent, *spec.regressors]].mean()
    Xb = means[list(spec.regressors)].to_numpy(dtype=float)
    if spec.intercept:
        Xb = np.column_stack([np.ones(len(means)), Xb])
    yb = means[spec.dependent].to_numpy(dtype=float)
    N, k = Xb.shape
    if N <= k:
        raise TooFewObservations("between regression needs more entities than coefficients")
    beta, *_ = np.linalg.lstsq(Xb, yb, rcond=None)
    eb = yb - Xb @ beta
    sigma2_b = float(eb @ eb) / (N - k)
    T = frame.groupby(spec.entity).size().to_numpy(dtype=float)
    t_bar = T.size / float(np.sum(1.0 / T))
    sigma2_u = sigma2_b - sigma2_e / t_bar
    if sigma2_u < 0:
        warnings.warn(f"negative idiosyncratic-effect variance {sigma2_u:.4g} floored at zero",
                      NegativeVarianceComponent, stacklevel=3)
        sigma2_u = 0.0
    return sigma2_e, sigma2_u, t_bar


def random_effects(spec: RegressionSpec, data, theta: float | None = None,
                   cov_type: str = "classical") -> RegressionResult:
    """GLS random effects by quasi-demeaning with Swamy-Arora variance components.

    Passing ``theta`` overrides the estimated per-entity weights with a common
    value (diagnostic mode). At ``theta = 1`` the intercept is absorbed and
    dropped, so the slopes coincide with :func:`fixed_effects`.
    """
    frame = _drop_singletons(_frame(data, spec), spec.entity)
    sizes = frame.groupby(spec.entity)[spec.entity].transform("size").to_numpy(dtype=float)
    extra = {}
    if theta is None:
        s2e, s2u, _ = _variance_components(spec, frame)
        th = 1.0 - np.sqrt(s2e / (sizes * s2u + s2e))
        extra = {"sigma2_e": s2e, "sigma2_u": s2u}
    else:
        if not 0.0 <= theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        th = np.full(len(frame), float(theta))
    cols = [spec.dependent, *spec.regressors]
    star = _demean(frame, cols, spec.entity, th)
    X = star[list(spec.regressors)].to_numpy(dtype=float)
    names = list(spec.regressors)
    if spec.intercept and not np.allclose(th, 1.0):
        X = np.column_stack([1.0 - th, X])
        names = ["const", *names]
    y = star[spec.dependent].to_numpy(dtype=float)
    extra["theta_mean"] = float(np.mean(th))
    return _fit("RE", X, y, names, centered="const" in names,
                groups=frame[spec.entity].to_numpy(), cov_type=cov_type, dist="normal",
                extra=extra)


def hausman(fe: RegressionResult, re: RegressionResult, alpha: float = 0.05) -> HausmanResult:
    """Contrast of FE and RE slopes with a pseudo-inverse of the variance difference."""
    b_fe, b_re = fe.slopes, re.slopes
    if list(b_fe.index) != list(b_re.index):
        raise CoefficientSetMismatch(f"{list(b_fe.index)} vs {list(b_re.index)}")
    names = list(b_fe.index)
    d = (b_fe - b_re).to_numpy()
    V = fe.cov.loc[names, names].to_numpy() - re.cov.loc[names, names].to_numpy()
    H = float(d @ np.linalg.pinv(V, rcond=1e-12, hermitian=True) @ d) if np.any(d) else 0.0
    return HausmanResult.from_statistic(max(H, 0.0), len(names), alpha)


def second_stage_frame(dataset, panel) -> pd.DataFrame:
    """Solved efficiency scores joined with bank and macro columns."""
    scores = panel.solved()[["bank_id", "year", "score"]]
    return scores.merge(dataset.merged(), on=["bank_id", "year"], how="left")
