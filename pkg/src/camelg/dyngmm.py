"""System GMM for dynamic panels with Sargan, Arellano-Bond AR(m) and Wald tests.

The model is

    y_it = sum_l alpha_l y_{i,t-l} + x_it' beta (+ c) + eta_i + eps_it

estimated from stacked first-difference equations (instrumented by lagged
levels of ``y``) and level equations (instrumented by the lagged first
difference of ``y``). Exogenous regressors instrument themselves: ``dx`` in the
difference block and ``x`` in the level block.

Every entity is laid out on the common period grid, so missing periods turn
into zeroed equation rows and all moment sums are array contractions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .distkit import chi2_sf, norm_sf

__all__ = [
    "ExactlyIdentified",
    "GmmResult",
    "GmmSpec",
    "GmmTest",
    "InstrumentRankDeficiency",
    "InsufficientPeriods",
    "InsufficientTimePeriods",
    "SingularCovariance",
    "ab_autocorrelation",
    "linear_gmm",
    "sargan",
    "simulate_dynamic_panel",
    "system_gmm",
    "wald_joint",
]


class InsufficientTimePeriods(ValueError):
    pass


class InsufficientPeriods(ValueError):
    def __init__(self, order):
        super().__init__(f"too few differenced residual periods for an order-{order} test")
        self.order = order


class InstrumentRankDeficiency(np.linalg.LinAlgError):
    pass


class SingularCovariance(np.linalg.LinAlgError):
    pass


class ExactlyIdentified(UserWarning):
    pass


@dataclass(frozen=True)
class GmmSpec:
    """Dynamic panel specification.

    ``min_lag``/``max_lag`` bound the lags of ``y`` used as difference-equation
    instruments; ``max_lag=None`` uses every available lag. The level
    equations use the single difference ``dy_{t-min_lag+1}``.
    """

    dependent: str = "score"
    exogenous: tuple[str, ...] = ("trade_openness", "financial_openness", "poverty_rate",
                                  "innovation")
    lags: int = 1
    min_lag: int = 2
    max_lag: int | None = 4
    collapse: bool = True
    two_step: bool = False
    intercept: bool = False
    entity: str = "bank_id"
    time: str = "year"

    def __post_init__(self):
        object.__setattr__(self, "exogenous", tuple(self.exogenous))
        if self.lags < 1:
            raise ValueError("lags must be at least 1")
        if self.min_lag < 2:
            raise ValueError("difference-equation instruments need min_lag >= 2")
        if self.max_lag is not None and self.max_lag < self.min_lag:
            raise ValueError("max_lag below min_lag")

    @property
    def param_names(self) -> list[str]:
        names = [f"L{l}.{self.dependent}" for l in range(1, self.lags + 1)]
        names += list(self.exogenous)
        return names + (["const"] if self.intercept else [])


@dataclass(frozen=True)
class GmmTest:
    name: str
    value: float
    df: int
    p_value: float
    distribution: str
    note: str = ""


@dataclass(frozen=True, eq=False)
class GmmResult:
    """Estimates plus the stacked system needed by the post-estimation tests.

    Arrays with a leading entity axis hold, per entity, the ``2 * n_eq``
    stacked rows (difference equations first, then levels).
    """

    spec: GmmSpec
    params: pd.Series
    bse: pd.Series
    cov: pd.DataFrame
    n_instruments: int
    n_entities: int
    nobs: int
    weight: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    X: np.ndarray = field(repr=False)
    Z: np.ndarray = field(repr=False)
    H: np.ndarray = field(repr=False)
    valid: np.ndarray = field(repr=False)
    periods: np.ndarray = field(repr=False)
    sigma2_eps: float = math.nan
    sigma2_eta: float = math.nan

    @property
    def n_params(self) -> int:
        return self.params.size

    @property
    def zvalues(self) -> pd.Series:
        return self.params / self.bse

    @property
    def pvalues(self) -> pd.Series:
        return self.zvalues.apply(lambda z: 2.0 * norm_sf(abs(z)))

    @property
    def n_eq(self) -> int:
        return self.y.shape[1] // 2

    def residuals(self, beta=None) -> np.ndarray:
        beta = self.params.to_numpy() if beta is None else beta
        return (self.y - self.X @ beta) * self.valid

    def moment_residuals(self) -> np.ndarray:
        """Per-entity moment contributions ``Z_i' u_i`` (entities x instruments)."""
        return np.einsum("nrq,nr->nq", self.Z, self.residuals())

    def residual_summary(self) -> dict[str, float]:
        u = self.residuals()[self.valid]
        q = np.quantile(u, [0.0, 0.25, 0.5, 0.75, 1.0])
        return {"min": q[0], "q1": q[1], "median": q[2], "mean": float(u.mean()),
                "q3": q[3], "max": q[4]}

    def coef_table(self) -> pd.DataFrame:
        return pd.DataFrame({"coef": self.params, "std_err": self.bse, "z": self.zvalues,
                             "p_value": self.pvalues}).rename_axis("variable").reset_index()


def linear_gmm(y, X, Z, W=None) -> np.ndarray:
    """Linear GMM estimate ``(X'Z W Z'X)^-1 X'Z W Z'y`` for 2-D ``X`` and ``Z``.

    ``W`` defaults to ``(Z'Z)^-1`` (two-stage least squares).
    """
    y, X, Z = (np.asarray(a, dtype=float) for a in (y, X, Z))
    if W is None:
        W = np.linalg.pinv(Z.T @ Z)
    ZX = Z.T @ X
    return np.linalg.solve(ZX.T @ W @ ZX, ZX.T @ W @ (Z.T @ y))


# -- system assembly ---------------------------------------------------------

def _grid(frame: pd.DataFrame, spec: GmmSpec):
    frame = frame.sort_values([spec.entity, spec.time])
    entities = pd.unique(frame[spec.entity])
    times = np.sort(frame[spec.time].unique())
    if np.issubdtype(times.dtype, np.integer):
        times = np.arange(times.min(), times.max() + 1)
    e_idx = pd.Index(entities).get_indexer(frame[spec.entity])
    t_idx = pd.Index(times).get_indexer(frame[spec.time])
    cols = [spec.dependent, *spec.exogenous]
    cube = np.full((len(entities), len(times), len(cols)), np.nan)
    cube[e_idx, t_idx, :] = frame[cols].to_numpy(dtype=float)
    return cube[:, :, 0], cube[:, :, 1:], times


def _assemble(Y: np.ndarray, Xe: np.ndarray, spec: GmmSpec, collapse: bool):
    N, T = Y.shape
    L, k = spec.lags, Xe.shape[2]
    eq = np.arange(L + 1, T)
    ne = eq.size
    if ne < 1:
        raise InsufficientTimePeriods(f"{T} periods; need at least {L + 2}")

    def lag(A, s):
        # A[:, t - s] for t in eq, NaN when out of range
        idx = eq - s
        out = np.full((N, ne) + A.shape[2:], np.nan)
        ok = idx >= 0
        out[:, ok] = A[:, idx[ok]]
        return out

    dY = np.full_like(Y, np.nan)
    dY[:, 1:] = Y[:, 1:] - Y[:, :-1]
    dX = np.full_like(Xe, np.nan)
    dX[:, 1:] = Xe[:, 1:] - Xe[:, :-1]

    p = L + k + int(spec.intercept)
    Xd = np.concatenate([np.stack([lag(dY, l) for l in range(1, L + 1)], axis=2), lag(dX, 0)],
                        axis=2)
    Xl = np.concatenate([np.stack([lag(Y, l) for l in range(1, L + 1)], axis=2), lag(Xe, 0)],
                        axis=2)
    if spec.intercept:
        Xd = np.concatenate([Xd, np.zeros((N, ne, 1))], axis=2)
        Xl = np.concatenate([Xl, np.ones((N, ne, 1))], axis=2)
    yd, yl = lag(dY, 0), lag(Y, 0)
    valid_d = np.isfinite(yd) & np.isfinite(Xd).all(axis=2)
    valid_l = np.isfinite(yl) & np.isfinite(Xl).all(axis=2)

    max_lag = T - 1 if spec.max_lag is None else min(spec.max_lag, T - 1)
    lags = range(spec.min_lag, max_lag + 1)
    gd = np.stack([lag(Y, s) for s in lags], axis=2) if len(lags) else np.zeros((N, ne, 0))
    gl = lag(dY, spec.min_lag - 1)[:, :, None]
    if not collapse:
        # one column per (equation period, lag)
        eye = np.eye(ne)[None, :, :, None]
        gd = (gd[:, :, None, :] * eye).reshape(N, ne, -1)
        gl = (gl[:, :, None, :] * eye).reshape(N, ne, -1)
    ivd, ivl = lag(dX, 0), lag(Xe, 0)
    zero = lambda a: np.zeros_like(a)  # noqa: E731
    Zd = np.concatenate([gd, zero(gl), ivd, zero(ivl)], axis=2)
    Zl = np.concatenate([zero(gd), gl, zero(ivd), ivl], axis=2)
    if spec.intercept:
        Zd = np.concatenate([Zd, np.zeros((N, ne, 1))], axis=2)
        Zl = np.concatenate([Zl, np.ones((N, ne, 1))], axis=2)

    valid = np.concatenate([valid_d, valid_l], axis=1)
    y = np.nan_to_num(np.concatenate([yd, yl], axis=1)) * valid
    X = np.nan_to_num(np.concatenate([Xd, Xl], axis=1)) * valid[:, :, None]
    Z = np.nan_to_num(np.concatenate([Zd, Zl], axis=1)) * valid[:, :, None]
    Z = Z[:, :, np.abs(Z).sum(axis=(0, 1)) > 0]
    if not valid_d.any() or not valid_l.any():
        raise InsufficientTimePeriods("no complete difference or level equations")

    # cov(dE_t, dE_s), cov(dE_t, E_s), cov(E_t, E_s) up to sigma^2
    Dm = np.eye(ne) - np.eye(ne, k=-1)
    H = np.block([[Dm @ Dm.T, Dm], [Dm.T, np.eye(ne)]])
    return y, X, Z, H, valid, eq, p


def _rank_ok(Z: np.ndarray, X: np.ndarray) -> bool:
    Zs = Z.reshape(-1, Z.shape[2])
    q = Zs.shape[1]
    if np.linalg.matrix_rank(Zs) < q or q < X.shape[2]:
        return False
    ZX = np.einsum("nrq,nrp->qp", Z, X)
    return np.linalg.matrix_rank(ZX) == X.shape[2]


def _solve(ZX, Zy, W):
    M = ZX.T @ W @ ZX
    return np.linalg.solve(M, ZX.T @ W @ Zy), M


def system_gmm(spec: GmmSpec, data) -> GmmResult:
    """One-step (default) or two-step system GMM.

    One-step weighting is ``(sum_i Z_i' H Z_i)^-1`` with ``H`` the error
    covariance structure of differenced and level errors under iid shocks.
    Standard errors are robust (heteroskedasticity across entities) for
    one-step and conventional for two-step.
    """
    frame = data.merged() if hasattr(data, "merged") else data
    Y, Xe, times = _grid(frame, spec)
    if Y.shape[1] < spec.lags + 2:
        raise InsufficientTimePeriods(f"{Y.shape[1]} periods; need at least {spec.lags + 2}")
    collapse = spec.collapse
    y, X, Z, H, valid, eq, p = _assemble(Y, Xe, spec, collapse)
    if not _rank_ok(Z, X):
        if collapse:
            raise InstrumentRankDeficiency("instrument matrix is rank deficient")
        collapse = True
        y, X, Z, H, valid, eq, p = _assemble(Y, Xe, spec, collapse)
        if not _rank_ok(Z, X):
            raise InstrumentRankDeficiency("instrument matrix rank deficient after collapsing")

    ZX = np.einsum("nrq,nrp->qp", Z, X)
    Zy = np.einsum("nrq,nr->q", Z, y)
    W = np.linalg.pinv(np.einsum("nrq,rs,nsk->qk", Z, H, Z), hermitian=True)
    beta, M = _solve(ZX, Zy, W)
    u = (y - X @ beta) * valid
    g = np.einsum("nrq,nr->nq", Z, u)
    S = g.T @ g
    Minv = np.linalg.inv(M)
    if spec.two_step:
        W = np.linalg.pinv(S, hermitian=True)
        beta, M = _solve(ZX, Zy, W)
        cov = np.linalg.inv(M)
    else:
        B = ZX.T @ W
        cov = Minv @ B @ S @ B.T @ Minv

    ne = eq.size
    u = (y - X @ beta) * valid
    vd, vl = valid[:, :ne], valid[:, ne:]
    s2e = float(np.sum(u[:, :ne] ** 2)) / (2.0 * vd.sum())
    s2eta = max(float(np.sum(u[:, ne:] ** 2)) / vl.sum() - s2e, 0.0)

    names = spec.param_names
    bse = np.sqrt(np.diag(cov))
    return GmmResult(
        spec=spec, params=pd.Series(beta, index=names), bse=pd.Series(bse, index=names),
        cov=pd.DataFrame(cov, index=names, columns=names), n_instruments=Z.shape[2],
        n_entities=Y.shape[0], nobs=int(vd.sum()), weight=W, y=y, X=X, Z=Z, H=H,
        valid=valid, periods=times[eq], sigma2_eps=s2e, sigma2_eta=s2eta,
    )


def sargan(result: GmmResult, kind: str = "robust") -> GmmTest:
    """Overidentifying-restrictions test, chi-square with ``q - p`` df.

    ``kind="robust"`` (default) evaluates ``g' S^-1 g`` where ``S`` is the
    outer product of the per-entity one-step moment contributions and ``g``
    the summed moments at the estimate efficient for ``S^-1``. ``kind=
    "homoskedastic"`` is the one-step form ``g' (sigma2 sum Z'HZ)^-1 g``,
    which over-rejects in the system estimator because the level-equation
    instruments are not independent of the differenced errors.
    """
    q, p = result.n_instruments, result.n_params
    df = q - p
    if df <= 0:
        return GmmTest("sargan", 0.0, 0, 1.0, "chi_square", note="exactly identified")
    Z = result.Z
    if kind == "homoskedastic":
        g = result.moment_residuals().sum(axis=0)
        J = float(g @ result.weight @ g) / result.sigma2_eps
    elif kind == "robust":
        if result.spec.two_step:
            W = result.weight
            beta = result.params.to_numpy()
        else:
            g1 = result.moment_residuals()
            W = np.linalg.pinv(g1.T @ g1, hermitian=True)
            ZX = np.einsum("nrq,nrp->qp", Z, result.X)
            Zy = np.einsum("nrq,nr->q", Z, result.y)
            beta, _ = _solve(ZX, Zy, W)
        g = np.einsum("nrq,nr->q", Z, result.residuals(beta))
        J = float(g @ W @ g)
    else:
        raise ValueError(f"unknown kind {kind!r}")
    J = max(J, 0.0)
    return GmmTest("sargan", J, df, chi2_sf(J, df), "chi_square", note=kind)


def ab_autocorrelation(result: GmmResult, order: int = 1) -> GmmTest:
    """Arellano-Bond z test for order-``order`` correlation in differenced residuals."""
    if order < 1:
        raise ValueError("order must be positive")
    ne = result.n_eq
    if ne <= order:
        raise InsufficientPeriods(order)
    u = result.residuals()
    e = u[:, :ne]
    vd = result.valid[:, :ne]
    w = np.zeros_like(e)
    w[:, order:] = e[:, :-order] * vd[:, :-order]
    w *= vd
    if not np.any(w):
        raise InsufficientPeriods(order)
    Xd = result.X[:, :ne, :]
    a = np.einsum("nr,nr->n", w, e)
    wX = np.einsum("nr,nrp->p", w, Xd)
    Z, W = result.Z, result.weight
    ZX = np.einsum("nrq,nrp->qp", Z, result.X)
    Minv = np.linalg.inv(ZX.T @ W @ ZX)
    Zu_a = np.einsum("nrq,nr,n->q", Z, u, a)
    V = result.cov.to_numpy()
    var = float(a @ a) - 2.0 * wX @ Minv @ ZX.T @ W @ Zu_a + wX @ V @ wX
    if var <= 0:
        raise SingularCovariance("nonpositive variance in the autocorrelation test")
    z = float(a.sum()) / math.sqrt(var)
    return GmmTest(f"AR({order})", z, 0, 2.0 * norm_sf(abs(z)), "normal")


def wald_joint(result: GmmResult, names=None) -> GmmTest:
    """Joint Wald test that the listed coefficients (default: all but const) are zero."""
    if names is None:
        names = [n for n in result.params.index if n != "const"]
    b = result.params[names].to_numpy()
    V = result.cov.loc[names, names].to_numpy()
    if np.linalg.cond(V) > 1e12:
        raise SingularCovariance("covariance of the tested coefficients is singular")
    W = float(b @ np.linalg.solve(V, b))
    return GmmTest("wald", W, len(names), chi2_sf(W, len(names)), "chi_square")


def simulate_dynamic_panel(rng, n_entities=200, n_periods=8, alpha=0.5, beta=0.3,
                           sigma_eta=1.0, sigma_eps=1.0, burn_in=50) -> pd.DataFrame:
    """Mean-stationary ``y_it = alpha y_{i,t-1} + beta x_it + eta_i + eps_it``."""
    eta = rng.normal(scale=sigma_eta, size=n_entities)
    total = burn_in + n_periods
    x = rng.normal(size=(n_entities, total))
    y = np.empty((n_entities, total))
    y_prev = eta / (1.0 - alpha) + rng.normal(size=n_entities) * sigma_eps / math.sqrt(1 - alpha ** 2)
    for t in range(total):
        y_prev = alpha * y_prev + beta * x[:, t] + eta + rng.normal(scale=sigma_eps,
                                                                   size=n_entities)
        y[:, t] = y_prev
    y, x = y[:, burn_in:], x[:, burn_in:]
    return pd.DataFrame({
        "entity": np.repeat(np.arange(n_entities), n_periods),
        "time": np.tile(np.arange(n_periods), n_entities),
        "y": y.ravel(), "x": x.ravel(),
    })
