import math
import warnings

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose

from camelg.panelreg import (
    CoefficientSetMismatch,
    HausmanResult,
    NegativeVarianceComponent,
    NoWithinVariation,
    RankDeficient,
    RegressionSpec,
    SingletonEntities,
    TooFewObservations,
    durbin_watson,
    fixed_effects,
    hausman,
    information_criteria,
    jarque_bera,
    ols,
    random_effects,
)

from generators import random_panel

SPEC = RegressionSpec(dependent="y", regressors=("x0", "x1"), entity="entity", time="time")


def lsdv(frame, spec=SPEC):
    dummies = pd.get_dummies(frame["entity"], prefix="d", dtype=float)
    wide = pd.concat([frame, dummies], axis=1)
    s = RegressionSpec(dependent="y", regressors=(*spec.regressors, *dummies.columns),
                       entity="entity", time="time", intercept=False)
    return ols(s, wide)


def test_exact_line():
    frame = pd.DataFrame({"entity": "a", "time": range(6), "x0": np.arange(6.0)})
    frame["y"] = 2 * frame["x0"] + 1
    r = ols(RegressionSpec("y", ("x0",), "entity", "time"), frame)
    assert_allclose(r.params, [1.0, 2.0], atol=1e-12)
    assert r.rsquared == pytest.approx(1.0)
    assert r.ssr == pytest.approx(0.0, abs=1e-20)


def test_information_criteria_and_jb_identities():
    aic, bic = information_criteria(89.024, 5, 53)
    assert aic == pytest.approx(-168.05, abs=0.1)
    assert bic == pytest.approx(-158.2, abs=0.1)
    jb, p = jarque_bera(1.346, 4.569, 53)
    assert jb == pytest.approx(21.448, abs=0.01)
    assert p == pytest.approx(2.20e-5, abs=2e-6)


def test_ols_matches_statsmodels():
    sm = pytest.importorskip("statsmodels.api")
    from statsmodels.stats.stattools import durbin_watson as sm_dw

    frame = random_panel(np.random.default_rng(11), 10, 6)
    r = ols(SPEC, frame)
    ref = sm.OLS(frame["y"], sm.add_constant(frame[["x0", "x1"]])).fit()
    assert_allclose(r.params, ref.params, rtol=1e-10)
    assert_allclose(r.bse, ref.bse, rtol=1e-10)
    assert_allclose(r.pvalues, ref.pvalues, rtol=1e-7, atol=1e-14)
    assert_allclose(r.conf_int.to_numpy(), ref.conf_int().to_numpy(), rtol=1e-8)
    for ours, theirs in [(r.rsquared, ref.rsquared), (r.rsquared_adj, ref.rsquared_adj),
                         (r.llf, ref.llf), (r.aic, ref.aic), (r.bic, ref.bic),
                         (r.fvalue, ref.fvalue), (r.f_pvalue, ref.f_pvalue),
                         (r.durbin_watson, sm_dw(ref.resid)),
                         (r.condition_number_raw, ref.condition_number)]:
        assert ours == pytest.approx(theirs, rel=1e-8)


def test_ols_residual_orthogonality():
    frame = random_panel(np.random.default_rng(2), 6, 5)
    r = ols(SPEC, frame)
    X = np.column_stack([np.ones(len(frame)), frame[["x0", "x1"]]])
    assert np.abs(X.T @ r.resid).max() <= 1e-8 * np.abs(X).max() * np.abs(r.resid).max() * len(frame)
    assert 0 <= r.rsquared <= 1
    assert r.df_resid == r.nobs - 3


def test_ols_errors():
    frame = random_panel(np.random.default_rng(0), 3, 4)
    frame["x1"] = 2 * frame["x0"]
    with pytest.raises(RankDeficient):
        ols(SPEC, frame)
    with pytest.raises(TooFewObservations):
        ols(SPEC, frame.iloc[:3])


def test_durbin_watson_alternating():
    assert durbin_watson(np.array([1.0, -1.0, 1.0, -1.0])) == pytest.approx(3.0)


@pytest.mark.parametrize("seed", range(50))
def test_fe_equals_lsdv(seed):
    rng = np.random.default_rng(seed)
    frame = random_panel(rng, int(rng.integers(3, 9)), int(rng.integers(3, 7)),
                         unbalanced=bool(seed % 2))
    fe = fixed_effects(SPEC, frame)
    ref = lsdv(frame)
    assert_allclose(fe.params, ref.params[["x0", "x1"]], rtol=1e-8)
    assert_allclose(fe.bse, ref.bse[["x0", "x1"]], rtol=1e-8)
    assert fe.ssr == pytest.approx(ref.ssr, rel=1e-8)


def test_fe_slope_recovery():
    estimates = []
    for seed in range(40):
        frame = random_panel(np.random.default_rng(100 + seed), 30, 5)
        estimates.append(fixed_effects(SPEC, frame).params.to_numpy())
    est = np.array(estimates)
    se = est.std(axis=0, ddof=1) / math.sqrt(len(est))
    assert np.all(np.abs(est.mean(axis=0) - [2.0, -1.0]) < 3 * se + 1e-12)


def test_fe_no_within_variation():
    frame = random_panel(np.random.default_rng(4), 5, 4)
    frame["x1"] = frame.groupby("entity")["x0"].transform("mean")
    with pytest.raises(NoWithinVariation) as info:
        fixed_effects(SPEC, frame)
    assert info.value.regressor == "x1"


def test_fe_drops_singletons():
    frame = random_panel(np.random.default_rng(5), 5, 4)
    extra = frame.iloc[[0]].assign(entity="lonely")
    with pytest.warns(SingletonEntities):
        fe = fixed_effects(SPEC, pd.concat([frame, extra]))
    assert fe.nobs == len(frame)


@pytest.mark.parametrize("seed", range(10))
def test_re_limits(seed):
    frame = random_panel(np.random.default_rng(seed), 7, 5, unbalanced=True)
    assert_allclose(random_effects(SPEC, frame, theta=0.0).params, ols(SPEC, frame).params,
                    rtol=1e-8)
    assert_allclose(random_effects(SPEC, frame, theta=1.0).params,
                    fixed_effects(SPEC, frame).params, rtol=1e-8)


def test_re_theta_half_is_quasi_demeaned_ols():
    frame = random_panel(np.random.default_rng(8), 6, 5)
    r = random_effects(SPEC, frame, theta=0.5)
    means = frame.groupby("entity")[["y", "x0", "x1"]].transform("mean")
    star = frame[["y", "x0", "x1"]] - 0.5 * means
    X = np.column_stack([np.full(len(frame), 0.5), star[["x0", "x1"]]])
    beta = np.linalg.lstsq(X, star["y"], rcond=None)[0]
    assert_allclose(r.params, beta, rtol=1e-10)


def test_re_zero_variance_component_is_ols():
    # no entity effect: sigma_u estimate is floored at zero and RE collapses to OLS
    rng = np.random.default_rng(21)
    for _ in range(20):
        frame = random_panel(rng, 8, 4, sigma_u=0.0, correlated=False)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            re = random_effects(SPEC, frame)
        if any(issubclass(w.category, NegativeVarianceComponent) for w in caught):
            assert re.extra["sigma2_u"] == 0.0
            assert_allclose(re.params, ols(SPEC, frame).params, rtol=1e-8)
            return
    pytest.fail("no draw produced a negative variance component")


def test_re_slope_recovery():
    est = np.array([random_effects(SPEC, random_panel(np.random.default_rng(300 + s), 30, 5,
                                                      correlated=False)).slopes.to_numpy()
                    for s in range(40)])
    se = est.std(axis=0, ddof=1) / math.sqrt(len(est))
    assert np.all(np.abs(est.mean(axis=0) - [2.0, -1.0]) < 3 * se + 1e-12)


def test_hausman_identical_is_zero():
    frame = random_panel(np.random.default_rng(1), 6, 5)
    fe = fixed_effects(SPEC, frame)
    h = hausman(fe, fe)
    assert h.statistic == 0.0 and h.p_value == 1.0 and h.df == 2


def test_hausman_df_and_choice():
    h = HausmanResult.from_statistic(12.849, 4)
    assert h.p_value == pytest.approx(0.0120, abs=5e-4)
    assert h.chosen == "FE"
    frame = random_panel(np.random.default_rng(9), 40, 6, correlated=True)
    h = hausman(fixed_effects(SPEC, frame), random_effects(SPEC, frame))
    assert h.statistic >= 0 and h.chosen == "FE"


def test_hausman_reparameterization_invariant():
    frame = random_panel(np.random.default_rng(13), 15, 5)
    A = np.array([[2.0, 0.5], [-1.0, 3.0]])
    other = frame.copy()
    other[["x0", "x1"]] = frame[["x0", "x1"]].to_numpy() @ A
    h1 = hausman(fixed_effects(SPEC, frame), random_effects(SPEC, frame))
    h2 = hausman(fixed_effects(SPEC, other), random_effects(SPEC, other))
    assert h2.statistic == pytest.approx(h1.statistic, rel=1e-6)


def test_hausman_mismatch():
    frame = random_panel(np.random.default_rng(1), 6, 5)
    fe = fixed_effects(SPEC, frame)
    other = fixed_effects(RegressionSpec("y", ("x0",), "entity", "time"), frame)
    with pytest.raises(CoefficientSetMismatch):
        hausman(fe, other)


def test_cluster_covariance_matches_statsmodels():
    sm = pytest.importorskip("statsmodels.api")
    frame = random_panel(np.random.default_rng(17), 12, 5)
    r = ols(SPEC, frame, cov_type="cluster")
    codes = pd.factorize(frame["entity"])[0]
    ref = sm.OLS(frame["y"], sm.add_constant(frame[["x0", "x1"]])).fit(
        cov_type="cluster", cov_kwds={"groups": codes, "use_correction": True})
    assert_allclose(r.bse, ref.bse, rtol=1e-8)


def test_spec_validation():
    with pytest.raises(ValueError):
        RegressionSpec("y", ("x0", "x0"))
    with pytest.raises(ValueError):
        RegressionSpec("y", ("y",))
