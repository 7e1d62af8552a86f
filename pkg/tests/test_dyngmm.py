import dataclasses

import numpy as np
import pytest
from numpy.testing import assert_allclose

from camelg.distkit import TestStatistic
from camelg.dyngmm import (
    GmmSpec,
    InsufficientPeriods,
    InsufficientTimePeriods,
    SingularCovariance,
    ab_autocorrelation,
    linear_gmm,
    sargan,
    simulate_dynamic_panel,
    system_gmm,
    wald_joint,
)

SPEC = GmmSpec(dependent="y", exogenous=("x",), entity="entity", time="time")


@pytest.fixture(scope="module")
def fitted():
    return system_gmm(SPEC, simulate_dynamic_panel(np.random.default_rng(42)))


def test_recovers_parameters(fitted):
    assert fitted.params["L1.y"] == pytest.approx(0.5, abs=0.1)
    assert fitted.params["x"] == pytest.approx(0.3, abs=0.1)
    assert list(fitted.params.index) == ["L1.y", "x"]


def test_instrument_count_and_df(fitted):
    # collapsed lags 2..4, one level instrument, dx and x
    assert fitted.n_instruments == 6
    s = sargan(fitted)
    assert s.df == fitted.n_instruments - fitted.n_params == 4
    assert s.value >= 0


def test_sargan_df_identity_seventeen_restrictions():
    # 5 parameters and 22 instruments leave 17 overidentifying restrictions
    s = TestStatistic(17.5625, "chi_square", 17)
    assert s.p_value == pytest.approx(0.4169, abs=5e-4)


def test_uncollapsed_has_more_instruments():
    data = simulate_dynamic_panel(np.random.default_rng(3), n_entities=100)
    wide = system_gmm(dataclasses.replace(SPEC, collapse=False), data)
    assert wide.n_instruments > 6
    assert sargan(wide).df == wide.n_instruments - 2


def test_exactly_identified_branch(fitted):
    exact = dataclasses.replace(fitted, n_instruments=fitted.n_params)
    s = sargan(exact)
    assert (s.value, s.df, s.p_value) == (0.0, 0, 1.0)
    assert "exactly" in s.note


def test_two_periods_rejected():
    data = simulate_dynamic_panel(np.random.default_rng(0), n_entities=20, n_periods=2)
    with pytest.raises(InsufficientTimePeriods):
        system_gmm(SPEC, data)


def test_ar2_needs_periods():
    data = simulate_dynamic_panel(np.random.default_rng(0), n_entities=50, n_periods=4)
    res = system_gmm(SPEC, data)
    ab_autocorrelation(res, 1)
    with pytest.raises(InsufficientPeriods):
        ab_autocorrelation(res, 2)


def test_ab_p_value_identity():
    assert TestStatistic(1.5640, tail="two_sided").p_value == pytest.approx(0.1178, abs=5e-4)


def test_wald_single_coefficient_is_z_squared(fitted):
    w = wald_joint(fitted, ["x"])
    assert w.value == pytest.approx(fitted.zvalues["x"] ** 2, rel=1e-12)
    assert w.df == 1
    assert wald_joint(fitted).df == 2


def test_wald_singular():
    res = system_gmm(SPEC, simulate_dynamic_panel(np.random.default_rng(1), n_entities=60))
    singular = dataclasses.replace(res, cov=res.cov * 0.0)
    with pytest.raises(SingularCovariance):
        wald_joint(singular)


def test_linear_gmm_exact_identification_is_ols():
    rng = np.random.default_rng(5)
    X = np.column_stack([np.ones(50), rng.normal(size=(50, 2))])
    y = X @ [1.0, -2.0, 0.5] + rng.normal(size=50)
    ols = np.linalg.lstsq(X, y, rcond=None)[0]
    assert_allclose(linear_gmm(y, X, X), ols, rtol=1e-8)
    assert_allclose(linear_gmm(y, X, X, W=np.eye(3)), ols, rtol=1e-8)


def test_invariant_to_entity_order_and_labels():
    data = simulate_dynamic_panel(np.random.default_rng(8), n_entities=80)
    base = system_gmm(SPEC, data)
    rng = np.random.default_rng(0)
    perm = rng.permutation(80)
    relabeled = data.assign(entity=data["entity"].map(lambda e: f"bank-{perm[e]:03d}"))
    shuffled = relabeled.sample(frac=1.0, random_state=1)
    other = system_gmm(SPEC, shuffled)
    assert_allclose(other.params, base.params, rtol=1e-9)
    assert_allclose(other.bse, base.bse, rtol=1e-9)


def test_missing_periods_handled():
    data = simulate_dynamic_panel(np.random.default_rng(9), n_entities=120)
    holes = data.drop(index=data.sample(frac=0.05, random_state=2).index)
    res = system_gmm(SPEC, holes)
    assert res.nobs < system_gmm(SPEC, data).nobs
    assert np.all(np.isfinite(res.params))


def test_two_step_runs(fitted):
    data = simulate_dynamic_panel(np.random.default_rng(42))
    two = system_gmm(dataclasses.replace(SPEC, two_step=True), data)
    assert two.params["L1.y"] == pytest.approx(fitted.params["L1.y"], abs=0.05)
    assert sargan(two).df == 4


def test_residual_summary_order(fitted):
    s = fitted.residual_summary()
    assert s["min"] <= s["q1"] <= s["median"] <= s["q3"] <= s["max"]


def test_bias_shrinks_with_entities():
    bias = []
    for n in (50, 100, 200):
        est = [system_gmm(SPEC, simulate_dynamic_panel(np.random.default_rng(s), n_entities=n))
               .params["L1.y"] for s in range(200)]
        bias.append(abs(np.mean(est) - 0.5))
    assert bias[0] > bias[1] > bias[2]


def test_wald_size_under_zero_slopes():
    rejections = [
        wald_joint(system_gmm(SPEC, simulate_dynamic_panel(np.random.default_rng(10_000 + s),
                                                            alpha=0.0, beta=0.0))).p_value < 0.05
        for s in range(500)
    ]
    assert 0.02 <= np.mean(rejections) <= 0.08


def test_spec_validation():
    with pytest.raises(ValueError):
        GmmSpec(min_lag=1)
    with pytest.raises(ValueError):
        GmmSpec(min_lag=3, max_lag=2)
