import numpy as np
import pandas as pd
import pytest

from camelg.dea import (
    DeaSpec,
    EfficiencyPanel,
    MissingCell,
    UnsolvedCell,
    ZeroDenominator,
    benchmark,
    build_dmu_lp,
    efficiency,
    projection,
)
from camelg.lpcore import solve
from camelg.panelstore import compute_growth, load_panel
from camelg.synthetic import bundled_paths

from generators import panel_from_roles, random_dea_roles
from oracles import basic_solutions_optimum, sbm_output_oracle

EMPTY = np.zeros((2, 0))


def two_dmus():
    return panel_from_roles(np.array([[1.0], [1.0]]), EMPTY, np.array([[2.0], [1.0]]), EMPTY)


def scores_of(panel):
    return panel.cells.set_index("bank_id")["score"]


@pytest.fixture(scope="module")
def synthetic():
    return compute_growth(load_panel(*bundled_paths()))


def test_two_dmu_example_lp():
    spec, data = two_dmus()
    lp = build_dmu_lp(spec, data, "D1", 2000)
    # variables: lambda_A, lambda_B, s-, s+
    ref = basic_solutions_optimum(lp.c, lp.A, lp.b, sense="max")
    assert ref + lp.offset == pytest.approx(2.0)
    assert solve(lp).objective == pytest.approx(2.0)


def test_two_dmu_scores_and_projection():
    spec, data = two_dmus()
    panel = efficiency(spec, data)
    s = scores_of(panel)
    assert s["D0"] == pytest.approx(1.0)
    assert s["D1"] == pytest.approx(0.5)
    target = projection(panel, "D1", 2000)
    assert target["yg0"] == pytest.approx(2.0)
    assert target["xg0"] == pytest.approx(1.0)
    assert projection(panel, "D0", 2000) == pytest.approx({"xg0": 1.0, "yg0": 2.0})


def test_single_dmu_self_reference():
    spec, data = panel_from_roles(np.array([[3.0]]), np.zeros((1, 0)), np.array([[5.0]]),
                                  np.zeros((1, 0)))
    lp = build_dmu_lp(spec, data, "D0", 2000)
    sol = solve(lp)
    assert sol.x == pytest.approx([1.0, 0.0, 0.0])
    assert efficiency(spec, data).cells["score"].iloc[0] == 1.0


def test_spec_invariants():
    with pytest.raises(ValueError):
        DeaSpec(desirable_outputs=())
    with pytest.raises(ValueError):
        DeaSpec(desirable_inputs=())
    with pytest.raises(ValueError):
        DeaSpec(undesirable_outputs=("total_assets",))
    with pytest.raises(ValueError):
        DeaSpec(orientation="sideways")


def test_spec_text_round_trip():
    spec = DeaSpec(orientation="non-oriented", undesirable_inputs=("x",))
    assert DeaSpec.from_text(spec.to_text()) == spec
    with pytest.raises(ValueError):
        DeaSpec.from_text("colour = blue")


def test_identical_dmus_all_efficient():
    block = np.tile([[2.0, 3.0]], (4, 1))
    spec, data = panel_from_roles(block, np.zeros((4, 0)), block * 2, block[:, :1])
    assert np.allclose(efficiency(spec, data).cells["score"], 1.0)


def test_zero_denominator_and_missing_cell():
    spec, data = panel_from_roles(np.array([[1.0], [1.0]]), EMPTY, np.array([[2.0], [0.0]]),
                                  EMPTY, shift_nonpositive=False)
    with pytest.raises(ZeroDenominator):
        build_dmu_lp(spec, data, "D1", 2000)
    panel = efficiency(spec, data)
    assert panel.cells.set_index("bank_id").at["D1", "status"] == "ZeroDenominator"
    with pytest.raises(MissingCell):
        build_dmu_lp(spec, data, "D7", 2000)


def test_unsolved_cell_projection():
    spec, data = two_dmus()
    panel = efficiency(spec, data)
    cells = panel.cells.copy()
    cells.loc[1, "status"] = "Infeasible"
    broken = EfficiencyPanel(spec, cells, panel.data, panel.weights, panel.shifts)
    with pytest.raises(UnsolvedCell):
        projection(broken, "D1", 2000)


@pytest.mark.parametrize("seed", range(25))
def test_oracle_equivalence(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 6))
    xg, xb, yg, yb = random_dea_roles(rng, n)
    spec, data = panel_from_roles(xg, xb, yg, yb)
    got = scores_of(efficiency(spec, data))
    for k in range(n):
        assert got[f"D{k}"] == pytest.approx(sbm_output_oracle(xg, xb, yg, yb, k), abs=1e-6)


@pytest.mark.parametrize("seed", range(10))
def test_literal_and_normalised_programs_agree(seed):
    rng = np.random.default_rng(500 + seed)
    xg, xb, yg, yb = random_dea_roles(rng, 4)
    for orientation in ("output", "input", "non-oriented"):
        spec, data = panel_from_roles(xg, xb, yg, yb, orientation=orientation)
        for k in range(4):
            a = solve(build_dmu_lp(spec, data, f"D{k}", 2000, normalize=False))
            b = solve(build_dmu_lp(spec, data, f"D{k}", 2000, normalize=True))
            assert a.objective == pytest.approx(b.objective, abs=1e-8)


@pytest.mark.parametrize("seed", range(10))
def test_units_invariance(seed):
    rng = np.random.default_rng(900 + seed)
    xg, xb, yg, yb = random_dea_roles(rng, 5)
    spec, data = panel_from_roles(xg, xb, yg, yb)
    base = efficiency(spec, data).cells["score"].to_numpy()
    obs = data.observations.copy()
    var = spec.variables[int(rng.integers(len(spec.variables)))]
    obs[var] *= rng.uniform(1e-3, 1e3)
    scaled = efficiency(spec, data.with_observations(obs)).cells["score"].to_numpy()
    assert np.max(np.abs(base - scaled)) <= 1e-6


@pytest.mark.parametrize("seed", range(10))
def test_orientation_monotonicity(seed):
    rng = np.random.default_rng(1300 + seed)
    xg, xb, yg, yb = random_dea_roles(rng, 5)
    out = {}
    for orientation in ("output", "input", "non-oriented"):
        spec, data = panel_from_roles(xg, xb, yg, yb, orientation=orientation)
        out[orientation] = efficiency(spec, data).cells["score"].to_numpy()
    assert np.all(out["non-oriented"] <= np.minimum(out["input"], out["output"]) + 1e-8)


def test_dominated_unit_is_inefficient():
    rng = np.random.default_rng(4)
    xg, xb, yg, yb = random_dea_roles(rng, 4, undesirable=False)
    # unit 3 copies unit 0 but produces less of the first output
    xg[3], yg[3] = xg[0], yg[0]
    yg[3, 0] *= 0.7
    spec, data = panel_from_roles(xg, xb, yg, yb)
    assert scores_of(efficiency(spec, data))["D3"] < 1.0


def test_projection_reproduces_benchmark():
    rng = np.random.default_rng(77)
    xg, xb, yg, yb = random_dea_roles(rng, 5)
    xb = rng.uniform(0.5, 10, size=(5, 1))
    yb = rng.uniform(0.5, 10, size=(5, 1))
    for orientation in ("output", "input", "non-oriented"):
        spec, data = panel_from_roles(xg, xb, yg, yb, orientation=orientation)
        panel = efficiency(spec, data)
        for k in range(5):
            target = projection(panel, f"D{k}", 2000)
            peers = benchmark(panel, f"D{k}", 2000)
            for var in spec.variables:
                assert target[var] == pytest.approx(peers[var], rel=1e-7, abs=1e-7)


def test_efficient_cells_have_no_objective_slack():
    rng = np.random.default_rng(31)
    xg, xb, yg, yb = random_dea_roles(rng, 5)
    spec, data = panel_from_roles(xg, xb, yg, yb)
    cells = efficiency(spec, data).cells
    outputs = [f"slack:{v}" for v in spec.desirable_outputs + spec.undesirable_outputs]
    eff = cells[cells["score"] >= 1 - 1e-12]
    assert not eff.empty
    assert (eff[outputs].abs() <= 1e-9).all().all()


def test_synthetic_panel_score_range(synthetic):
    panel = efficiency(DeaSpec(), synthetic)
    solved = panel.solved()
    assert len(solved) == 234
    assert (solved["score"] > 0).all() and (solved["score"] <= 1).all()
    # first year has no growth figure
    assert set(panel.cells.loc[panel.cells["status"] != "Optimal", "year"]) == {2010}
    assert "net_operating_profit" in panel.shifts
    csv = panel.to_csv().splitlines()
    assert csv[0] == "bank_id,year,score,status"
    assert len(csv) == 253


def test_dynamic_mode_links_intensity_totals(synthetic):
    obs = synthetic.observations
    small = synthetic.with_observations(obs[obs["bank_id"].isin(["B01", "B02", "B03", "B04"])
                                            & (obs["year"] >= 2015)])
    static = efficiency(DeaSpec(), small)
    panel = efficiency(DeaSpec(dynamic=True), small)
    assert (panel.cells["status"] == "Optimal").all()
    for bank in small.banks:
        totals = [sum(panel.weights[(bank, y)].values()) for y in small.years]
        assert np.allclose(totals, totals[0], atol=1e-8)
    s, d = static.cells["score"].to_numpy(), panel.cells["score"].to_numpy()
    assert np.all((d > 0) & (d <= 1))
    # the joint programs add constraints, so the mean slack cannot exceed the static optimum
    assert np.mean(1 / d) <= np.mean(1 / s) + 1e-8
