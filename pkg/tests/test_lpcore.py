import numpy as np
import pytest
from numpy.testing import assert_allclose

from camelg.lpcore import (
    DimensionMismatch,
    LinearProgram,
    LpStatus,
    dump_lp,
    load_lp,
    solve,
)

from generators import random_box_lp
from oracles import lp_vertex_enumeration


def lagrangian_dual_bound(lp, sol):
    """Dual objective rebuilt from row multipliers and variable bounds only."""
    y = sol.duals
    r = lp.c - lp.A.T @ y
    sgn = 1.0 if lp.sense == "min" else -1.0
    bound_term = 0.0
    for j, rj in enumerate(sgn * r):
        if rj > 0:
            bound_term += rj * lp.lb[j]
        elif rj < 0:
            bound_term += rj * lp.ub[j]
    return lp.b @ y + sgn * bound_term + lp.offset


def test_lower_bound_only():
    sol = solve(LinearProgram(c=[1.0], A=[[1.0]], b=[3.0], relations=(">=",)))
    assert sol.status is LpStatus.OPTIMAL
    assert_allclose(sol.x, [3.0])
    assert sol.objective == pytest.approx(3.0)


def test_small_max_with_offset_matches_enumeration():
    # maximize 1 + s  s.t.  s - 2*lam = -1, lam <= 1
    lp = LinearProgram(c=[1.0, 0.0], A=[[1.0, -2.0]], b=[-1.0],
                       ub=[np.inf, 1.0], sense="max", offset=1.0)
    ref, _ = lp_vertex_enumeration(lp.c, lp.A, lp.b, lp.relations, [0, 0], [10, 1],
                                   sense="max", offset=1.0)
    sol = solve(lp)
    assert ref == pytest.approx(2.0)
    assert sol.objective == pytest.approx(ref, abs=1e-12)
    assert_allclose(sol.x, [1.0, 1.0])


def test_infeasible():
    lp = LinearProgram(c=[1.0], A=[[1.0], [1.0]], b=[1.0, 0.0], relations=(">=", "<="))
    assert solve(lp).status is LpStatus.INFEASIBLE


def test_unbounded_with_ray():
    lp = LinearProgram(c=[-1.0, 0.0], A=[[1.0, -1.0]], b=[1.0], relations=("<=",))
    sol = solve(lp)
    assert sol.status is LpStatus.UNBOUNDED
    assert lp.c @ sol.ray < 0
    assert np.all(lp.A @ sol.ray <= 1e-12)


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        LinearProgram(c=[1.0, 2.0], A=[[1.0]], b=[1.0])
    with pytest.raises(DimensionMismatch):
        LinearProgram(c=[1.0], A=[[1.0]], b=[1.0, 2.0])


def test_free_variables_and_redundant_rows():
    # x free, y >= 0; duplicated equality row
    lp = LinearProgram(c=[1.0, 1.0], A=[[1.0, 1.0], [2.0, 2.0], [1.0, -1.0]],
                       b=[2.0, 4.0, 0.0], lb=[-np.inf, 0.0])
    sol = solve(lp)
    assert sol.optimal
    assert_allclose(sol.x, [1.0, 1.0], atol=1e-12)
    assert sol.duality_gap <= 1e-12


def test_beale_cycling_example_terminates():
    # Beale's classic instance cycles under Dantzig pricing without anti-cycling
    c = [-0.75, 150.0, -0.02, 6.0]
    A = [[0.25, -60.0, -0.04, 9.0], [0.5, -90.0, -0.02, 3.0], [0.0, 0.0, 1.0, 0.0]]
    lp = LinearProgram(c=c, A=A, b=[0.0, 0.0, 1.0], relations=("<=",) * 3)
    sol = solve(lp, stall_limit=2)
    assert sol.optimal
    assert sol.objective == pytest.approx(-0.05)


@pytest.mark.parametrize("seed", range(40))
def test_random_lp_matches_vertex_enumeration(seed):
    rng = np.random.default_rng(seed)
    lp = random_box_lp(rng)
    ref, _ = lp_vertex_enumeration(lp.c, lp.A, lp.b, lp.relations, lp.lb, lp.ub, lp.sense)
    sol = solve(lp)
    if ref is None:
        assert sol.status is LpStatus.INFEASIBLE
        return
    assert sol.optimal
    assert sol.objective == pytest.approx(ref, abs=1e-8)
    assert lp.residuals(sol.x).max() <= 1e-9
    assert sol.duality_gap <= 1e-9 * (1 + abs(sol.objective))
    assert lagrangian_dual_bound(lp, sol) == pytest.approx(sol.objective, abs=1e-8)


@pytest.mark.parametrize("seed", range(10))
def test_row_scaling_invariance(seed):
    rng = np.random.default_rng(100 + seed)
    lp = random_box_lp(rng)
    sol = solve(lp)
    scale = rng.uniform(0.1, 50.0, size=lp.A.shape[0])
    scaled = LinearProgram(c=lp.c, A=lp.A * scale[:, None], b=lp.b * scale,
                           relations=lp.relations, lb=lp.lb, ub=lp.ub, sense=lp.sense)
    other = solve(scaled)
    assert other.status is sol.status
    if sol.optimal:
        assert other.objective == pytest.approx(sol.objective, abs=1e-9 * (1 + abs(sol.objective)))


def test_dual_signs_for_minimisation():
    lp = LinearProgram(c=[1.0, 2.0], A=[[1.0, 1.0], [1.0, 0.0]], b=[2.0, 3.0],
                       relations=(">=", "<="))
    sol = solve(lp)
    assert sol.duals[0] >= -1e-12
    assert sol.duals[1] <= 1e-12


def test_dump_round_trip():
    lp = LinearProgram(c=[1.5, -2.0], A=[[1.0, 0.1], [3.0, 4.0]], b=[1.0, 7.25],
                       relations=("<=", "="), lb=[0.0, -np.inf], ub=[2.0, np.inf],
                       sense="max", offset=0.5)
    text = dump_lp(lp)
    assert text.splitlines()[0] == "SENSE max"
    back = load_lp(text)
    for name in ("c", "A", "b", "lb", "ub"):
        assert np.array_equal(getattr(back, name), getattr(lp, name))
    assert (back.relations, back.sense, back.offset) == (lp.relations, lp.sense, lp.offset)
    assert solve(back).objective == solve(lp).objective
