from __future__ import annotations

import io
import math

import numpy as np
import pytest

from edskit import catalog
from edskit.numerics import (
    Grid,
    GridField,
    PropagationError,
    SeedSolution,
    mixed_residual,
    pde_residual,
    propagate,
    reverse_propagate,
    write_csv,
)
from oracles import LIOUVILLE, LADDER_CONSTANTS, REVERSE_A, REVERSE_B, max_error, run_ladder, u1, z2

GRID = Grid(0, 0.6, 0, 0.6, 61, 61)


@pytest.fixture(scope="module")
def liouville_run():
    return propagate(LIOUVILLE, SeedSolution(), 0.0, GRID)


@pytest.fixture(scope="module")
def ladder():
    return run_ladder()


def test_liouville_closed_form(liouville_run):
    assert max_error(liouville_run.u, u1) <= 1e-6
    assert liouville_run.path_consistency <= 1e-8


def test_corrupted_g_detected():
    bad = propagate(LIOUVILLE, SeedSolution(), 0.0, GRID, perturb_g=0.01)
    assert bad.path_consistency >= 1e-3


def test_convergence_order():
    coarse = Grid(0, 0.6, 0, 0.6, 16, 16)
    errs = []
    for g in (coarse, coarse.refine(), coarse.refine(4)):
        errs.append(max_error(propagate(LIOUVILLE, SeedSolution(), 0.0, g).u, u1))
    assert errs[0] / errs[1] >= 8 and errs[1] / errs[2] >= 8


@pytest.mark.parametrize("seed", [SeedSolution("sin(x)/2", "y^2/4"), SeedSolution("x", "-y")])
def test_path_consistency_order(seed):
    # one substep per cell keeps the discrepancy well above rounding
    g = Grid(0, 0.5, 0, 0.5, 9, 9)
    pcs = [propagate(LIOUVILLE, seed, 0.0, gg, substeps=1).path_consistency
           for gg in (g, g.refine(), g.refine(4))]
    assert pcs[0] / pcs[1] >= 8 and pcs[1] / pcs[2] >= 8


def test_xiii_propagation_consistent():
    entry = catalog.get("XIII")
    bt = next(t for t in entry.transformations if t.name == "xiii-wave").build(entry)
    res = propagate(bt, SeedSolution("x", "y"), 0.5, Grid(1, 1.5, 1, 1.5, 21, 21))
    assert res.path_consistency <= 1e-8
    assert res.pde_residual <= 1e-4


def test_determinism(liouville_run):
    again = propagate(LIOUVILLE, SeedSolution(), 0.0, GRID)
    assert np.array_equal(again.u.values, liouville_run.u.values)
    assert again.path_consistency == liouville_run.path_consistency
    assert again.pde_residual == liouville_run.pde_residual


def test_seed_dalembert():
    seed = SeedSolution("sin(x)/2 + x^3", "exp(y)")
    g = Grid(0, 1, 0, 1, 21, 21)
    assert mixed_residual(seed.field(g)) <= 1e-9
    X, Y = g.mesh()
    assert np.allclose(seed.P(X, Y), np.cos(X) / 2 + 3 * X**2)
    assert np.allclose(seed.Q(X, Y), np.exp(Y))


def test_seed_from_grid_roundtrip():
    g = Grid(0, 1, 0, 1, 21, 21)
    exact = SeedSolution("sin(x)", "y^2")
    rebuilt = SeedSolution.from_grid(exact.field(g))
    xs = np.linspace(0, 1, 7)
    assert np.allclose(rebuilt.Z(xs, xs), exact.Z(xs, xs), atol=1e-10)
    assert np.allclose(rebuilt.P(xs, xs), exact.P(xs, xs), atol=1e-8)


# -- residual diagnostic ------------------------------------------------------

def test_pde_residual_trivial_cases():
    g = Grid(0, 1, 0, 1, 11, 11)
    assert pde_residual(GridField.from_function(g, lambda X, Y: X * Y), "1") <= 1e-12
    assert pde_residual(GridField.from_function(g, lambda X, Y: 0 * X), "exp(u)") == 1.0


def test_pde_residual_closed_form_second_order():
    # away from the blow-up line the central-difference truncation is O(h^2)
    coarse = Grid(0, 0.3, 0, 0.3, 31, 31)
    r = [pde_residual(GridField.from_function(g, u1), "exp(u)")
         for g in (coarse, coarse.refine(), coarse.refine(4))]
    assert 3.5 <= r[0] / r[1] <= 4.5 and 3.5 <= r[1] / r[2] <= 4.5
    assert r[2] <= 1e-4


def test_pde_residual_constants():
    g = Grid(0, 1, 0, 1, 11, 11)
    field = GridField.from_function(g, lambda X, Y: 3 * X * Y)
    assert pde_residual(field, "k", constants={"k": 3.0}) <= 1e-12


# -- reverse direction and the ladder -----------------------------------------

def test_reverse_matches_z2_family(ladder):
    rev = ladder.reverse
    assert rev.pde_residual <= 1e-6
    assert max_error(rev.u, z2, *LADDER_CONSTANTS[:2]) <= 1e-9
    assert ladder.z2_fit[1] <= 1e-5


def test_reverse_corner_exact(ladder):
    X, Y = ladder.reverse.u.grid.mesh()
    assert ladder.reverse.u.values[0, 0] == z2(X, Y, *LADDER_CONSTANTS[:2])[0, 0]


def test_forward_stage_fits_u3_not_u1(ladder):
    assert ladder.u3_fit[1] <= 1e-5
    assert np.allclose(ladder.u3_fit[0], LADDER_CONSTANTS, atol=1e-4)
    assert ladder.u1_fit[1] > 1e-2


def test_reverse_requires_nothing_but_relations():
    g = Grid(0, 0.3, 0, 0.3, 11, 11)
    u = GridField.from_function(g, u1)
    res = reverse_propagate(REVERSE_A, REVERSE_B, u, 0.0)
    assert res.meta["direction"] == "reverse"
    assert res.pde_residual <= 1e-6


# -- errors and output --------------------------------------------------------

def test_domain_exit_reports_node():
    with pytest.raises(PropagationError) as info:
        propagate(LIOUVILLE, SeedSolution(), 0.0, Grid(0, 1.5, 0, 1.5, 16, 16))
    x, y = info.value.node
    assert x + y / 2 >= 0.9


def test_non_finite_start_rejected():
    with pytest.raises(ValueError):
        propagate(LIOUVILLE, SeedSolution(), math.inf, GRID)


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid(0, 1, 0, 1, 2, 5)
    with pytest.raises(ValueError):
        Grid(1, 0, 0, 1, 5, 5)
    with pytest.raises(ValueError):
        GridField(Grid(0, 1, 0, 1, 3, 3), np.zeros((4, 3)))


def test_csv_format():
    g = Grid(0, 1, 0, 2, 3, 3)
    field = GridField.from_function(g, lambda X, Y: X + 10 * Y + 1 / 3)
    buf = io.StringIO()
    text = write_csv(field, buf)
    assert buf.getvalue() == text
    lines = text.splitlines()
    assert lines[0] == "x,y,u"
    assert len(lines) == 10
    rows = [tuple(map(float, ln.split(","))) for ln in lines[1:]]
    # row-major by y then x
    assert [r[:2] for r in rows[:4]] == [(0, 0), (0.5, 0), (1, 0), (0, 1)]
    assert lines[1].split(",")[2] == format(1 / 3, ".17g")
    assert all(float(v) == field.values[j, i] for (_, _, v), (j, i) in
               zip(rows, [(j, i) for j in range(3) for i in range(3)]))


def test_summary(liouville_run):
    s = liouville_run.summary()
    assert s["substeps"] == 4 and s["nx"] == 61 and s["method"] == "rk4"
