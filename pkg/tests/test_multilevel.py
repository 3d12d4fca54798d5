"""Hierarchy construction and the multilevel correction driver."""

import numpy as np
import pytest

from augeig.errors import ConfigError
from augeig.harness import measure_errors, unit_square
from augeig.linalg import reference_eigensolve
from augeig.multilevel import (
    LevelPlan,
    build_hierarchy,
    coarsest_solve,
    multilevel_solve,
    work_accounting,
)

EXACT_LAMBDA1 = np.pi ** 2 / 2  # first Dirichlet eigenvalue on (0,2)^2


def test_plan_validation():
    with pytest.raises(ConfigError):
        LevelPlan(coarse_h=0.1, h1=0.2)
    with pytest.raises(ConfigError):
        LevelPlan(coarse_h=0.5, h1=0.25, beta=1.0)
    with pytest.raises(ConfigError):
        LevelPlan(coarse_h=0.5, h1=0.25, n_levels=0)
    with pytest.raises(ConfigError):
        LevelPlan(coarse_h=0.5, h1=0.25, L=0)
    with pytest.raises(ConfigError):
        LevelPlan(coarse_h=0.5, h1=0.25, theta=1.0)
    with pytest.raises(ConfigError):
        LevelPlan(coarse_h=0.5, h1=0.25, mode="other")


def test_fine_sizes():
    plan = LevelPlan(coarse_h=0.5, h1=0.1, beta=2.0, n_levels=3)
    assert np.allclose(plan.fine_sizes(), [0.1, 0.05, 0.025])


@pytest.fixture(scope="module")
def square_hierarchy():
    ex = unit_square()
    plan = LevelPlan(coarse_h=0.25, h1=0.125, beta=2.0, n_levels=3, L=2,
                     theta=0.1, nev=1)
    hier = build_hierarchy(plan, ex.domain, ex.circles, ex.coefficient())
    return ex, plan, hier


def test_hierarchy_structure(square_hierarchy):
    _, plan, hier = square_hierarchy
    assert len(hier.levels) == 3
    assert hier.levels[0].transfer_prev is None
    for lev in hier.levels[1:]:
        assert lev.transfer_prev is not None
    dofs = [lev.space.n_dof for lev in hier.levels]
    for a, b in zip(dofs, dofs[1:]):
        assert 3.5 <= b / a <= 4.5  # halving h roughly quadruples the dofs


def test_single_level_equals_direct_solve(square_hierarchy):
    ex, _, hier = square_hierarchy
    plan1 = LevelPlan(coarse_h=0.25, h1=0.125, n_levels=1, nev=2)
    hier1 = build_hierarchy(plan1, ex.domain, ex.circles, ex.coefficient())
    state = multilevel_solve(hier1, plan1, coarse_tol=1e-11, seed=0)
    direct = coarsest_solve(hier1.levels[0], 2, tol=1e-11, seed=0)
    assert np.array_equal(state.lambdas, direct.lambdas)
    assert np.array_equal(state.vectors, direct.vectors)


def test_coarsest_solve_accuracy(square_hierarchy):
    _, _, hier = square_hierarchy
    state = coarsest_solve(hier.levels[0], 1, tol=1e-11)
    assert abs(state.lambdas[0] - EXACT_LAMBDA1) / EXACT_LAMBDA1 < 0.03


def test_multilevel_converges_to_finest_reference(square_hierarchy):
    _, plan, hier = square_hierarchy
    records = []
    state = multilevel_solve(hier, plan, coarse_tol=1e-11, records=records)
    finest = hier.levels[-1]
    ref_lams, _ = reference_eigensolve(finest.A_h, finest.B_h, 1, 1e-11)
    assert abs(state.lambdas[0] - ref_lams[0]) < 1e-5
    assert abs(state.lambdas[0] - EXACT_LAMBDA1) / EXACT_LAMBDA1 < 0.005

    # One record for the coarsest solve plus L per finer level.
    assert len(records) == 1 + plan.L * (len(hier.levels) - 1)
    assert records[0].level == 1 and records[0].iteration == 0
    for rec in records:
        assert rec.n_dof == hier.levels[rec.level - 1].space.n_dof

    rows = work_accounting(records, border_dim=hier.coarse_space.n_dof + plan.nev)
    assert [row[0] for row in rows] == [1, 2, 3]
    assert all(row[3] > 0 for row in rows)


def test_error_fn_history(square_hierarchy):
    _, plan, hier = square_hierarchy
    finest = hier.levels[-1]
    ref = reference_eigensolve(finest.A_h, finest.B_h, 1, 1e-11)

    def err(V):
        e, _ = measure_errors(np.zeros(V.shape[1]), V, ref[0], ref[1], [], finest.A_h)
        return e

    error_fns = [None, None, err]
    state = multilevel_solve(hier, plan, coarse_tol=1e-11, error_fns=error_fns)
    finest_diags = state.history[-plan.L:]
    errs = [float(d.anorm_errors[0]) for d in finest_diags]
    assert all(np.isfinite(errs))
    assert errs[-1] < errs[0]  # corrections reduce the finest-level error


def test_work_accounting_requires_records():
    with pytest.raises(ConfigError):
        work_accounting([], border_dim=3)
