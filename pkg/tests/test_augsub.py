"""One augmented subspace iteration: correction, selection, reassembly."""

import numpy as np
import pytest

from augeig.augsub import (
    EigenState,
    aug_subspace_step,
    correction_solve,
    select_eigenpairs,
    solve_bordered,
)
from augeig.errors import LinalgError
from augeig.fem import BorderedSystem
from augeig.harness import measure_errors


def _block_error(vectors, ref, clusters, A_h):
    errs, _ = measure_errors(np.zeros(vectors.shape[1]), vectors, ref[0], ref[1],
                             clusters, A_h)
    return float(np.linalg.norm(errs))


def test_first_step_contracts(square_pair, square_reference, square_initial_state):
    A_h = square_pair["A_h"]
    clusters = [[1, 2]]
    e0 = _block_error(square_initial_state.vectors, square_reference, clusters, A_h)
    state = aug_subspace_step(square_pair["assembler"], square_initial_state, theta=0.1)
    e1 = _block_error(state.vectors, square_reference, clusters, A_h)
    assert e0 > 0
    assert e1 < 0.5 * e0
    assert state.iteration == 1
    assert len(state.history) == 1


def test_eigenvalues_decrease_toward_reference(square_pair, square_reference,
                                               square_initial_state):
    state = square_initial_state
    for _ in range(3):
        state = aug_subspace_step(square_pair["assembler"], state, theta=0.1)
    assert np.abs(state.lambdas - square_reference[0]).max() < 1e-6
    # Galerkin sandwich: iterates stay above the fine-space eigenvalues.
    for diag in state.history:
        assert (diag.lambdas >= square_reference[0] - 1e-10).all()


def test_step_is_idempotent_at_convergence(square_pair, square_reference):
    lams, vecs = square_reference
    state = EigenState(lambdas=lams.copy(), vectors=vecs.copy(), iteration=0)
    new = aug_subspace_step(square_pair["assembler"], state, theta=0.1)
    assert np.abs(new.lambdas - lams).max() < 1e-9
    for j in range(3):
        diff = min(
            np.linalg.norm(new.vectors[:, j] - vecs[:, j]),
            np.linalg.norm(new.vectors[:, j] + vecs[:, j]),
        )
        assert diff < 1e-4


def test_step_does_not_mutate_inputs(square_pair, square_initial_state):
    asm = square_pair["assembler"]
    A_H_before = asm.A_H.copy()
    vecs_before = square_initial_state.vectors.copy()
    lams_before = square_initial_state.lambdas.copy()
    aug_subspace_step(asm, square_initial_state, theta=0.1)
    assert np.array_equal(asm.A_H, A_H_before)
    assert np.array_equal(square_initial_state.vectors, vecs_before)
    assert np.array_equal(square_initial_state.lambdas, lams_before)


def test_correction_solve_orthonormalizes(square_pair, square_initial_state):
    A_h = square_pair["A_h"]
    U, reports = correction_solve(A_h, square_pair["B_h"], square_initial_state,
                                  theta=0.1)
    G = U.T @ (A_h.csr @ U)
    assert np.allclose(G, np.eye(3), atol=1e-10)
    for r in reports:
        assert not r.breakdown


def test_correction_degenerate_guard(square_pair, square_initial_state):
    st = square_initial_state
    dup = EigenState(
        lambdas=np.array([st.lambdas[0], st.lambdas[0]]),
        vectors=np.column_stack([st.vectors[:, 0], st.vectors[:, 0]]),
    )
    with pytest.raises(LinalgError, match="degenerate"):
        correction_solve(square_pair["A_h"], square_pair["B_h"], dup, theta=0.1)


def _decoupled_system():
    # Coarse block diag(10, 20); border functions are exact eigenvectors
    # with eigenvalues 2 and 5 and no coupling to the coarse space.
    return BorderedSystem(
        A_H=np.diag([10.0, 20.0]), a_h=np.zeros((2, 2)), alpha=np.eye(2),
        B_H=np.eye(2), b_h=np.zeros((2, 2)), beta=np.diag([1 / 2, 1 / 5]),
    )


def test_select_on_decoupled_system():
    sys = _decoupled_system()
    lambdas, u_H, xi = solve_bordered(sys)
    assert np.allclose(lambdas, [2.0, 5.0, 10.0, 20.0], atol=1e-12)
    selected = select_eigenpairs(lambdas, u_H, xi, sys, 2)
    # Slot 0 tracks the border function with eigenvalue 2, slot 1 the one with 5.
    assert selected == [0, 1]
    assert abs(abs(xi[0, selected[0]]) - np.sqrt(2.0)) < 1e-12
    assert abs(abs(xi[1, selected[1]]) - np.sqrt(5.0)) < 1e-12


def test_select_needs_enough_candidates():
    sys = _decoupled_system()
    lambdas, u_H, xi = solve_bordered(sys)
    with pytest.raises(LinalgError):
        select_eigenpairs(lambdas, u_H, xi, sys, 5)


def test_select_vanishing_scores_raise():
    sys = _decoupled_system()
    lambdas, u_H, xi = solve_bordered(sys)
    with pytest.raises(LinalgError, match="slot"):
        select_eigenpairs(lambdas, u_H, np.zeros_like(xi), sys, 2)
