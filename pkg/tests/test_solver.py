import numpy as np
import pytest
import scipy.sparse as sp

from conftest import build_case
from helmdd.coarse import Method, SelectionRule, assemble_coarse, coarse_from_matrix, compute_spectra
from helmdd.fem import global_system
from helmdd.linalg import GmresConfig, lu_factor
from helmdd.solver import OneLevelPreconditioner, TwoLevelPreconditioner, apply_one_level, apply_two_level, solve


def cvec(r, n):
    return r.standard_normal(n) + 1j * r.standard_normal(n)


def test_single_subdomain_is_exact(rng):
    mesh, spec, ops, dec, lms = build_case(10, 1, 1, 6.0)
    P = OneLevelPreconditioner.from_decomposition(dec, lms)
    b = cvec(rng, mesh.n_vertices)
    x = apply_one_level(P, b)
    assert np.linalg.norm(ops.A @ x - b) <= 1e-10 * np.linalg.norm(b)
    r = solve(ops.A, b, P)
    assert r.converged and r.iterations == 1


def test_one_level_linear_and_matches_dense_oracle(strip, rng):
    mesh, spec, ops, dec, lms = strip
    P = OneLevelPreconditioner.from_decomposition(dec, lms)
    n = mesh.n_vertices
    u, v = cvec(rng, n), cvec(rng, n)
    a, b = 0.3 - 2j, 1.7
    lhs = P.apply(a * u + b * v)
    assert np.linalg.norm(lhs - a * P.apply(u) - b * P.apply(v)) <= 1e-12 * np.linalg.norm(lhs)
    M = np.zeros((n, n), complex)
    for s, lm in zip(dec.subdomains, lms):
        R = np.eye(n)[s.dofs]
        M += R.T @ np.diag(s.pou_weights) @ np.linalg.inv(lm.A_hat.toarray()) @ R
    assert np.allclose(P.apply(u), M @ u, atol=1e-10 * np.linalg.norm(M @ u))


def two_level(strip, method=Method.DTN, nev=4):
    mesh, spec, ops, dec, lms = strip
    P1 = OneLevelPreconditioner.from_decomposition(dec, lms)
    cs = assemble_coarse([x.columns(SelectionRule.count(nev)) for x in compute_spectra(method, dec, lms)], ops.A)
    return P1, cs, TwoLevelPreconditioner(P1, cs, ops.A)


def test_two_level_deflation_and_dense_oracle(strip, rng):
    mesh, spec, ops, dec, lms = strip
    P1, cs, P2 = two_level(strip)
    Z = cs.Z.toarray()
    for _ in range(3):
        z = Z @ cvec(rng, cs.size)
        assert np.linalg.norm(apply_two_level(P2, ops.A @ z) - z) <= 1e-8 * np.linalg.norm(z)
    n = mesh.n_vertices
    A = ops.A.toarray()
    Q = Z @ np.linalg.solve(Z.conj().T @ A @ Z, Z.conj().T)
    M1 = np.column_stack([P1.apply(e) for e in np.eye(n)])
    v = cvec(rng, n)
    ref = M1 @ (v - A @ (Q @ v)) + Q @ v
    assert np.allclose(P2.apply(v), ref, atol=1e-10 * np.linalg.norm(ref))


def test_two_level_without_coarse_space_is_one_level(strip, rng):
    mesh, spec, ops, dec, lms = strip
    P1 = OneLevelPreconditioner.from_decomposition(dec, lms)
    v = cvec(rng, mesh.n_vertices)
    assert np.array_equal(TwoLevelPreconditioner(P1, None, ops.A).apply(v), P1.apply(v))


def test_full_rank_coarse_space_solves_in_one_iteration():
    mesh, spec, ops, dec, lms = build_case(10, 2, 2, 8.0)
    P1 = OneLevelPreconditioner.from_decomposition(dec, lms)
    cs = coarse_from_matrix(sp.identity(mesh.n_vertices, format="csc"), ops.A)
    _, b = global_system(mesh, spec)
    r = solve(ops.A, b, TwoLevelPreconditioner(P1, cs, ops.A))
    assert r.converged and r.iterations == 1


@pytest.mark.parametrize("method", [None, Method.DTN, Method.HARMONIC])
def test_solution_matches_direct_solve(strip, method):
    mesh, spec, ops, dec, lms = strip
    _, b = global_system(mesh, spec)
    if method is None:
        P = OneLevelPreconditioner.from_decomposition(dec, lms)
    else:
        P = two_level(strip, method)[2]
    r = solve(ops.A, b, P, GmresConfig(1e-10, 200))
    x = lu_factor(ops.A).solve(b)
    assert r.converged
    assert np.linalg.norm(r.solution - x) <= 1e-5 * np.linalg.norm(x)
    true = np.linalg.norm(b - ops.A @ r.solution) / np.linalg.norm(b)
    assert abs(true - r.residual_history[-1]) <= 1e-10


def test_threads_give_identical_iterates():
    mesh, spec, ops, dec, lms = build_case(16, 3, 3, 10.0)
    _, b = global_system(mesh, spec)
    runs = []
    for threads in (1, 3, 0):
        P = OneLevelPreconditioner.from_decomposition(dec, lms, threads=threads)
        runs.append(solve(ops.A, b, P))
    for r in runs[1:]:
        assert r.iterations == runs[0].iterations
        assert np.array_equal(r.solution, runs[0].solution)


def test_solve_dimension_checks(strip):
    mesh, spec, ops, dec, lms = strip
    P = OneLevelPreconditioner.from_decomposition(dec, lms)
    with pytest.raises(ValueError):
        solve(ops.A, np.ones(3), P)
