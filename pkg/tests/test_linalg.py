import numpy as np
import pytest
import scipy.sparse as sparse

from sonodg.errors import ConfigurationError, SolverError
from sonodg.linalg import (CachedLU, SolverSpec, csr_from_triplets,
                           residual_norm, solve, spmv, write_matrix_market)
from sonodg.mesh import build_rect_mesh, classify_boundary
from sonodg.space import DgSpace, interpolate
from sonodg import forms


def test_spmv_identity(rng):
    A = sparse.identity(7, format="csr")
    x = rng.standard_normal(7)
    assert np.array_equal(spmv(A, x), x)


def test_spmv_dense_as_sparse():
    A = sparse.csr_matrix(np.array([[2.0, 1.0], [0.0, 3.0]]))
    assert np.allclose(spmv(A, [1.0, 1.0]), [3.0, 3.0])


def test_spmv_mass_quadratic_form():
    m = build_rect_mesh((0, 1), (0, 1), 3, 3)
    sp = DgSpace(m, 1)
    M = forms.assemble_mass(sp, 1.0)
    one = interpolate(sp, lambda x, y: 1.0).coeffs
    assert one @ spmv(M, one) == pytest.approx(1.0, abs=1e-10)


def test_spmv_dimension_mismatch():
    A = sparse.identity(4, format="csr")
    with pytest.raises(ConfigurationError):
        spmv(A, np.ones(5))


def test_csr_from_triplets_sums_duplicates():
    A = csr_from_triplets((2, 2), [0, 0, 1], [0, 0, 1], [1.0, 2.0, 5.0])
    assert A[0, 0] == 3.0 and A[1, 1] == 5.0
    assert A.has_sorted_indices


def test_solve_identity(rng):
    A = sparse.identity(9, format="csr")
    b = rng.standard_normal(9)
    assert np.allclose(solve(A, b), b)


def test_solve_mass_manufactured():
    m = build_rect_mesh((0, 1), (0, 2), 4, 8)
    sp = DgSpace(m, 2)
    M = forms.assemble_mass(sp, 1.0)
    xstar = interpolate(sp, lambda x, y: 1.0).coeffs
    x = solve(M, M @ xstar)
    assert np.abs(x - xstar).max() < 1e-8


def test_solve_nonsymmetric_manufactured(rng):
    """Upwind-augmented system on a 2-element mesh with a known solution."""
    m = classify_boundary(build_rect_mesh((0, 1), (0, 1), 1, 1), (0.0, 1.0))
    sp = DgSpace(m, 1)
    A = (forms.assemble_mass(sp, 1.0)
         + 0.1 * forms.assemble_sip(sp, 1.0, forms.pressure_penalty(1))
         + 0.1 * forms.assemble_upwind(sp, (0.0, 1.0)))
    xstar = rng.standard_normal(sp.num_dofs)
    x = solve(A, A @ xstar)
    assert np.linalg.norm(x - xstar) <= 1e-10 * np.linalg.norm(xstar)


def test_solve_singular_raises():
    A = sparse.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(SolverError):
        solve(A, np.array([1.0, 0.0]))


def test_solve_iterative_contract(rng):
    n = 60
    A = sparse.diags([2.0 + np.arange(n)], [0], format="csr") \
        + sparse.random(n, n, density=0.05, random_state=1, format="csr") * 0.1
    b = rng.standard_normal(n)
    spec = SolverSpec(method="iterative", rtol=1e-9, max_iter=500)
    x = solve(A, b, spec)
    assert residual_norm(A, x, b) <= 1e-9 * np.linalg.norm(b) * 1.01


def test_solver_spec_validation():
    with pytest.raises(ConfigurationError):
        SolverSpec(method="magic")
    with pytest.raises(ConfigurationError):
        SolverSpec(rtol=1e-3)   # looser than the 1e-6 cap
    with pytest.raises(ConfigurationError):
        SolverSpec(rtol=0.0)


def test_cached_lu_tracks_drifting_operator(rng):
    """The cache must keep meeting the contract as the matrix drifts."""
    n = 50
    base = sparse.diags([np.linspace(1, 2, n)], [0], format="csr") \
        + sparse.random(n, n, density=0.1, random_state=2, format="csr") * 0.05
    lu = CachedLU(rtol=1e-12)
    for k in range(25):
        A = (base + sparse.diags([np.full(n, 0.02 * k)], [0])).tocsr()
        b = rng.standard_normal(n)
        x = lu.solve(A, b)
        assert residual_norm(A, x, b) <= 1e-12 * np.linalg.norm(b) \
            + 1e-10 * np.abs(A.data).max() * np.linalg.norm(x)
    # drifted far enough that at least one refactorization must have happened
    assert lu.num_factorizations >= 2
    assert lu.num_solves == 25


def test_cached_lu_zero_rhs():
    A = sparse.identity(5, format="csr")
    assert np.all(CachedLU().solve(A, np.zeros(5)) == 0.0)


def test_matrix_market_dump(tmp_path):
    A = csr_from_triplets((3, 3), [0, 1, 2], [0, 1, 2], [1.0, 2.0, 3.0])
    path = tmp_path / "a.mtx"
    write_matrix_market(path, A)
    assert "MatrixMarket" in path.read_text().splitlines()[0]


def test_sip_pattern_structurally_symmetric(space):
    A = forms.assemble_sip(space, 1.0, forms.pressure_penalty(space.degree))
    At = A.T.tocsr()
    At.sort_indices()
    assert np.array_equal(A.indptr, At.indptr)
    assert np.array_equal(A.indices, At.indices)
