import numpy as np
import pytest

from sonodg.errors import ConfigurationError, ModelError
from sonodg.mesh import build_rect_mesh, classify_boundary
from sonodg.space import DgSpace, FieldVector, interpolate
from sonodg import forms


def ones(space):
    return interpolate(space, lambda x, y: 1.0).coeffs


# -- mass -----------------------------------------------------------------------

def test_mass_unit_coefficient(space):
    M = forms.assemble_mass(space, 1.0)
    one = ones(space)
    assert one @ (M @ one) == pytest.approx(space.mesh.domain_area(), rel=1e-12)


def test_mass_zero_kappa_matches_plain(space):
    p = FieldVector(space)     # p = 0
    M0 = forms.assemble_mass(space, 1.0)
    Mk = forms.assemble_mass(space, forms.FieldCoefficient(1.0, 0.7, p))
    assert np.array_equal(M0.data, Mk.data)


def test_mass_linear_coefficient():
    sp = DgSpace(build_rect_mesh((0, 1), (0, 1), 4, 4), 2)
    M = forms.assemble_mass(sp, lambda x, y: x)
    one = ones(sp)
    assert one @ (M @ one) == pytest.approx(0.5, rel=1e-12)


def test_mass_nonfinite_coefficient(space):
    with pytest.raises(ModelError):
        forms.assemble_mass(space, lambda x, y: np.full_like(x, np.nan))


# -- SIP -------------------------------------------------------------------------

def test_sip_annihilates_constants(space):
    A = forms.assemble_sip(space, 1.0, forms.pressure_penalty(space.degree))
    assert np.abs(A @ ones(space)).max() < 1e-12 * np.abs(A.data).max()


def test_sip_linear_field_energy(space):
    A = forms.assemble_sip(space, 1.0, forms.pressure_penalty(space.degree))
    lx = interpolate(space, lambda x, y: x).coeffs
    assert lx @ (A @ lx) == pytest.approx(space.mesh.domain_area(), rel=1e-10)


def test_sip_symmetry(space):
    A = forms.assemble_sip(space, 1.0, forms.pressure_penalty(space.degree))
    assert abs(A - A.T).max() <= 1e-12 * abs(A).max()


def test_sip_positive_semidefinite_with_constant_kernel(rng):
    m = build_rect_mesh((0, 1), (0, 1), 1, 1)
    sp = DgSpace(m, 1)
    pen = forms.PenaltySpec(1.0, 2.0 * forms.coercivity_threshold(sp, 1.0, 1.0))
    A = forms.assemble_sip(sp, 1.0, pen).toarray()
    w = np.linalg.eigvalsh(0.5 * (A + A.T))
    assert w[0] > -1e-12
    assert np.sum(np.abs(w) < 1e-10) == 1   # constants only


def test_sip_coercivity_random_fields(space, rng):
    pen = forms.PenaltySpec(
        1.0, 2.0 * forms.coercivity_threshold(space, 1.0, 1.0))
    A = forms.assemble_sip(space, 1.0, pen)
    worst = np.inf
    for _ in range(100):
        phi = FieldVector(space, rng.standard_normal(space.num_dofs))
        dg = forms.dg_seminorm(space, phi)
        worst = min(worst, phi.coeffs @ (A @ phi.coeffs) / dg ** 2)
    assert worst >= 0.1


def test_sip_consistency_rate():
    """Residual of the SIP operator against a smooth field with vanishing
    normal flux drops at least at rate q in the dG-dual norm."""
    from sonodg.linalg import solve
    f = lambda x, y: np.cos(np.pi * x) * np.cos(0.5 * np.pi * y)
    lap = lambda x, y: -1.25 * np.pi ** 2 * f(x, y)
    resid = []
    hs = []
    for n in (4, 8, 16):
        mesh = build_rect_mesh((0, 1), (0, 2), n, 2 * n)
        sp = DgSpace(mesh, 1)
        A = forms.assemble_sip(sp, 1.0, forms.pressure_penalty(1))
        F = forms.assemble_load(sp, lambda x, y, t: -lap(x, y), 0.0)
        r = A @ interpolate(sp, f).coeffs - F
        # dual norm over the full dG norm (seminorm Gram + mass fixes the
        # constant kernel): sup_w r.w / ||w||_dG
        K = (forms.dg_seminorm_gram(sp) + forms.assemble_mass(sp, 1.0)).tocsr()
        resid.append(np.sqrt(r @ solve(K, r)))
        hs.append(mesh.mesh_size)
    rate = np.log(resid[0] / resid[-1]) / np.log(hs[0] / hs[-1])
    assert rate >= 0.9


def test_sip_variable_coefficient_positivity_guard(space):
    p = interpolate(space, lambda x, y: x)
    bad = forms.FieldCoefficient(0.1, -1.0, p)   # negative for x > 0.1
    with pytest.raises(ModelError):
        forms.assemble_sip(space, bad, forms.pressure_penalty(space.degree))


def test_sip_boundedness_constant_stable():
    """Extremal constant of |a' A b| <= C |a|_dG |b|_dG via the generalized
    eigenproblem, stable across refinements."""
    from scipy.linalg import eigh
    consts = []
    for n in (2, 4, 8):
        sp = DgSpace(build_rect_mesh((0, 1), (0, 2), n, 2 * n), 1)
        A = forms.assemble_sip(sp, 1.0, forms.pressure_penalty(1)).toarray()
        K = forms.dg_seminorm_gram(sp).toarray()
        K += 1e-10 * np.trace(K) / len(K) * np.eye(len(K))
        w = eigh(0.5 * (A + A.T), K, eigvals_only=True)
        consts.append(max(abs(w[0]), abs(w[-1])))
    assert max(consts) <= 1.25 * min(consts)


# -- boundary mass ----------------------------------------------------------------

def test_boundary_mass_empty_subset(space):
    B = forms.assemble_boundary_mass(space, np.array([], dtype=int))
    assert B.nnz == 0 or np.all(B.data == 0)


def test_boundary_mass_perimeter():
    sp = DgSpace(build_rect_mesh((0, 1), (0, 1), 3, 3), 1)
    B = forms.assemble_boundary_mass(sp, np.nonzero(sp.mesh.boundary_mask)[0])
    one = ones(sp)
    assert one @ (B @ one) == pytest.approx(4.0, rel=1e-12)


def test_boundary_mass_single_side(space):
    B = forms.assemble_boundary_mass(space, space.mesh.boundary_faces("bottom"))
    one = ones(space)
    assert one @ (B @ one) == pytest.approx(1.0, rel=1e-12)


def test_boundary_mass_rejects_interior(space):
    interior = np.nonzero(space.mesh.interior_mask)[0][:1]
    with pytest.raises(ConfigurationError):
        forms.assemble_boundary_mass(space, interior)


# -- upwind -----------------------------------------------------------------------

def test_upwind_zero_velocity(space):
    classify_boundary(space.mesh, (0.0, 0.0))
    B = forms.assemble_upwind(space, (0.0, 0.0))
    assert np.abs(B.data).max() == 0.0
    classify_boundary(space.mesh, (0.0, 1.0))


def test_upwind_requires_classification(space):
    with pytest.raises(ConfigurationError):
        forms.assemble_upwind(space, (1.0, 0.0))   # classified for (0, 1)


def test_upwind_identity_random_fields(space, rng):
    for v in ((0.0, 1.0), (1 / np.sqrt(2), 1 / np.sqrt(2)), (0.4, -0.9)):
        classify_boundary(space.mesh, v)
        B = forms.assemble_upwind(space, v)
        for _ in range(100):
            phi = FieldVector(space, rng.standard_normal(space.num_dofs))
            lhs = phi.coeffs @ (B @ phi.coeffs)
            rhs = forms.upwind_energy(space, v, phi)
            assert abs(lhs - rhs) <= 1e-12 * (1.0 + abs(rhs))
    classify_boundary(space.mesh, (0.0, 1.0))


def test_upwind_one_field_value(space):
    classify_boundary(space.mesh, (0.0, 1.0))
    B = forms.assemble_upwind(space, (0.0, 1.0))
    one = ones(space)
    assert one @ (B @ one) == pytest.approx(1.0, rel=1e-12)


# -- loads ------------------------------------------------------------------------

def test_load_zero(space):
    F = forms.assemble_load(space, lambda x, y, t: 0.0, 0.0)
    assert np.all(F == 0)


def test_load_unit(space):
    F = forms.assemble_load(space, lambda x, y, t: 1.0, 1.23)
    assert ones(space) @ F == pytest.approx(space.mesh.domain_area(), rel=1e-12)


def test_boundary_load_inflow_sign(space):
    classify_boundary(space.mesh, (0.0, 1.0))
    G = forms.assemble_boundary_load(
        space, lambda x, y, t: 1.0, space.mesh.boundary_faces("bottom"),
        weight=(0.0, 1.0))
    assert -(ones(space) @ G) == pytest.approx(1.0, rel=1e-12)


def test_westervelt_quadratic(space):
    N = forms.assemble_westervelt_quadratic(space, FieldVector(space))
    assert np.all(N == 0)
    pd = interpolate(space, lambda x, y: 2.0)
    N = forms.assemble_westervelt_quadratic(space, pd)
    assert ones(space) @ N == pytest.approx(4.0 * space.mesh.domain_area(),
                                            rel=1e-12)
    pd = interpolate(space, lambda x, y: x)
    N = forms.assemble_westervelt_quadratic(space, pd)
    assert ones(space) @ N == pytest.approx(2.0 / 3.0, rel=1e-12)


# -- penalty policy ----------------------------------------------------------------

def test_pressure_penalty_values():
    assert forms.pressure_penalty(1).product == pytest.approx(10.0)
    assert forms.pressure_penalty(2).product == pytest.approx(40.0)
    assert forms.pressure_penalty(2).sigma == 1.0


def test_diffusion_penalty_exceeds_threshold(space):
    for dmin, dmax in ((1.0, 2.0), (0.5, 8.0), (5.0, 21.0)):
        pen = forms.diffusion_penalty(space, dmin, dmax)
        assert pen.product > forms.coercivity_threshold(space, dmin, dmax)


def test_diffusion_penalty_requires_positive_dmin(space):
    with pytest.raises(ModelError):
        forms.diffusion_penalty(space, 0.0, 1.0)


def test_penalty_spec_validation():
    with pytest.raises(ConfigurationError):
        forms.PenaltySpec(sigma=-1.0, eta=1.0)
    with pytest.raises(ConfigurationError):
        forms.PenaltySpec(sigma=1.0, eta=0.0)
