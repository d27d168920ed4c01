import numpy as np
import pytest

from sonodg.acoustics import AcousticParams
from sonodg.errors import ConfigurationError, InternalError, ModelError
from sonodg.mesh import build_rect_mesh
from sonodg.space import DgSpace, FieldVector, interpolate
from sonodg.transport import TransportParams
from sonodg import forms, mms


ACOUSTIC = AcousticParams(c=1.0, beta=0.1, kappa=0.1, alpha=1.0)
TRANSPORT = TransportParams(d0=1.0, d1=1.0, v=(0.0, 1.0))


# -- symbolic oracle (built independently of the closures under test) -----------

def _symbolic_oracle():
    import sympy as sym
    x, y, t, nx, ny = sym.symbols("x y t nx ny")
    p = sym.cos(t) * sym.sin(sym.pi * x) * sym.sin(sym.pi * y / 2)
    u = sym.exp(-t) * sym.cos(sym.pi * y)
    c, beta, kappa, alpha = ACOUSTIC.c, ACOUSTIC.beta, ACOUSTIC.kappa, \
        ACOUSTIC.alpha
    d0, d1 = TRANSPORT.d0, TRANSPORT.d1
    vx, vy = TRANSPORT.v

    lap = lambda f: sym.diff(f, x, 2) + sym.diff(f, y, 2)
    D = d0 * (1 + d1 * p)
    f_p = sym.diff((1 + kappa * p) * sym.diff(p, t), t) \
        - c ** 2 * lap(p) - beta * lap(sym.diff(p, t))
    g_abs = alpha * sym.diff(p, t) \
        + c ** 2 * (sym.diff(p, x) * nx + sym.diff(p, y) * ny) \
        + beta * (sym.diff(sym.diff(p, t), x) * nx
                  + sym.diff(sym.diff(p, t), y) * ny)
    f_u = sym.diff(u, t) + vx * sym.diff(u, x) + vy * sym.diff(u, y) \
        - sym.diff(D * sym.diff(u, x), x) - sym.diff(D * sym.diff(u, y), y)
    g_in = u - D * (sym.diff(u, x) * nx + sym.diff(u, y) * ny) \
        / (vx * nx + vy * ny)
    lam = sym.lambdify
    return {
        "f_p": lam((x, y, t), f_p, "numpy"),
        "g_abs": lam((x, y, nx, ny, t), g_abs, "numpy"),
        "f_u": lam((x, y, t), f_u, "numpy"),
        "g_in": lam((x, y, nx, ny, t), g_in, "numpy"),
    }


@pytest.fixture(scope="module")
def oracle():
    return _symbolic_oracle()


@pytest.fixture(scope="module")
def exact():
    return mms.academic_solution()


def test_forcing_pressure_matches_oracle(oracle, exact, rng=None):
    rng = np.random.default_rng(7)
    x = rng.uniform(0, 1, 1000)
    y = rng.uniform(0, 2, 1000)
    t = rng.uniform(0, 1, 1000)
    ours = mms.forcing_pressure(exact, ACOUSTIC)(x, y, t)
    ref = oracle["f_p"](x, y, t)
    assert np.abs(ours - ref).max() <= 1e-10 * (1 + np.abs(ref).max())


def test_boundary_forcing_matches_oracle(oracle, exact):
    rng = np.random.default_rng(8)
    x = rng.uniform(0, 1, 1000)
    y = rng.uniform(0, 2, 1000)
    t = rng.uniform(0, 1, 1000)
    theta = rng.uniform(0, 2 * np.pi, 1000)
    nx, ny = np.cos(theta), np.sin(theta)
    ours = mms.boundary_forcing_pressure(exact, ACOUSTIC)(x, y, nx, ny, t)
    ref = oracle["g_abs"](x, y, nx, ny, t)
    assert np.abs(ours - ref).max() <= 1e-10 * (1 + np.abs(ref).max())


def test_forcing_concentration_matches_oracle(oracle, exact):
    rng = np.random.default_rng(9)
    x = rng.uniform(0, 1, 1000)
    y = rng.uniform(0, 2, 1000)
    t = rng.uniform(0, 1, 1000)
    ours = mms.forcing_concentration(exact, TRANSPORT)(x, y, t)
    ref = oracle["f_u"](x, y, t)
    assert np.abs(ours - ref).max() <= 1e-10 * (1 + np.abs(ref).max())


def test_inflow_data_matches_oracle(oracle, exact):
    rng = np.random.default_rng(10)
    x = rng.uniform(0, 1, 1000)
    y = np.zeros(1000)
    t = rng.uniform(0, 1, 1000)
    nx, ny = np.zeros(1000), -np.ones(1000)
    ours = mms.inflow_data(exact, TRANSPORT)(x, y, nx, ny, t)
    ref = oracle["g_in"](x, y, nx, ny, t)
    assert np.abs(ours - ref).max() <= 1e-10 * (1 + np.abs(ref).max())


# -- spot values ------------------------------------------------------------------

def test_forcing_pressure_spot_value(exact):
    """(x, y, t) = (0.5, 1, 0): p=1, p_t=0, p_tt=-1, lap p=-5 pi^2/4."""
    got = mms.forcing_pressure(exact, ACOUSTIC)(
        np.array(0.5), np.array(1.0), 0.0)
    assert got == pytest.approx(-1.1 + 1.25 * np.pi ** 2, rel=1e-12)


def test_forcing_zero_solution():
    zero = lambda x, y, t: np.zeros_like(np.asarray(x, float))
    zgrad = lambda x, y, t: (np.zeros_like(np.asarray(x, float)),) * 2
    ex = mms.ExactSolution(p=zero, p_t=zero, p_tt=zero, grad_p=zgrad,
                           grad_p_t=zgrad, lap_p=zero, lap_p_t=zero,
                           u=zero, u_t=zero, grad_u=zgrad, lap_u=zero)
    x = np.linspace(0, 1, 5)
    assert np.all(mms.forcing_pressure(ex, ACOUSTIC)(x, x, 0.3) == 0)
    assert np.all(mms.forcing_concentration(ex, TRANSPORT)(x, x, 0.3) == 0)


def test_boundary_forcing_right_side_profile(exact):
    """On x=1, t=0 the c^2 grad p . n part is -pi sin(pi y / 2)."""
    y = np.linspace(0, 2, 7)
    got = mms.boundary_forcing_pressure(exact, ACOUSTIC)(
        np.ones_like(y), y, np.ones_like(y), np.zeros_like(y), 0.0)
    # p_t = 0 and grad p_t . n ~ sin(t) = 0 at t=0; only the c^2 term remains
    assert np.allclose(got, -np.pi * np.sin(0.5 * np.pi * y), atol=1e-12)


def test_inconsistent_closures_rejected():
    zero = lambda x, y, t: np.zeros_like(np.asarray(x, float))
    zgrad = lambda x, y, t: (np.zeros_like(np.asarray(x, float)),) * 2
    wrong = lambda x, y, t: np.cos(t) + 0.0 * np.asarray(x, float)
    with pytest.raises(InternalError):
        mms.ExactSolution(p=wrong, p_t=zero, p_tt=zero, grad_p=zgrad,
                          grad_p_t=zgrad, lap_p=zero, lap_p_t=zero,
                          u=zero, u_t=zero, grad_u=zgrad, lap_u=zero)


def test_forcing_concentration_rejects_abs_variant(exact):
    par = TransportParams(d0=1.0, d1=1.0, abs_pressure=True, v=(0.0, 1.0))
    with pytest.raises(ConfigurationError):
        mms.forcing_concentration(exact, par)


# -- error norms -------------------------------------------------------------------

def test_error_norms_exact_reproduction(space, exact):
    q = space.degree
    f = lambda x, y, t: (x + 0.5 * y) ** q
    fld = interpolate(space, lambda x, y: f(x, y, 0.0))
    en = mms.ErrorNorms(space)
    r = en.evaluate(fld, f, None, 0.0)
    assert r["l2"] <= 1e-10
    assert r["boundary"] <= 1e-10


def test_error_norms_constant_error():
    sp = DgSpace(build_rect_mesh((0, 1), (0, 1), 3, 3), 1)
    en = mms.ErrorNorms(sp)
    r = en.evaluate(FieldVector(sp), lambda x, y, t: np.ones_like(x), None, 0.0)
    assert r["l2"] == pytest.approx(1.0, rel=1e-12)
    assert r["dg"] == pytest.approx(0.0, abs=1e-12)
    assert r["boundary"] == pytest.approx(2.0, rel=1e-12)  # perimeter 4, sqrt


def test_error_norms_use_field_jumps_only(space, rng):
    fld = FieldVector(space, rng.standard_normal(space.num_dofs))
    en = mms.ErrorNorms(space)
    r = en.evaluate(fld, None, None, 0.0)
    assert r["dg"] == pytest.approx(forms.dg_seminorm(space, fld), rel=1e-12)


def test_error_norms_degree_guard(space):
    with pytest.raises(ConfigurationError):
        mms.ErrorNorms(space, degree=2)


def test_interpolation_eoc_rates(exact):
    """Interpolation error alone: rate q in dG seminorm, q+1 in L2."""
    for q in (1, 2):
        l2s, dgs, hs = [], [], []
        for n in (4, 8, 16):
            sp = DgSpace(build_rect_mesh((0, 1), (0, 2), n, 2 * n), q)
            fld = interpolate(sp, lambda x, y: exact.p(x, y, 0.0))
            r = mms.ErrorNorms(sp).evaluate(fld, exact.p, exact.grad_p, 0.0)
            l2s.append(r["l2"])
            dgs.append(r["dg"])
            hs.append(sp.mesh.mesh_size)
        t_dg = mms.eoc(dgs, hs)
        t_l2 = mms.eoc(l2s, hs)
        assert t_dg.rates[-1] == pytest.approx(q, abs=0.15)
        assert t_l2.rates[-1] == pytest.approx(q + 1, abs=0.15)


# -- EOC / time accumulation ---------------------------------------------------------

def test_eoc_paper_values():
    t = mms.eoc([0.1418881628307, 0.0903614996228256],
                [0.176776695296637, 0.117851130197758])
    assert t.rates[1] == pytest.approx(1.1128, abs=5e-5)
    t = mms.eoc([0.00156151287306523, 0.000459907458408615],
                [0.176776695296637, 0.117851130197758])
    assert t.rates[1] == pytest.approx(3.0148, abs=5e-5)
    t = mms.eoc([0.0513718519737647, 0.040749134457278],
                [0.0883883476483184, 0.0707106781186548])
    assert t.rates[1] == pytest.approx(1.0381, abs=5e-5)


def test_eoc_exact_halving():
    t = mms.eoc([0.4, 0.2, 0.1], [0.8, 0.4, 0.2])
    assert np.allclose(t.rates[1:], 1.0)


def test_eoc_validation():
    with pytest.raises(ConfigurationError):
        mms.eoc([0.1], [0.5])
    with pytest.raises(ConfigurationError):
        mms.eoc([0.1, 0.2], [0.5, 0.6])   # h not decreasing
    with pytest.raises(ConfigurationError):
        mms.eoc([0.1, -0.2], [0.5, 0.25])


def test_time_accumulator_rules():
    left = mms.TimeAccumulator(rule="left")
    trap = mms.TimeAccumulator(rule="trapezoid")
    for t, v in ((0.0, 1.0), (0.5, 2.0), (1.0, 4.0)):
        left.add(t, v)
        trap.add(t, v)
    assert left.integral == pytest.approx(0.5 * 1 + 0.5 * 2)
    assert trap.integral == pytest.approx(0.25 * (1 + 2) + 0.25 * (2 + 4))
    assert left.max == 4.0
    with pytest.raises(ConfigurationError):
        mms.TimeAccumulator(rule="simpson")


# -- relative change -------------------------------------------------------------------

def test_relative_change_identical_runs():
    s = np.array([0.0, 1.0, 2.0, 3.0])
    d = mms.relative_change_top(s, s, s + 1.0)
    assert np.all(d == 0)


def test_relative_change_zero_at_start():
    top_e = np.array([0.0, 0.5, 1.0])
    top_r = np.array([0.0, 0.4, 0.8])
    out_r = np.array([0.0, 1.0, 2.0])
    d = mms.relative_change_top(top_e, top_r, out_r)
    assert d[0] == 0.0
    assert d[-1] == pytest.approx(0.1)


def test_relative_change_zero_denominator():
    z = np.zeros(3)
    with pytest.raises(ModelError):
        mms.relative_change_top(z, z, z)


def test_boundary_integral():
    sp = DgSpace(build_rect_mesh((0, 1), (0, 2), 4, 8), 1)
    fld = interpolate(sp, lambda x, y: y)
    top = sp.mesh.boundary_faces("top")
    assert mms.boundary_integral(fld, top) == pytest.approx(2.0, rel=1e-12)
