"""Newmark time stepping for the damped nonlinear wave subproblem.

The second-order-in-time system is advanced with the (0.25, 0.5)
predictor-corrector scheme; the quadratic nonlinearity is handled by a
fixed-point iteration that re-assembles the variable mass operator and
lags the quadratic velocity term each sweep.
"""

import time
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ModelError, SolverError
from .linalg import CachedLU, SolverSpec
from .space import DgSpace, FieldVector
from . import forms
from .mms import ErrorNorms, TimeAccumulator


@dataclass(frozen=True)
class AcousticParams:
    """Wave-model constants.

    The error theory assumes c, beta, alpha strictly positive; beta = 0 or
    alpha = 0 are admitted for the conservative/undamped diagnostic runs.
    """

    c: float
    beta: float
    kappa: float
    alpha: float

    def __post_init__(self):
        if self.c <= 0:
            raise ConfigurationError("sound speed must be positive")
        if self.beta < 0 or self.alpha < 0:
            raise ConfigurationError("damping parameters must be >= 0")
        if not np.isfinite(self.kappa):
            raise ConfigurationError("nonlinearity coefficient must be finite")


@dataclass(frozen=True)
class NewmarkSpec:
    beta: float = 0.25
    gamma: float = 0.5
    fp_tol: float = 1e-10
    fp_max_iter: int = 50

    def __post_init__(self):
        if not 0.0 < self.beta <= 0.5:
            raise ConfigurationError("Newmark beta must lie in (0, 0.5]")
        if not 0.5 <= self.gamma <= 1.0:
            raise ConfigurationError("Newmark gamma must lie in [0.5, 1]")
        if self.fp_tol <= 0 or self.fp_max_iter < 1:
            raise ConfigurationError("invalid fixed-point controls")


@dataclass
class AcousticState:
    t: float
    p: FieldVector
    pd: FieldVector    # time derivative of p
    pdd: FieldVector   # second time derivative


@dataclass
class StepDiagnostics:
    t: float
    fp_iters: int
    max_kappa_p: float
    energy: float
    errors: dict | None = None


class AcousticStepper:
    """Owns the assembled operators of one wave run and advances its state.

    ``f_p(x, y, t)`` and ``g_abs(x, y, nx, ny, t)`` may be None for
    source-free runs.
    """

    def __init__(self, space: DgSpace, params: AcousticParams,
                 newmark: NewmarkSpec = NewmarkSpec(),
                 penalty: forms.PenaltySpec | None = None,
                 f_p=None, g_abs=None,
                 solver: SolverSpec = SolverSpec()):
        self.space = space
        self.params = params
        self.newmark = newmark
        self.penalty = penalty or forms.pressure_penalty(space.degree)
        self.f_p = f_p
        self.g_abs = g_abs
        self.solver = solver

        self._mass = forms.MassAssembler(space)
        self.M = forms.assemble_mass(space, 1.0)
        self.A = forms.assemble_sip(space, 1.0, self.penalty)
        bnd = np.nonzero(space.mesh.boundary_mask)[0]
        self.B = forms.assemble_boundary_mass(space, bnd)
        self._bnd_faces = bnd
        self._lu = CachedLU(rtol=solver.rtol)
        self._lhs = forms.form_context(space).empty_matrix()
        self._mass_data = np.zeros_like(self._lhs.data)
        self._kp_tables = space.volume_tables(forms.form_context(space).quad_volume)
        self.timings = {"assembly": 0.0, "solve": 0.0}

    # -- sources --------------------------------------------------------------

    def load(self, t: float) -> np.ndarray:
        out = np.zeros(self.space.num_dofs)
        if self.f_p is not None:
            out += forms.assemble_load(self.space, self.f_p, t)
        if self.g_abs is not None:
            out += forms.assemble_boundary_normal_load(
                self.space, self.g_abs, self._bnd_faces, t)
        return out

    # -- diagnostics ----------------------------------------------------------

    def max_kappa_p(self, p: FieldVector) -> float:
        """max |kappa p^h| over quadrature points and lattice nodes."""
        kappa = abs(self.params.kappa)
        if kappa == 0.0:
            return 0.0
        vals = np.abs(p.volume_values(self._kp_tables)).max()
        return kappa * max(vals, np.abs(p.coeffs).max())

    def _check_non_degeneracy(self, p: FieldVector, t: float) -> float:
        mkp = self.max_kappa_p(p)
        if mkp >= 1.0:
            raise ModelError(
                f"non-degeneracy violated at t = {t:.6g}: "
                f"max |kappa p^h| = {mkp:.6f} >= 1")
        return mkp

    def energy(self, state: AcousticState) -> float:
        """Discrete energy 0.5 pd' M pd + 0.5 c^2 p' A p."""
        pd, p = state.pd.coeffs, state.p.coeffs
        return 0.5 * float(pd @ (self.M @ pd)
                           + self.params.c ** 2 * (p @ (self.A @ p)))

    # -- stepping -------------------------------------------------------------

    def init_state(self, p0: FieldVector, p1: FieldVector,
                   t: float = 0.0) -> AcousticState:
        """Initial triple: solve the semi-discrete equation for pdd(0)."""
        self._check_non_degeneracy(p0, t)
        par = self.params
        rhs = self.load(t)
        rhs -= par.c ** 2 * (self.A @ p0.coeffs)
        rhs -= par.beta * (self.A @ p1.coeffs) + par.alpha * (self.B @ p1.coeffs)
        if par.kappa != 0.0:
            rhs -= par.kappa * forms.assemble_westervelt_quadratic(
                self.space, p1)
        self._mass.update(forms.FieldCoefficient(1.0, par.kappa, p0),
                          out=self._lhs.data)
        lu = CachedLU(rtol=self.solver.rtol)
        pdd = lu.solve(self._lhs, rhs)
        return AcousticState(t=t, p=p0.copy(), pd=p1.copy(),
                             pdd=FieldVector(self.space, pdd))

    def step(self, state: AcousticState, dt: float):
        """One Newmark step; returns (new_state, StepDiagnostics)."""
        if dt <= 0:
            raise ConfigurationError("time step must be positive")
        par, nm = self.params, self.newmark
        sp = self.space
        t1 = state.t + dt

        p_star = (state.p.coeffs + dt * state.pd.coeffs
                  + 0.5 * dt * dt * (1.0 - 2.0 * nm.beta) * state.pdd.coeffs)
        pd_star = state.pd.coeffs + dt * (1.0 - nm.gamma) * state.pdd.coeffs

        tic = time.perf_counter()
        rhs_fixed = self.load(t1)
        rhs_fixed -= par.c ** 2 * (self.A @ p_star)
        rhs_fixed -= par.beta * (self.A @ pd_star) + par.alpha * (self.B @ pd_star)
        const_data = (nm.gamma * dt * (par.beta * self.A.data
                                       + par.alpha * self.B.data)
                      + nm.beta * dt * dt * par.c ** 2 * self.A.data)
        self.timings["assembly"] += time.perf_counter() - tic

        a = state.pdd.coeffs.copy()
        n_solves = 0
        converged = False
        while n_solves < self.newmark.fp_max_iter:
            tic = time.perf_counter()
            p_k = FieldVector(sp, p_star + nm.beta * dt * dt * a)
            pd_k = FieldVector(sp, pd_star + nm.gamma * dt * a)
            self._mass.update(forms.FieldCoefficient(1.0, par.kappa, p_k),
                              out=self._mass_data)
            self._lhs.data[:] = self._mass_data + const_data
            rhs = rhs_fixed
            if par.kappa != 0.0:
                rhs = rhs_fixed - par.kappa * forms.assemble_westervelt_quadratic(
                    sp, pd_k)
            self.timings["assembly"] += time.perf_counter() - tic
            tic = time.perf_counter()
            a_new = self._lu.solve(self._lhs, rhs)
            self.timings["solve"] += time.perf_counter() - tic
            n_solves += 1
            if n_solves >= 2:
                diff = float(np.linalg.norm(a_new - a))
                if diff <= nm.fp_tol * max(1.0, float(np.linalg.norm(a_new))):
                    a = a_new
                    converged = True
                    break
            a = a_new
        if not converged:
            raise SolverError(
                f"Newmark fixed-point iteration did not converge within "
                f"{self.newmark.fp_max_iter} sweeps at t = {t1:.6g}")

        p1 = FieldVector(sp, p_star + nm.beta * dt * dt * a)
        pd1 = FieldVector(sp, pd_star + nm.gamma * dt * a)
        mkp = self._check_non_degeneracy(p1, t1)
        new_state = AcousticState(t=t1, p=p1, pd=pd1, pdd=FieldVector(sp, a))
        diag = StepDiagnostics(t=t1, fp_iters=n_solves - 1, max_kappa_p=mkp,
                               energy=self.energy(new_state))
        return new_state, diag


class TripleNormTracker:
    """Instantaneous error components and the time-integrated pieces of
    the energy-norm error bound (trapezoidal accumulation)."""

    def __init__(self, space: DgSpace, exact, params: AcousticParams):
        self.exact = exact
        self.params = params
        self.norms = ErrorNorms(space)
        self.int_dg_pt = TimeAccumulator(rule="trapezoid")
        self.int_bnd_pt = TimeAccumulator(rule="trapezoid")

    def update(self, state: AcousticState) -> dict:
        ex = self.exact
        e_p = self.norms.evaluate(state.p, ex.p, ex.grad_p, state.t)
        e_pt = self.norms.evaluate(state.pd, ex.p_t, ex.grad_p_t, state.t)
        self.int_dg_pt.add(state.t, e_pt["dg"] ** 2)
        self.int_bnd_pt.add(state.t, e_pt["boundary"] ** 2)
        c2, beta = self.params.c ** 2, self.params.beta
        triple = np.sqrt(e_pt["l2"] ** 2 + c2 * e_p["dg"] ** 2
                         + e_p["boundary"] ** 2
                         + beta * self.int_dg_pt.integral
                         + self.int_bnd_pt.integral)
        return {"l2_pt": e_pt["l2"], "dg_p": e_p["dg"],
                "boundary_p": e_p["boundary"], "triple": triple}
