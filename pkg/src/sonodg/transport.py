"""Backward Euler stepping for the convected drug concentration and the
sequential wave-transport coupling.

Each step rebuilds the diffusion operator from the freshly computed
pressure, recomputes the jump penalty from the current diffusivity range,
and solves the implicit system against the accuracy contract.
"""

import time
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ModelError
from .linalg import CachedLU, SolverSpec
from .mesh import classify_boundary
from .space import DgSpace, FieldVector
from . import forms


@dataclass(frozen=True)
class TransportParams:
    d0: float
    d1: float = 0.0
    abs_pressure: bool = False   # D = d0 (1 + d1 |p|) instead of d0 (1 + d1 p)
    v: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.d0 <= 0:
            raise ConfigurationError("baseline diffusivity must be positive")
        if len(self.v) != 2 or not np.all(np.isfinite(self.v)):
            raise ConfigurationError("velocity must be a finite 2-vector")


@dataclass
class TransportState:
    t: float
    u: FieldVector


@dataclass
class TransportDiagnostics:
    t: float
    u_min: float
    u_max: float
    mass: float
    d_range: tuple


def bounds_monitor(u: FieldVector) -> tuple:
    """Extrema of u^h over lattice nodes and volume quadrature points."""
    ctx = forms.form_context(u.space)
    vt = u.space.volume_tables(ctx.quad_volume)
    vals = u.volume_values(vt)
    return (float(min(vals.min(), u.coeffs.min())),
            float(max(vals.max(), u.coeffs.max())))


class TransportStepper:
    """Owns the fixed operators of one concentration run.

    ``f_u(x, y, t)`` and ``g_in(x, y, nx, ny, t)`` may be None when zero.
    A fixed ``penalty`` overrides the per-step recomputation from the
    diffusivity range.
    """

    def __init__(self, space: DgSpace, params: TransportParams,
                 f_u=None, g_in=None,
                 penalty: forms.PenaltySpec | None = None,
                 solver: SolverSpec = SolverSpec()):
        self.space = space
        self.params = params
        self.f_u = f_u
        self.g_in = g_in
        self.fixed_penalty = penalty
        self.solver = solver

        mesh = space.mesh
        if mesh.inflow_mask is None or mesh.velocity is None or \
                not np.array_equal(mesh.velocity, np.asarray(params.v, float)):
            classify_boundary(mesh, params.v)
        self._inflow = np.nonzero(mesh.inflow_mask)[0]

        self.M = forms.assemble_mass(space, 1.0)
        self.B_upw = forms.assemble_upwind(space, params.v)
        self._sip = forms.SipAssembler(space)
        self._lhs = forms.form_context(space).empty_matrix()
        self._ad_data = np.zeros_like(self._lhs.data)
        self._lu = CachedLU(rtol=solver.rtol)
        self.timings = {"assembly": 0.0, "solve": 0.0}

    def init_state(self, u0: FieldVector, t: float = 0.0) -> TransportState:
        return TransportState(t=t, u=u0.copy())

    def diffusivity(self, pressure: FieldVector | None):
        par = self.params
        if pressure is None or par.d1 == 0.0:
            return forms.ConstantCoefficient(par.d0)
        return forms.pressure_diffusivity(par.d0, par.d1, pressure,
                                          absolute=par.abs_pressure)

    def step(self, state: TransportState, pressure: FieldVector | None,
             dt: float):
        """Backward Euler step using the same-time-level pressure."""
        if dt <= 0:
            raise ConfigurationError("time step must be positive")
        t1 = state.t + dt
        par = self.params

        tic = time.perf_counter()
        coeff = self.diffusivity(pressure)
        penalty = self.fixed_penalty
        if penalty is None:
            ctx = forms.form_context(self.space)
            vt = self.space.volume_tables(ctx.quad_volume)
            dvals = coeff.volume_values(self.space, vt)
            dmin, dmax = float(dvals.min()), float(dvals.max())
            if dmin <= 0.0:
                k = int(np.argmin(dvals))
                e, q = divmod(k, dvals.shape[1])
                xy = vt.points[e, q]
                raise ModelError(
                    f"diffusivity {dmin:.3e} <= 0 at quadrature point "
                    f"({xy[0]:.6g}, {xy[1]:.6g}) of element {e} at t = {t1:.6g}")
            penalty = forms.diffusion_penalty(self.space, dmin, dmax)
        self._sip.assemble(coeff, penalty, out=self._ad_data)
        self._lhs.data[:] = self.M.data + dt * (self._ad_data + self.B_upw.data)

        rhs = self.M @ state.u.coeffs
        if self.f_u is not None:
            rhs += dt * forms.assemble_load(self.space, self.f_u, t1)
        if self.g_in is not None and self._inflow.size:
            g_term = forms.assemble_boundary_normal_load(
                self.space, self.g_in, self._inflow, t1, weight=par.v)
            rhs -= dt * g_term
        self.timings["assembly"] += time.perf_counter() - tic

        tic = time.perf_counter()
        u1 = FieldVector(self.space, self._lu.solve(self._lhs, rhs))
        self.timings["solve"] += time.perf_counter() - tic

        umin, umax = bounds_monitor(u1)
        ctxq = forms.form_context(self.space)
        vt = self.space.volume_tables(ctxq.quad_volume)
        dvals = coeff.volume_values(self.space, vt)
        diag = TransportDiagnostics(
            t=t1, u_min=umin, u_max=umax,
            mass=float(np.sum(vt.wdet * u1.volume_values(vt))),
            d_range=(float(dvals.min()), float(dvals.max())))
        return TransportState(t=t1, u=u1), diag


def coupled_step(acoustic_stepper, transport_stepper,
                 astate, tstate, dt: float):
    """Advance the wave first, then the concentration with the new pressure."""
    if abs(astate.t - tstate.t) > 1e-12 * max(1.0, abs(astate.t)):
        raise ConfigurationError("coupled states must share the time level")
    astate1, adiag = acoustic_stepper.step(astate, dt)
    tstate1, tdiag = transport_stepper.step(tstate, astate1.p, dt)
    return astate1, tstate1, adiag, tdiag
