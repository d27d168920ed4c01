"""Assembly of the bilinear forms and load vectors.

All matrices produced here share one CSR sparsity pattern per space
(element diagonal blocks plus face-neighbor blocks), so operators can be
combined by pure data-array arithmetic inside the time steppers.  The
inner contractions run through the selected kernel backend.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigurationError, ModelError
from .linalg import SparseMatrix
from .space import DgSpace, FieldVector, _eval_pointwise

DIM = 2  # simplices in the plane; N_partial = d + 1 faces per element


# ---------------------------------------------------------------------------
# Coefficient fields
# ---------------------------------------------------------------------------

class Coefficient:
    """Scalar coefficient evaluable at volume and face quadrature points."""

    def volume_values(self, space, vt):
        raise NotImplementedError

    def face_values(self, space, ft):
        """Side-by-side values, shape (nf, 2, nq); boundary side 1 is unused."""
        raise NotImplementedError


class ConstantCoefficient(Coefficient):
    def __init__(self, value: float):
        self.value = float(value)

    def volume_values(self, space, vt):
        return np.full(vt.wdet.shape, self.value)

    def face_values(self, space, ft):
        nf, nq = ft.weights.shape
        return np.full((nf, 2, nq), self.value)


class FunctionCoefficient(Coefficient):
    def __init__(self, func):
        self.func = func

    def volume_values(self, space, vt):
        return _eval_pointwise(self.func, vt.points[..., 0], vt.points[..., 1])

    def face_values(self, space, ft):
        vals = _eval_pointwise(self.func, ft.points[..., 0], ft.points[..., 1])
        return np.repeat(vals[:, None, :], 2, axis=1)


class FieldCoefficient(Coefficient):
    """offset + scale * field (or |field|), traced per element side on faces.

    Covers the variable Westervelt mass 1 + kappa*p and the
    pressure-dependent diffusivity D0*(1 + D1*p) / D0*(1 + D1*|p|).
    """

    def __init__(self, offset: float, scale: float, field: FieldVector,
                 absolute: bool = False):
        self.offset = float(offset)
        self.scale = float(scale)
        self.field = field
        self.absolute = absolute

    def _apply(self, vals):
        if self.absolute:
            vals = np.abs(vals)
        return self.offset + self.scale * vals

    def volume_values(self, space, vt):
        return self._apply(self.field.volume_values(vt))

    def face_values(self, space, ft):
        return self._apply(self.field.face_values(ft))


def pressure_diffusivity(d0: float, d1: float, pressure: FieldVector,
                         absolute: bool = False) -> FieldCoefficient:
    return FieldCoefficient(d0, d0 * d1, pressure, absolute=absolute)


def as_coefficient(c) -> Coefficient:
    if isinstance(c, Coefficient):
        return c
    if isinstance(c, FieldVector):
        return FieldCoefficient(0.0, 1.0, c)
    if callable(c):
        return FunctionCoefficient(c)
    return ConstantCoefficient(float(c))


# ---------------------------------------------------------------------------
# Penalty policy
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PenaltySpec:
    """Stabilization parameters; the assembled jump weight is sigma*eta/h_F."""

    sigma: float = 1.0
    eta: float = 10.0

    def __post_init__(self):
        if self.sigma < 0 or self.eta <= 0:
            raise ConfigurationError("penalty requires sigma >= 0 and eta > 0")

    @property
    def product(self) -> float:
        return self.sigma * self.eta


def pressure_penalty(degree: int) -> PenaltySpec:
    """Wave-equation form: sigma = 1 and eta = 10 q^2."""
    return PenaltySpec(sigma=1.0, eta=10.0 * degree * degree)


def coercivity_threshold(space: DgSpace, dmin: float, dmax: float) -> float:
    """Measured lower bound on sigma*eta for coercive variable diffusion."""
    ctr = space.trace_constant()
    return ctr * ctr * (DIM + 1) * dmax * dmax / dmin


def diffusion_penalty(space: DgSpace, dmin: float, dmax: float,
                      margin: float = 1.25) -> PenaltySpec:
    """Concentration form: 10 q^2 scaled by D_max^2/D_min, floored above
    the measured coercivity threshold."""
    if dmin <= 0:
        raise ModelError(f"diffusivity lower bound {dmin} is not positive")
    q = space.degree
    base = 10.0 * q * q * dmax * dmax / dmin
    floor = margin * coercivity_threshold(space, dmin, dmax)
    return PenaltySpec(sigma=1.0, eta=max(base, floor))


# ---------------------------------------------------------------------------
# Shared sparsity pattern and scatter positions
# ---------------------------------------------------------------------------

class FormContext:
    """Per-space CSR pattern, quadrature tables and scatter index arrays."""

    def __init__(self, space: DgSpace):
        self.space = space
        q = space.degree
        self.quad_volume = 2 * q + 2
        self.quad_load = 2 * q + 4
        mesh = space.mesh
        nloc = space.dofs_per_element
        ne = mesh.num_elements

        neighbors = [[e] for e in range(ne)]
        interior = np.nonzero(mesh.interior_mask)[0]
        for f in interior:
            a, b = mesh.face_elems[f]
            neighbors[a].append(b)
            neighbors[b].append(a)
        nbr = [np.array(sorted(n), dtype=np.int64) for n in neighbors]

        counts = np.array([len(n) for n in nbr], dtype=np.int64)
        row_width = counts * nloc
        indptr = np.zeros(ne * nloc + 1, dtype=np.int64)
        indptr[1:] = np.repeat(row_width, nloc).cumsum()
        indices = np.concatenate([
            np.tile((n[:, None] * nloc + np.arange(nloc)).ravel(), nloc)
            for n in nbr])
        self.indptr = indptr
        self.indices = indices
        self.nnz = int(indptr[-1])

        elem_row_start = indptr[np.arange(ne) * nloc]

        def block_base(rows, cols):
            """Data position of entry (i=0, j=0) of blocks (rows -> cols)."""
            rank = np.array([np.searchsorted(nbr[r], c)
                             for r, c in zip(rows, cols)], dtype=np.int64)
            return elem_row_start[rows] + rank * nloc

        iloc = np.arange(nloc, dtype=np.int64)
        diag_base = block_base(np.arange(ne), np.arange(ne))
        self.vol_pos = (diag_base[:, None, None]
                        + iloc[None, :, None] * row_width[:, None, None]
                        + iloc[None, None, :])

        self.interior = interior
        fe = mesh.face_elems[interior]
        pos = np.empty((len(interior), 2, 2, nloc, nloc), dtype=np.int64)
        for t in range(2):
            for s in range(2):
                base = block_base(fe[:, t], fe[:, s])
                pos[:, t, s] = (base[:, None, None]
                                + iloc[None, :, None] * row_width[fe[:, t], None, None]
                                + iloc[None, None, :])
        self.face_pos = pos
        self.row_width = row_width
        self._elem_row_start = elem_row_start

    def empty_matrix(self) -> SparseMatrix:
        data = np.zeros(self.nnz)
        n = self.space.num_dofs
        mat = SparseMatrix((data, self.indices, self.indptr), shape=(n, n))
        return mat

    def boundary_pos(self, faces):
        """Diagonal-block positions for single-side boundary face blocks."""
        return self.vol_pos[self.space.mesh.face_elems[faces, 0]]


def form_context(space: DgSpace) -> FormContext:
    ctx = getattr(space, "_form_context", None)
    if ctx is None:
        ctx = FormContext(space)
        space._form_context = ctx
    return ctx


# ---------------------------------------------------------------------------
# Matrix assembly
# ---------------------------------------------------------------------------

def _check_finite(name, vals):
    if not np.all(np.isfinite(vals)):
        raise ModelError(f"{name} evaluated to a non-finite value at a "
                         f"quadrature point")


def assemble_mass(space: DgSpace, c=1.0) -> SparseMatrix:
    """Block-diagonal weighted mass matrix M_ij = int c phi_j phi_i."""
    ctx = form_context(space)
    mat = ctx.empty_matrix()
    MassAssembler(space).update(c, out=mat.data)
    return mat


class MassAssembler:
    """Reusable variable-coefficient mass assembler (hot path of the
    Newmark fixed-point loop)."""

    def __init__(self, space: DgSpace):
        self.space = space
        self.ctx = form_context(space)
        self.vt = space.volume_tables(self.ctx.quad_volume)
        self._flat_pos = self.ctx.vol_pos.ravel()

    def update(self, c, out: np.ndarray) -> np.ndarray:
        """Write the mass data for coefficient c into ``out`` (nnz array)."""
        coeff = as_coefficient(c)
        vals = coeff.volume_values(self.space, self.vt)
        _check_finite("mass coefficient", vals)
        blocks = kernels.mass_blocks(np.ascontiguousarray(vals * self.vt.wdet),
                                     self.vt.phi)
        out[:] = 0.0
        out[self._flat_pos] = blocks.ravel()
        return out


class SipAssembler:
    """Reusable SIP assembler (re-run every transport step for D(p))."""

    def __init__(self, space: DgSpace):
        self.space = space
        self.ctx = form_context(space)
        self.vt = space.volume_tables(self.ctx.quad_volume)
        self.ft = space.face_tables(self.ctx.quad_volume)
        mesh = space.mesh
        ii = self.ctx.interior
        self._normals = mesh.face_normals[ii]
        self._wq = np.ascontiguousarray(self.ft.weights[ii])
        self._hf = mesh.face_lengths[ii]
        svals = self.ft.vals[ii].copy()
        svals[:, 1] *= -1.0
        self._svals = np.ascontiguousarray(svals)
        self._grads_n = np.ascontiguousarray(
            np.einsum("fsqid,fd->fsqi", self.ft.grads[ii], self._normals))
        self._interior = ii

    def assemble(self, D, penalty: PenaltySpec, out=None):
        """Assemble into ``out`` (nnz data array) or a fresh matrix."""
        space, ctx = self.space, self.ctx
        coeff = as_coefficient(D)
        dvol = coeff.volume_values(space, self.vt)
        _check_finite("diffusivity", dvol)
        dface = coeff.face_values(space, self.ft)[self._interior]
        dmin = min(dvol.min(), dface.min()) if dface.size else dvol.min()
        if dmin <= 0.0:
            k = int(np.argmin(dvol))
            e, q = divmod(k, dvol.shape[1])
            xy = self.vt.points[e, q]
            raise ModelError(
                f"diffusivity {dvol[e, q]:.3e} <= 0 at quadrature point "
                f"({xy[0]:.6g}, {xy[1]:.6g}) of element {e}")

        mat = None
        if out is None:
            mat = ctx.empty_matrix()
            out = mat.data
        else:
            out[:] = 0.0
        vol = kernels.stiffness_blocks(
            np.ascontiguousarray(dvol * self.vt.wdet), self.vt.grads)
        out[ctx.vol_pos.ravel()] = vol.ravel()

        if len(self._interior):
            flux = np.ascontiguousarray(
                0.5 * dface[..., None] * self._grads_n)
            pen = penalty.product / self._hf
            blocks = kernels.sip_face_blocks(self._wq, self._svals, flux,
                                             np.ascontiguousarray(pen))
            kernels.scatter_add(out, ctx.face_pos, blocks)
        return mat if mat is not None else out


def assemble_sip(space: DgSpace, D, penalty: PenaltySpec) -> SparseMatrix:
    """Symmetric interior penalty form for diffusion coefficient D.

    Interior faces only carry consistency/symmetry/penalty terms; boundary
    behaviour enters through the absorbing/natural conditions of the models.
    """
    return SipAssembler(space).assemble(D, penalty)


def assemble_boundary_mass(space: DgSpace, faces) -> SparseMatrix:
    """B_ij = int_subset phi_j phi_i over the given boundary faces."""
    ctx = form_context(space)
    mat = ctx.empty_matrix()
    faces = np.asarray(faces, dtype=np.int64)
    if faces.size == 0:
        return mat
    if np.any(space.mesh.face_elems[faces, 1] >= 0):
        raise ConfigurationError("boundary mass subset contains interior faces")
    ft = space.face_tables(ctx.quad_volume)
    blocks = kernels.face_mass_blocks(
        np.ascontiguousarray(ft.weights[faces]),
        np.ascontiguousarray(ft.vals[faces, 0]))
    kernels.scatter_add(mat.data, ctx.boundary_pos(faces), blocks)
    return mat


def assemble_upwind(space: DgSpace, v) -> SparseMatrix:
    """Upwind convection form b_upw(v; ., .); rows test, columns trial."""
    mesh = space.mesh
    if mesh.inflow_mask is None or mesh.velocity is None or \
            not np.array_equal(np.asarray(v, float), mesh.velocity):
        raise ConfigurationError(
            "mesh boundary must be classified for this velocity first")
    v = np.asarray(v, dtype=float)
    ctx = form_context(space)
    mat = ctx.empty_matrix()
    vt = space.volume_tables(ctx.quad_volume)
    ft = space.face_tables(ctx.quad_volume)

    # volume: -int phi (v . grad w)
    vgrad = np.einsum("eqid,d->eqi", vt.grads, v)
    vol = -np.einsum("eq,eqi,qj->eij", vt.wdet, vgrad, vt.phi, optimize=True)
    kernels.scatter_add(mat.data, ctx.vol_pos, vol)

    ii = ctx.interior
    if len(ii):
        vn = mesh.face_normals[ii] @ v
        up = np.where(vn >= 0.0, 0, 1)
        svals = ft.vals[ii].copy()
        svals[:, 1] *= -1.0
        upvals = ft.vals[ii][np.arange(len(ii)), up]
        blocks = kernels.upwind_face_blocks(
            np.ascontiguousarray(ft.weights[ii] * vn[:, None]),
            np.ascontiguousarray(svals), np.ascontiguousarray(upvals))
        # face_pos[f, :, up[f]] selects the (test side, upwind trial) blocks
        pos = ctx.face_pos[np.arange(len(ii)), :, up]
        kernels.scatter_add(mat.data, pos, blocks)

    out_faces = np.nonzero(mesh.boundary_mask & ~mesh.inflow_mask)[0]
    if out_faces.size:
        vn = mesh.face_normals[out_faces] @ v
        blocks = kernels.face_mass_blocks(
            np.ascontiguousarray(ft.weights[out_faces] * vn[:, None]),
            np.ascontiguousarray(ft.vals[out_faces, 0]))
        kernels.scatter_add(mat.data, ctx.boundary_pos(out_faces), blocks)
    return mat


# ---------------------------------------------------------------------------
# Load vectors
# ---------------------------------------------------------------------------

def assemble_load(space: DgSpace, f, t: float = 0.0) -> np.ndarray:
    """F_i = int f(x, t) phi_i with the high-order load quadrature."""
    ctx = form_context(space)
    vt = space.volume_tables(ctx.quad_load)
    X, Y = vt.points_xy
    vals = _eval_time_pointwise(f, X, Y, t)
    _check_finite("volume source", vals)
    return ((vals * vt.wdet) @ vt.phi).ravel()


def assemble_boundary_load(space: DgSpace, g, faces, weight=None,
                           t: float = 0.0) -> np.ndarray:
    """G_i = int_subset g phi_i (v.n) dGamma (or without a weight).

    Returns the bare integral; callers apply the model's sign, e.g. the
    inflow term enters the right-hand side as -G.
    """
    ctx = form_context(space)
    out = np.zeros(space.num_dofs)
    faces = np.asarray(faces, dtype=np.int64)
    if faces.size == 0:
        return out
    ft = space.face_tables(ctx.quad_load)
    mesh = space.mesh
    vals = _eval_time_pointwise(g, ft.points[faces, :, 0],
                                ft.points[faces, :, 1], t)
    _check_finite("boundary source", vals)
    w = ft.weights[faces] * vals
    if weight is not None:
        vn = mesh.face_normals[faces] @ np.asarray(weight, dtype=float)
        w = w * vn[:, None]
    contrib = np.einsum("fq,fqi->fi", w, ft.vals[faces, 0])
    nloc = space.dofs_per_element
    rows = (mesh.face_elems[faces, 0][:, None] * nloc
            + np.arange(nloc, dtype=np.int64)[None, :])
    kernels.scatter_add(out, rows, contrib)
    return out


def assemble_boundary_normal_load(space: DgSpace, g, faces, t: float = 0.0,
                                  weight=None) -> np.ndarray:
    """Like assemble_boundary_load for data g(x, y, nx, ny, t).

    With ``weight = v`` the integrand carries an extra (v . n) factor, as
    the inflow term of the concentration equation requires.
    """
    ctx = form_context(space)
    out = np.zeros(space.num_dofs)
    faces = np.asarray(faces, dtype=np.int64)
    if faces.size == 0:
        return out
    ft = space.face_tables(ctx.quad_load)
    mesh = space.mesh
    n = mesh.face_normals[faces]
    x = ft.points[faces, :, 0]
    y = ft.points[faces, :, 1]
    vals = np.asarray(g(x, y, n[:, 0:1], n[:, 1:2], t), dtype=float)
    if vals.shape != x.shape:
        vals = np.broadcast_to(vals, x.shape)
    _check_finite("boundary source", vals)
    w = ft.weights[faces] * vals
    if weight is not None:
        vn = n @ np.asarray(weight, dtype=float)
        w = w * vn[:, None]
    contrib = np.einsum("fq,fqi->fi", w, ft.vals[faces, 0])
    nloc = space.dofs_per_element
    rows = (mesh.face_elems[faces, 0][:, None] * nloc
            + np.arange(nloc, dtype=np.int64)[None, :])
    kernels.scatter_add(out, rows, contrib)
    return out


def assemble_westervelt_quadratic(space: DgSpace, pd: FieldVector) -> np.ndarray:
    """N_i = int (pd)^2 phi_i; the caller multiplies by kappa."""
    ctx = form_context(space)
    vt = space.volume_tables(ctx.quad_load)
    vals = pd.volume_values(vt)
    return ((vals * vals * vt.wdet) @ vt.phi).ravel()


def _eval_time_pointwise(f, x, y, t):
    try:
        vals = np.asarray(f(x, y, t), dtype=float)
        if vals.shape == x.shape:
            return vals
        if vals.ndim == 0:
            return np.full(x.shape, float(vals))
    except (TypeError, ValueError):
        pass
    out = np.empty(x.shape)
    it = np.nditer([x, y], flags=["multi_index"])
    for xi, yi in it:
        out[it.multi_index] = f(float(xi), float(yi), t)
    return out


# ---------------------------------------------------------------------------
# Diagnostics used by property tests
# ---------------------------------------------------------------------------

def dg_seminorm(space: DgSpace, field: FieldVector) -> float:
    """Broken H1 seminorm with h_F^{-1}-weighted interior jumps."""
    ctx = form_context(space)
    vt = space.volume_tables(ctx.quad_volume)
    g = field.volume_gradients(vt)
    total = float(np.sum(vt.wdet * np.sum(g * g, axis=2)))
    ii = ctx.interior
    if len(ii):
        ft = space.face_tables(ctx.quad_volume)
        fv = field.face_values(ft)[ii]
        jumps = fv[:, 0] - fv[:, 1]
        total += float(np.sum(ft.weights[ii] * jumps ** 2
                              / space.mesh.face_lengths[ii][:, None]))
    return np.sqrt(total)


def dg_seminorm_gram(space: DgSpace) -> SparseMatrix:
    """Gram matrix of the dG seminorm: phi' K phi = |phi|_dG^2."""
    ctx = form_context(space)
    mat = ctx.empty_matrix()
    vt = space.volume_tables(ctx.quad_volume)
    vol = kernels.stiffness_blocks(np.ascontiguousarray(vt.wdet), vt.grads)
    mat.data[ctx.vol_pos.ravel()] = vol.ravel()
    ii = ctx.interior
    if len(ii):
        ft = space.face_tables(ctx.quad_volume)
        svals = ft.vals[ii].copy()
        svals[:, 1] *= -1.0
        blocks = kernels.sip_face_blocks(
            np.ascontiguousarray(ft.weights[ii]),
            np.ascontiguousarray(svals),
            np.zeros_like(svals),
            np.ascontiguousarray(1.0 / space.mesh.face_lengths[ii]))
        kernels.scatter_add(mat.data, ctx.face_pos, blocks)
    return mat


def upwind_energy(space: DgSpace, v, field: FieldVector) -> float:
    """Right-hand side of the upwind identity: half the |v.n|-weighted
    jump and boundary L2 masses."""
    mesh = space.mesh
    v = np.asarray(v, dtype=float)
    ctx = form_context(space)
    ft = space.face_tables(ctx.quad_volume)
    fv = field.face_values(ft)
    total = 0.0
    ii = ctx.interior
    vn = mesh.face_normals @ v
    if len(ii):
        jumps = fv[ii, 0] - fv[ii, 1]
        total += 0.5 * float(np.sum(
            np.abs(vn[ii])[:, None] * ft.weights[ii] * jumps ** 2))
    bnd = np.nonzero(mesh.boundary_mask)[0]
    total += 0.5 * float(np.sum(
        np.abs(vn[bnd])[:, None] * ft.weights[bnd] * fv[bnd, 0] ** 2))
    return total
