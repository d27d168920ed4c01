"""Broken polynomial spaces on triangular meshes.

Provides the reference-triangle machinery (principal-lattice Lagrange
bases, Gauss quadrature), the broken space ``DgSpace``, elementwise
fields (``FieldVector``), interpolation and local L2 projection.  No
inter-element continuity is imposed anywhere.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import ConfigurationError, InternalError

MAX_QUAD_DEGREE = 12


# ---------------------------------------------------------------------------
# Quadrature on the reference triangle {x >= 0, y >= 0, x + y <= 1}
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadRule:
    """Quadrature rule on the reference triangle."""

    points: np.ndarray   # (n, 2)
    weights: np.ndarray  # (n,), positive, summing to 1/2
    degree: int          # exactness degree


@lru_cache(maxsize=None)
def quad_rule(degree: int) -> QuadRule:
    """Gauss rule on the reference triangle, exact for total degree <= degree.

    Built by collapsing a tensor Gauss-Legendre rule through the Duffy map
    (x, y) = (u, v(1-u)); the extra Jacobian factor (1-u) raises the
    u-degree by one, hence the asymmetric point counts.
    """
    if degree < 0 or degree > MAX_QUAD_DEGREE:
        raise ConfigurationError(
            f"triangle quadrature degree {degree} outside shipped range "
            f"[0, {MAX_QUAD_DEGREE}]")
    n_u = (degree + 2) // 2 + 1
    n_v = degree // 2 + 1
    xu, wu = leggauss(n_u)
    xv, wv = leggauss(n_v)
    # map from [-1, 1] to [0, 1]
    xu = 0.5 * (xu + 1.0)
    xv = 0.5 * (xv + 1.0)
    wu = 0.5 * wu
    wv = 0.5 * wv
    U, V = np.meshgrid(xu, xv, indexing="ij")
    W = np.outer(wu, wv) * (1.0 - U)
    pts = np.column_stack([U.ravel(), (V * (1.0 - U)).ravel()])
    wts = W.ravel()
    rule = QuadRule(points=pts, weights=wts, degree=degree)
    assert np.all(wts > 0) and abs(wts.sum() - 0.5) < 1e-14
    return rule


@lru_cache(maxsize=None)
def segment_rule(degree: int):
    """Gauss-Legendre rule on [0, 1]; weights sum to 1."""
    if degree < 0 or degree > 2 * MAX_QUAD_DEGREE:
        raise ConfigurationError(f"segment quadrature degree {degree} unsupported")
    n = degree // 2 + 1
    x, w = leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


# ---------------------------------------------------------------------------
# Principal-lattice Lagrange basis on the reference triangle
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def lattice_points(q: int) -> np.ndarray:
    """Principal lattice (i/q, j/q), i + j <= q; vertices come first for q=1."""
    pts = [(i / q, j / q) for j in range(q + 1) for i in range(q + 1 - j)]
    return np.array(pts, dtype=float)


@lru_cache(maxsize=None)
def _monomial_exponents(q: int):
    return [(a, b) for b in range(q + 1) for a in range(q + 1 - b)]


@lru_cache(maxsize=None)
def _basis_coefficients(q: int) -> np.ndarray:
    """Columns are monomial coefficients of the nodal basis functions."""
    nodes = lattice_points(q)
    expo = _monomial_exponents(q)
    vand = np.array([[x ** a * y ** b for (a, b) in expo] for (x, y) in nodes])
    coeff = np.linalg.inv(vand)
    if not np.all(np.isfinite(coeff)):
        raise InternalError(f"singular Vandermonde for degree {q}")
    return coeff


def basis_values(q: int, pts: np.ndarray) -> np.ndarray:
    """Nodal basis values at reference points; shape (npts, nloc)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    expo = _monomial_exponents(q)
    mono = np.stack([pts[:, 0] ** a * pts[:, 1] ** b for (a, b) in expo], axis=1)
    return mono @ _basis_coefficients(q)


def basis_gradients(q: int, pts: np.ndarray) -> np.ndarray:
    """Reference gradients of the nodal basis; shape (npts, nloc, 2)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    expo = _monomial_exponents(q)
    x, y = pts[:, 0], pts[:, 1]
    dx = np.stack([a * np.where(a > 0, x ** max(a - 1, 0), 0.0) * y ** b
                   for (a, b) in expo], axis=1)
    dy = np.stack([b * x ** a * np.where(b > 0, y ** max(b - 1, 0), 0.0)
                   for (a, b) in expo], axis=1)
    coeff = _basis_coefficients(q)
    return np.stack([dx @ coeff, dy @ coeff], axis=2)


# ---------------------------------------------------------------------------
# Precomputed evaluation tables
# ---------------------------------------------------------------------------

@dataclass
class VolumeTables:
    """Per-element quadrature data for one exactness degree."""

    rule: QuadRule
    phi: np.ndarray       # (nq, nloc) reference basis values
    points: np.ndarray    # (ne, nq, 2) physical quadrature points
    grads: np.ndarray     # (ne, nq, nloc, 2) physical basis gradients
    wdet: np.ndarray      # (ne, nq) weight * |detJ|
    _grads_flat: np.ndarray | None = None
    _points_xy: tuple | None = None

    @property
    def grads_flat(self) -> np.ndarray:
        """(ne, nq*2, nloc) layout for batched gradient matmuls."""
        if self._grads_flat is None:
            ne, nq, nloc, _ = self.grads.shape
            self._grads_flat = np.ascontiguousarray(
                self.grads.transpose(0, 1, 3, 2).reshape(ne, nq * 2, nloc))
        return self._grads_flat

    @property
    def points_xy(self) -> tuple:
        """Persistent (X, Y) coordinate arrays (stable identity lets
        time-separable coefficient closures cache their spatial factors)."""
        if self._points_xy is None:
            self._points_xy = (np.ascontiguousarray(self.points[..., 0]),
                               np.ascontiguousarray(self.points[..., 1]))
        return self._points_xy


@dataclass
class FaceTables:
    """Two-sided face trace data for one exactness degree.

    For boundary faces only side 0 is meaningful; side-1 entries are zero,
    which makes the signed-jump formulas degenerate to the boundary
    convention [phi] = phi.
    """

    degree: int
    points: np.ndarray    # (nf, nq, 2) physical quadrature points
    weights: np.ndarray   # (nf, nq), summing to the face length
    vals: np.ndarray      # (nf, 2, nq, nloc)
    grads: np.ndarray     # (nf, 2, nq, nloc, 2) physical gradients


class DgSpace:
    """Broken space of elementwise polynomials of degree q on a mesh."""

    def __init__(self, mesh, degree: int):
        if degree < 1:
            raise ConfigurationError(f"polynomial degree must be >= 1, got {degree}")
        self.mesh = mesh
        self.degree = degree
        self.dofs_per_element = (degree + 1) * (degree + 2) // 2
        self.num_dofs = mesh.num_elements * self.dofs_per_element
        self.ref_nodes = lattice_points(degree)
        self._volume_tables = {}
        self._face_tables = {}
        self._trace_constant = None

    # -- geometry helpers ---------------------------------------------------

    def element_nodes(self) -> np.ndarray:
        """Physical lattice nodes, shape (ne, nloc, 2); cached (geometry is
        immutable)."""
        if getattr(self, "_element_nodes", None) is None:
            m = self.mesh
            v0 = m.vertices[m.elements[:, 0]]
            self._element_nodes = v0[:, None, :] + np.einsum(
                "eij,nj->eni", m.jacobians, self.ref_nodes)
        return self._element_nodes

    def reference_coords(self, elems: np.ndarray, xy: np.ndarray) -> np.ndarray:
        """Map physical points to reference coordinates of given elements."""
        m = self.mesh
        d = xy - m.vertices[m.elements[elems, 0]]
        return np.einsum("...ij,...j->...i", m.inv_jacobians[elems], d)

    # -- cached tables ------------------------------------------------------

    def volume_tables(self, degree: int) -> VolumeTables:
        if degree not in self._volume_tables:
            rule = quad_rule(degree)
            m = self.mesh
            phi = basis_values(self.degree, rule.points)
            gref = basis_gradients(self.degree, rule.points)
            # physical gradient: J^{-T} grad_ref
            grads = np.einsum("qik,ekd->eqid", gref, m.inv_jacobians)
            v0 = m.vertices[m.elements[:, 0]]
            pts = v0[:, None, :] + np.einsum("eij,qj->eqi", m.jacobians, rule.points)
            wdet = np.outer(m.det_jacobians, rule.weights).reshape(
                m.num_elements, -1)
            self._volume_tables[degree] = VolumeTables(
                rule=rule, phi=phi, points=pts, grads=grads, wdet=wdet)
        return self._volume_tables[degree]

    def face_tables(self, degree: int) -> FaceTables:
        if degree not in self._face_tables:
            m = self.mesh
            s, w = segment_rule(degree)
            nq = len(s)
            a = m.vertices[m.face_nodes[:, 0]]
            b = m.vertices[m.face_nodes[:, 1]]
            pts = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
            wts = np.outer(m.face_lengths, w)
            nf = m.num_faces
            nloc = self.dofs_per_element
            vals = np.zeros((nf, 2, nq, nloc))
            grads = np.zeros((nf, 2, nq, nloc, 2))
            for side in (0, 1):
                present = m.face_elems[:, side] >= 0
                elems = m.face_elems[present, side]
                ref = self.reference_coords(
                    np.repeat(elems, nq), pts[present].reshape(-1, 2))
                vals[present, side] = basis_values(
                    self.degree, ref).reshape(-1, nq, nloc)
                gref = basis_gradients(self.degree, ref).reshape(-1, nq, nloc, 2)
                grads[present, side] = np.einsum(
                    "fqik,fkd->fqid", gref, m.inv_jacobians[elems])
            self._face_tables[degree] = FaceTables(
                degree=degree, points=pts, weights=wts, vals=vals, grads=grads)
        return self._face_tables[degree]

    def trace_constant(self) -> float:
        """Measured discrete trace constant C with ||phi||_F <= C h_K^{-1/2} ||phi||_K.

        Computed exactly as the largest generalized eigenvalue of the face
        mass matrix against the element mass matrix, over all element faces.
        """
        if self._trace_constant is None:
            m = self.mesh
            vt = self.volume_tables(2 * self.degree)
            ft = self.face_tables(2 * self.degree)
            mass = np.einsum("eq,qi,qj->eij", vt.wdet, vt.phi, vt.phi)
            c2 = 0.0
            for f in range(m.num_faces):
                for side in (0, 1):
                    e = m.face_elems[f, side]
                    if e < 0:
                        continue
                    mf = np.einsum("q,qi,qj->ij", ft.weights[f],
                                   ft.vals[f, side], ft.vals[f, side])
                    lam = np.linalg.eigvals(np.linalg.solve(mass[e], mf))
                    c2 = max(c2, m.element_diameters[e] * lam.real.max())
            self._trace_constant = float(np.sqrt(c2))
        return self._trace_constant


class FieldVector:
    """Elementwise coefficients of a broken-space field."""

    def __init__(self, space: DgSpace, coeffs=None):
        self.space = space
        if coeffs is None:
            coeffs = np.zeros(space.num_dofs)
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (space.num_dofs,):
            raise ConfigurationError(
                f"coefficient vector has shape {coeffs.shape}, "
                f"expected ({space.num_dofs},)")
        self.coeffs = coeffs

    def copy(self) -> "FieldVector":
        return FieldVector(self.space, self.coeffs.copy())

    @property
    def by_element(self) -> np.ndarray:
        """View of the coefficients as (ne, nloc)."""
        return self.coeffs.reshape(self.space.mesh.num_elements,
                                   self.space.dofs_per_element)

    def eval(self, element: int, ref_point) -> float:
        """Value of the element-local polynomial at a reference point."""
        self._check_element(element)
        phi = basis_values(self.space.degree, ref_point)[0]
        return float(phi @ self.by_element[element])

    def eval_grad(self, element: int, ref_point) -> np.ndarray:
        """Physical gradient at a reference point of the given element."""
        self._check_element(element)
        g = basis_gradients(self.space.degree, ref_point)[0]
        gphys = g @ self.space.mesh.inv_jacobians[element]
        return gphys.T @ self.by_element[element]

    def volume_values(self, tables: VolumeTables) -> np.ndarray:
        """Values at all volume quadrature points, shape (ne, nq)."""
        return self.by_element @ tables.phi.T

    def volume_gradients(self, tables: VolumeTables) -> np.ndarray:
        """Physical gradients at volume quadrature points, shape (ne, nq, 2)."""
        ne, nq = tables.wdet.shape
        flat = tables.grads_flat @ self.by_element[:, :, None]
        return flat.reshape(ne, nq, 2)

    def face_values(self, tables: FaceTables) -> np.ndarray:
        """Two-sided trace values at face quadrature points, (nf, 2, nq)."""
        m = self.space.mesh
        ce = self.by_element
        out = np.zeros(tables.vals.shape[:3])
        out[:, 0] = (tables.vals[:, 0] @ ce[m.face_elems[:, 0]][:, :, None])[..., 0]
        interior = m.face_elems[:, 1] >= 0
        out[interior, 1] = (tables.vals[interior, 1]
                            @ ce[m.face_elems[interior, 1]][:, :, None])[..., 0]
        return out

    def lattice_values(self) -> np.ndarray:
        """Values at the element lattice nodes (these are the coefficients)."""
        return self.by_element

    def _check_element(self, element: int):
        if not 0 <= element < self.space.mesh.num_elements:
            raise ConfigurationError(f"element index {element} out of range")


def interpolate(space: DgSpace, f) -> FieldVector:
    """Elementwise Lagrange interpolant: evaluate f at the lattice nodes."""
    xy = getattr(space, "_element_nodes_xy", None)
    if xy is None:
        nodes = space.element_nodes()
        xy = (np.ascontiguousarray(nodes[..., 0]),
              np.ascontiguousarray(nodes[..., 1]))
        space._element_nodes_xy = xy
    vals = _eval_pointwise(f, xy[0], xy[1])
    return FieldVector(space, np.asarray(vals, dtype=float).ravel())


def l2_project(space: DgSpace, f, degree: int | None = None) -> FieldVector:
    """Elementwise L2 projection via the local mass systems.

    The local mass matrix of an affine triangle is detJ times the reference
    mass matrix, so a single factorization serves every element.
    """
    if degree is None:
        degree = 2 * space.degree + 4
    vt = space.volume_tables(degree)
    rhs = np.einsum("eq,qi->ei", vt.wdet * _eval_pointwise(
        f, vt.points[..., 0], vt.points[..., 1]), vt.phi)
    ref_mass = np.einsum("q,qi,qj->ij", vt.rule.weights, vt.phi, vt.phi)
    coeffs = np.linalg.solve(ref_mass, rhs.T).T / \
        space.mesh.det_jacobians[:, None]
    return FieldVector(space, coeffs.ravel())


def _eval_pointwise(f, x, y):
    """Evaluate a scalar function on array arguments, broadcasting if it can."""
    try:
        vals = np.asarray(f(x, y), dtype=float)
        if vals.shape == x.shape:
            return vals
    except (TypeError, ValueError):
        pass
    it = np.nditer([x, y, None])
    for xi, yi, out in it:
        out[...] = f(float(xi), float(yi))
    return it.operands[2]
