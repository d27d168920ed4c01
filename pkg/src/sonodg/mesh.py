"""Uniform triangulations of axis-aligned rectangles.

Each grid cell is split by the diagonal from its lower-left to its
upper-right corner, which reproduces the h = sqrt(dx^2 + dy^2) refinement
family used throughout the experiments.  Meshes are immutable after
``classify_boundary`` has assigned inflow/outflow tags.
"""

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .space import segment_rule


class BoundaryTag(enum.Enum):
    INFLOW = "inflow"
    OUTFLOW = "outflow"


@dataclass(frozen=True)
class Face:
    """One mesh face (edge).  ``right`` is -1 for boundary faces.

    The normal points from the left element into the right one; for
    boundary faces it is the outward normal of the domain.
    """

    nodes: tuple
    left: int
    right: int
    normal: np.ndarray
    length: float
    side: str | None = None          # bottom/top/left/right for boundary faces
    tag: BoundaryTag | None = None   # set by classify_boundary


class Mesh:
    """Triangle mesh with face connectivity and affine element geometry."""

    def __init__(self, vertices, elements, bounds):
        self.vertices = np.asarray(vertices, dtype=float)
        self.elements = np.asarray(elements, dtype=np.int64)
        self.bounds = bounds  # ((x0, x1), (y0, y1))
        self.num_elements = len(self.elements)
        self._build_geometry()
        self._build_faces()
        self.velocity = None

    # -- construction --------------------------------------------------------

    def _build_geometry(self):
        v = self.vertices[self.elements]                 # (ne, 3, 2)
        e1 = v[:, 1] - v[:, 0]
        e2 = v[:, 2] - v[:, 0]
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        if np.any(det <= 0):
            raise ConfigurationError("element orientation must be counterclockwise")
        self.jacobians = np.stack([e1, e2], axis=2)      # columns e1, e2
        self.det_jacobians = det
        self.areas = 0.5 * det
        inv = np.empty_like(self.jacobians)
        inv[:, 0, 0] = e2[:, 1]
        inv[:, 0, 1] = -e2[:, 0]
        inv[:, 1, 0] = -e1[:, 1]
        inv[:, 1, 1] = e1[:, 0]
        self.inv_jacobians = inv / det[:, None, None]
        edges = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 1], v[:, 0] - v[:, 2]],
                         axis=1)
        self.element_diameters = np.linalg.norm(edges, axis=2).max(axis=1)
        self.mesh_size = float(self.element_diameters.max())

    def _build_faces(self):
        edge_map = {}
        local = [(0, 1), (1, 2), (2, 0)]
        for e, tri in enumerate(self.elements):
            for a, b in local:
                key = (min(tri[a], tri[b]), max(tri[a], tri[b]))
                edge_map.setdefault(key, []).append((e, int(tri[a]), int(tri[b])))

        (x0, x1), (y0, y1) = self.bounds
        tol = 1e-12 * max(x1 - x0, y1 - y0)

        nodes, elems, normals, lengths, sides = [], [], [], [], []
        for key, owners in sorted(edge_map.items()):
            if len(owners) > 2:
                raise ConfigurationError(f"edge {key} shared by {len(owners)} elements")
            e0, a, b = owners[0]
            t = self.vertices[b] - self.vertices[a]
            length = float(np.linalg.norm(t))
            # outward normal of the owning element (edges traverse it ccw)
            n = np.array([t[1], -t[0]]) / length
            right = owners[1][0] if len(owners) == 2 else -1
            side = None
            if right == -1:
                mid = 0.5 * (self.vertices[a] + self.vertices[b])
                if abs(mid[1] - y0) < tol:
                    side = "bottom"
                elif abs(mid[1] - y1) < tol:
                    side = "top"
                elif abs(mid[0] - x0) < tol:
                    side = "left"
                elif abs(mid[0] - x1) < tol:
                    side = "right"
                else:
                    raise ConfigurationError(f"boundary face {key} not on the rectangle")
            nodes.append((a, b))
            elems.append((e0, right))
            normals.append(n)
            lengths.append(length)
            sides.append(side)

        self.face_nodes = np.array(nodes, dtype=np.int64)
        self.face_elems = np.array(elems, dtype=np.int64)
        self.face_normals = np.array(normals)
        self.face_lengths = np.array(lengths)
        self.face_sides = np.array([s if s else "" for s in sides])
        self.interior_mask = self.face_elems[:, 1] >= 0
        self.boundary_mask = ~self.interior_mask
        self.num_faces = len(self.face_nodes)
        self.inflow_mask = None

    # -- queries --------------------------------------------------------------

    @property
    def faces(self) -> list:
        """Face records as dataclass objects (built on demand)."""
        out = []
        for f in range(self.num_faces):
            tag = None
            if self.inflow_mask is not None and self.boundary_mask[f]:
                tag = BoundaryTag.INFLOW if self.inflow_mask[f] else BoundaryTag.OUTFLOW
            out.append(Face(
                nodes=tuple(self.face_nodes[f]),
                left=int(self.face_elems[f, 0]),
                right=int(self.face_elems[f, 1]),
                normal=self.face_normals[f],
                length=float(self.face_lengths[f]),
                side=self.face_sides[f] or None,
                tag=tag))
        return out

    def boundary_faces(self, side: str | None = None) -> np.ndarray:
        """Indices of boundary faces, optionally restricted to one side."""
        mask = self.boundary_mask.copy()
        if side is not None:
            mask &= self.face_sides == side
        return np.nonzero(mask)[0]

    def domain_area(self) -> float:
        (x0, x1), (y0, y1) = self.bounds
        return (x1 - x0) * (y1 - y0)


def build_rect_mesh(x_range, y_range, nx: int, ny: int) -> Mesh:
    """Uniform nx-by-ny grid of rectangular cells, each split into two triangles.

    The diagonal runs from the lower-left to the upper-right cell corner;
    for square cells the mesh size is the cell diagonal.
    """
    if nx < 1 or ny < 1:
        raise ConfigurationError(f"cell counts must be positive, got {nx}x{ny}")
    x0, x1 = map(float, x_range)
    y0, y1 = map(float, y_range)
    if not (x1 > x0 and y1 > y0):
        raise ConfigurationError("degenerate domain ranges")

    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    elements = []
    for j in range(ny):
        for i in range(nx):
            a, b = vid(i, j), vid(i + 1, j)
            c, d = vid(i + 1, j + 1), vid(i, j + 1)
            elements.append((a, b, c))   # lower triangle
            elements.append((a, c, d))   # upper triangle
    return Mesh(vertices, elements, ((x0, x1), (y0, y1)))


def classify_boundary(mesh: Mesh, v) -> Mesh:
    """Tag boundary faces as inflow (v.n < 0) or outflow (v.n >= 0)."""
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ConfigurationError("velocity must be finite")
    vn = mesh.face_normals @ v
    mesh.inflow_mask = mesh.boundary_mask & (vn < 0.0)
    mesh.velocity = v
    return mesh


def face_quadrature_points(face_nodes_xy, degree: int):
    """Gauss points and weights on a physical segment; weights sum to its length."""
    if degree < 1:
        raise ConfigurationError(f"face quadrature degree must be >= 1, got {degree}")
    a, b = np.asarray(face_nodes_xy, dtype=float)
    s, w = segment_rule(degree)
    pts = a[None, :] + s[:, None] * (b - a)[None, :]
    return pts, w * np.linalg.norm(b - a)


def write_vtk(path, mesh: Mesh, cell_data=None, corner_data=None):
    """Legacy ASCII VTK UNSTRUCTURED_GRID writer (triangle cells, type 5).

    corner_data maps names to (ne, 3) arrays sampled at element corners;
    each element gets its own point copies so discontinuities survive.
    """
    ne = mesh.num_elements
    pts = mesh.vertices[mesh.elements].reshape(-1, 2)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write("sonodg field output\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {len(pts)} double\n")
        for x, y in pts:
            fh.write(f"{x:.16e} {y:.16e} 0.0\n")
        fh.write(f"CELLS {ne} {4 * ne}\n")
        for e in range(ne):
            fh.write(f"3 {3 * e} {3 * e + 1} {3 * e + 2}\n")
        fh.write(f"CELL_TYPES {ne}\n")
        fh.write("\n".join(["5"] * ne) + "\n")
        if corner_data:
            fh.write(f"POINT_DATA {len(pts)}\n")
            for name, arr in corner_data.items():
                fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                for val in np.asarray(arr).reshape(-1):
                    fh.write(f"{val:.16e}\n")
        if cell_data:
            fh.write(f"CELL_DATA {ne}\n")
            for name, arr in cell_data.items():
                fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                for val in np.asarray(arr).reshape(-1):
                    fh.write(f"{val:.16e}\n")
