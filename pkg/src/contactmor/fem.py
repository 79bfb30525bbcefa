"""Structured quadrilateral meshes with contact tears and plane-stress assembly.

The unit of output is :class:`ContactSystem`, the semi-discrete model

    M q'' + K q = f(t) + C^T lam,    C q + b >= 0,  lam >= 0,  lam * (C q + b) = 0

on the free (non-Dirichlet) degrees of freedom. Contact is node-to-node
between the two copies of each duplicated tear vertex.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateElement, EmptyDirichlet, InvalidTear
from .linalg import SparseSymMatrix, spd_factorize

EDGES = ("left", "right", "bottom", "top")

_GP = 1.0 / math.sqrt(3.0)
_GAUSS_2X2 = [(-_GP, -_GP), (_GP, -_GP), (_GP, _GP), (-_GP, _GP)]
_CORNERS = np.array([(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)])


@dataclass(frozen=True)
class Material:
    rho: float = 1.0
    E: float = 1000.0
    nu: float = 0.3
    thickness: float = 1.0

    def __post_init__(self):
        if not self.E > 0:
            raise ValueError(f"Young's modulus must be positive, got {self.E}")
        if not -1.0 < self.nu < 0.5:
            raise ValueError(f"Poisson's ratio must lie in (-1, 0.5), got {self.nu}")
        if not self.rho > 0 or not self.thickness > 0:
            raise ValueError("density and thickness must be positive")

    def plane_stress(self):
        c = self.E / (1.0 - self.nu**2)
        return c * np.array(
            [[1.0, self.nu, 0.0], [self.nu, 1.0, 0.0], [0.0, 0.0, 0.5 * (1.0 - self.nu)]]
        )


@dataclass(frozen=True)
class Tear:
    """Straight, axis-aligned run of grid vertices to be split into double nodes.

    Vertices are listed from ``start`` to ``end`` (both inclusive); that order
    is also the order of the contact pairs.
    """

    start: tuple[float, float]
    end: tuple[float, float]


@dataclass(frozen=True)
class MeshSpec:
    nx: int
    ny: int
    domain: tuple[float, float, float, float] = (0.0, 1.0, 0.0, 1.0)  # xmin, xmax, ymin, ymax
    tears: tuple[Tear, ...] = ()
    dirichlet_edges: tuple[str, ...] = ("left",)

    @property
    def dx(self):
        return (self.domain[1] - self.domain[0]) / self.nx

    @property
    def dy(self):
        return (self.domain[3] - self.domain[2]) / self.ny


@dataclass(frozen=True)
class ContactPair:
    left: int  # node on the minus side of the tear
    right: int  # duplicate, referenced by elements on the plus side
    axis: int  # normal direction: 0 = x, 1 = y


@dataclass
class Mesh:
    coords: np.ndarray  # (n_nodes, 2)
    elements: np.ndarray  # (n_el, 4), counter-clockwise from lower-left
    pairs: list[ContactPair]
    spec: MeshSpec

    @property
    def n_nodes(self):
        return self.coords.shape[0]

    @property
    def n_raw_dofs(self):
        return 2 * self.n_nodes

    def grid_node(self, i, j):
        return j * (self.spec.nx + 1) + i

    def nearest_node(self, x, y, side="minus"):
        """Snap a coordinate to a mesh node within half a grid spacing.

        At a double node ``side`` picks the copy: ``"minus"`` is the original
        (left/below the tear), ``"plus"`` the duplicate.
        """
        spec = self.spec
        i = round((x - spec.domain[0]) / spec.dx)
        j = round((y - spec.domain[2]) / spec.dy)
        if not (0 <= i <= spec.nx and 0 <= j <= spec.ny):
            raise ValueError(f"point ({x}, {y}) lies outside the mesh")
        node = self.grid_node(i, j)
        dist = np.abs(self.coords[node] - (x, y))
        if dist[0] > 0.5 * spec.dx + 1e-12 or dist[1] > 0.5 * spec.dy + 1e-12:
            raise ValueError(f"point ({x}, {y}) is not within half a grid spacing of a node")
        if side == "plus":
            for p in self.pairs:
                if p.left == node:
                    return p.right
            raise ValueError(f"node at ({x}, {y}) is not a double node; side='plus' is invalid")
        if side != "minus":
            raise ValueError(f"side must be 'minus' or 'plus', got {side!r}")
        return node


def _on_edge(spec, i, j):
    edges = set()
    if i == 0:
        edges.add("left")
    if i == spec.nx:
        edges.add("right")
    if j == 0:
        edges.add("bottom")
    if j == spec.ny:
        edges.add("top")
    return edges


def _tear_vertices(spec: MeshSpec, tear: Tear):
    x0, y0 = tear.start
    x1, y1 = tear.end
    fi = lambda x: (x - spec.domain[0]) / spec.dx  # noqa: E731
    fj = lambda y: (y - spec.domain[2]) / spec.dy  # noqa: E731
    ij = []
    for x, y in (tear.start, tear.end):
        a, b = fi(x), fj(y)
        if abs(a - round(a)) > 1e-9 or abs(b - round(b)) > 1e-9:
            raise InvalidTear(f"tear endpoint ({x}, {y}) is not a grid vertex")
        ij.append((round(a), round(b)))
    (i0, j0), (i1, j1) = ij
    if i0 == i1:
        axis = 0
        step = 1 if j1 >= j0 else -1
        verts = [(i0, j) for j in range(j0, j1 + step, step)]
        if not 0 < i0 < spec.nx:
            raise InvalidTear("a vertical tear must lie strictly inside the domain in x")
    elif j0 == j1:
        axis = 1
        step = 1 if i1 >= i0 else -1
        verts = [(i, j0) for i in range(i0, i1 + step, step)]
        if not 0 < j0 < spec.ny:
            raise InvalidTear("a horizontal tear must lie strictly inside the domain in y")
    else:
        raise InvalidTear(f"tear {tear} is not axis-aligned")
    for i, j in verts:
        if not (0 <= i <= spec.nx and 0 <= j <= spec.ny):
            raise InvalidTear(f"tear vertex ({i}, {j}) lies outside the grid")
        touched = _on_edge(spec, i, j) & set(spec.dirichlet_edges)
        if touched:
            raise InvalidTear(f"tear vertex ({i}, {j}) lies on Dirichlet edge {sorted(touched)}")
    return axis, verts


def build_mesh(spec: MeshSpec) -> Mesh:
    """Generate the structured grid and split every tear into double nodes."""
    if spec.nx < 1 or spec.ny < 1:
        raise ValueError("nx and ny must be at least 1")
    bad = set(spec.dirichlet_edges) - set(EDGES)
    if bad:
        raise ValueError(f"unknown Dirichlet edges: {sorted(bad)}")
    xs = np.linspace(spec.domain[0], spec.domain[1], spec.nx + 1)
    ys = np.linspace(spec.domain[2], spec.domain[3], spec.ny + 1)
    X, Y = np.meshgrid(xs, ys)
    coords = [np.column_stack([X.ravel(), Y.ravel()])]

    def gid(i, j):
        return j * (spec.nx + 1) + i

    elements = np.array(
        [
            [gid(i, j), gid(i + 1, j), gid(i + 1, j + 1), gid(i, j + 1)]
            for j in range(spec.ny)
            for i in range(spec.nx)
        ],
        dtype=np.int64,
    ).reshape(-1, 4)

    next_id = (spec.nx + 1) * (spec.ny + 1)
    pairs = []
    seen = set()
    for tear in spec.tears:
        axis, verts = _tear_vertices(spec, tear)
        dup = {}
        for i, j in verts:
            if (i, j) in seen:
                raise InvalidTear(f"grid vertex ({i}, {j}) belongs to more than one tear")
            seen.add((i, j))
            dup[gid(i, j)] = next_id
            pairs.append(ContactPair(gid(i, j), next_id, axis))
            coords.append(np.array([[xs[i], ys[j]]]))
            next_id += 1
        line = verts[0][axis]  # column index (vertical) or row index (horizontal)
        for e in range(elements.shape[0]):
            ei, ej = e % spec.nx, e // spec.nx
            # plus side: elements whose lower-left corner sits on the tear line
            if (ei if axis == 0 else ej) != line:
                continue
            elements[e] = [dup.get(n, n) for n in elements[e]]
    return Mesh(np.vstack(coords), elements, pairs, spec)


def _shape_derivs(xi, eta):
    N = 0.25 * (1 + _CORNERS[:, 0] * xi) * (1 + _CORNERS[:, 1] * eta)
    dN = 0.25 * np.array(
        [_CORNERS[:, 0] * (1 + _CORNERS[:, 1] * eta), _CORNERS[:, 1] * (1 + _CORNERS[:, 0] * xi)]
    )
    return N, dN


def _jacobian(coords, dN):
    J = dN @ coords
    det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
    if det <= 0.0:
        raise DegenerateElement(f"non-positive Jacobian determinant {det:.3e}")
    return J, det


def element_stiffness(coords, mat: Material):
    """8x8 plane-stress stiffness of a bilinear quad (2x2 Gauss).

    DOF order is ``[u1x, u1y, u2x, u2y, ...]`` with nodes counter-clockwise.
    """
    coords = np.asarray(coords, dtype=float)
    D = mat.plane_stress()
    Ke = np.zeros((8, 8))
    for xi, eta in _GAUSS_2X2:
        _, dN = _shape_derivs(xi, eta)
        J, det = _jacobian(coords, dN)
        dNx = np.linalg.solve(J, dN)
        B = np.zeros((3, 8))
        B[0, 0::2] = dNx[0]
        B[1, 1::2] = dNx[1]
        B[2, 0::2] = dNx[1]
        B[2, 1::2] = dNx[0]
        Ke += B.T @ D @ B * det
    Ke *= mat.thickness
    return 0.5 * (Ke + Ke.T)


def element_mass(coords, mat: Material):
    """8x8 consistent mass matrix of a bilinear quad (2x2 Gauss)."""
    coords = np.asarray(coords, dtype=float)
    Me = np.zeros((8, 8))
    for xi, eta in _GAUSS_2X2:
        N, dN = _shape_derivs(xi, eta)
        _, det = _jacobian(coords, dN)
        Nm = np.zeros((2, 8))
        Nm[0, 0::2] = N
        Nm[1, 1::2] = N
        Me += Nm.T @ Nm * det
    return mat.rho * mat.thickness * Me


def element_body_force(coords, force):
    """Consistent nodal forces of a constant body force over one element."""
    coords = np.asarray(coords, dtype=float)
    fe = np.zeros(8)
    for xi, eta in _GAUSS_2X2:
        N, dN = _shape_derivs(xi, eta)
        _, det = _jacobian(coords, dN)
        fe[0::2] += N * force[0] * det
        fe[1::2] += N * force[1] * det
    return fe


def assemble_global(mesh: Mesh, mat: Material):
    """Raw (unconstrained) global mass and stiffness as scipy CSR matrices."""
    n = mesh.n_raw_dofs
    rows, cols, kv, mv = [], [], [], []
    for conn in mesh.elements:
        xy = mesh.coords[conn]
        dofs = np.column_stack([2 * conn, 2 * conn + 1]).ravel()
        Ke = element_stiffness(xy, mat)
        Me = element_mass(xy, mat)
        rows.append(np.repeat(dofs, 8))
        cols.append(np.tile(dofs, 8))
        kv.append(Ke.ravel())
        mv.append(Me.ravel())
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    K = sp.csr_matrix((np.concatenate(kv), (rows, cols)), shape=(n, n))
    M = sp.csr_matrix((np.concatenate(mv), (rows, cols)), shape=(n, n))
    return M, K


def fixed_nodes(mesh: Mesh):
    spec = mesh.spec
    fixed = set()
    for j in range(spec.ny + 1):
        for i in range(spec.nx + 1):
            if _on_edge(spec, i, j) & set(spec.dirichlet_edges):
                fixed.add(mesh.grid_node(i, j))
    return sorted(fixed)


@dataclass(frozen=True)
class LoadSpec:
    """Nodal point load ``f(t) = amplitude * sin(omega t) * direction``.

    ``load1`` pushes/pulls horizontally; ``load2`` acts at 45 degrees with both
    components scaled by ``sin(pi/4)``. ``custom`` uses ``direction`` as given.
    A constant body force, if set, shares the same time function.
    """

    kind: str = "load1"
    position: tuple[float, float] = (1.0, 0.875)
    side: str = "minus"
    direction: tuple[float, float] | None = None
    amplitude: float = 1.5
    omega: float = 0.1 * math.pi
    body_force: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.kind not in ("load1", "load2", "custom"):
            raise ValueError(f"unknown load kind {self.kind!r}")
        if self.kind == "custom" and self.direction is None:
            raise ValueError("custom loads need a direction")

    @property
    def unit_direction(self):
        if self.kind == "load1":
            return (1.0, 0.0)
        if self.kind == "load2":
            s = math.sin(0.25 * math.pi)
            return (s, s)
        return tuple(float(c) for c in self.direction)

    def time_factor(self, t):
        return math.sin(self.omega * t)

    def nodal_force(self, t):
        """Force components at the loaded node at time ``t``."""
        a = self.amplitude * self.time_factor(t)
        dx, dy = self.unit_direction
        return np.array([a * dx, a * dy])


@dataclass(frozen=True, eq=False)
class ContactSystem:
    """Assembled semi-discrete contact model on the free DOFs.

    ``f(t) = time_function(t) * load_pattern``; the pattern carries the peak
    load, so it also serves as the Krylov seed.
    """

    M: SparseSymMatrix
    K: SparseSymMatrix
    C: sp.csr_matrix
    b: np.ndarray
    load_pattern: np.ndarray
    time_function: Callable[[float], float]
    dof_map: np.ndarray | None = None  # (n_nodes, 2) -> free index or -1
    contact_pairs: tuple[ContactPair, ...] = ()
    n_raw: int | None = None
    mesh: Mesh | None = None
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        n = self.M.dim
        if self.K.dim != n or self.C.shape[1] != n or self.load_pattern.shape != (n,):
            raise ValueError("inconsistent ContactSystem dimensions")
        if self.b.shape != (self.C.shape[0],):
            raise ValueError("clearance vector length must equal the number of constraints")

    @property
    def n_free(self):
        return self.M.dim

    @property
    def m(self):
        return self.C.shape[0]

    def f(self, t):
        return self.time_function(t) * self.load_pattern

    @cached_property
    def K_factor(self):
        return spd_factorize(self.K)

    def step_factor(self, h):
        """Cached factorization of ``M + h^2 K``."""
        key = ("step", float(h))
        if key not in self._cache:
            self._cache[key] = spd_factorize(self.M.csr + h * h * self.K.csr)
        return self._cache[key]

    def dof(self, node, axis):
        idx = int(self.dof_map[node, axis])
        if idx < 0:
            raise ValueError(f"node {node} axis {axis} is a fixed DOF")
        return idx

    @property
    def master_dofs(self):
        """All free DOFs (both axes) of nodes taking part in a contact pair."""
        nodes = sorted({p.left for p in self.contact_pairs} | {p.right for p in self.contact_pairs})
        if self.dof_map is None:
            return np.unique(self.C.nonzero()[1])
        return np.array([self.dof(n, a) for n in nodes for a in (0, 1)], dtype=np.int64)


def assemble(mesh: Mesh, mat: Material, load: LoadSpec) -> ContactSystem:
    """Assemble M, K, C, b and the load pattern, eliminating Dirichlet DOFs."""
    if not mesh.spec.dirichlet_edges:
        raise EmptyDirichlet("at least one edge must be fixed, otherwise K is singular")
    M_raw, K_raw = assemble_global(mesh, mat)
    fixed = fixed_nodes(mesh)
    is_free = np.ones(mesh.n_raw_dofs, dtype=bool)
    for node in fixed:
        is_free[2 * node : 2 * node + 2] = False
    free = np.flatnonzero(is_free)
    dof_map = np.full(mesh.n_raw_dofs, -1, dtype=np.int64)
    dof_map[free] = np.arange(free.size)
    dof_map = dof_map.reshape(-1, 2)

    M = SparseSymMatrix.from_scipy(M_raw[free][:, free])
    K = SparseSymMatrix.from_scipy(K_raw[free][:, free])

    m = len(mesh.pairs)
    rows, cols, vals = [], [], []
    b = np.zeros(m)
    for r, p in enumerate(mesh.pairs):
        rows += [r, r]
        cols += [dof_map[p.right, p.axis], dof_map[p.left, p.axis]]
        vals += [1.0, -1.0]
        b[r] = mesh.coords[p.right, p.axis] - mesh.coords[p.left, p.axis]
    C = sp.csr_matrix((vals, (rows, cols)), shape=(m, free.size))

    pattern_raw = np.zeros(mesh.n_raw_dofs)
    node = mesh.nearest_node(*load.position, side=load.side)
    dx, dy = load.unit_direction
    pattern_raw[2 * node] += load.amplitude * dx
    pattern_raw[2 * node + 1] += load.amplitude * dy
    if any(load.body_force):
        for conn in mesh.elements:
            fe = element_body_force(mesh.coords[conn], load.body_force)
            dofs = np.column_stack([2 * conn, 2 * conn + 1]).ravel()
            np.add.at(pattern_raw, dofs, load.amplitude * fe)

    return ContactSystem(
        M=M,
        K=K,
        C=C,
        b=b,
        load_pattern=pattern_raw[free],
        time_function=load.time_factor,
        dof_map=dof_map,
        contact_pairs=tuple(mesh.pairs),
        n_raw=mesh.n_raw_dofs,
        mesh=mesh,
    )


def load_vector(sys: ContactSystem, t):
    return sys.f(t)


def write_mesh(mesh: Mesh, path):
    """Plain-text node/element listing for external viewers."""
    with open(path, "w") as fh:
        fh.write(f"nodes {mesh.n_nodes}\n")
        for k, (x, y) in enumerate(mesh.coords):
            fh.write(f"{k} {x:.17g} {y:.17g}\n")
        fh.write(f"elements {mesh.elements.shape[0]}\n")
        for k, conn in enumerate(mesh.elements):
            fh.write(f"{k} {' '.join(str(int(n)) for n in conn)}\n")
        fh.write(f"contact_pairs {len(mesh.pairs)}\n")
        for k, p in enumerate(mesh.pairs):
            fh.write(f"{k} {p.left} {p.right} {'xy'[p.axis]}\n")
