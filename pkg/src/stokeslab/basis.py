"""Reference elements, degree-of-freedom layouts, and the mixed element pairs.

Reference triangle: vertices (0,0), (1,0), (0,1), barycentrics
(1-x-y, x, y).  Scalar spaces:

  p1    vertex Lagrange basis
  p2    vertex + edge-midpoint Lagrange basis; edge function i sits on the
        edge opposite vertex i
  p1b   p1 plus the cubic cell bubble 27*l1*l2*l3 (hierarchical)
  p2b   p2 plus the cubic cell bubble
  p0    cellwise constant
  p1dc  cellwise linear, discontinuous, 3 dofs per cell at the vertices

Velocity spaces are two copies of a scalar space, numbered x-block then
y-block.  Third derivatives are supplied because the curl of the cellwise
Laplacian of a velocity field is needed downstream.
"""

from dataclasses import dataclass, replace

import numpy as np

SCALAR_SPACES = ("p1", "p2", "p1b", "p2b", "p0", "p1dc")

# local dof slot of the cell bubble, or -1
BUBBLE_SLOT = {"p1b": 3, "p2b": 6}


def space_dim(space):
    return {"p1": 3, "p2": 6, "p1b": 4, "p2b": 7, "p0": 1, "p1dc": 3}[space]


def _bubble_val(x, y):
    return 27.0 * x * y * (1.0 - x - y)


def shape_values(space, pts):
    """Values of all reference basis functions: shape (nb, npts)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    x, y = pts[:, 0], pts[:, 1]
    l0 = 1.0 - x - y
    if space in ("p1", "p1dc"):
        return np.stack([l0, x, y])
    if space == "p0":
        return np.ones((1, len(x)))
    if space == "p1b":
        return np.stack([l0, x, y, _bubble_val(x, y)])
    p2 = np.stack(
        [
            l0 * (2.0 * l0 - 1.0),
            x * (2.0 * x - 1.0),
            y * (2.0 * y - 1.0),
            4.0 * x * y,
            4.0 * y * l0,
            4.0 * x * l0,
        ]
    )
    if space == "p2":
        return p2
    if space == "p2b":
        return np.vstack([p2, _bubble_val(x, y)[None, :]])
    raise ValueError(f"unknown scalar space {space!r}")


def shape_gradients(space, pts):
    """Reference gradients: shape (nb, npts, 2)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    x, y = pts[:, 0], pts[:, 1]
    zero = np.zeros_like(x)
    one = np.ones_like(x)
    if space in ("p1", "p1dc"):
        g = [(-one, -one), (one, zero), (zero, one)]
    elif space == "p0":
        g = [(zero, zero)]
    elif space == "p1b":
        g = [
            (-one, -one),
            (one, zero),
            (zero, one),
            (27.0 * y * (1.0 - 2.0 * x - y), 27.0 * x * (1.0 - x - 2.0 * y)),
        ]
    elif space in ("p2", "p2b"):
        s = 4.0 * (x + y) - 3.0
        g = [
            (s, s),
            (4.0 * x - 1.0, zero),
            (zero, 4.0 * y - 1.0),
            (4.0 * y, 4.0 * x),
            (-4.0 * y, 4.0 - 4.0 * x - 8.0 * y),
            (4.0 - 8.0 * x - 4.0 * y, -4.0 * x),
        ]
        if space == "p2b":
            g.append((27.0 * y * (1.0 - 2.0 * x - y), 27.0 * x * (1.0 - x - 2.0 * y)))
    else:
        raise ValueError(f"unknown scalar space {space!r}")
    return np.stack([np.stack(pair, axis=-1) for pair in g])


def shape_hessians(space, pts):
    """Reference second derivatives: shape (nb, npts, 2, 2)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    x, y = pts[:, 0], pts[:, 1]
    n = len(x)
    zero = np.zeros_like(x)

    def const(hxx, hxy, hyy):
        return np.broadcast_to(np.array([[hxx, hxy], [hxy, hyy]]), (n, 2, 2))

    def bubble():
        h = np.empty((n, 2, 2))
        h[:, 0, 0] = -54.0 * y
        h[:, 0, 1] = h[:, 1, 0] = 27.0 * (1.0 - 2.0 * x - 2.0 * y)
        h[:, 1, 1] = -54.0 * x
        return h

    if space in ("p1", "p1dc"):
        rows = [const(0, 0, 0)] * 3
    elif space == "p0":
        rows = [const(0, 0, 0)]
    elif space == "p1b":
        rows = [const(0, 0, 0)] * 3 + [bubble()]
    elif space in ("p2", "p2b"):
        rows = [
            const(4, 4, 4),
            const(4, 0, 0),
            const(0, 0, 4),
            const(0, 4, 0),
            const(0, -4, -8),
            const(-8, -4, 0),
        ]
        if space == "p2b":
            rows.append(bubble())
    else:
        raise ValueError(f"unknown scalar space {space!r}")
    _ = zero
    return np.stack(rows)


def shape_third_derivatives(space, pts):
    """Reference third derivatives: shape (nb, npts, 2, 2, 2).

    Only the cubic bubble has nonzero entries: every index combination with
    both coordinates present equals -54.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    n = pts.shape[0]
    nb = space_dim(space)
    out = np.zeros((nb, n, 2, 2, 2))
    slot = BUBBLE_SLOT.get(space, -1)
    if slot >= 0:
        t = np.zeros((2, 2, 2))
        for i in range(2):
            for j in range(2):
                for k in range(2):
                    if {i, j, k} == {0, 1}:
                        t[i, j, k] = -54.0
        out[slot] = t
    return out


@dataclass(frozen=True)
class ScalarLayout:
    """Global numbering of one scalar space on a mesh."""

    space: str
    ndof: int
    cell_dofs: np.ndarray  # (C, nb)
    boundary: np.ndarray  # (ndof,) bool
    dof_points: np.ndarray  # (ndof, 2) nominal locations


def build_scalar_layout(mesh, space):
    nn, ne, nc = mesh.num_nodes, mesh.num_edges, mesh.num_cells
    midpoints = 0.5 * (mesh.nodes[mesh.edges[:, 0]] + mesh.nodes[mesh.edges[:, 1]])
    if space == "p1":
        return ScalarLayout(space, nn, mesh.cells.copy(), mesh.boundary_nodes.copy(), mesh.nodes.copy())
    if space == "p2":
        cd = np.hstack([mesh.cells, nn + mesh.cell_edges])
        bd = np.concatenate([mesh.boundary_nodes, mesh.boundary_edges])
        pts = np.vstack([mesh.nodes, midpoints])
        return ScalarLayout(space, nn + ne, cd, bd, pts)
    if space == "p1b":
        cd = np.hstack([mesh.cells, nn + np.arange(nc)[:, None]])
        bd = np.concatenate([mesh.boundary_nodes, np.zeros(nc, dtype=bool)])
        pts = np.vstack([mesh.nodes, mesh.cell_centroids])
        return ScalarLayout(space, nn + nc, cd, bd, pts)
    if space == "p2b":
        cd = np.hstack([mesh.cells, nn + mesh.cell_edges, nn + ne + np.arange(nc)[:, None]])
        bd = np.concatenate(
            [mesh.boundary_nodes, mesh.boundary_edges, np.zeros(nc, dtype=bool)]
        )
        pts = np.vstack([mesh.nodes, midpoints, mesh.cell_centroids])
        return ScalarLayout(space, nn + ne + nc, cd, bd, pts)
    if space == "p0":
        cd = np.arange(nc, dtype=np.int64)[:, None]
        return ScalarLayout(space, nc, cd, np.zeros(nc, dtype=bool), mesh.cell_centroids.copy())
    if space == "p1dc":
        cd = np.arange(3 * nc, dtype=np.int64).reshape(nc, 3)
        pts = mesh.nodes[mesh.cells].reshape(-1, 2)
        return ScalarLayout(space, 3 * nc, cd, np.zeros(3 * nc, dtype=bool), pts)
    raise ValueError(f"unknown scalar space {space!r}")


def interpolate(mesh, layout, fn):
    """Coefficients of the nodal/hierarchical interpolant of fn(pts)->(n,).

    Vertex and edge dofs take point values; the cell bubble takes the
    residual at the centroid so that functions already in the space are
    reproduced exactly.
    """
    vals = np.asarray(fn(layout.dof_points), dtype=float)
    coef = vals.copy()
    slot = BUBBLE_SLOT.get(layout.space, -1)
    if slot >= 0:
        ref_c = shape_values(layout.space, np.array([[1.0 / 3.0, 1.0 / 3.0]]))[:, 0]
        cd = layout.cell_dofs
        base = (coef[cd[:, :slot]] * ref_c[:slot]).sum(axis=1)
        coef[cd[:, slot]] = vals[cd[:, slot]] - base
    return coef


@dataclass(frozen=True)
class ElementPair:
    """A velocity/pressure pairing with its approximation orders."""

    name: str
    velocity_space: str
    pressure_space: str
    order: int  # optimal H1 velocity order k
    pressure_order: int  # pressure L2 order q
    pressure_continuous: bool


PAIRS = {
    "th2": ElementPair("th2", "p2", "p1", 2, 2, True),
    "mini": ElementPair("mini", "p1b", "p1", 1, 1, True),
    "p2p0": ElementPair("p2p0", "p2", "p0", 1, 1, False),
    "p2b": ElementPair("p2b", "p2b", "p1dc", 2, 2, False),
}


@dataclass(frozen=True)
class PairSpaces:
    """Velocity and pressure layouts of a pair on one mesh.

    Velocity dofs are numbered x-block then y-block on top of the scalar
    layout, so velocity dof (comp, i) = comp * vel.ndof + i.
    """

    pair: ElementPair
    vel: ScalarLayout
    pre: ScalarLayout

    @property
    def num_velocity_dofs(self):
        return 2 * self.vel.ndof

    @property
    def num_pressure_dofs(self):
        return self.pre.ndof

    @property
    def ndof(self):
        return 2 * self.vel.ndof + self.pre.ndof

    def dirichlet_velocity_dofs(self):
        scalar = np.flatnonzero(self.vel.boundary)
        return np.concatenate([scalar, scalar + self.vel.ndof])


def build_pair_spaces(mesh, pair):
    if isinstance(pair, str):
        try:
            pair = PAIRS[pair]
        except KeyError:
            raise ValueError(
                f"unknown element pair {pair!r}; choose from {sorted(PAIRS)}"
            ) from None
    pre = build_scalar_layout(mesh, pair.pressure_space)
    # pressure dofs are never Dirichlet-constrained
    pre = replace(pre, boundary=np.zeros(pre.ndof, dtype=bool))
    return PairSpaces(pair, build_scalar_layout(mesh, pair.velocity_space), pre)
