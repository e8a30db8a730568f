"""Conforming triangle meshes with uniform (red) and newest-vertex bisection refinement.

Conventions:
  - cells store vertex indices counterclockwise; local edge i is opposite
    local vertex i, so edge 0 = (v1,v2), edge 1 = (v2,v0), edge 2 = (v0,v1)
  - the bisection refinement edge of a cell is always its local edge 2,
    i.e. the edge between local vertices 0 and 1; constructors and uniform
    refinement anchor the longest edge there
  - global edges are stored with the lower node index first; the tangent
    points from lower to higher node index
  - edge normals point away from the lower-indexed adjacent cell
    (edge_cells[e, 0]); for boundary edges that is the outward direction
"""

import numpy as np

_LOCAL_EDGES = ((1, 2), (2, 0), (0, 1))


class Mesh:
    """Immutable conforming triangulation; connectivity derived at construction."""

    def __init__(self, nodes, cells):
        self.nodes = np.ascontiguousarray(nodes, dtype=float)
        self.cells = np.ascontiguousarray(cells, dtype=np.int64)
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 2:
            raise ValueError("nodes must have shape (N, 2)")
        if self.cells.ndim != 2 or self.cells.shape[1] != 3:
            raise ValueError("cells must have shape (C, 3)")

        p = self.nodes[self.cells]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        self.cell_areas = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        if np.any(self.cell_areas <= 0):
            bad = int(np.argmin(self.cell_areas))
            raise ValueError(f"cell {bad} is not counterclockwise (area {self.cell_areas[bad]:g})")
        self.cell_centroids = p.mean(axis=1)

        self._build_edges()

        self.edge_vectors = self.nodes[self.edges[:, 1]] - self.nodes[self.edges[:, 0]]
        self.edge_lengths = np.hypot(self.edge_vectors[:, 0], self.edge_vectors[:, 1])
        self.edge_tangents = self.edge_vectors / self.edge_lengths[:, None]
        normals = np.stack([self.edge_tangents[:, 1], -self.edge_tangents[:, 0]], axis=1)
        # flip so the normal points away from the first adjacent cell
        mid = 0.5 * (self.nodes[self.edges[:, 0]] + self.nodes[self.edges[:, 1]])
        away = mid - self.cell_centroids[self.edge_cells[:, 0]]
        flip = np.einsum("ij,ij->i", normals, away) < 0
        normals[flip] *= -1.0
        self.edge_normals = normals

        self.cell_diameters = self.edge_lengths[self.cell_edges].max(axis=1)
        self.boundary_edges = self.edge_cells[:, 1] < 0
        bnodes = np.zeros(len(self.nodes), dtype=bool)
        bnodes[self.edges[self.boundary_edges].ravel()] = True
        self.boundary_nodes = bnodes

    def _build_edges(self):
        c = self.cells
        pairs = np.concatenate([c[:, list(le)] for le in _LOCAL_EDGES])
        pairs_sorted = np.sort(pairs, axis=1)
        self.edges, inverse = np.unique(pairs_sorted, axis=0, return_inverse=True)
        ncells = len(c)
        self.cell_edges = inverse.reshape(3, ncells).T.copy()

        counts = np.bincount(inverse, minlength=len(self.edges))
        if counts.max() > 2:
            raise ValueError("non-conforming mesh: edge shared by more than two cells")
        cell_ids = np.tile(np.arange(ncells, dtype=np.int64), 3)
        lo = np.full(len(self.edges), ncells, dtype=np.int64)
        hi = np.full(len(self.edges), -1, dtype=np.int64)
        np.minimum.at(lo, inverse, cell_ids)
        np.maximum.at(hi, inverse, cell_ids)
        # slot 0 holds the lower-indexed cell, slot 1 is -1 on the boundary
        self.edge_cells = np.stack([lo, np.where(counts == 2, hi, -1)], axis=1)

    @property
    def num_nodes(self):
        return len(self.nodes)

    @property
    def num_cells(self):
        return len(self.cells)

    @property
    def num_edges(self):
        return len(self.edges)

    def min_angle(self):
        """Smallest interior angle over all cells, in radians."""
        p = self.nodes[self.cells]
        worst = np.inf
        for i in range(3):
            a = p[:, (i + 1) % 3] - p[:, i]
            b = p[:, (i + 2) % 3] - p[:, i]
            cosang = np.einsum("ij,ij->i", a, b) / (
                np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
            )
            worst = min(worst, np.arccos(np.clip(cosang, -1, 1)).min())
        return float(worst)

    def refine_uniform(self):
        """Red refinement: each cell splits into four congruent children."""
        nn = self.num_nodes
        midpoints = 0.5 * (self.nodes[self.edges[:, 0]] + self.nodes[self.edges[:, 1]])
        nodes = np.vstack([self.nodes, midpoints])
        m = self.cell_edges + nn  # midpoint node of local edge i
        v = self.cells
        children = np.concatenate(
            [
                np.stack([v[:, 0], m[:, 2], m[:, 1]], axis=1),
                np.stack([v[:, 1], m[:, 0], m[:, 2]], axis=1),
                np.stack([v[:, 2], m[:, 1], m[:, 0]], axis=1),
                np.stack([m[:, 0], m[:, 1], m[:, 2]], axis=1),
            ]
        )
        return Mesh(nodes, _anchor_longest_edge(nodes, children))

    def refine_adaptive(self, marked_cells):
        """Newest-vertex bisection of the marked cells, with recursive closure.

        Closure marks the refinement edge of any cell that has some marked
        edge; marks only grow and are bounded by the edge count, so the loop
        terminates.  The result is conforming.
        """
        marked_cells = np.asarray(marked_cells)
        if marked_cells.dtype == bool:
            marked_cells = np.flatnonzero(marked_cells)
        marked_cells = marked_cells.astype(np.int64, copy=False)
        marked_edge = np.zeros(self.num_edges, dtype=bool)
        marked_edge[self.cell_edges[marked_cells, 2]] = True

        while True:
            cell_has_mark = marked_edge[self.cell_edges].any(axis=1)
            need = cell_has_mark & ~marked_edge[self.cell_edges[:, 2]]
            if not need.any():
                break
            marked_edge[self.cell_edges[need, 2]] = True

        if not marked_edge.any():
            return self

        new_index = np.full(self.num_edges, -1, dtype=np.int64)
        new_index[marked_edge] = self.num_nodes + np.arange(int(marked_edge.sum()))
        midpoints = 0.5 * (
            self.nodes[self.edges[marked_edge, 0]] + self.nodes[self.edges[marked_edge, 1]]
        )
        nodes = np.vstack([self.nodes, midpoints])

        out = []
        for cell, le in zip(self.cells, self.cell_edges):
            v0, v1, v2 = cell
            m0, m1, m2 = new_index[le]
            if m2 < 0:
                out.append((v0, v1, v2))
                continue
            # bisect the refinement edge, then recurse into whichever child
            # carries another marked edge
            if m1 >= 0:
                out.append((m2, v2, m1))
                out.append((v0, m2, m1))
            else:
                out.append((v2, v0, m2))
            if m0 >= 0:
                out.append((m2, v1, m0))
                out.append((v2, m2, m0))
            else:
                out.append((v1, v2, m2))
        return Mesh(nodes, np.asarray(out, dtype=np.int64))


def _anchor_longest_edge(nodes, cells):
    """Rotate each cell's vertex order so its longest edge joins local 0 and 1."""
    p = nodes[cells]
    lengths = np.stack(
        [np.linalg.norm(p[:, j] - p[:, i], axis=1) for i, j in _LOCAL_EDGES], axis=1
    )
    longest = np.argmax(lengths, axis=1)
    rotated = cells.copy()
    r0 = longest == 0  # -> (v1, v2, v0)
    rotated[r0] = cells[r0][:, [1, 2, 0]]
    r1 = longest == 1  # -> (v2, v0, v1)
    rotated[r1] = cells[r1][:, [2, 0, 1]]
    return rotated


def unit_square(n):
    """Structured mesh of (0,1)^2: n x n squares, each split along its diagonal."""
    if n < 1:
        raise ValueError("n must be >= 1")
    xs = np.linspace(0.0, 1.0, n + 1)
    xx, yy = np.meshgrid(xs, xs, indexing="ij")
    nodes = np.stack([xx.ravel(), yy.ravel()], axis=1)

    def idx(i, j):
        return i * (n + 1) + j

    cells = []
    for i in range(n):
        for j in range(n):
            a, b = idx(i, j), idx(i + 1, j)
            c, d = idx(i + 1, j + 1), idx(i, j + 1)
            cells.append((a, b, c))
            cells.append((a, c, d))
    cells = np.asarray(cells, dtype=np.int64)
    return Mesh(nodes, _anchor_longest_edge(nodes, cells))


def lshape(n):
    """Structured mesh of (-1,1)^2 minus the fourth quadrant.

    Each retained grid square is split along the diagonal pointing toward the
    reentrant corner at the origin, so (0,0) is always a mesh node.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    m = 2 * n
    xs = np.linspace(-1.0, 1.0, m + 1)
    keep = np.ones((m + 1, m + 1), dtype=bool)
    for i in range(m + 1):
        for j in range(m + 1):
            if xs[i] > 0 and xs[j] < 0:
                keep[i, j] = False
    index = np.full((m + 1, m + 1), -1, dtype=np.int64)
    index[keep] = np.arange(int(keep.sum()))
    nodes = np.stack([np.repeat(xs, m + 1)[keep.ravel()], np.tile(xs, m + 1)[keep.ravel()]], axis=1)

    cells = []
    for i in range(m):
        for j in range(m):
            xc = 0.5 * (xs[i] + xs[i + 1])
            yc = 0.5 * (xs[j] + xs[j + 1])
            if xc > 0 and yc < 0:
                continue
            a, b = index[i, j], index[i + 1, j]
            c, d = index[i + 1, j + 1], index[i, j + 1]
            if xc < 0 and yc > 0:
                # second quadrant: diagonal from (high, low) to (low, high)
                cells.append((a, b, d))
                cells.append((b, c, d))
            else:
                cells.append((a, b, c))
                cells.append((a, c, d))
    cells = np.asarray(cells, dtype=np.int64)
    return Mesh(nodes, _anchor_longest_edge(nodes, cells))


def dump_mesh(mesh, path):
    """Plain-text dump: header `nodes <N> cells <C>`, node lines `x y`,
    cell lines `i j k boundary_code` where boundary_code counts the cell's
    boundary edges."""
    codes = mesh.boundary_edges[mesh.cell_edges].sum(axis=1)
    with open(path, "w") as fh:
        fh.write(f"nodes {mesh.num_nodes} cells {mesh.num_cells}\n")
        for x, y in mesh.nodes:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        for (i, j, k), code in zip(mesh.cells, codes):
            fh.write(f"{i} {j} {k} {code}\n")


def load_mesh(path):
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 4 or header[0] != "nodes" or header[2] != "cells":
            raise ValueError(f"malformed mesh header in {path}")
        nn, nc = int(header[1]), int(header[3])
        nodes = np.array([[float(v) for v in fh.readline().split()] for _ in range(nn)])
        cells = np.array(
            [[int(v) for v in fh.readline().split()[:3]] for _ in range(nc)], dtype=np.int64
        )
    return Mesh(nodes, cells)
