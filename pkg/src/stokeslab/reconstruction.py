"""Divergence-preserving reconstruction of velocities into H(div) spaces.

Discrete velocity fields are interpolated into the Brezzi-Douglas-Marini
space of matching order (BDM1 for order-1 pairs, BDM2 for order-2 pairs).
The interpolant matches the input's edge normal moments (and, for BDM2,
interior moments against gradients of linears and the curl of the cell
bubble), which yields

  * a normal-continuous, H(div)-conforming image,
  * div(Pi v_h) = 0 whenever v_h is discretely divergence-free, because
    div(Pi v_h) is the elementwise L2 projection of div v_h onto the
    pressure polynomial degree,
  * exact preservation of elementwise constant vector moments for BDM2
    (the interior functionals contain integrals against all constants).

Constant-moment preservation is structurally impossible for BDM1 alongside
divergence-free images: integration by parts forces
int_T (v - Pi v) . c dx = -int_T (c . x) (div v - div Pi v) dx, and a
P0-pressure kernel only controls the cell mean of div v, not its first
moments.  The tested contract for BDM1 is therefore edge-moment
preservation plus the divergence identity above.

All local bases are built per cell in diameter-scaled monomials via a
generalized Vandermonde solve; no reference-element Piola mapping is used,
so edge functionals can be written directly in the global edge orientation
(parameter running from the lower- to the higher-indexed node).
"""

from dataclasses import dataclass

import numpy as np

from .basis import shape_values, space_dim
from .quadrature import edge_rule, triangle_rule

_MONO_EXPS = {
    1: ((0, 0), (1, 0), (0, 1)),
    2: ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)),
}

_REF_VERTS = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])

# operator order per element pair in pressure-robust mode
OPERATOR_FOR_PAIR = {"p2p0": "bdm1", "p2b": "bdm2"}


class UnsupportedConfigurationError(ValueError):
    """A requested pair/mode combination has no implemented operator."""


def operator_tag(pair_name, mode):
    """Reconstruction tag for a pair and mode ("classical"/"robust")."""
    if mode == "classical":
        return "identity"
    if mode != "robust":
        raise ValueError(f"unknown mode {mode!r}; choose 'classical' or 'robust'")
    try:
        return OPERATOR_FOR_PAIR[pair_name]
    except KeyError:
        raise UnsupportedConfigurationError(
            f"no divergence-preserving reconstruction is implemented for pair "
            f"{pair_name!r}; pressure-robust runs support {sorted(OPERATOR_FOR_PAIR)}"
        ) from None


def _legendre01(k, s):
    """Legendre polynomial of degree k shifted to [0, 1]."""
    if k == 0:
        return np.ones_like(s)
    if k == 1:
        return 2.0 * s - 1.0
    if k == 2:
        return 6.0 * s * s - 6.0 * s + 1.0
    raise ValueError(f"edge moment degree {k} not supported")


def _mono_values(X, Y, exps):
    return np.stack([X**a * Y**b for a, b in exps], axis=-1)


def _bubble_ref(pts):
    x, y = pts[..., 0], pts[..., 1]
    val = 27.0 * x * y * (1.0 - x - y)
    grad = np.stack(
        [27.0 * y * (1.0 - 2.0 * x - y), 27.0 * x * (1.0 - x - 2.0 * y)], axis=-1
    )
    return val, grad


@dataclass(frozen=True)
class ReconstructionOp:
    """Per-cell interpolation data for one reconstruction operator.

    Local H(div) basis functions are stored as coefficient tensors over
    diameter-scaled monomials centered at each cell centroid.  Column
    order of local_interp follows the velocity layout: x-component scalar
    dofs first, then y-component.
    """

    tag: str
    mesh: object
    degree: int
    ndof: int
    cell_dofs: np.ndarray  # (C, nldof) global H(div) dof ids
    local_interp: np.ndarray  # (C, nldof, 2*nvb) velocity dofs -> H(div) dofs
    basis_coeff: np.ndarray  # (C, nldof, 2, nmono)
    div_coeff: np.ndarray  # (C, nldof, nmono)
    velocity_space: str

    @property
    def is_identity(self):
        return self.tag == "identity"


def identity_reconstruction(mesh, velocity_space):
    return ReconstructionOp(
        "identity", mesh, 0, 0, None, None, None, None, velocity_space
    )


def _physical_points(mesh, ref_pts):
    """Map reference points into every cell: (C, nq, 2)."""
    p = mesh.nodes[mesh.cells]
    return (
        p[:, None, 0, :]
        + ref_pts[None, :, 0, None] * (p[:, 1] - p[:, 0])[:, None, :]
        + ref_pts[None, :, 1, None] * (p[:, 2] - p[:, 0])[:, None, :]
    )


def _scaled_monomials(centers, scales, pts_phys, exps):
    X = (pts_phys[..., 0] - centers[:, None, 0]) / scales[:, None]
    Y = (pts_phys[..., 1] - centers[:, None, 1]) / scales[:, None]
    return _mono_values(X, Y, exps)


def build_reconstruction(mesh, spaces, tag):
    """Assemble local bases and interpolation matrices for one operator."""
    vel_space = spaces.pair.velocity_space
    if tag == "identity":
        return identity_reconstruction(mesh, vel_space)
    if tag not in ("bdm1", "bdm2"):
        raise ValueError(f"unknown reconstruction tag {tag!r}")
    deg = 1 if tag == "bdm1" else 2
    exps = _MONO_EXPS[deg]
    nmono = len(exps)
    nem = deg + 1  # edge moments per edge
    nldof = 2 * nmono
    nvb = space_dim(vel_space)
    C = mesh.num_cells
    E = mesh.num_edges
    centers = mesh.cell_centroids
    h = mesh.cell_diameters
    ce = mesh.cell_edges

    s_q, w_q = edge_rule(5)
    nq_e = len(s_q)
    WL = np.stack([w_q * _legendre01(k, s_q) for k in range(nem)])  # (nem, nq)

    # physical quadrature points along each cell edge, in the global
    # lower-to-higher node direction shared by both adjacent cells
    lo = mesh.nodes[mesh.edges[ce, 0]]  # (C, 3, 2)
    vec = mesh.edge_vectors[ce]
    pe = lo[:, :, None, :] + s_q[None, None, :, None] * vec[:, :, None, :]
    Xe = (pe[..., 0] - centers[:, None, None, 0]) / h[:, None, None]
    Ye = (pe[..., 1] - centers[:, None, None, 1]) / h[:, None, None]
    ME = _mono_values(Xe, Ye, exps)  # (C, 3, nq, nmono)
    n_ed = mesh.edge_normals[ce]  # (C, 3, 2)

    edge_rows = np.einsum("kq,clqm->clkm", WL, ME)
    D_edge = np.einsum("cle,clkm->clkem", n_ed, edge_rows).reshape(
        C, 3 * nem, nldof
    )

    # velocity trace values need reference coordinates that follow the same
    # global direction; orientation says whether local vertex li+1 is the
    # lower-indexed node of local edge li
    ori = (mesh.cells[:, [1, 2, 0]] == mesh.edges[ce, 0]).astype(np.int64)
    PHIW = np.empty((3, 2, nem, nvb))
    for li in range(3):
        a = _REF_VERTS[(li + 1) % 3]
        b = _REF_VERTS[(li + 2) % 3]
        for o, (start, end) in enumerate(((b, a), (a, b))):
            pts = start[None, :] + s_q[:, None] * (end - start)[None, :]
            PHIW[li, o] = WL @ shape_values(vel_space, pts).T
    PHIW_sel = PHIW[np.arange(3)[None, :], ori]  # (C, 3, nem, nvb)
    T_edge = np.einsum("cle,clks->clkes", n_ed, PHIW_sel).reshape(
        C, 3 * nem, 2 * nvb
    )

    if deg == 1:
        D = D_edge
        T_vec = T_edge
    else:
        xt, wt = triangle_rule(6)
        pt = _physical_points(mesh, xt)
        MT = _scaled_monomials(centers, h, pt, exps)  # (C, nqt, nmono)

        p = mesh.nodes[mesh.cells]
        B = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)  # (C,2,2)
        det = B[:, 0, 0] * B[:, 1, 1] - B[:, 0, 1] * B[:, 1, 0]
        Binv = (
            np.stack(
                [
                    np.stack([B[:, 1, 1], -B[:, 0, 1]], axis=-1),
                    np.stack([-B[:, 1, 0], B[:, 0, 0]], axis=-1),
                ],
                axis=1,
            )
            / det[:, None, None]
        )
        grads_lam = Binv  # row i is the gradient of barycentric lambda_{i+1}

        _, gb_ref = _bubble_ref(xt)
        gb_phys = np.einsum("cij,qi->cqj", Binv, gb_ref)
        curl_b = np.stack([gb_phys[..., 1], -gb_phys[..., 0]], axis=-1)

        mono_mean = 2.0 * np.einsum("q,cqm->cm", wt, MT)
        D_grad = np.einsum("c,cm,cie->ciem", h, mono_mean, grads_lam).reshape(
            C, 2, nldof
        )
        D_curl = (
            2.0
            * h[:, None]
            * np.einsum("q,cqe,cqm->cem", wt, curl_b, MT).reshape(C, nldof)
        )[:, None, :]
        D = np.concatenate([D_edge, D_grad, D_curl], axis=1)

        PHIT = shape_values(vel_space, xt)  # (nvb, nqt)
        phi_mean = 2.0 * np.einsum("q,sq->s", wt, PHIT)
        T_grad = np.einsum("c,s,cie->cies", h, phi_mean, grads_lam).reshape(
            C, 2, 2 * nvb
        )
        T_curl = (
            2.0
            * h[:, None]
            * np.einsum("q,cqe,sq->ces", wt, curl_b, PHIT).reshape(C, 2 * nvb)
        )[:, None, :]
        T_vec = np.concatenate([T_edge, T_grad, T_curl], axis=1)

    basis_coeff = np.transpose(np.linalg.inv(D), (0, 2, 1)).reshape(
        C, nldof, 2, nmono
    )
    # the basis is nodal w.r.t. the dof functionals, so interpolation
    # coefficients are the dof values of the input field themselves
    local_interp = T_vec

    div_coeff = np.zeros((C, nldof, nmono))
    index = {e: i for i, e in enumerate(exps)}
    for m, (a, b) in enumerate(exps):
        if a > 0:
            div_coeff[:, :, index[(a - 1, b)]] += basis_coeff[:, :, 0, m] * (
                a / h[:, None]
            )
        if b > 0:
            div_coeff[:, :, index[(a, b - 1)]] += basis_coeff[:, :, 1, m] * (
                b / h[:, None]
            )

    if deg == 1:
        cell_dofs = (2 * ce[:, :, None] + np.arange(2)).reshape(C, nldof)
        ndof = 2 * E
    else:
        edge_part = (3 * ce[:, :, None] + np.arange(3)).reshape(C, 9)
        cell_part = 3 * E + 3 * np.arange(C)[:, None] + np.arange(3)
        cell_dofs = np.hstack([edge_part, cell_part])
        ndof = 3 * E + 3 * C

    return ReconstructionOp(
        tag,
        mesh,
        deg,
        ndof,
        cell_dofs,
        local_interp,
        basis_coeff,
        div_coeff,
        vel_space,
    )


def _local_velocity(op, spaces, u):
    u2 = np.asarray(u).reshape(2, spaces.vel.ndof)
    uloc = u2[:, spaces.vel.cell_dofs]  # (2, C, nvb)
    return np.transpose(uloc, (1, 0, 2)).reshape(op.mesh.num_cells, -1)


def interpolate(op, spaces, u):
    """Global H(div) coefficients of the reconstructed velocity field."""
    if op.is_identity:
        return np.asarray(u, dtype=float).copy()
    uloc = _local_velocity(op, spaces, u)
    gamma_loc = np.einsum("crj,cj->cr", op.local_interp, uloc)
    gamma = np.empty(op.ndof)
    gamma[op.cell_dofs] = gamma_loc
    return gamma


def _monomials_at(op, ref_pts):
    pts = _physical_points(op.mesh, np.asarray(ref_pts, dtype=float))
    exps = _MONO_EXPS[op.degree]
    return _scaled_monomials(
        op.mesh.cell_centroids, op.mesh.cell_diameters, pts, exps
    )


def hdiv_values(op, gamma, ref_pts):
    """Reconstructed field at shared reference points: (C, nq, 2)."""
    M = _monomials_at(op, ref_pts)
    gloc = gamma[op.cell_dofs]
    return np.einsum("cr,crem,cqm->cqe", gloc, op.basis_coeff, M)


def hdiv_divergence(op, gamma, ref_pts):
    """Divergence of the reconstructed field at reference points: (C, nq)."""
    M = _monomials_at(op, ref_pts)
    gloc = gamma[op.cell_dofs]
    return np.einsum("cr,crm,cqm->cq", gloc, op.div_coeff, M)


def cell_basis_values(op, ref_pts):
    """Local H(div) basis values at reference points: (C, nldof, nq, 2)."""
    M = _monomials_at(op, ref_pts)
    return np.einsum("crem,cqm->crqe", op.basis_coeff, M)


def velocity_values(mesh, spaces, u, ref_pts):
    """Velocity field values at shared reference points: (C, nq, 2)."""
    phi = shape_values(spaces.pair.velocity_space, np.asarray(ref_pts, dtype=float))
    u2 = np.asarray(u).reshape(2, spaces.vel.ndof)
    uloc = u2[:, spaces.vel.cell_dofs]  # (2, C, nvb)
    return np.einsum("ecs,sq->cqe", uloc, phi)


def consistency_defect(op, spaces, u, g, degree=8):
    """max_T |int_T (v - Pi v) . g dx| for a vector weight g.

    g may be a constant pair or a callable mapping physical points (..., 2)
    to values (..., 2).
    """
    mesh = op.mesh
    xt, wt = triangle_rule(degree)
    diff = velocity_values(mesh, spaces, u, xt)
    if not op.is_identity:
        gamma = interpolate(op, spaces, u)
        diff = diff - hdiv_values(op, gamma, xt)
    pts = _physical_points(mesh, xt)
    if callable(g):
        gv = np.asarray(g(pts), dtype=float)
    else:
        gv = np.broadcast_to(np.asarray(g, dtype=float), pts.shape)
    cellwise = 2.0 * mesh.cell_areas * np.einsum(
        "q,cqe,cqe->c", wt, diff, gv
    )
    return float(np.max(np.abs(cellwise))) if len(cellwise) else 0.0


def edge_moment_defect(op, spaces, u, degree=9):
    """Largest violated edge normal moment of v - Pi v, side by side.

    Every cell evaluates its own polynomial on each of its edges, so the
    maximum also covers single-valuedness of the interpolated moments.
    """
    if op.is_identity:
        return 0.0
    mesh = op.mesh
    gamma = interpolate(op, spaces, u)
    s_q, w_q = edge_rule(degree)
    nem = op.degree + 1
    WL = np.stack([w_q * _legendre01(k, s_q) for k in range(nem)])
    ce = mesh.cell_edges
    n_ed = mesh.edge_normals[ce]
    ori = (mesh.cells[:, [1, 2, 0]] == mesh.edges[ce, 0]).astype(np.int64)
    worst = 0.0
    for li in range(3):
        a = _REF_VERTS[(li + 1) % 3]
        b = _REF_VERTS[(li + 2) % 3]
        for o, (start, end) in enumerate(((b, a), (a, b))):
            sel = ori[:, li] == o
            if not np.any(sel):
                continue
            pts = start[None, :] + s_q[:, None] * (end - start)[None, :]
            vv = velocity_values(mesh, spaces, u, pts)[sel]
            pv = hdiv_values(op, gamma, pts)[sel]
            dn = np.einsum("cqe,ce->cq", vv - pv, n_ed[sel, li])
            moments = np.einsum("kq,cq->ck", WL, dn)
            worst = max(worst, float(np.max(np.abs(moments))))
    return worst


def normal_jump(op, gamma, degree=6):
    """max over interior edges of |[Pi v . n]| at edge quadrature points."""
    if op.is_identity:
        raise ValueError("identity reconstruction stores no H(div) field")
    mesh = op.mesh
    s_q, _ = edge_rule(degree)
    nq = len(s_q)
    ce = mesh.cell_edges
    ori = (mesh.cells[:, [1, 2, 0]] == mesh.edges[ce, 0]).astype(np.int64)
    sides = np.full((mesh.num_edges, 2, nq), np.nan)
    # slot 0 belongs to edge_cells[e, 0], slot 1 to the other cell
    owner = mesh.edge_cells[ce, 0] == np.arange(mesh.num_cells)[:, None]
    for li in range(3):
        a = _REF_VERTS[(li + 1) % 3]
        b = _REF_VERTS[(li + 2) % 3]
        for o, (start, end) in enumerate(((b, a), (a, b))):
            sel = ori[:, li] == o
            if not np.any(sel):
                continue
            pts = start[None, :] + s_q[:, None] * (end - start)[None, :]
            pv = hdiv_values(op, gamma, pts)[sel]
            n_e = mesh.edge_normals[ce[sel, li]]
            vn = np.einsum("cqe,ce->cq", pv, n_e)
            slot = np.where(owner[sel, li], 0, 1)
            sides[ce[sel, li], slot] = vn
    interior = ~mesh.boundary_edges
    jumps = sides[interior, 0] - sides[interior, 1]
    return float(np.nanmax(np.abs(jumps))) if np.any(interior) else 0.0
