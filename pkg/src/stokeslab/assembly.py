"""Sparse assembly of the Stokes saddle-point blocks on affine triangles.

Sign and layout conventions:
  - velocity dofs are numbered x-block then y-block (see basis.PairSpaces)
  - the divergence block is B[i, j] = -int q_i div(phi_j) dx, so the
    symmetric system reads [[nu*A, B^T], [B, 0]] [u; p] = [F; 0]
  - assembled matrices are unit-viscosity; solvers scale by nu themselves
"""

import numpy as np
import scipy.sparse as sps

from .basis import (
    shape_gradients,
    shape_hessians,
    shape_third_derivatives,
    shape_values,
)
from .quadrature import triangle_rule
from . import reconstruction as rec

STIFFNESS_DEGREE = 4  # exact for products of P2+bubble gradients
DEFAULT_RHS_DEGREE = 8


def affine_maps(mesh):
    """Jacobians, inverses and determinants of all cell maps: (C,2,2)x2, (C,)."""
    p = mesh.nodes[mesh.cells]
    B = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)
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
    return B, Binv, det


def physical_points(mesh, ref_pts):
    """Reference points mapped into every cell: (C, nq, 2)."""
    p = mesh.nodes[mesh.cells]
    ref_pts = np.asarray(ref_pts, dtype=float)
    return (
        p[:, None, 0, :]
        + ref_pts[None, :, 0, None] * (p[:, 1] - p[:, 0])[:, None, :]
        + ref_pts[None, :, 1, None] * (p[:, 2] - p[:, 0])[:, None, :]
    )


def _coo(rows, cols, data, shape):
    return sps.coo_matrix(
        (data.ravel(), (rows.ravel(), cols.ravel())), shape=shape
    ).tocsr()


def scalar_stiffness(mesh, layout, quad_degree=STIFFNESS_DEGREE):
    """Stiffness matrix int grad(phi_a).grad(phi_b) of one scalar space."""
    xq, wq = triangle_rule(quad_degree)
    _, Binv, _ = affine_maps(mesh)
    gr = shape_gradients(layout.space, xq)  # (nb, nq, 2)
    gp = np.einsum("cij,bqi->cbqj", Binv, gr)
    K = 2.0 * mesh.cell_areas[:, None, None] * np.einsum(
        "q,caqj,cbqj->cab", wq, gp, gp
    )
    cd = layout.cell_dofs
    nb = cd.shape[1]
    rows = np.broadcast_to(cd[:, :, None], (len(cd), nb, nb))
    cols = np.broadcast_to(cd[:, None, :], (len(cd), nb, nb))
    return _coo(rows, cols, K, (layout.ndof, layout.ndof))


def velocity_stiffness(mesh, spaces, quad_degree=STIFFNESS_DEGREE):
    K = scalar_stiffness(mesh, spaces.vel, quad_degree)
    return sps.block_diag([K, K], format="csr")


def divergence_matrix(mesh, spaces, quad_degree=STIFFNESS_DEGREE):
    """B[i, j] = -int q_i div(phi_j) dx, shape (npre, 2*nvel)."""
    xq, wq = triangle_rule(quad_degree)
    _, Binv, _ = affine_maps(mesh)
    gr = shape_gradients(spaces.pair.velocity_space, xq)
    gp = np.einsum("cij,bqi->cbqj", Binv, gr)  # (C, nvb, nq, 2)
    qv = shape_values(spaces.pair.pressure_space, xq)  # (nbp, nq)
    # Bloc[c, i, comp, s] = -int q_i d_comp phi_s
    Bloc = -2.0 * mesh.cell_areas[:, None, None, None] * np.einsum(
        "q,iq,csqe->cies", wq, qv, gp
    )
    C = mesh.num_cells
    nbp, nvb = qv.shape[0], gr.shape[0]
    vd = velocity_cell_dofs(spaces)  # (C, 2*nvb)
    rows = np.broadcast_to(
        spaces.pre.cell_dofs[:, :, None], (C, nbp, 2 * nvb)
    )
    cols = np.broadcast_to(vd[:, None, :], (C, nbp, 2 * nvb))
    return _coo(
        rows, cols, Bloc.reshape(C, nbp, 2 * nvb),
        (spaces.pre.ndof, spaces.num_velocity_dofs),
    )


def velocity_cell_dofs(spaces):
    """Global velocity dof ids per cell, x-component dofs then y: (C, 2*nvb)."""
    cd = spaces.vel.cell_dofs
    return np.hstack([cd, cd + spaces.vel.ndof])


def pressure_mean_vector(mesh, spaces, quad_degree=STIFFNESS_DEGREE):
    """m[i] = int q_i dx, used for the zero-mean pressure constraint."""
    xq, wq = triangle_rule(quad_degree)
    qv = shape_values(spaces.pair.pressure_space, xq)
    mloc = 2.0 * mesh.cell_areas[:, None] * np.einsum("q,iq->i", wq, qv)
    m = np.zeros(spaces.pre.ndof)
    np.add.at(m, spaces.pre.cell_dofs, mloc)
    return m


def load_vector(mesh, spaces, f, op=None, quad_degree=DEFAULT_RHS_DEGREE):
    """F[j] = int f . (Pi phi_j) dx; op None or identity means Pi = 1.

    f maps physical points (..., 2) to force values (..., 2).
    """
    xq, wq = triangle_rule(quad_degree)
    pts = physical_points(mesh, xq)
    fv = np.asarray(f(pts), dtype=float)
    C = mesh.num_cells
    F = np.zeros(spaces.num_velocity_dofs)
    if op is None or op.is_identity:
        phi = shape_values(spaces.pair.velocity_space, xq)  # (nvb, nq)
        Floc = 2.0 * mesh.cell_areas[:, None, None] * np.einsum(
            "q,sq,cqe->ces", wq, phi, fv
        )
        np.add.at(F, velocity_cell_dofs(spaces), Floc.reshape(C, -1))
    else:
        bv = rec.cell_basis_values(op, xq)  # (C, nldof, nq, 2)
        moments = 2.0 * mesh.cell_areas[:, None] * np.einsum(
            "q,crqe,cqe->cr", wq, bv, fv
        )
        Floc = np.einsum("crj,cr->cj", op.local_interp, moments)
        np.add.at(F, velocity_cell_dofs(spaces), Floc)
    return F


def velocity_gradients(mesh, spaces, u, ref_pts):
    """Gradient tensor of a velocity field at reference points: (C, nq, 2, 2).

    Entry [..., i, j] is the derivative of component i along direction j.
    """
    _, Binv, _ = affine_maps(mesh)
    gr = shape_gradients(spaces.pair.velocity_space, np.asarray(ref_pts, float))
    gp = np.einsum("cij,bqi->cbqj", Binv, gr)
    u2 = np.asarray(u).reshape(2, spaces.vel.ndof)
    uloc = u2[:, spaces.vel.cell_dofs]  # (2, C, nvb)
    return np.einsum("ics,csqj->cqij", uloc, gp)


def pressure_values(mesh, spaces, p, ref_pts):
    """Pressure field values at reference points: (C, nq)."""
    qv = shape_values(spaces.pair.pressure_space, np.asarray(ref_pts, float))
    ploc = np.asarray(p)[spaces.pre.cell_dofs]  # (C, nbp)
    return np.einsum("ci,iq->cq", ploc, qv)


def velocity_laplacians(mesh, spaces, u, ref_pts):
    """Componentwise Laplacian of a velocity field: (C, nq, 2).

    Exact on each cell; the maps are affine, so physical second derivatives
    are reference Hessians contracted twice with the inverse Jacobian.
    """
    _, Binv, _ = affine_maps(mesh)
    hs = shape_hessians(spaces.pair.velocity_space, np.asarray(ref_pts, float))
    lap = np.einsum("cki,bqkl,cli->cbq", Binv, hs, Binv, optimize=True)
    u2 = np.asarray(u).reshape(2, spaces.vel.ndof)
    uloc = u2[:, spaces.vel.cell_dofs]
    return np.einsum("ecb,cbq->cqe", uloc, lap)


def velocity_laplacian_curl(mesh, spaces, u, ref_pts):
    """Rotation of the elementwise velocity Laplacian: (C, nq).

    Returns d(lap u_y)/dx - d(lap u_x)/dy from analytic third derivatives
    of the shape functions; nonzero only for bubble-enriched spaces.
    """
    _, Binv, _ = affine_maps(mesh)
    t3 = shape_third_derivatives(
        spaces.pair.velocity_space, np.asarray(ref_pts, float)
    )
    if not t3.any():
        nq = np.atleast_2d(ref_pts).shape[0]
        return np.zeros((mesh.num_cells, nq))
    dlap = np.einsum("cia,bqijk,cjm,ckm->cbqa", Binv, t3, Binv, Binv, optimize=True)
    u2 = np.asarray(u).reshape(2, spaces.vel.ndof)
    uloc = u2[:, spaces.vel.cell_dofs]
    comp = np.einsum("ecb,cbqa->cqea", uloc, dlap)
    return comp[..., 1, 0] - comp[..., 0, 1]


def divergence_norm(mesh, spaces, u, quad_degree=STIFFNESS_DEGREE):
    """L2 norm of div(u_h)."""
    xq, wq = triangle_rule(quad_degree)
    g = velocity_gradients(mesh, spaces, u, xq)
    div = g[..., 0, 0] + g[..., 1, 1]
    val = 2.0 * np.einsum("c,q,cq->", mesh.cell_areas, wq, div * div)
    return float(np.sqrt(max(val, 0.0)))


def shift_pressure_mean(mesh, spaces, p, quad_degree=STIFFNESS_DEGREE):
    """Return p shifted to zero mean over the domain."""
    m = pressure_mean_vector(mesh, spaces, quad_degree)
    area = float(mesh.cell_areas.sum())
    return p - (m @ p) / area
