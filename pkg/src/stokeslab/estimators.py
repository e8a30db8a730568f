"""A posteriori error estimation for the Stokes solvers.

Two estimator families are evaluated from one solved state:

* the residual estimator: elementwise momentum residual plus jumps of the
  viscous normal flux across interior edges.  Its volume term sees the full
  pressure gradient, so on problems with large irrotational forcing its
  effectivity degrades like 1/nu for non-robust discretizations.
* the curl estimator: the elementwise rotation of the momentum residual
  plus tangential jumps of that residual.  Taking the curl annihilates
  every gradient part of the data, which keeps the estimator proportional
  to the velocity error alone.

Both are aggregated as mu^2 = nu^-2 eta^2 + ||div u_h||^2 where eta is the
plain sum of the sub-term totals and each total is the l2 aggregate of its
per-element values.  Edge quantities are charged half to each neighbouring
element, so elementwise squares still sum to the squared totals.

Consistency bookkeeping:

* solves through a reconstruction operator carry the computable bound
  nu * (sum_T h_T^2 ||(1 - pi_{q-1}) lap u_h||_T^2)^(1/2) in eta_cons1,
  where pi_m is the elementwise L2 projection onto polynomials of degree m
  (zero in exact arithmetic for the supported operator/pair combinations,
  evaluated anyway);
* classical solves instead charge the curl estimator with
  (sum_T h_T^2 ||(1 - pi_{q-1})(f + nu lap u_h)||_T^2)^(1/2), the price of
  not reconstructing; the residual estimator's eta_cons1 is zero there;
* discontinuous pressures enter the volume residual through a continuous
  nodal average q, and classical solves pay eta_cons2 = ||q - p_h|| for
  the averaging; reconstruction solves pay nothing because their test
  functions are divergence free.

The reported eta_cons1 field always holds the consistency term that enters
mu_new; the residual estimator's own consistency term coincides with it on
reconstruction solves and vanishes on classical ones.
"""

from dataclasses import dataclass

import numpy as np

from . import assembly
from .basis import (
    build_scalar_layout,
    shape_gradients,
    shape_hessians,
    shape_values,
)
from .quadrature import edge_rule, triangle_rule
from .reconstruction import _scaled_monomials

ERROR_DEGREE = 10
VOLUME_DEGREE = 10
EDGE_DEGREE = 10

_REF_VERTS = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


@dataclass(frozen=True)
class EstimatorReport:
    """Per-element indicator data plus global totals for one solved state.

    Element arrays hold square-root contributions; edge terms are already
    split half/half onto the neighbouring elements, so the l2 norm of each
    array reproduces the matching total.
    """

    nu: float
    identity_op: bool
    eta_vol: np.ndarray
    eta_jump: np.ndarray
    eta_curl: np.ndarray
    eta_jump2: np.ndarray
    eta_cons1: np.ndarray
    eta_cons2: np.ndarray
    div_term: np.ndarray
    total_vol: float
    total_jump: float
    total_curl: float
    total_jump2: float
    total_cons1: float
    total_cons2: float
    div_norm: float
    mu_class: float
    mu_new: float
    err_h1: float | None = None
    eff_class: float | None = None
    eff_new: float | None = None


def _monomial_exponents(deg):
    return [(t - j, j) for t in range(deg + 1) for j in range(t + 1)]


def _cell_monomials(mesh, pts_phys, deg):
    exps = _monomial_exponents(deg)
    return _scaled_monomials(
        mesh.cell_centroids, mesh.cell_diameters, pts_phys, exps
    )


def _projection_residual(mesh, w, wq, pts_phys, deg):
    """Elementwise squared L2 distance of w (C, nq, 2) to degree-deg polys."""
    M = _cell_monomials(mesh, pts_phys, deg)
    G = np.einsum("q,cqi,cqj->cij", wq, M, M)
    rhs = np.einsum("q,cqi,cqe->cie", wq, M, w)
    coef = np.linalg.solve(G, rhs)
    resid = w - np.einsum("cqm,cme->cqe", M, coef)
    return 2.0 * mesh.cell_areas * np.einsum("q,cqe,cqe->c", wq, resid, resid)


def _scalar_values(layout, space, coef, ref_pts):
    sv = shape_values(space, ref_pts)
    return np.einsum("cb,bq->cq", np.asarray(coef)[layout.cell_dofs], sv)


def _scalar_gradients(mesh, layout, space, coef, ref_pts):
    sg = shape_gradients(space, ref_pts)
    _, Binv, _ = assembly.affine_maps(mesh)
    return np.einsum(
        "cb,bqi,cij->cqj", np.asarray(coef)[layout.cell_dofs], sg, Binv
    )


def _local_ref_nodes(mesh, layout):
    """Reference coordinates of a nodal layout's cell-local dof points."""
    _, Binv, _ = assembly.affine_maps(mesh)
    d = layout.dof_points[layout.cell_dofs[0]] - mesh.nodes[mesh.cells[0, 0]]
    return d @ Binv[0].T


def oswald_average(mesh, spaces, p):
    """Continuous nodal average of the discrete pressure.

    Returns (coefficients, layout, space name) of the averaged field, which
    lives in the continuous Lagrange space one degree above the broken one.
    Each node takes the arithmetic mean of the limits from its cells.
    """
    target = {1: "p1", 2: "p2"}[spaces.pair.pressure_order]
    lay = build_scalar_layout(mesh, target)
    ref = _local_ref_nodes(mesh, lay)
    pv = assembly.pressure_values(mesh, spaces, p, ref)
    acc = np.zeros(lay.ndof)
    cnt = np.zeros(lay.ndof)
    np.add.at(acc, lay.cell_dofs, pv)
    np.add.at(cnt, lay.cell_dofs, 1.0)
    return acc / cnt, lay, target


def exact_error(mesh, spaces, u, problem, degree=ERROR_DEGREE):
    """(H1-seminorm error, ||div u_h||) against the problem's exact fields.

    Cells with a vertex on the problem's singular point are integrated on
    geometric shells graded toward that vertex: a fixed-degree rule applied
    to the raw cell would misjudge the unbounded gradient there by a mesh
    independent few percent, whereas on each shell the integrand is smooth.
    """
    if problem.velocity_gradient is None:
        raise ValueError(f"problem {problem.name!r} has no exact gradient")
    pts, w = triangle_rule(degree)
    g = assembly.velocity_gradients(mesh, spaces, u, pts)
    ge = problem.velocity_gradient(assembly.physical_points(mesh, pts))
    d = g - ge
    sq = 2.0 * mesh.cell_areas * np.einsum("q,cqij,cqij->c", w, d, d)
    corner = getattr(problem, "singular_point", None)
    if corner is not None:
        at_corner = np.all(
            np.abs(mesh.nodes[mesh.cells] - np.asarray(corner)) < 1e-12, axis=2
        )
        for c in np.flatnonzero(at_corner.any(axis=1)):
            iv = int(np.argmax(at_corner[c]))
            sq[c] = _graded_cell_error_sq(
                mesh, spaces, u, problem, c, iv, pts, w
            )
    err = np.sqrt(np.sum(sq))
    return float(err), assembly.divergence_norm(mesh, spaces, u)


def _graded_cell_error_sq(mesh, spaces, u, problem, c, iv, pts, w, levels=44):
    """Squared H1 error on one cell, graded toward its local vertex iv.

    The cell splits into `levels` self-similar shells of ratio 1/2 plus a
    core triangle at the vertex; the core holds ~2^(-levels) of the measure,
    so whatever the rule does with the singularity there is negligible.
    """
    verts = mesh.nodes[mesh.cells[c]].astype(float)
    v = verts[iv]
    a = verts[(iv + 1) % 3] - v
    b = verts[(iv + 2) % 3] - v
    s = 0.5 ** np.arange(levels + 1)
    tris = []
    for s0, s1 in zip(s[:-1], s[1:]):
        tris.append([v + s1 * a, v + s0 * a, v + s0 * b])
        tris.append([v + s1 * a, v + s0 * b, v + s1 * b])
    tris.append([v, v + s[-1] * a, v + s[-1] * b])
    tris = np.asarray(tris)

    e1 = tris[:, 1] - tris[:, 0]
    e2 = tris[:, 2] - tris[:, 0]
    areas = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    xq = (
        tris[:, None, 0, :]
        + pts[None, :, 0, None] * e1[:, None, :]
        + pts[None, :, 1, None] * e2[:, None, :]
    )

    _, Binv, _ = assembly.affine_maps(mesh)
    ref = (xq - mesh.nodes[mesh.cells[c, 0]]) @ Binv[c].T
    sg = shape_gradients(spaces.pair.velocity_space, ref.reshape(-1, 2))
    uloc = np.asarray(u).reshape(2, spaces.vel.ndof)[:, spaces.vel.cell_dofs[c]]
    gh = np.einsum("eb,bqi,ij->qej", uloc, sg, Binv[c])
    d = gh.reshape(xq.shape[0], -1, 2, 2) - problem.velocity_gradient(xq)
    return float(np.sum(2.0 * areas * np.einsum("q,mqij,mqij->m", w, d, d)))


def oscillation(mesh, field, k, degree=VOLUME_DEGREE, cells=None):
    """Data oscillation osc_k = (sum_T h_T^2 ||(1 - pi_k) field||_T^2)^(1/2).

    `field` maps physical points (..., 2) to vector values (..., 2); `cells`
    optionally restricts the sum to a subset of elements.
    """
    pts, wq = triangle_rule(degree)
    xq = assembly.physical_points(mesh, pts)
    vals = np.asarray(field(xq), dtype=float)
    sq = _projection_residual(mesh, vals, wq, xq, k)
    sq = mesh.cell_diameters**2 * sq
    if cells is not None:
        sq = sq[np.asarray(cells)]
    return float(np.sqrt(np.sum(sq)))


def _edge_trace_tensors(mesh, spaces, u, nu, sq):
    """Viscous flux and residual traces on both sides of interior edges.

    Returns (grad_trace, lap_trace) shaped (C, 3, nq, 2, 2) and (C, 3, nq, 2)
    where axis 1 is the local edge, sampled at the global lo->hi parameter
    points sq regardless of each cell's own edge orientation.
    """
    space = spaces.pair.velocity_space
    _, Binv, _ = assembly.affine_maps(mesh)
    u2 = np.asarray(u).reshape(2, spaces.vel.ndof)
    uloc = u2[:, spaces.vel.cell_dofs]

    grads6 = []
    hess6 = []
    for ell in range(3):
        a, b = (ell + 1) % 3, (ell + 2) % 3
        for ori in range(2):
            start, end = ((b, a), (a, b))[ori]
            ref = _REF_VERTS[start] + np.outer(
                sq, _REF_VERTS[end] - _REF_VERTS[start]
            )
            grads6.append(shape_gradients(space, ref))
            hess6.append(shape_hessians(space, ref))
    grads6 = np.stack(grads6)
    hess6 = np.stack(hess6)

    ce = mesh.cell_edges
    ori = (mesh.cells[:, [1, 2, 0]] == mesh.edges[ce, 0]).astype(np.int64)
    idx = 2 * np.arange(3)[None, :] + ori  # (C, 3) into the 6 trace sets

    gsel = grads6[idx]  # (C, 3, nb, nq, 2)
    hsel = hess6[idx]  # (C, 3, nb, nq, 2, 2)
    grad_trace = np.einsum(
        "ecb,clbqi,cij->clqej", uloc, gsel, Binv, optimize=True
    )
    lap_trace = np.einsum(
        "ecb,clbqkm,cki,cmi->clqe", uloc, hsel, Binv, Binv, optimize=True
    )
    return grad_trace, nu * lap_trace


def _scatter_edge_sides(mesh, trace):
    """Distribute (C, 3, nq, ...) cell-side traces into (E, 2, nq, ...)."""
    ce = mesh.cell_edges
    owner = mesh.edge_cells[ce, 0] == np.arange(mesh.num_cells)[:, None]
    slot = np.where(owner, 0, 1)
    buf = np.zeros((mesh.num_edges, 2) + trace.shape[2:])
    buf[ce, slot] = trace
    return buf


def estimate(
    mesh,
    spaces,
    u,
    p,
    problem,
    nu,
    op=None,
    with_error=True,
    volume_degree=None,
    edge_degree=None,
    error_degree=None,
):
    """Evaluate both estimator families for one solved state.

    `op` is the reconstruction used in the solve (None or an identity
    operator marks a classical solve).  Returns an EstimatorReport holding
    per-element indicators, sub-term totals, mu_class and mu_new, and
    efficiency indices when the problem carries an exact solution.
    """
    vdeg = VOLUME_DEGREE if volume_degree is None else volume_degree
    edeg = EDGE_DEGREE if edge_degree is None else edge_degree
    identity_op = op is None or op.is_identity
    h = mesh.cell_diameters
    areas = mesh.cell_areas
    qdeg = spaces.pair.pressure_order - 1  # projection degree q-1

    # -------------------------------------------------------- volume terms
    pts, wq = triangle_rule(vdeg)
    xq = assembly.physical_points(mesh, pts)
    fq = problem.force(xq, nu)
    lap = assembly.velocity_laplacians(mesh, spaces, u, pts)
    grads = assembly.velocity_gradients(mesh, spaces, u, pts)
    divu = grads[..., 0, 0] + grads[..., 1, 1]

    if spaces.pair.pressure_continuous:
        qgrad = _scalar_gradients(
            mesh, spaces.pre, spaces.pair.pressure_space, p, pts
        )
        cons2_sq = np.zeros(mesh.num_cells)
    else:
        qcoef, qlay, qspace = oswald_average(mesh, spaces, p)
        qgrad = _scalar_gradients(mesh, qlay, qspace, qcoef, pts)
        if identity_op:
            qv = _scalar_values(qlay, qspace, qcoef, pts)
            pv = assembly.pressure_values(mesh, spaces, p, pts)
            cons2_sq = 2.0 * areas * np.einsum("q,cq->c", wq, (qv - pv) ** 2)
        else:
            # divergence-free test functions never see the pressure, so the
            # averaging is exact for reconstruction solves
            cons2_sq = np.zeros(mesh.num_cells)

    resid = fq - qgrad + nu * lap
    vol_sq = h**2 * 2.0 * areas * np.einsum("q,cqe,cqe->c", wq, resid, resid)

    curl_res = problem.curl_force(xq, nu) + nu * assembly.velocity_laplacian_curl(
        mesh, spaces, u, pts
    )
    curl_sq = h**4 * 2.0 * areas * np.einsum("q,cq,cq->c", wq, curl_res, curl_res)

    div_sq = 2.0 * areas * np.einsum("q,cq,cq->c", wq, divu, divu)

    if identity_op:
        cons1_sq = h**2 * _projection_residual(
            mesh, fq + nu * lap, wq, xq, qdeg
        )
    else:
        cons1_sq = nu**2 * h**2 * _projection_residual(mesh, lap, wq, xq, qdeg)

    # ---------------------------------------------------------- edge terms
    sq, we = edge_rule(edeg)
    grad_tr, nulap_tr = _edge_trace_tensors(mesh, spaces, u, nu, sq)
    gbuf = _scatter_edge_sides(mesh, grad_tr)
    lbuf = _scatter_edge_sides(mesh, nulap_tr)
    interior = ~mesh.boundary_edges
    hE = mesh.edge_lengths
    nE = mesh.edge_normals
    tE = mesh.edge_tangents

    gjump = gbuf[:, 0] - gbuf[:, 1]  # (E, nq, 2, 2)
    flux_jump = nu * np.einsum("eqij,ej->eqi", gjump, nE)
    jump_sq_edge = (
        hE**2 * np.einsum("q,eqi,eqi->e", we, flux_jump, flux_jump)
    )
    jump_sq_edge[~interior] = 0.0

    # f is single valued, so only the viscous part survives the jump
    rjump = np.einsum("eqi,ei->eq", lbuf[:, 0] - lbuf[:, 1], tE)
    jump2_sq_edge = hE**4 * np.einsum("q,eq,eq->e", we, rjump, rjump)
    jump2_sq_edge[~interior] = 0.0

    def halve_to_cells(edge_sq):
        out = np.zeros(mesh.num_cells)
        e = np.flatnonzero(interior)
        np.add.at(out, mesh.edge_cells[e, 0], 0.5 * edge_sq[e])
        np.add.at(out, mesh.edge_cells[e, 1], 0.5 * edge_sq[e])
        return out

    jump_sq = halve_to_cells(jump_sq_edge)
    jump2_sq = halve_to_cells(jump2_sq_edge)

    # ------------------------------------------------------------- totals
    tv = float(np.sqrt(vol_sq.sum()))
    tj = float(np.sqrt(jump_sq.sum()))
    tcu = float(np.sqrt(curl_sq.sum()))
    tj2 = float(np.sqrt(jump2_sq.sum()))
    tc1 = float(np.sqrt(cons1_sq.sum()))
    tc2 = float(np.sqrt(cons2_sq.sum()))
    dn = float(np.sqrt(div_sq.sum()))

    cons1_class = 0.0 if identity_op else tc1
    eta_class_total = tv + tj + cons1_class + tc2
    eta_new_total = tcu + tj + tj2 + tc1
    mu_class = float(np.hypot(eta_class_total / nu, dn))
    mu_new = float(np.hypot(eta_new_total / nu, dn))

    err = effc = effn = None
    if with_error and problem.velocity_gradient is not None:
        err, _ = exact_error(
            mesh, spaces, u, problem,
            ERROR_DEGREE if error_degree is None else error_degree,
        )
        if err > 0.0:
            effc = mu_class / err
            effn = mu_new / err

    return EstimatorReport(
        nu=nu,
        identity_op=identity_op,
        eta_vol=np.sqrt(vol_sq),
        eta_jump=np.sqrt(jump_sq),
        eta_curl=np.sqrt(curl_sq),
        eta_jump2=np.sqrt(jump2_sq),
        eta_cons1=np.sqrt(cons1_sq),
        eta_cons2=np.sqrt(cons2_sq),
        div_term=np.sqrt(div_sq),
        total_vol=tv,
        total_jump=tj,
        total_curl=tcu,
        total_jump2=tj2,
        total_cons1=tc1,
        total_cons2=tc2,
        div_norm=dn,
        mu_class=mu_class,
        mu_new=mu_new,
        err_h1=err,
        eff_class=effc,
        eff_new=effn,
    )


def marking_indicators(report, estimator):
    """Per-element refinement indicators mu(T) for the chosen estimator.

    `estimator` is "class" (volume residual + flux jumps + consistency) or
    "new" (curl residual + both jump families + consistency); both add the
    local divergence defect outside the 1/nu scaling.
    """
    inv2 = report.nu**-2
    if estimator == "class":
        cons1 = 0.0 if report.identity_op else report.eta_cons1**2
        eta_sq = report.eta_vol**2 + report.eta_jump**2 + cons1 + report.eta_cons2**2
    elif estimator == "new":
        eta_sq = (
            report.eta_curl**2
            + report.eta_jump**2
            + report.eta_jump2**2
            + report.eta_cons1**2
        )
    else:
        raise ValueError(f"unknown estimator {estimator!r}")
    return np.sqrt(inv2 * eta_sq + report.div_term**2)
