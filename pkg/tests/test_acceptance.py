"""Desk-scale acceptance runs for the headline claims, one test per claim.

Covers: invariance of the pressure-robust method under gradient forcing,
viscosity-sweep scaling laws and efficiency stability on a fixed mesh,
convergence orders under uniform refinement, corner-singularity rates under
uniform and adaptive refinement, adaptive localization, the reconstruction
contract, and dense-quadrature oracles for every estimator sub-term.
"""

import time

import numpy as np
import pytest

from stokeslab import assembly, estimators
from stokeslab import reconstruction as rc
from stokeslab.adapt import StudyConfig, eoc, run_study
from stokeslab.basis import PAIRS, build_pair_spaces, shape_gradients
from stokeslab.cli import _divfree_field, fixed_mesh_for
from stokeslab.linsolve import solve_problem
from stokeslab.mesh import unit_square
from stokeslab.problems import get_problem
from stokeslab.quadrature import triangle_rule

NUS = (10.0, 1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)

# reference errors for the classical Taylor-Hood sweep at a comparable dof
# count on an unstructured mesh; our structured mesh reproduces them at
# factor level only
REFERENCE_CLASSICAL_TH2 = (
    0.001265847525399444,
    0.001297267918076333,
    0.0031200912873200794,
    0.028546945385180832,
    0.28519134950247516,
    2.851885435299173,
    28.518851311410526,
    285.1885125743553,
)


def grad_norm(mesh, spaces, u):
    A = assembly.velocity_stiffness(mesh, spaces)
    return float(np.sqrt(u @ (A @ u)))


def fit_slope(log, ndof_cut):
    nd = log.column("ndof")
    err = log.column("err_h1")
    m = nd >= ndof_cut
    return float(np.polyfit(np.log(nd[m]), np.log(err[m]), 1)[0])


@pytest.fixture(scope="module")
def sweep_data():
    """Fixed-mesh viscosity sweeps for the three tabulated runs."""
    t0 = time.perf_counter()
    problem = get_problem("smooth")
    mesh_th2, nd_th2 = fixed_mesh_for(problem, "th2", 1100)
    mesh_p2b, nd_p2b = fixed_mesh_for(problem, "p2b", 1100)
    assert 900 <= nd_th2 <= 1500
    assert 900 <= nd_p2b <= 1500

    def sweep(pair, mode, mesh):
        records = []
        for nu in NUS:
            cfg = StudyConfig("smooth", pair, mode=mode, nu=nu, levels=1)
            log = run_study(cfg, initial_mesh=mesh)
            assert log.aborted is None
            records.append(log.records[0])
        return records

    data = {
        "robust_p2b": sweep("p2b", "robust", mesh_p2b),
        "classical_p2b": sweep("p2b", "classical", mesh_p2b),
        "classical_th2": sweep("th2", "classical", mesh_th2),
    }
    data["seconds"] = time.perf_counter() - t0
    return data


def test_01_hydrostatic_invariance():
    t0 = time.perf_counter()
    mesh = unit_square(4)
    problem = get_problem("hydrostatic")
    spaces = build_pair_spaces(mesh, PAIRS["p2b"])

    sol, _ = solve_problem(mesh, spaces, problem, 1e-3, "robust")
    robust_norm = grad_norm(mesh, spaces, sol.u)

    classical = {}
    for nu in (1e-3, 1e-4):
        sol, _ = solve_problem(mesh, spaces, problem, nu, "classical")
        classical[nu] = grad_norm(mesh, spaces, sol.u)
    ratio = classical[1e-4] / classical[1e-3]
    elapsed = time.perf_counter() - t0

    assert robust_norm <= 1e-9, f"robust velocity norm {robust_norm:.3e}"
    assert classical[1e-3] >= 1e-4, f"classical norm {classical[1e-3]:.3e}"
    assert 8.0 <= ratio <= 12.0, f"classical decade growth {ratio:.3f}"
    assert elapsed < 10.0, f"runtime {elapsed:.1f}s"


def test_02_viscosity_sweep_scaling(sweep_data):
    errs = {k: np.array([r.err_h1 for r in sweep_data[k]])
            for k in ("robust_p2b", "classical_p2b", "classical_th2")}

    spread = errs["robust_p2b"].max() / errs["robust_p2b"].min() - 1.0
    assert spread < 0.005, f"robust error spread across nu: {spread:.2e}"

    # decade growth of the classical error once the pressure term dominates
    for name in ("classical_p2b", "classical_th2"):
        ratios = (errs[name][1:] / errs[name][:-1])[3:]
        assert np.all(np.abs(ratios / 10.0 - 1.0) <= 0.03), (
            f"{name} decade ratios {np.round(ratios, 3)}"
        )

    factors = errs["classical_th2"] / np.array(REFERENCE_CLASSICAL_TH2)
    assert np.all((factors >= 1 / 3.0) & (factors <= 3.0)), (
        f"classical th2 vs reference factors {np.round(factors, 2)}"
    )
    assert sweep_data["seconds"] < 120.0, f"runtime {sweep_data['seconds']:.1f}s"


def test_03_efficiency_stability(sweep_data):
    def series(key, attr, nus):
        keep = [i for i, nu in enumerate(NUS) if nu in nus]
        return np.array([getattr(sweep_data[key][i], attr) for i in keep])

    small = tuple(nu for nu in NUS if nu <= 1e-2)
    # mu_class/err is nu-stable for every classical run ...
    for key in ("classical_th2", "classical_p2b"):
        eff = series(key, "eff_class", small)
        wobble = eff.max() / eff.min() - 1.0
        assert wobble <= 0.05, f"{key} efficiency wobble {wobble:.2%}"
    # ... and mu_new/err for the pressure-robust run, over a wider nu range
    eff_new = series("robust_p2b", "eff_new", tuple(nu for nu in NUS if nu <= 1e-1))
    wobble = eff_new.max() / eff_new.min() - 1.0
    assert wobble <= 0.05, f"robust efficiency wobble {wobble:.2%}"

    # boundedness of the two tabulated efficiency columns: the classical
    # Taylor-Hood index and the pressure-robust index.  (The classical P2B
    # index is nu-stable per the check above but its constant is
    # pair-dependent and sits near 320 on this mesh family: that run's
    # velocity error does not saturate the classical reliability bound.)
    eff_th2 = series("classical_th2", "eff_class", NUS)
    eff_rob = series("robust_p2b", "eff_new", NUS)
    for name, eff in (("classical_th2", eff_th2), ("robust_p2b", eff_rob)):
        assert np.all((eff >= 1.0) & (eff <= 100.0)), (
            f"{name} efficiency indices {np.round(eff, 2)}"
        )


def test_04_uniform_convergence_orders():
    t0 = time.perf_counter()
    th2 = run_study(StudyConfig("smooth", "th2", mode="classical", nu=1.0,
                                levels=6))
    p2b = run_study(StudyConfig("smooth", "p2b", mode="robust", nu=1.0,
                                levels=5))
    mini = run_study(StudyConfig("smooth", "mini", mode="classical", nu=1.0,
                                 levels=6))
    elapsed = time.perf_counter() - t0

    for name, log in (("th2 classical", th2), ("p2b robust", p2b)):
        rates = eoc(log)[-3:]
        assert all(1.8 <= r <= 2.2 for r in rates), (
            f"{name} last rates {np.round(rates, 3)}"
        )
    assert mini.records[-1].ndof >= 9e4
    rate = eoc(mini)[-1]
    assert 0.9 <= rate <= 1.1, f"mini asymptotic rate {rate:.3f}"
    assert elapsed < 300.0, f"runtime {elapsed:.1f}s"


def test_05_corner_singularity_rates():
    t0 = time.perf_counter()
    uniform = run_study(StudyConfig(
        "lshape", "p2p0", mode="robust", nu=1e-3, refine="uniform",
        levels=7, max_ndof=100_000,
    ))
    adaptive_p2p0 = run_study(StudyConfig(
        "lshape", "p2p0", mode="robust", nu=1e-3, estimator="new",
        refine="adaptive", levels=80, max_ndof=100_000,
    ))
    adaptive_p2b = run_study(StudyConfig(
        "lshape", "p2b", mode="robust", nu=1e-3, estimator="new",
        refine="adaptive", levels=80, max_ndof=100_000,
    ))
    elapsed = time.perf_counter() - t0

    for log in (uniform, adaptive_p2p0, adaptive_p2b):
        assert log.aborted is None
        assert log.records[-1].ndof >= 1e5

    s_uni = fit_slope(uniform, 300)
    assert -0.32 <= s_uni <= -0.22, f"uniform slope {s_uni:.4f}"
    s_p2p0 = fit_slope(adaptive_p2p0, 3000)
    assert -0.6 <= s_p2p0 <= -0.4, f"adaptive p2p0 slope {s_p2p0:.4f}"
    s_p2b = fit_slope(adaptive_p2b, 3000)
    assert -1.15 <= s_p2b <= -0.85, f"adaptive p2b slope {s_p2b:.4f}"
    assert elapsed < 600.0, f"runtime {elapsed:.1f}s"


def test_06_adaptive_localization():
    def corner_cells(mode, estimator):
        cfg = StudyConfig(
            "lshape", "p2p0", mode=mode, nu=1e-3, estimator=estimator,
            refine="adaptive", levels=60, max_ndof=5000,
        )
        log = run_study(cfg)
        assert log.aborted is None
        ndof = log.records[-1].ndof
        assert 5000 <= ndof <= 12000  # budget overshoot is at most one step
        centers = log.final_mesh.nodes[log.final_mesh.cells].mean(axis=1)
        return int(np.sum(np.hypot(centers[:, 0], centers[:, 1]) < 0.1))

    near_robust = corner_cells("robust", "new")
    near_classical = corner_cells("classical", "class")
    ratio = near_robust / max(near_classical, 1)
    assert ratio >= 3.0, (
        f"corner cell counts {near_robust} vs {near_classical} (x{ratio:.1f})"
    )


def test_07_reconstruction_contract():
    t0 = time.perf_counter()
    rng = np.random.default_rng(11)
    pts, _ = triangle_rule(6)
    for pair in ("p2p0", "p2b"):
        mesh = unit_square(4)
        spaces = build_pair_spaces(mesh, PAIRS[pair])
        op = rc.build_reconstruction(mesh, spaces, rc.operator_tag(pair, "robust"))
        worst_div = worst_mom = 0.0
        for _ in range(50):
            v = _divfree_field(mesh, spaces, rng)
            gamma = rc.interpolate(op, spaces, v)
            worst_div = max(
                worst_div,
                float(np.max(np.abs(rc.hdiv_divergence(op, gamma, pts)))),
            )
            worst_mom = max(worst_mom, rc.edge_moment_defect(op, spaces, v))
        assert worst_div <= 1e-10, f"{pair} divergence {worst_div:.2e}"
        assert worst_mom <= 1e-12, f"{pair} moment defect {worst_mom:.2e}"
    elapsed = time.perf_counter() - t0
    assert elapsed < 30.0, f"runtime {elapsed:.1f}s"


# --------------------------------------------- dense-quadrature oracles


def duffy_rule(m=24):
    """Tensor Gauss rule collapsed onto the reference triangle."""
    x, w = np.polynomial.legendre.leggauss(m)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    X, Y = np.meshgrid(x, x, indexing="ij")
    pts = np.stack([X.ravel(), (Y * (1.0 - X)).ravel()], axis=1)
    return pts, (np.outer(w, w) * (1.0 - X)).ravel()


def edge_gauss(m=40):
    x, w = np.polynomial.legendre.leggauss(m)
    return 0.5 * (x + 1.0), 0.5 * w


def rel_match(got, want, tol=1e-12):
    got, want = np.asarray(got, float), np.asarray(want, float)
    scale = np.maximum(np.abs(want), 1e-300)
    return np.all(np.abs(got - want) / scale <= tol)


def test_08_estimator_term_oracles():
    # random integer dof states on the two-cell mesh: every field stays an
    # exactly representable polynomial, so both quadratures must agree
    nu = 0.5
    problem = get_problem("smooth")
    rng = np.random.default_rng(3)
    for pair, mode in (("th2", "classical"), ("p2b", "robust")):
        mesh = unit_square(1)
        spaces = build_pair_spaces(mesh, PAIRS[pair])
        u = rng.integers(-3, 4, size=spaces.num_velocity_dofs).astype(float)
        p = rng.integers(-3, 4, size=spaces.num_pressure_dofs).astype(float)
        op = (None if mode == "classical" else rc.build_reconstruction(
            mesh, spaces, rc.operator_tag(pair, mode)))
        report = estimators.estimate(
            mesh, spaces, u, p, problem, nu, op, with_error=False
        )

        pts, w = duffy_rule()
        _, Binv, _ = assembly.affine_maps(mesh)
        lap = assembly.velocity_laplacians(mesh, spaces, u, pts)
        lap_curl = assembly.velocity_laplacian_curl(mesh, spaces, u, pts)
        xq = assembly.physical_points(mesh, pts)
        f = problem.force(xq, nu)
        curl_f = problem.curl_force(xq, nu)

        if spaces.pair.pressure_continuous:
            q_coef, q_lay, q_space = p, spaces.pre, spaces.pair.pressure_space
        else:
            q_coef, q_lay, q_space = estimators.oswald_average(mesh, spaces, p)
        sg = shape_gradients(q_space, pts)
        grad_q = np.einsum("cb,bqi,cij->cqj", q_coef[q_lay.cell_dofs], sg, Binv)

        h2 = mesh.cell_diameters**2
        two_areas = 2.0 * mesh.cell_areas
        res = f - grad_q + nu * lap
        vol_sq = h2 * two_areas * np.einsum("q,cqe,cqe->c", w, res, res)
        assert rel_match(report.eta_vol**2, vol_sq), f"{pair} volume term"

        curl_res = (curl_f + nu * lap_curl) ** 2
        curl_sq = h2**2 * two_areas * (curl_res @ w)
        assert rel_match(report.eta_curl**2, curl_sq), f"{pair} curl term"

        # the single interior edge, traced from both neighbouring cells
        e = int(np.flatnonzero(~mesh.boundary_edges)[0])
        a, b = mesh.edge_cells[e]
        h_e = mesh.edge_lengths[e]
        n_e = mesh.edge_normals[e]
        t_e = mesh.edge_tangents[e]
        s, ws = edge_gauss()
        xe = mesh.nodes[mesh.edges[e, 0]] + np.outer(
            s, mesh.nodes[mesh.edges[e, 1]] - mesh.nodes[mesh.edges[e, 0]]
        )

        def cell_trace(c, values_of):
            ref = (xe - mesh.nodes[mesh.cells[c, 0]]) @ Binv[c].T
            return values_of(mesh, spaces, u, ref)[c]

        jump_grad = nu * (
            cell_trace(a, assembly.velocity_gradients)
            - cell_trace(b, assembly.velocity_gradients)
        ) @ n_e
        jump_sq = h_e * h_e * np.einsum("q,qe,qe->", ws, jump_grad, jump_grad)
        got = report.eta_jump[a] ** 2 + report.eta_jump[b] ** 2
        assert rel_match(got, jump_sq), f"{pair} flux jump"
        assert rel_match(report.eta_jump[a], report.eta_jump[b]), "half split"

        jump_tan = nu * (
            cell_trace(a, assembly.velocity_laplacians)
            - cell_trace(b, assembly.velocity_laplacians)
        ) @ t_e
        jump2_sq = h_e**3 * h_e * (ws @ jump_tan**2)
        got2 = report.eta_jump2[a] ** 2 + report.eta_jump2[b] ** 2
        assert rel_match(got2, jump2_sq), f"{pair} tangential residual jump"
