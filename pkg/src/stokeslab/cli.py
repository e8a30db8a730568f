"""Command-line front end: convergence studies, viscosity sweeps, self checks.

Two subcommands.  ``study`` runs the solve-estimate-refine driver over the
cross product of the supplied viscosities and modes and writes one CSV per
run (or, with --fixed-mesh-ndof, one viscosity-sweep CSV per mode), plus a
JSON manifest that every CSV references in a trailing comment line.
``verify`` runs a self-contained property suite and prints a pass/fail
table.

Exit codes: 0 success, 1 solver or verification failure, 2 bad flags.
Floats are written with 17 significant digits so CSV round-trips are exact.
The environment variable STOKESLAB_THREADS caps how many runs execute
concurrently (default 1).
"""

import argparse
import datetime
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, replace

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from . import __version__, assembly, basis, estimators, quadrature
from . import reconstruction as rc
from .adapt import CSV_COLUMNS, StudyConfig, run_study
from .basis import PAIRS, build_pair_spaces
from .linsolve import solve_problem
from .mesh import lshape, unit_square
from .problems import PROBLEMS, get_problem

NDOF_CONVENTION = "ndof = velocity dofs + pressure dofs"


def _fmt(value):
    """One CSV field: integers verbatim, floats with 17 significant digits."""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def write_csv(path, header, rows, manifest_name):
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    lines.append(f"# manifest: {manifest_name}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def fixed_mesh_for(problem, pair, target):
    """Smallest-|ndof - target| uniform mesh for the pair on the domain.

    Scans subdivision counts upward and keeps the best match; stops once
    meshes overshoot the target, since ndof grows monotonically with n.
    """
    best = None
    for n in range(2, 257):
        mesh = problem.base_mesh(n)
        spaces = build_pair_spaces(mesh, PAIRS[pair])
        ndof = spaces.num_velocity_dofs + spaces.num_pressure_dofs
        if best is None or abs(ndof - target) < abs(best[0] - target):
            best = (ndof, mesh)
        if ndof > target:
            break
    return best[1], best[0]


def _thread_cap():
    raw = os.environ.get("STOKESLAB_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _run_all(configs, worker):
    """Run the worker over configs, results in submission order."""
    cap = min(_thread_cap(), max(1, len(configs)))
    if cap == 1:
        return [worker(c) for c in configs]
    with ThreadPoolExecutor(max_workers=cap) as pool:
        return list(pool.map(worker, configs))


def _out_paths(base, tags):
    if len(tags) == 1:
        return [base]
    stem, ext = os.path.splitext(base)
    return [f"{stem}_{tag}{ext}" for tag in tags]


def _write_manifest(path, args, runs):
    doc = {
        "tool": "stokeslab",
        "version": __version__,
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "seed": args.seed,
        "ndof_convention": NDOF_CONVENTION,
        "csv_schema": list(CSV_COLUMNS),
        "runs": runs,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse_nu(text, parser):
    try:
        values = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        parser.error(f"--nu expects a comma-separated float list, got {text!r}")
    if not values or not all(np.isfinite(v) and v > 0 for v in values):
        parser.error(f"--nu values must be positive and finite, got {text!r}")
    return values


def _parse_modes(text, parser):
    modes = [tok.strip() for tok in text.split(",") if tok.strip()]
    for mode in modes:
        if mode not in ("classical", "robust"):
            parser.error(f"--mode must be classical or robust, got {mode!r}")
    if not modes:
        parser.error("--mode is empty")
    return modes


def cmd_study(args, parser):
    nus = _parse_nu(args.nu, parser)
    modes = _parse_modes(args.mode, parser)
    try:
        problem = get_problem(args.problem)
        for mode in modes:
            rc.operator_tag(args.pair, mode)  # reject unsupported combinations
        base = {
            "problem": args.problem,
            "pair": args.pair,
            "estimator": args.estimator,
            "refine": args.refine,
            "marking_fraction": args.marking_fraction,
            "quad_degree": args.quad_degree,
        }
        if args.levels is not None:
            base["levels"] = args.levels
        if args.max_ndof is not None:
            base["max_ndof"] = int(args.max_ndof)
        configs = [
            StudyConfig(mode=mode, nu=nu, **base)
            for mode in modes
            for nu in nus
        ]
    except (KeyError, ValueError) as exc:
        parser.error(str(exc))

    out = args.out or "study.csv"
    out_dir = os.path.dirname(out)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    stem = os.path.splitext(out)[0]
    manifest_path = stem + "_manifest.json"
    manifest_name = os.path.basename(manifest_path)

    runs = []
    failed = False
    if args.fixed_mesh_ndof is not None:
        # one mesh shared by every run; one sweep CSV per mode with the
        # viscosity replacing the level column
        mesh, ndof = fixed_mesh_for(problem, args.pair, args.fixed_mesh_ndof)
        sweep_cfgs = [replace(c, refine="uniform", levels=1) for c in configs]
        logs = _run_all(sweep_cfgs, lambda c: run_study(c, initial_mesh=mesh))
        header = ("nu",) + CSV_COLUMNS[1:]
        for mode, path in zip(modes, _out_paths(out, modes)):
            rows = []
            for cfg, log in zip(sweep_cfgs, logs):
                if cfg.mode != mode:
                    continue
                if log.aborted is not None:
                    print(f"solver failure (nu={cfg.nu:g}): {log.aborted}",
                          file=sys.stderr)
                    failed = True
                    continue
                rec = log.records[0]
                rows.append((cfg.nu,) + tuple(
                    getattr(rec, name) for name in CSV_COLUMNS[1:]))
            write_csv(path, header, rows, manifest_name)
            runs.append({
                "config": [asdict(c) for c in sweep_cfgs if c.mode == mode],
                "fixed_mesh_ndof": ndof,
                "output": os.path.basename(path),
            })
    else:
        tags = [f"{c.mode}_nu{c.nu:g}" for c in configs]
        logs = _run_all(configs, run_study)
        for cfg, log, path in zip(configs, logs, _out_paths(out, tags)):
            rows = [
                tuple(getattr(rec, name) for name in CSV_COLUMNS)
                for rec in log.records
            ]
            write_csv(path, CSV_COLUMNS, rows, manifest_name)
            entry = {"config": asdict(cfg), "output": os.path.basename(path)}
            if log.aborted is not None:
                print(f"solver failure (nu={cfg.nu:g}): {log.aborted}",
                      file=sys.stderr)
                entry["aborted"] = log.aborted
                failed = True
            runs.append(entry)

    _write_manifest(manifest_path, args, runs)
    return 1 if failed else 0


# ------------------------------------------------------------ verification


def _check_quadrature_exactness(quick, seed):
    import math

    worst = 0.0
    degrees = (2, 4, 6) if quick else (1, 2, 3, 4, 5, 6, 8, 10, 12)
    for deg in degrees:
        pts, w = quadrature.triangle_rule(deg)
        for i in range(deg + 1):
            for j in range(deg + 1 - i):
                got = float(w @ (pts[:, 0] ** i * pts[:, 1] ** j))
                want = math.factorial(i) * math.factorial(j) / math.factorial(i + j + 2)
                worst = max(worst, abs(got - want) / want)
        s, ws = quadrature.edge_rule(deg)
        for i in range(deg + 1):
            got = float(ws @ s**i)
            worst = max(worst, abs(got - 1.0 / (i + 1)) * (i + 1))
    return worst < 1e-13, f"max relative defect {worst:.2e}"


def _check_basis_gradients(quick, seed):
    rng = np.random.default_rng(seed)
    spaces = ("p1", "p2", "p1b", "p2b", "p0", "p1dc")
    pts = rng.uniform(0.08, 0.25, size=(4 if quick else 12, 2))
    h = 1e-5
    worst = 0.0
    for space in spaces:
        grad = basis.shape_gradients(space, pts)
        for axis in range(2):
            dp = np.zeros(2)
            dp[axis] = h
            fd = (basis.shape_values(space, pts + dp)
                  - basis.shape_values(space, pts - dp)) / (2 * h)
            worst = max(worst, float(np.max(np.abs(fd - grad[..., axis]))))
    return worst < 1e-7, f"max finite-difference defect {worst:.2e}"


def _divfree_field(mesh, spaces, rng):
    """Euclidean projection of a random vector onto the discrete kernel."""
    B = assembly.divergence_matrix(mesh, spaces)
    nv = spaces.num_velocity_dofs
    S = sps.bmat(
        [[sps.identity(nv, format="csr"), B.T], [B, None]], format="csc"
    )
    r = rng.normal(size=nv)
    sol = spla.spsolve(S, np.concatenate([r, np.zeros(B.shape[0])]))
    v = sol[:nv]
    return v / np.max(np.abs(v))


def _check_reconstruction_divfree(quick, seed):
    rng = np.random.default_rng(seed)
    count = 5 if quick else 25
    pts, _ = quadrature.triangle_rule(6)
    worst_div = worst_mom = 0.0
    for pair in ("p2p0", "p2b"):
        mesh = unit_square(4)
        spaces = build_pair_spaces(mesh, PAIRS[pair])
        op = rc.build_reconstruction(mesh, spaces, rc.operator_tag(pair, "robust"))
        for _ in range(count):
            v = _divfree_field(mesh, spaces, rng)
            gamma = rc.interpolate(op, spaces, v)
            worst_div = max(
                worst_div, float(np.max(np.abs(rc.hdiv_divergence(op, gamma, pts))))
            )
            worst_mom = max(worst_mom, rc.edge_moment_defect(op, spaces, v))
    ok = worst_div < 1e-10 and worst_mom < 1e-12
    return ok, f"max divergence {worst_div:.2e}, max moment defect {worst_mom:.2e}"


def _check_hydrostatic_invariance(quick, seed):
    mesh = unit_square(3 if quick else 5)
    problem = get_problem("hydrostatic")
    spaces = build_pair_spaces(mesh, PAIRS["p2b"])
    sol, op = solve_problem(mesh, spaces, problem, 1e-3, "robust")
    report = estimators.estimate(mesh, spaces, sol.u, sol.p, problem, 1e-3, op)
    return report.err_h1 < 1e-9, f"robust velocity error {report.err_h1:.2e}"


def _check_estimator_reliability(quick, seed):
    # a sound estimator keeps the efficiency index bounded and level-stable;
    # sign errors in the edge terms inflate it by ~4x per uniform refinement
    problem = get_problem("smooth")
    effs = []
    for n in (3, 9) if quick else (4, 10):
        mesh = unit_square(n)
        spaces = build_pair_spaces(mesh, PAIRS["th2"])
        sol, op = solve_problem(mesh, spaces, problem, 1.0, "classical")
        report = estimators.estimate(mesh, spaces, sol.u, sol.p, problem, 1.0, op)
        effs.append(report.eff_class)
    ratio = effs[1] / effs[0]
    ok = all(1.0 <= e <= 100.0 for e in effs[:1]) and ratio <= 2.0
    return ok, f"efficiency index {effs[0]:.2f} -> {effs[1]:.2f} (ratio {ratio:.2f})"


def _check_determinism(quick, seed):
    cfg = StudyConfig("smooth", "p2p0", mode="robust", nu=1e-2, levels=3)
    a, b = run_study(cfg), run_study(cfg)
    names = [n for n in CSV_COLUMNS if n != "seconds"]
    same = all(
        getattr(ra, n) == getattr(rb, n)
        for ra, rb in zip(a.records, b.records)
        for n in names
    ) and len(a.records) == len(b.records)
    return same, "identical records across repeated runs (timings excluded)"


VERIFY_CHECKS = (
    ("quadrature exactness", _check_quadrature_exactness),
    ("basis gradients", _check_basis_gradients),
    ("reconstruction divergence-free", _check_reconstruction_divfree),
    ("hydrostatic invariance", _check_hydrostatic_invariance),
    ("estimator reliability", _check_estimator_reliability),
    ("determinism", _check_determinism),
)


def cmd_verify(args, parser):
    t0 = time.perf_counter()
    width = max(len(name) for name, _ in VERIFY_CHECKS)
    failures = 0
    for name, check in VERIFY_CHECKS:
        if args.quick and name == "determinism":
            continue
        ok, detail = check(args.quick, args.seed)
        failures += not ok
        print(f"{name:<{width}}  {'PASS' if ok else 'FAIL'}  {detail}")
    print(f"{'total':<{width}}  {time.perf_counter() - t0:.1f}s")
    return 1 if failures else 0


# -------------------------------------------------------------- entry point


def build_parser():
    parser = argparse.ArgumentParser(
        prog="stokeslab",
        description="Stokes finite element studies with a posteriori estimators",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    study = sub.add_parser("study", help="run solve-estimate-refine studies")
    study.add_argument("--problem", required=True, choices=sorted(PROBLEMS))
    study.add_argument("--pair", required=True, choices=sorted(PAIRS))
    study.add_argument("--mode", default="classical",
                       help="classical, robust, or a comma list of both")
    study.add_argument("--estimator", default="new", choices=("class", "new"))
    study.add_argument("--nu", default="1.0", help="comma-separated viscosities")
    study.add_argument("--refine", default="uniform",
                       choices=("uniform", "adaptive"))
    study.add_argument("--levels", type=int, default=None)
    study.add_argument("--max-ndof", type=float, default=None)
    study.add_argument("--fixed-mesh-ndof", type=int, default=None)
    study.add_argument("--marking-fraction", type=float, default=0.25)
    study.add_argument("--out", default="study.csv")
    study.add_argument("--seed", type=int, default=0)
    study.add_argument("--quad-degree", type=int, default=None)

    verify = sub.add_parser("verify", help="run the property self-checks")
    verify.add_argument("--quick", action="store_true",
                        help="smaller sample counts, skips the determinism check")
    verify.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "study":
        return cmd_study(args, parser)
    return cmd_verify(args, parser)


if __name__ == "__main__":
    sys.exit(main())
