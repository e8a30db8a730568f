"""Adaptive refinement driver: solve, estimate, mark, refine.

A study runs that loop on one benchmark/pair/viscosity combination until a
level or dof budget is exhausted, logging the error, both error majorants
and every estimator sub-term per level.  Marking follows a maximum
strategy: an element is refined when its indicator reaches a fixed fraction
of the current largest one, ties included, so the marked set is never
empty.  Everything here is deterministic given the configuration; wall
times are recorded but carry no semantics.
"""

import time
from dataclasses import dataclass, field, fields

import numpy as np

from .basis import PAIRS, build_pair_spaces
from .estimators import estimate, marking_indicators
from .linsolve import SolverError, solve_problem
from .problems import get_problem
from .reconstruction import operator_tag

DEFAULT_MAX_LEVELS = 25
DEFAULT_MAX_NDOF = 200_000
DEFAULT_MARKING_FRACTION = 0.25

# coarse enough that adaptivity has room to act, fine enough that the
# level-0 saddle point is well posed for every pair
BASE_MESH_DIVISIONS = {"square": 4, "lshape": 2}


@dataclass(frozen=True)
class StudyConfig:
    """One refinement study: what to solve and how to drive the loop."""

    problem: str
    pair: str
    mode: str = "classical"
    nu: float = 1.0
    estimator: str = "new"
    refine: str = "uniform"
    levels: int = DEFAULT_MAX_LEVELS
    max_ndof: float = DEFAULT_MAX_NDOF
    marking_fraction: float = DEFAULT_MARKING_FRACTION
    quad_degree: int = None
    out: str = None

    def __post_init__(self):
        if not 0.0 < self.marking_fraction <= 1.0:
            raise ValueError(
                f"marking fraction must lie in (0, 1], got {self.marking_fraction}"
            )
        if self.mode not in ("classical", "robust"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.refine not in ("uniform", "adaptive"):
            raise ValueError(f"unknown refinement mode {self.refine!r}")
        if self.estimator not in ("class", "new"):
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.pair not in PAIRS:
            raise ValueError(f"unknown element pair {self.pair!r}")
        if self.levels < 1:
            raise ValueError("need at least one level")


@dataclass(frozen=True)
class LevelRecord:
    """One row of a study log; field order matches the CSV schema."""

    level: int
    ndof: int
    err_h1: float
    mu_class: float
    mu_new: float
    eta_vol: float
    eta_curl: float
    eta_jump: float
    eta_jump2: float
    eta_cons1: float
    eta_cons2: float
    div_norm: float
    eff_class: float
    eff_new: float
    seconds: float


CSV_COLUMNS = tuple(f.name for f in fields(LevelRecord))


@dataclass
class StudyLog:
    """Ordered level records plus the state the loop ended on."""

    config: StudyConfig
    records: list = field(default_factory=list)
    aborted: str = None
    final_mesh: object = None

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records], dtype=float)


def mark(report, fraction, estimator="new"):
    """Indices of cells whose indicator reaches fraction * max, ties kept."""
    eta = marking_indicators(report, estimator)
    if eta.size == 0:
        raise ValueError("cannot mark an empty report")
    return np.flatnonzero(eta >= fraction * eta.max())


def base_mesh_for(problem):
    return problem.base_mesh(BASE_MESH_DIVISIONS[problem.domain])


def run_study(config, initial_mesh=None):
    """Run the solve-estimate-mark-refine loop and log every level.

    The loop stops at config.levels, or once the dof budget is reached; the
    final logged level may overshoot max_ndof by a single refinement step.
    A solver failure ends the run cleanly with the failure recorded on the
    log.  Raises for configurations that cannot be built at all.
    """
    problem = get_problem(config.problem)
    pair = PAIRS[config.pair]
    operator_tag(pair.name, config.mode)  # unsupported combinations fail fast
    mesh = base_mesh_for(problem) if initial_mesh is None else initial_mesh

    log = StudyLog(config=config)
    for level in range(config.levels):
        t0 = time.perf_counter()
        spaces = build_pair_spaces(mesh, pair)
        ndof = spaces.num_velocity_dofs + spaces.num_pressure_dofs
        try:
            sol, op = solve_problem(
                mesh, spaces, problem, config.nu, config.mode,
                rhs_degree=config.quad_degree,
            )
        except SolverError as exc:
            log.aborted = str(exc)
            break
        report = estimate(mesh, spaces, sol.u, sol.p, problem, config.nu, op)
        seconds = time.perf_counter() - t0
        log.records.append(
            LevelRecord(
                level=level,
                ndof=ndof,
                err_h1=report.err_h1,
                mu_class=report.mu_class,
                mu_new=report.mu_new,
                eta_vol=report.total_vol,
                eta_curl=report.total_curl,
                eta_jump=report.total_jump,
                eta_jump2=report.total_jump2,
                eta_cons1=report.total_cons1,
                eta_cons2=report.total_cons2,
                div_norm=report.div_norm,
                eff_class=report.eff_class,
                eff_new=report.eff_new,
                seconds=seconds,
            )
        )
        log.final_mesh = mesh
        if ndof >= config.max_ndof or level == config.levels - 1:
            break
        if config.refine == "uniform":
            mesh = mesh.refine_uniform()
        else:
            marked = mark(report, config.marking_fraction, config.estimator)
            mesh = mesh.refine_adaptive(marked)

    ndofs = [r.ndof for r in log.records]
    assert all(a < b for a, b in zip(ndofs, ndofs[1:])), "ndof must increase"
    return log


def eoc(log, column="err_h1"):
    """Experimental orders of convergence between consecutive levels.

    rate_i = -2 log(e_{i+1}/e_i) / log(n_{i+1}/n_i), so on quasi-uniform
    families (n ~ h^-2) a rate of k corresponds to O(h^k).
    """
    records = log.records if isinstance(log, StudyLog) else list(log)
    if len(records) < 2:
        raise ValueError("need at least two levels for a rate")
    vals = np.array([getattr(r, column) for r in records], dtype=float)
    ndof = np.array([r.ndof for r in records], dtype=float)
    if np.any(vals <= 0.0):
        raise ValueError(f"column {column!r} must be positive to take rates")
    return list(
        -2.0 * np.log(vals[1:] / vals[:-1]) / np.log(ndof[1:] / ndof[:-1])
    )
