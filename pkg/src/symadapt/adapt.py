"""Adaptive time stepping driven by the error indicators, plus uniform baselines."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from .estimate import ErrorBreakdown, breakdown, discrete_value
from .mesh import TimeMesh, interpolate_trajectory, refine, uniform_mesh
from .problem import ProblemSpec
from .solver import (
    SolverFailure,
    SolverSettings,
    SolveStats,
    Trajectory,
    default_initial_guess,
    solve_newton,
    solve_with_continuation,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AdaptSettings:
    tol: float
    s: float = 0.25
    M: int = 2
    K: float = 1e-6
    max_levels: int = 30
    initial_N: int = 20

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not 0 < self.s < 1:
            raise ValueError("s must lie in (0, 1)")
        if int(self.M) != self.M or self.M < 2:
            raise ValueError("M must be an integer >= 2")
        if not self.K > 0:
            raise ValueError("K must be positive")
        if self.max_levels < 0 or self.initial_N < 1:
            raise ValueError("max_levels must be >= 0 and initial_N >= 1")


class Termination(str, enum.Enum):
    BREAK = "BreakCriterion"
    MAX_LEVELS = "MaxLevels"
    SOLVER_FAILURE = "SolverFailure"
    TARGET = "TargetReached"


@dataclass(eq=False)
class LevelRecord:
    level: int
    mesh: TimeMesh
    trajectory: Trajectory
    errors: ErrorBreakdown
    stats: SolveStats
    value: float
    cumulative_steps: int

    @property
    def N(self) -> int:
        return self.mesh.N

    @property
    def E(self) -> float:
        return self.errors.estimate


@dataclass(eq=False)
class AdaptReport:
    problem: ProblemSpec
    kind: str
    levels: list[LevelRecord] = field(default_factory=list)
    terminated_by: Termination | None = None
    message: str = ""
    tol: float | None = None
    settings: dict = field(default_factory=dict)

    @property
    def final(self) -> LevelRecord:
        return self.levels[-1]

    @property
    def final_value(self) -> float:
        return self.levels[-1].value

    def errors_against(self, reference: float) -> np.ndarray:
        return np.array([abs(r.value - reference) for r in self.levels])


def _solve(problem, mesh, guess, solver_settings, continuation):
    if continuation:
        return solve_with_continuation(problem, mesh, guess, solver_settings)
    return solve_newton(problem, mesh, guess, solver_settings)


def _record(report: AdaptReport, problem, mesh, traj, stats, K):
    cum = (report.levels[-1].cumulative_steps if report.levels else 0) + mesh.N
    rec = LevelRecord(
        level=len(report.levels),
        mesh=mesh,
        trajectory=traj,
        errors=breakdown(problem, mesh, traj, K),
        stats=stats,
        value=discrete_value(problem, mesh, traj),
        cumulative_steps=cum,
    )
    report.levels.append(rec)
    return rec


def _fail(report: AdaptReport, exc: SolverFailure):
    report.terminated_by = Termination.SOLVER_FAILURE
    report.message = f"{type(exc).__name__}: {exc}"
    log.warning("%s %s run stopped at level %d: %s", report.problem.label, report.kind,
                len(report.levels), report.message)
    return report


def run_adaptive(problem: ProblemSpec, settings: AdaptSettings,
                 solver_settings: SolverSettings | None = None, continuation: bool = False,
                 initial_mesh: TimeMesh | None = None) -> AdaptReport:
    """Solve, estimate, test, refine; repeat until the break criterion holds.

    ``continuation`` enables the homotopy fallback for the first-level solve.
    """
    solver_settings = solver_settings or SolverSettings()
    report = AdaptReport(problem, "adaptive", tol=settings.tol, settings=vars(settings).copy())
    mesh = initial_mesh if initial_mesh is not None else uniform_mesh(problem.horizon, settings.initial_N)
    guess = default_initial_guess(problem, mesh)
    level = 0
    while True:
        try:
            traj, stats = _solve(problem, mesh, guess, solver_settings, continuation and level == 0)
        except SolverFailure as exc:
            return _fail(report, exc)
        rec = _record(report, problem, mesh, traj, stats, settings.K)
        N = mesh.N
        r_bar = rec.errors.r_bar
        log.info("%s level %d: N=%d E=%.3e max r=%.3e TOL/N=%.3e", problem.label, level, N,
                 rec.E, r_bar.max(), settings.tol / N)
        if r_bar.max() < settings.tol / N:
            report.terminated_by = Termination.BREAK
            return report
        if level >= settings.max_levels:
            report.terminated_by = Termination.MAX_LEVELS
            return report
        flags = r_bar > settings.s * settings.tol / N
        if not flags.any():  # cannot happen for s < 1; kept as a loop guard
            report.terminated_by = Termination.BREAK
            return report
        new_mesh = refine(mesh, flags, settings.M)
        guess = interpolate_trajectory(mesh, traj, new_mesh)
        mesh = new_mesh
        level += 1


def run_uniform(problem: ProblemSpec, initial_N: int, num_levels: int,
                solver_settings: SolverSettings | None = None, K: float = 1e-6,
                continuation: bool = False) -> AdaptReport:
    """Uniform meshes ``N, 2N, 4N, ...`` with the same per-level bookkeeping."""
    if num_levels < 1:
        raise ValueError("num_levels must be >= 1")
    return _uniform(problem, initial_N, solver_settings, K, continuation,
                    lambda rec: rec.level + 1 >= num_levels, Termination.MAX_LEVELS)


def run_uniform_until(problem: ProblemSpec, initial_N: int, target_E: float,
                      solver_settings: SolverSettings | None = None, K: float = 1e-6,
                      continuation: bool = False, max_levels: int = 16,
                      max_N: int = 2_000_000) -> AdaptReport:
    """Double ``N`` until the level's estimate ``E <= target_E`` (or a size cap binds)."""
    if not target_E > 0:
        raise ValueError("target_E must be positive")
    report = _uniform(problem, initial_N, solver_settings, K, continuation,
                      lambda rec: rec.E <= target_E, Termination.TARGET,
                      max_levels=max_levels, max_N=max_N)
    return report


def _uniform(problem, initial_N, solver_settings, K, continuation, stop, stop_reason,
             max_levels=None, max_N=None):
    solver_settings = solver_settings or SolverSettings()
    report = AdaptReport(problem, "uniform", settings={"initial_N": initial_N, "K": K})
    N = int(initial_N)
    mesh = uniform_mesh(problem.horizon, N)
    guess = default_initial_guess(problem, mesh)
    while True:
        try:
            traj, stats = _solve(problem, mesh, guess, solver_settings, continuation and not report.levels)
        except SolverFailure as exc:
            return _fail(report, exc)
        rec = _record(report, problem, mesh, traj, stats, K)
        log.info("%s uniform N=%d E=%.3e value=%.12g", problem.label, N, rec.E, rec.value)
        if stop(rec):
            report.terminated_by = stop_reason
            return report
        N *= 2
        if (max_levels is not None and rec.level + 1 > max_levels) or (max_N is not None and N > max_N):
            report.terminated_by = Termination.MAX_LEVELS
            return report
        new_mesh = uniform_mesh(problem.horizon, N)
        guess = interpolate_trajectory(mesh, traj, new_mesh)
        mesh = new_mesh


# --------------------------------------------------------------------------
# comparisons


def quasi_norms(rho_bar, mesh: TimeMesh) -> tuple[float, float]:
    """Discrete ``L^{1/2}`` and ``L^1`` quasi-norms of a piecewise-constant density."""
    a = np.abs(np.asarray(rho_bar))
    dt = mesh.dt
    return float(np.sum(np.sqrt(a) * dt) ** 2), float(np.sum(a * dt))


def _true_error(rec: LevelRecord, reference):
    return None if reference is None else abs(rec.value - reference)


def compare(adaptive: AdaptReport, uniform: AdaptReport, reference: float | None = None) -> dict:
    """Work-versus-error table for an adaptive and a uniform run of the same problem.

    When the reference value is exactly 0 the functional value is itself the
    error and the dominance rows use it; otherwise they use the estimate E.
    """
    if adaptive.problem.label != uniform.problem.label or adaptive.problem.params != uniform.problem.params:
        raise ValueError("reports belong to different problems")
    if reference is None:
        reference = adaptive.problem.exact_value
    rows = []
    for rep in (adaptive, uniform):
        for rec in rep.levels:
            rows.append({
                "source": rep.kind,
                "level": rec.level,
                "N": rec.N,
                "cumulative_steps": rec.cumulative_steps,
                "E": rec.E,
                "value": rec.value,
                "true_error": _true_error(rec, reference),
            })
    out = {"rows": rows, "reference": reference}
    fin = adaptive.final
    l_half, l_one = quasi_norms(fin.errors.rho_bar, fin.mesh)
    out["norms"] = {
        "tol": adaptive.tol,
        "N_final": fin.N,
        "tol_times_N": None if adaptive.tol is None else adaptive.tol * fin.N,
        "rho_bar_L_half": l_half,
        "rho_bar_L_one": l_one,
    }
    key = "value" if reference == 0.0 else "E"
    out["dominance"] = {"measure": key, "rows": dominance(adaptive, uniform, key)}
    return out


def first_reach(report: AdaptReport, target: float, key: str = "E"):
    """Cumulative steps at the first level whose error is ``<= target`` (None if never)."""
    hit = next((r for r in report.levels if level_error(r, key) <= target), None)
    return None if hit is None else hit.cumulative_steps


def level_error(rec: LevelRecord, key: str = "E") -> float:
    """``E`` (the estimate) or ``|value|`` (problems whose exact minimum is 0)."""
    if key == "E":
        return rec.E
    if key == "value":
        return abs(rec.value)
    raise ValueError(f"unknown error measure {key!r}")


def dominance(adaptive: AdaptReport, uniform: AdaptReport, key: str = "E") -> list[dict]:
    """Work needed by each sequence to first reach every adaptive error level.

    For each adaptive level with error ``E*`` both sequences are scanned for
    their first level with error ``<= E*``.  ``ok`` is True when the uniform
    sequence needs at least as many cumulative steps, or never gets there
    after doing at least as much work; ``None`` marks an inconclusive row
    (the uniform run stopped early without reaching ``E*``).
    """
    done = uniform.levels[-1].cumulative_steps if uniform.levels else 0
    out = []
    for rec in adaptive.levels:
        target = level_error(rec, key)
        a_steps = first_reach(adaptive, target, key)
        u_steps = first_reach(uniform, target, key)
        if u_steps is not None:
            ok = u_steps >= a_steps
        else:
            ok = True if done >= a_steps else None
        out.append({
            "level": rec.level,
            "error": target,
            "adaptive_steps": a_steps,
            "uniform_steps": u_steps,
            "ok": ok,
        })
    return out
