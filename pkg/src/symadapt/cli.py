"""Batch front end.

    symadapt adapt|uniform|compare|oracle|check --config run.toml [--out DIR] [--parallel K]

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 check failure.
The configuration schema is documented in ``docs/config.md``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import tomli

from .adapt import (
    AdaptReport,
    AdaptSettings,
    Termination,
    compare,
    quasi_norms,
    run_adaptive,
    run_uniform,
    run_uniform_until,
)
from .audit import audit_model
from .estimate import c_ratios, discrete_value
from .examples import REGISTRY, DpGrid, build_problem, dp_oracle_1d
from .mesh import uniform_mesh
from .problem import UnsupportedOperation, recover_control
from .solver import SolverFailure, SolverSettings, solve_newton, solve_with_continuation

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_CHECK = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class UniformConfig:
    initial_N: int = 20
    num_levels: int | None = None
    target_E: float | None = None
    max_N: int = 2_000_000


@dataclass(frozen=True)
class CompareConfig:
    reference: float | None = None
    reference_N: int | None = None


@dataclass(frozen=True)
class OracleConfig:
    N: int = 40
    x_lo: float | None = None
    x_hi: float | None = None
    nx: int | None = None
    n_beta: int | None = None
    beta_lo: float | None = None
    beta_hi: float | None = None
    richardson: bool = True


@dataclass(frozen=True)
class CheckConfig:
    points: int = 100
    jacobian_iterates: int = 10
    tolerance: float | None = None


@dataclass(frozen=True)
class RunConfig:
    problem: str
    params: dict
    adapt: AdaptSettings
    solver: SolverSettings
    continuation: bool = True
    uniform: UniformConfig = field(default_factory=UniformConfig)
    compare: CompareConfig = field(default_factory=CompareConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    check: CheckConfig = field(default_factory=CheckConfig)
    output_dir: str = "out"
    seed: int = 0
    source: str = ""


# default oracle grids per problem: (x_lo, x_hi, nx, n_beta, beta_lo, beta_hi)
_ORACLE_GRIDS = {
    "simple_control": (-0.1, 0.6, 2001, 201, -1.0, 1.0),
    "toy_drift": (-1.0, 3.0, 401, 3, 0.0, 2.0),
    "toy_quadratic": (-2.0, 2.0, 401, 3, -1.0, 1.0),
    "hyper_sensitive": (-0.5, 1.5, 801, 241, -3.0, 3.0),
}

_TOP_KEYS = {"problem", "adapt", "solver", "uniform", "compare", "oracle", "check", "output_dir", "seed"}


def _take(table: dict, cls, where: str, extra=()):
    if not isinstance(table, dict):
        raise ConfigError(f"[{where}] must be a table")
    names = {f.name for f in fields(cls)}
    unknown = set(table) - names - set(extra)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {sorted(unknown)}")
    kw = {k: v for k, v in table.items() if k in names}
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{where}]: {exc}") from None


def parse_config(data: dict, source: str = "") -> RunConfig:
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {sorted(unknown)}")
    prob = dict(data.get("problem", {}))
    label = prob.pop("label", None)
    if label is None:
        raise ConfigError("[problem] needs a label")
    if label not in REGISTRY:
        raise ConfigError(f"unknown problem label {label!r}; choose from {sorted(REGISTRY)}")
    allowed = REGISTRY[label][1]
    bad = set(prob) - set(allowed)
    if bad:
        raise ConfigError(f"unknown parameter(s) {sorted(bad)} for {label}; allowed {list(allowed)}")
    adapt_t = data.get("adapt", {"tol": 1e-2})
    if "tol" not in adapt_t:
        raise ConfigError("[adapt] needs tol")
    adapt = _take(adapt_t, AdaptSettings, "adapt")
    solver_t = dict(data.get("solver", {}))
    continuation = solver_t.pop("continuation", True)
    if not isinstance(continuation, bool):
        raise ConfigError("[solver] continuation must be a boolean")
    solver = _take(solver_t, SolverSettings, "solver")
    uniform = _take(data.get("uniform", {}), UniformConfig, "uniform")
    if uniform.num_levels is not None and uniform.target_E is not None:
        raise ConfigError("[uniform] takes num_levels or target_E, not both")
    seed = data.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed must be an integer")
    out = data.get("output_dir", "out")
    if not isinstance(out, str):
        raise ConfigError("output_dir must be a string")
    return RunConfig(
        problem=label,
        params=prob,
        adapt=adapt,
        solver=solver,
        continuation=continuation,
        uniform=uniform,
        compare=_take(data.get("compare", {}), CompareConfig, "compare"),
        oracle=_take(data.get("oracle", {}), OracleConfig, "oracle"),
        check=_take(data.get("check", {}), CheckConfig, "check"),
        output_dir=out,
        seed=seed,
        source=source,
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(data, str(path))


# --------------------------------------------------------------------------
# writers


def _g(v) -> str:
    return "" if v is None else f"{float(v):.17g}"


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    if isinstance(obj, Termination):
        return obj.value
    return obj


def write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=False)
        fh.write("\n")


def report_dict(report: AdaptReport, solver: SolverSettings) -> dict:
    out = {
        "problem": {"label": report.problem.label, "params": report.problem.params},
        "kind": report.kind,
        "settings": report.settings,
        "solver": asdict(solver),
        "terminated_by": report.terminated_by,
        "message": report.message,
        "final_value": report.final_value if report.levels else None,
        "levels": [],
    }
    for rec in report.levels:
        out["levels"].append({
            "level": rec.level,
            "N": rec.N,
            "cumulative_steps": rec.cumulative_steps,
            "E": rec.E,
            "max_r_bar": float(rec.errors.r_bar.max()),
            "floor_value": rec.errors.floor_value,
            "dt_max": float(rec.mesh.dt.max()),
            "value": rec.value,
            "solve": rec.stats.to_dict(),
        })
    if report.levels:
        l_half, l_one = quasi_norms(report.final.errors.rho_bar, report.final.mesh)
        out["final_norms"] = {"rho_bar_L_half": l_half, "rho_bar_L_one": l_one}
        out["final_norms"]["tol_times_N"] = None if report.tol is None else report.tol * report.final.N
    if report.kind == "adaptive" and len(report.levels) > 1:
        ratios = c_ratios([r.mesh for r in report.levels], [r.errors.rho_bar for r in report.levels])
        out["c_ratios"] = [c.to_dict() for c in ratios]
    return out


LEVEL_COLUMNS = ["level", "N", "cum_steps", "E", "newton_iters", "residual", "value"]


def write_levels_csv(path: Path, report: AdaptReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LEVEL_COLUMNS)
        for rec in report.levels:
            w.writerow([rec.level, rec.N, rec.cumulative_steps, _g(rec.E), rec.stats.iterations,
                        _g(rec.stats.residual_norm), _g(rec.value)])


def _controls(problem, traj):
    try:
        a = recover_control(problem.hamiltonian, traj.X[:-1], traj.lam[1:])
    except UnsupportedOperation:
        return None
    return np.asarray(a, dtype=float).reshape(traj.X.shape[0] - 1, -1)


def write_nodes_csv(path: Path, report: AdaptReport) -> None:
    """One row per node; interval quantities (dt, densities, control) are blank on the last node."""
    d = report.problem.state_dim
    alpha0 = _controls(report.problem, report.levels[0].trajectory) if report.levels else None
    na = 0 if alpha0 is None else alpha0.shape[1]
    header = (["level", "n", "t_n", "dt_n"] + [f"X_{i}" for i in range(d)] + [f"lambda_{i}" for i in range(d)]
              + ["rho", "rho_tilde", "rho_bar", "r_bar"] + [f"alpha_{i}" for i in range(na)])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for rec in report.levels:
            t = rec.mesh.nodes
            dt = rec.mesh.dt
            X, lam = rec.trajectory.X, rec.trajectory.lam
            eb = rec.errors
            alpha = _controls(report.problem, rec.trajectory) if na else None
            N = rec.N
            for n in range(N + 1):
                inner = n < N
                row = [rec.level, n, _g(t[n]), _g(dt[n]) if inner else ""]
                row += [_g(v) for v in X[n]] + [_g(v) for v in lam[n]]
                if inner:
                    row += [_g(eb.rho[n]), _g(eb.rho_tilde[n]), _g(eb.rho_bar[n]), _g(eb.r_bar[n])]
                    row += [_g(v) for v in alpha[n]] if na else []
                else:
                    row += [""] * (4 + na)
                w.writerow(row)


def write_report(out: Path, report: AdaptReport, solver: SolverSettings, prefix: str = "") -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / f"{prefix}report.json", report_dict(report, solver))
    write_levels_csv(out / f"{prefix}levels.csv", report)
    write_nodes_csv(out / f"{prefix}nodes.csv", report)


def write_work_error_csv(path: Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["source", "level", "N", "cumulative_steps", "E", "true_error"])
        for r in rows:
            w.writerow([r["source"], r["level"], r["N"], r["cumulative_steps"], _g(r["E"]), _g(r["true_error"])])


# --------------------------------------------------------------------------
# commands


def _problem(cfg: RunConfig):
    return build_problem(cfg.problem, **cfg.params)


def _status(report: AdaptReport) -> int:
    return EXIT_SOLVER if report.terminated_by is Termination.SOLVER_FAILURE else EXIT_OK


def cmd_adapt(cfg: RunConfig, out: Path) -> int:
    problem = _problem(cfg)
    report = run_adaptive(problem, cfg.adapt, cfg.solver, continuation=cfg.continuation)
    write_report(out, report, cfg.solver)
    return _status(report)


def _uniform_run(cfg: RunConfig, problem, target_E=None) -> AdaptReport:
    u = cfg.uniform
    K = cfg.adapt.K
    if u.num_levels is not None:
        return run_uniform(problem, u.initial_N, u.num_levels, cfg.solver, K, cfg.continuation)
    target = u.target_E if u.target_E is not None else target_E
    if target is None:
        raise ConfigError("[uniform] needs num_levels or target_E")
    return run_uniform_until(problem, u.initial_N, target, cfg.solver, K, cfg.continuation, max_N=u.max_N)


def _reference(cfg: RunConfig, problem):
    c = cfg.compare
    if c.reference is not None:
        return c.reference
    if c.reference_N is not None:
        mesh = uniform_mesh(problem.horizon, c.reference_N)
        traj, _ = solve_with_continuation(problem, mesh, None, cfg.solver)
        return discrete_value(problem, mesh, traj)
    return problem.exact_value


def _rows(report: AdaptReport, reference):
    return [{"source": report.kind, "level": r.level, "N": r.N, "cumulative_steps": r.cumulative_steps,
             "E": r.E, "true_error": None if reference is None else abs(r.value - reference)}
            for r in report.levels]


def cmd_uniform(cfg: RunConfig, out: Path) -> int:
    problem = _problem(cfg)
    report = _uniform_run(cfg, problem)
    write_report(out, report, cfg.solver)
    try:
        ref = _reference(cfg, problem)
    except SolverFailure as exc:
        log.error("reference solve failed: %s", exc)
        return EXIT_SOLVER
    write_work_error_csv(out / "work_error.csv", _rows(report, ref))
    return _status(report)


def cmd_compare(cfg: RunConfig, out: Path) -> int:
    problem = _problem(cfg)
    out.mkdir(parents=True, exist_ok=True)
    adaptive = run_adaptive(problem, cfg.adapt, cfg.solver, continuation=cfg.continuation)
    write_report(out, adaptive, cfg.solver, prefix="adaptive_")
    if adaptive.terminated_by is Termination.SOLVER_FAILURE:
        return EXIT_SOLVER
    uniform = _uniform_run(cfg, problem, target_E=adaptive.final.E)
    write_report(out, uniform, cfg.solver, prefix="uniform_")
    try:
        ref = _reference(cfg, problem)
    except SolverFailure as exc:
        log.error("reference solve failed: %s", exc)
        return EXIT_SOLVER
    table = compare(adaptive, uniform, ref)
    write_work_error_csv(out / "work_error.csv", table["rows"])
    write_json(out / "compare.json", table)
    return _status(uniform)


def _oracle_grid(cfg: RunConfig, problem) -> DpGrid:
    o = cfg.oracle
    base = _ORACLE_GRIDS.get(problem.label)
    vals = [o.x_lo, o.x_hi, o.nx, o.n_beta, o.beta_lo, o.beta_hi]
    if base is None and any(v is None for v in vals):
        raise ConfigError(f"[oracle] needs an explicit grid for {problem.label}")
    if base is not None:
        vals = [b if v is None else v for v, b in zip(vals, base)]
    if problem.label == "toy_drift" and o.x_lo is None:
        x0, T = problem.initial_state[0], problem.horizon
        vals[0], vals[1] = x0 - 1.0, x0 + T + 1.0
    try:
        return DpGrid(*vals)
    except ValueError as exc:
        raise ConfigError(f"[oracle]: {exc}") from None


def cmd_oracle(cfg: RunConfig, out: Path) -> int:
    problem = _problem(cfg)
    if problem.state_dim != 1 or problem.lagrangian is None:
        raise ConfigError(f"the oracle needs a 1-D problem with a closed-form running cost, not {problem.label}")
    grid = _oracle_grid(cfg, problem)
    mesh = uniform_mesh(problem.horizon, cfg.oracle.N)
    out.mkdir(parents=True, exist_ok=True)
    res = dp_oracle_1d(problem, mesh, grid)
    res.to_csv(out / "oracle.csv")
    x0 = float(problem.initial_state[0])
    summary = {
        "problem": {"label": problem.label, "params": problem.params},
        "N": mesh.N,
        "grid": asdict(grid),
        "u_bar_x0": res.value_at(x0),
        "clamped": res.clamped,
        "exact_value": problem.exact_value,
    }
    if cfg.oracle.richardson:
        fine = dp_oracle_1d(problem, mesh, grid.refined())
        summary["u_bar_x0_refined"] = fine.value_at(x0)
        summary["grid_error_estimate"] = abs(fine.value_at(x0) - summary["u_bar_x0"])
    status = EXIT_OK
    try:
        solve = solve_with_continuation if cfg.continuation else solve_newton
        traj, _ = solve(problem, mesh, None, cfg.solver)
        summary["solver_value"] = discrete_value(problem, mesh, traj)
        summary["solver_minus_oracle"] = summary["solver_value"] - summary["u_bar_x0"]
        lam_gap = np.abs(traj.lam[:, 0] - res.u_x_at(traj.X[:, 0], np.arange(mesh.N + 1)))
        summary["max_lambda_minus_u_x"] = float(lam_gap.max())
    except SolverFailure as exc:
        summary["solver_error"] = f"{type(exc).__name__}: {exc}"
        status = EXIT_SOLVER
    write_json(out / "oracle.json", summary)
    return status


def cmd_check(cfg: RunConfig, out: Path) -> int:
    problem = _problem(cfg)
    rep = audit_model(problem, cfg.check.points, cfg.seed, cfg.check.jacobian_iterates)
    if cfg.check.tolerance is not None:
        rep.tolerances = {k: cfg.check.tolerance for k in rep.tolerances}
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "check.json", rep.to_dict())
    for k, v in rep.errors.items():
        flag = "ok" if v <= rep.tolerances[k] else "FAIL"
        print(f"{problem.label:16s} {k:14s} {v:.3e} (tol {rep.tolerances[k]:.0e}) {flag}")
    return EXIT_OK if rep.passed else EXIT_CHECK


COMMANDS = {
    "adapt": cmd_adapt,
    "uniform": cmd_uniform,
    "compare": cmd_compare,
    "oracle": cmd_oracle,
    "check": cmd_check,
}


def run_one(command: str, config_path: str, out: str | None, multi: bool) -> int:
    try:
        cfg = load_config(config_path)
        base = Path(out if out is not None else cfg.output_dir)
        target = base / Path(config_path).stem if multi else base
        return COMMANDS[command](cfg, target)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="symadapt", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", action="append", required=True,
                   help="TOML run configuration; repeat for a sweep")
    p.add_argument("--out", default=None, help="output directory (overrides output_dir)")
    p.add_argument("--parallel", type=int, default=1, metavar="K",
                   help="run up to K configurations concurrently")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.parallel < 1:
        print("config error: --parallel must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    multi = len(args.config) > 1
    jobs = [(args.command, c, args.out, multi) for c in args.config]
    if args.parallel == 1 or not multi:
        codes = [run_one(*j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=args.parallel) as pool:
            codes = list(pool.map(run_one, *zip(*jobs)))
    return max(codes)


if __name__ == "__main__":
    sys.exit(main())
