"""Command-line front end.

Four commands share one INI-style config format:

  run       solve the primal problem; write a checkpoint, VTK snapshots and
            a run summary JSON
  estimate  load a checkpoint, solve the dual problem, evaluate the error
            estimator; write a report JSON and append a study CSV row
  adapt     run the adaptive feedback loop; write the iteration history
  report    print a study CSV as a comparison table against the embedded
            reference values, with per-cell deltas and work units

Exit codes: 0 success, 2 configuration error, 3 solver non-convergence,
4 I/O failure, 5 checkpoint/config mismatch.
"""

import argparse
import dataclasses
import json
import os
import sys
from configparser import ConfigParser

import numpy as np

from .adaptivity import AdaptPlan, cost_model, feedback_loop, ladder_cost, \
    plan_decision
from .adjoint import dual_simulate
from .estimator import estimate
from .fem import Space
from .io import (append_csv_row, load_trajectory, read_csv_rows,
                 save_trajectory, write_report_json, write_vtk)
from .mesh import uniform_mesh
from .model import Forms, GoalSpec, PhysParams, goal_J
from .scenario import benchmark
from .solver import NonConvergence, SolverSettings, simulate

HOUR = 3600.0
DAY = 86400.0
KM = 1e3

# Reference values of the 1-day benchmark study used for the comparison
# columns of cmd_report: (h label km, k hours) -> (J, error, eta_total,
# eta_h, eta_k, eta_beta).
REFERENCE_ROWS = {
    (64, 8): (1.49763, 1.44e-3, 2.01e-3, 1.20e-3, 2.65e-3, 1.58e-4),
    (32, 8): (1.49788, 1.19e-3, 1.38e-3, 1.21e-4, 2.19e-3, 4.40e-4),
    (16, 8): (1.49797, 1.10e-3, 1.30e-3, 6.72e-5, 2.10e-3, 4.38e-4),
    (8, 8): (1.49802, 1.05e-3, 1.25e-3, 4.11e-5, 2.03e-3, 4.21e-4),
    (64, 4): (1.49833, 7.43e-4, 9.52e-4, 6.28e-4, 1.21e-3, 6.12e-5),
    (32, 4): (1.49849, 5.80e-4, 6.16e-4, 8.53e-5, 1.02e-3, 1.25e-4),
    (16, 4): (1.49856, 5.15e-4, 5.72e-4, 4.41e-5, 9.70e-4, 1.30e-4),
    (8, 4): (1.49858, 4.87e-4, 5.51e-4, 2.47e-5, 9.44e-4, 1.32e-4),
    (64, 2): (1.49863, 4.39e-4, 5.67e-4, 5.48e-4, 5.67e-4, 2.04e-5),
    (32, 2): (1.49876, 3.10e-4, 2.94e-4, 7.01e-5, 4.82e-4, 3.67e-5),
    (16, 2): (1.49881, 2.59e-4, 2.67e-4, 3.58e-5, 4.59e-4, 3.95e-5),
    (8, 2): (1.49883, 2.37e-4, 2.54e-4, 1.93e-5, 4.47e-4, 4.19e-5),
}

PARAM_KEYS = ("rho_ice", "rho_atm", "rho_ocean", "c_atm", "c_ocean",
              "f_c", "p_star", "c_conc", "delta_min")
PARAM_FIELDS = {"c_atm": "C_atm", "c_ocean": "C_ocean", "p_star": "P_star",
                "c_conc": "C_conc", "delta_min": "Delta_min"}

SCHEMA = {
    "scenario": {"test", "horizon_days", "forcing", *PARAM_KEYS},
    "mesh": {"n", "h_km"},
    "time": {"k_hours"},
    "solver": {"newton_tol", "newton_max_iter", "line_search_max",
               "linear_solver", "krylov_tol", "krylov_restart",
               "krylov_maxiter", "preconditioner"},
    "adapt": {"strategy", "gamma", "max_iter", "tol"},
    "goal": {"x0_km", "x1_km", "y0_km", "y1_km", "t_start_hours",
             "t_end_hours", "area_scale", "reference_j"},
    "output": {"directory", "cadence", "deterministic", "workers"},
}


class ConfigError(Exception):
    pass


@dataclasses.dataclass
class RunConfig:
    scenario: object
    params: PhysParams
    mesh_n: int
    k: float
    settings: SolverSettings
    plan: AdaptPlan
    goal: GoalSpec
    outdir: str
    cadence: int = 1
    deterministic: bool = False
    workers: int = 1
    reference_j: float = None


def _get(cp, section, key, conv, default=None):
    if not cp.has_option(section, key):
        return default
    raw = cp.get(section, key)
    try:
        return conv(raw)
    except Exception:
        raise ConfigError(f"bad value for {section}.{key}: {raw!r}")


def _bool(raw):
    v = raw.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(raw)


def parse_config(path):
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    cp = ConfigParser()
    try:
        cp.read(path)
    except Exception as exc:
        raise ConfigError(f"cannot parse config: {exc}")

    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key in cp.options(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown config key {section}.{key}")

    test = _get(cp, "scenario", "test", int, 1)
    if test not in (1, 2):
        raise ConfigError(f"scenario.test must be 1 or 2, got {test}")
    forcing = _get(cp, "scenario", "forcing", str, "benchmark")
    if forcing not in ("benchmark", "zero"):
        raise ConfigError("scenario.forcing must be benchmark or zero")
    horizon = _get(cp, "scenario", "horizon_days", float, None)
    T = None if horizon is None else horizon * DAY
    scen = benchmark(test=test, T=T, forcing=forcing)

    overrides = {}
    for key in PARAM_KEYS:
        val = _get(cp, "scenario", key, float, None)
        if val is not None:
            overrides[PARAM_FIELDS.get(key, key)] = val
    params = PhysParams(**overrides)

    n = _get(cp, "mesh", "n", int, None)
    h_km = _get(cp, "mesh", "h_km", float, None)
    if n is not None and h_km is not None:
        raise ConfigError("give mesh.n or mesh.h_km, not both")
    if n is None:
        if h_km is None:
            raise ConfigError("mesh.n (or mesh.h_km) is required")
        n = int(round(scen.L / KM / h_km))
    if n < 2 or n % 2:
        raise ConfigError(f"mesh must have an even element count >= 2, got {n}")

    k_hours = _get(cp, "time", "k_hours", float, None)
    if k_hours is None:
        raise ConfigError("time.k_hours is required")
    k = k_hours * HOUR
    if k <= 0:
        raise ConfigError("time.k_hours must be positive")
    if abs(scen.T / k - round(scen.T / k)) > 1e-9:
        raise ConfigError(f"time step {k_hours} h does not divide the horizon")

    settings = SolverSettings(
        newton_tol=_get(cp, "solver", "newton_tol", float, 1e-10),
        newton_max_iter=_get(cp, "solver", "newton_max_iter", int, 50),
        line_search_max=_get(cp, "solver", "line_search_max", int, 8),
        linear_solver=_get(cp, "solver", "linear_solver", str, "direct"),
        krylov_tol=_get(cp, "solver", "krylov_tol", float, 1e-12),
        krylov_restart=_get(cp, "solver", "krylov_restart", int, 100),
        krylov_maxiter=_get(cp, "solver", "krylov_maxiter", int, 2000),
        preconditioner=_get(cp, "solver", "preconditioner", str, "diag"))
    if settings.linear_solver not in ("direct", "gmres"):
        raise ConfigError("solver.linear_solver must be direct or gmres")
    if settings.preconditioner not in ("diag", "ilu", "none"):
        raise ConfigError("solver.preconditioner must be diag, ilu or none")

    plan = AdaptPlan(strategy=_get(cp, "adapt", "strategy", str, "balance"),
                     gamma=_get(cp, "adapt", "gamma", float, 2.0),
                     max_iter=_get(cp, "adapt", "max_iter", int, 3),
                     tol=_get(cp, "adapt", "tol", float, 0.0))
    try:
        plan.validate()
    except ValueError as exc:
        raise ConfigError(str(exc))

    g = scen.goal
    rect_keys = [_get(cp, "goal", kk, float, None)
                 for kk in ("x0_km", "x1_km", "y0_km", "y1_km")]
    if any(v is not None for v in rect_keys):
        if any(v is None for v in rect_keys):
            raise ConfigError("goal rectangle needs all of x0/x1/y0/y1_km")
        rect = tuple(v * KM for v in rect_keys)
    else:
        rect = g.rect
    t0 = _get(cp, "goal", "t_start_hours", float, g.t_start / HOUR) * HOUR
    t1 = _get(cp, "goal", "t_end_hours", float, g.t_end / HOUR) * HOUR
    scale = _get(cp, "goal", "area_scale", float, g.area_scale)
    try:
        goal = GoalSpec(rect, t0, t1, area_scale=scale)
    except ValueError as exc:
        raise ConfigError(str(exc))

    cadence = _get(cp, "output", "cadence", int, 1)
    if cadence < 1:
        raise ConfigError("output.cadence must be >= 1")
    workers = _get(cp, "output", "workers", int, 1)
    if workers < 1:
        raise ConfigError("output.workers must be >= 1")

    return RunConfig(
        scenario=scen, params=params, mesh_n=n, k=k, settings=settings,
        plan=plan, goal=goal,
        outdir=_get(cp, "output", "directory", str, "out"),
        cadence=cadence,
        deterministic=_get(cp, "output", "deterministic", _bool, False),
        workers=workers,
        reference_j=_get(cp, "goal", "reference_j", float, None))


def _setup(cfg):
    mesh = uniform_mesh(cfg.mesh_n, cfg.scenario.L)
    space = Space(mesh)
    forms = Forms(space, cfg.params, cfg.scenario)
    return mesh, space, forms


def _h_km(cfg):
    return cfg.scenario.L / KM / cfg.mesh_n


def cmd_run(cfg):
    mesh, space, forms = _setup(cfg)
    os.makedirs(cfg.outdir, exist_ok=True)
    traj, diags = simulate(forms, cfg.k, cfg.settings, cfg.scenario.T)
    save_trajectory(os.path.join(cfg.outdir, "trajectory.bin"), traj)
    N = traj.n_steps
    for n in range(N + 1):
        if n % cfg.cadence == 0 or n == N:
            write_vtk(os.path.join(cfg.outdir, f"fields_{n:04d}.vtk"), mesh,
                      {"vx": traj.vx[n], "vy": traj.vy[n],
                       "A": traj.A[n], "H": traj.H[n]},
                      title=f"step {n} t={traj.times[n] / HOUR:g} h")
    summary = {"J": goal_J(forms, traj, cfg.goal),
               "h_km": _h_km(cfg), "k_hours": cfg.k / HOUR,
               "n_steps": N, "n_nodes": space.n_nodes,
               "steps": diags}
    with open(os.path.join(cfg.outdir, "run.json"), "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return 0


def cmd_estimate(cfg, checkpoint):
    mesh, space, forms = _setup(cfg)
    traj = load_trajectory(checkpoint, mesh)     # raises on mesh mismatch
    if abs(traj.k - cfg.k) > 1e-9 * cfg.k:
        raise ValueError("checkpoint step size differs from config")
    dual = dual_simulate(forms, traj, cfg.goal)
    report = estimate(forms, traj, dual, cfg.goal,
                      J_reference=cfg.reference_j)
    os.makedirs(cfg.outdir, exist_ok=True)
    write_report_json(os.path.join(cfg.outdir, "report.json"), report,
                      h_km=_h_km(cfg), k_hours=cfg.k / HOUR)
    append_csv_row(os.path.join(cfg.outdir, "study.csv"),
                   _h_km(cfg), cfg.k / HOUR, report)
    return 0


def cmd_adapt(cfg):
    mesh, _, _ = _setup(cfg)
    os.makedirs(cfg.outdir, exist_ok=True)
    history = []
    try:
        feedback_loop(cfg.scenario, mesh, cfg.k, cfg.plan, goal=cfg.goal,
                      params=cfg.params, settings=cfg.settings,
                      history=history)
    finally:
        _write_history(cfg, history)
    return 0


def _write_history(cfg, history):
    rows = []
    for i, (m, k, rep) in enumerate(history):
        n_nodes = len(m.nodes)
        rows.append({
            "iteration": i,
            "decision": plan_decision(cfg.plan, rep)
            if i + 1 < len(history) else "stop",
            "n_elements": m.n_elements, "n_nodes": n_nodes,
            "n_steps": rep.n_steps,
            "unknowns": 4 * n_nodes * rep.n_steps,
            "k_hours": k / HOUR, "J": rep.J_value,
            "eta_total": rep.eta_total, "eta_h": rep.eta_h,
            "eta_k": rep.eta_k, "eta_beta": rep.eta_beta})
    with open(os.path.join(cfg.outdir, "adapt.json"), "w") as fh:
        json.dump({"strategy": cfg.plan.strategy, "iterations": rows}, fh,
                  indent=1, sort_keys=True)
        fh.write("\n")
    path = os.path.join(cfg.outdir, "adapt.csv")
    with open(path, "w") as fh:
        cols = ["iteration", "decision", "n_elements", "n_nodes", "n_steps",
                "unknowns", "k_hours", "J", "eta_total", "eta_h", "eta_k",
                "eta_beta"]
        fh.write(",".join(cols) + "\n")
        for r in rows:
            fh.write(",".join(str(r[c]) for c in cols) + "\n")


def _label(h_km):
    return int(round(2.0 ** round(np.log2(h_km))))


def cmd_report(csv_path):
    rows = read_csv_rows(csv_path)               # raises on missing columns
    if not rows:
        print("study CSV has no data rows")
        return 0
    hdr = (f"{'h_km':>8} {'k_h':>5} {'J':>10} {'J_ref':>10} {'dJ':>10} "
           f"{'eta_total':>10} {'eta_h':>10} {'eta_k':>10} {'eta_beta':>10} "
           f"{'eff':>7} {'work':>8}")
    print(hdr)
    print("-" * len(hdr))
    for r in rows:
        key = (_label(r["h_km"]), int(round(r["k_hours"])))
        ref = REFERENCE_ROWS.get(key)
        jref = f"{ref[0]:10.5f}" if ref else " " * 10
        dj = f"{r['J'] - ref[0]:10.2e}" if ref else " " * 10
        eff = f"{r['effectivity']:7.3f}" if r["effectivity"] is not None \
            else " " * 7
        work = cost_model(r["k_hours"], key[0])
        print(f"{r['h_km']:8.3f} {r['k_hours']:5.2f} {r['J']:10.5f} {jref} "
              f"{dj} {r['eta_total']:10.2e} {r['eta_h']:10.2e} "
              f"{r['eta_k']:10.2e} {r['eta_beta']:10.2e} {eff} {work:8.1f}")
    print()
    uniform = [(8, 64), (4, 32), (2, 16)]
    timeonly = [(8, 64), (4, 64), (2, 64)]
    print(f"work of the uniform ladder {uniform}: {ladder_cost(uniform):g}")
    print(f"work of the time-only ladder {timeonly}: {ladder_cost(timeonly):g}")
    return 0


def main(argv=None):
    ap = argparse.ArgumentParser(
        prog="vpice",
        description="viscous-plastic sea-ice simulator with goal-oriented "
                    "error estimation")
    sub = ap.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="solve the primal problem")
    p_run.add_argument("config")
    p_est = sub.add_parser("estimate", help="estimate the goal error")
    p_est.add_argument("config")
    p_est.add_argument("checkpoint")
    p_ad = sub.add_parser("adapt", help="run the adaptive loop")
    p_ad.add_argument("config")
    p_rep = sub.add_parser("report", help="print a study CSV as a table")
    p_rep.add_argument("csv")
    args = ap.parse_args(argv)

    try:
        if args.command == "report":
            try:
                return cmd_report(args.csv)
            except ValueError as exc:            # malformed study CSV
                print(f"config error: {exc}", file=sys.stderr)
                return 2
        cfg = parse_config(args.config)
        if args.command == "run":
            return cmd_run(cfg)
        if args.command == "estimate":
            return cmd_estimate(cfg, args.checkpoint)
        return cmd_adapt(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NonConvergence as exc:
        print(f"solver failed: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"mismatch: {exc}", file=sys.stderr)
        return 5
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
