"""Adaptive refinement driven by the error estimator.

The outer loop alternates solve / dual-solve / estimate / refine, re-solving
from t = 0 on each new discretization (no solution transfer between outer
iterations, and indicators are never carried over).  Temporal refinement
always halves the step globally; spatial refinement depends on the strategy:

  * uniform  - refine every element and halve the step together;
  * balance  - compare the error parts and refine globally in time, in
               space, or in both, attributing the splitting part to the
               temporal side;
  * local    - refine only elements whose indicator exceeds gamma times the
               mean indicator, leaving the time step alone;
  * regional - like local, but indicators are pooled over a fixed 4x4 grid
               of regions and whole regions refine at once.

The cost model E(k, h) = C / (k h^2) with C = 64^2 * 8 ranks candidate
discretization ladders by work units; the uniform 3-stage ladder from
(8 h, 64 km) costs 73 units while the time-only ladder costs 7.
"""

from dataclasses import dataclass

import numpy as np

from .adjoint import dual_simulate
from .estimator import estimate
from .fem import Space
from .mesh import refine
from .model import Forms, PhysParams
from .solver import SolverSettings, simulate

STRATEGIES = ("uniform", "balance", "local", "regional")


@dataclass
class AdaptPlan:
    strategy: str = "balance"
    gamma: float = 2.0           # marking threshold factor
    max_iter: int = 3            # outer iterations (solves), including the first
    tol: float = 0.0             # stop once |eta_total| <= tol; 0 disables

    def validate(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.gamma < 0.0:
            raise ValueError("gamma must be non-negative")
        if self.max_iter < 1:
            raise ValueError("need at least one outer iteration")


def mark_elements(indicators, gamma=2.0):
    """Indices of elements whose indicator exceeds gamma times the mean."""
    ind = np.asarray(indicators, dtype=float)
    if ind.ndim != 1:
        raise ValueError("indicators must be a flat per-element array")
    return np.nonzero(ind > gamma * ind.mean())[0]


def balance_step(eta_h, eta_k, eta_beta):
    """Decide the refinement direction from non-negative error parts.

    The splitting part counts toward the temporal error.  Time is refined
    when the temporal part dominates by more than a factor two, space when
    the spatial part does, and both otherwise.
    """
    temporal = eta_k + eta_beta
    if temporal > 2.0 * eta_h:
        return "refine_time"
    if eta_h > 2.0 * temporal:
        return "refine_space"
    return "refine_both"


def region_partition(mesh, nx=4, ny=4):
    """Assign each leaf element to a cell of an nx-by-ny grid over the domain
    by its center; returns (region ids, number of regions)."""
    centers = mesh.origin + 0.5 * mesh.size[:, None]
    ix = np.minimum((centers[:, 0] / mesh.L * nx).astype(int), nx - 1)
    iy = np.minimum((centers[:, 1] / mesh.L * ny).astype(int), ny - 1)
    return ix * ny + iy, nx * ny


def regional_marks(indicators, regions, gamma=2.0, n_regions=None):
    """Pool indicators by region; mark every element of each region whose
    aggregate exceeds gamma times the mean regional aggregate."""
    ind = np.asarray(indicators, dtype=float)
    regions = np.asarray(regions)
    if n_regions is None:
        n_regions = int(regions.max()) + 1
    agg = np.zeros(n_regions)
    np.add.at(agg, regions, ind)
    hot = agg > gamma * agg.mean()
    return np.nonzero(hot[regions])[0]


def cost_model(k, h, C=32768.0):
    """Work units E(k, h) = C / (k h^2) with k in hours, h in km."""
    if k <= 0.0 or h <= 0.0:
        raise ValueError("step and mesh size must be positive")
    return C / (k * h * h)


def ladder_cost(cells, C=32768.0):
    """Total work of a refinement ladder given as (k hours, h km) pairs."""
    return sum(cost_model(k, h, C) for k, h in cells)


def _spatial_marks(plan, report, mesh):
    if plan.strategy == "uniform" or plan.strategy == "balance":
        return np.arange(mesh.n_elements)
    if plan.strategy == "local":
        return mark_elements(report.per_element, plan.gamma)
    regions, nreg = region_partition(mesh)
    return regional_marks(report.per_element, regions, plan.gamma, nreg)


def plan_decision(plan, report):
    """Refinement direction a plan takes after seeing a report."""
    if plan.strategy == "uniform":
        return "refine_both"
    if plan.strategy == "balance":
        return balance_step(abs(report.eta_h), abs(report.eta_k),
                            abs(report.eta_beta))
    return "refine_space"        # local / regional: spatial-only refinement


def feedback_loop(scenario, mesh, k, plan, goal=None, params=None,
                  settings=None, history=None, progress=None):
    """Outer adaptive loop; returns the (mesh, k, ErrorReport) history.

    The history list is appended to in place after every completed solve, so
    a caller-supplied list retains the partial record if a later iteration
    fails to converge.
    """
    plan.validate()
    goal = scenario.goal if goal is None else goal
    params = PhysParams() if params is None else params
    settings = SolverSettings() if settings is None else settings
    history = [] if history is None else history

    for it in range(plan.max_iter):
        space = Space(mesh)
        forms = Forms(space, params, scenario)
        primal, _ = simulate(forms, k, settings, scenario.T)
        dual = dual_simulate(forms, primal, goal)
        report = estimate(forms, primal, dual, goal)
        history.append((mesh, k, report))
        if progress is not None:
            progress(it, mesh, k, report)

        if plan.tol > 0.0 and abs(report.eta_total) <= plan.tol:
            break
        if it == plan.max_iter - 1:
            break

        what = plan_decision(plan, report)
        if what in ("refine_time", "refine_both"):
            k = 0.5 * k
        if what in ("refine_space", "refine_both"):
            marks = _spatial_marks(plan, report, mesh)
            if marks.size:
                mesh = refine(mesh, marks)
    return history
