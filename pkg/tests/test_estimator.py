import numpy as np
import pytest

from vpice.adjoint import dual_simulate
from vpice.estimator import (decompose_space_time, dg0_equivalence_check,
                             dwr_linear_check, effectivity, estimate,
                             _bs_step, _bsp_step, _dual_snapshots, _prim_q)
from vpice.fem import DualTrajectory, Space, Trajectory
from vpice.mesh import uniform_mesh
from vpice.model import Forms, GoalSpec, PhysParams, form_Bs
from vpice.scenario import benchmark
from vpice.solver import SolverSettings, simulate

HOUR = 3600.0


@pytest.fixture(scope="module")
def rig():
    scen = benchmark(test=1)
    space = Space(uniform_mesh(4))
    forms = Forms(space, PhysParams(), scen)
    traj, _ = simulate(forms, 8 * HOUR, SolverSettings(), scen.T)
    dual = dual_simulate(forms, traj, scen.goal)
    return space, forms, scen, traj, dual


# -- scalar oracles -----------------------------------------------------------

def test_dg0_backward_euler_equivalence():
    # one unit step of u' = -u: both routes solve (1+1) u1 = 1
    assert dg0_equivalence_check(lambda u: -u, 1.0, 1.0, 1) <= 1e-14
    assert dg0_equivalence_check(lambda u: 0.0 * u, 2.5, 0.3, 7) == 0.0
    assert dg0_equivalence_check(lambda u: -u, 1.0, 0.1, 10) <= 1e-14
    # nonlinear autonomous right side
    assert dg0_equivalence_check(lambda u: -u ** 3, 1.0, 0.25, 8) <= 1e-13


def test_dwr_exact_weight_is_identity():
    for N in (4, 16, 33):
        err, est = dwr_linear_check(N=N, weight="exact")
        assert abs(est - err) <= 1e-12


def test_dwr_reconstructed_weight_second_order():
    devs = []
    for N in (8, 16, 32):
        err, est = dwr_linear_check(N=N, weight="reconstructed")
        assert est == pytest.approx(err, rel=0.05)
        devs.append(abs(est - err))
    assert 3.0 < devs[0] / devs[1] < 5.0
    assert 3.0 < devs[1] / devs[2] < 5.0


def test_dwr_unknown_variant_rejected():
    with pytest.raises(ValueError):
        dwr_linear_check(weight="midpoint")


# -- report structure ---------------------------------------------------------

def test_report_invariants(rig):
    space, forms, scen, traj, dual = rig
    rep = estimate(forms, traj, dual, scen.goal, J_reference=1.56)
    assert rep.eta_total == 0.5 * (rep.eta_h + rep.eta_k + rep.eta_beta)
    assert rep.per_element_signed.sum() == pytest.approx(rep.eta_h, rel=1e-10)
    assert rep.per_step_signed.sum() == pytest.approx(
        rep.eta_k + rep.eta_beta, rel=1e-10)
    assert np.all(rep.per_element == np.abs(rep.per_element_signed))
    assert np.all(rep.per_step == np.abs(rep.per_step_signed))
    assert rep.per_element.shape == (space.mesh.n_elements,)
    assert rep.per_step.shape == (traj.n_steps,)
    assert rep.effectivity == pytest.approx(
        (1.56 - rep.J_value) / rep.eta_total, rel=1e-14)
    ek, eh = decompose_space_time(forms, traj, dual, scen.goal)
    assert (ek, eh) == (rep.eta_k, rep.eta_h)


def test_zero_dual_flat_primal_gives_zero(rig):
    space, forms, scen, traj, dual = rig
    m = space.n_nodes
    A = space.nodal(lambda x, y: 0.8 + 0.1 * x / 500e3)   # globally bilinear
    rows = lambda u: np.tile(u, (4, 1))
    flat = Trajectory(space.mesh, traj.k, rows(np.zeros(m)), rows(np.zeros(m)),
                      rows(A), rows(np.full(m, 0.3)))
    zero = DualTrajectory(space.mesh, traj.k, *(np.zeros((5, m)),) * 4)

    # goal window outside the domain: every part vanishes identically
    far = GoalSpec((600e3, 700e3, 0.0, 100e3),
                   scen.goal.t_start, scen.goal.t_end)
    rep = estimate(forms, flat, zero, far)
    assert rep.eta_h == rep.eta_k == rep.eta_beta == 0.0
    assert not rep.per_element.any() and not rep.per_step.any()
    assert np.isnan(effectivity(rep, 1.0))

    # in-window goal: the temporal and splitting parts still vanish exactly;
    # the spatial part only sees the reconstruction defect of a field the
    # biquadratic patches reproduce, which is pure roundoff
    rep2 = estimate(forms, flat, zero, scen.goal)
    assert rep2.eta_k == 0.0 and rep2.eta_beta == 0.0
    assert abs(rep2.eta_h) < 1e-12


def test_splitting_part_zero_for_time_constant_primal(rig):
    # beta collects only terms with lagged-vs-current differences; a primal
    # that does not move in time has no splitting error even for a rich dual
    space, forms, scen, traj, dual = rig
    rng = np.random.default_rng(3)
    m = space.n_nodes
    v = rng.normal(0.0, 0.05, m)
    v[space.mesh.boundary_nodes] = 0.0
    rows = lambda u: np.tile(u, (4, 1))
    const = Trajectory(space.mesh, traj.k, rows(v), rows(-v),
                       rows(rng.uniform(0.8, 1.0, m)),
                       rows(rng.uniform(0.2, 0.4, m)))
    rep = estimate(forms, const, dual, scen.goal)
    assert rep.eta_beta == 0.0


def test_estimator_linear_in_goal(rig):
    space, forms, scen, traj, dual = rig
    rep1 = estimate(forms, traj, dual, scen.goal)
    gs2 = GoalSpec(scen.goal.rect, scen.goal.t_start, scen.goal.t_end,
                   area_scale=scen.goal.area_scale / 2.0)
    dual2 = dual_simulate(forms, traj, gs2)
    rep2 = estimate(forms, traj, dual2, gs2)
    assert rep2.eta_h == pytest.approx(2.0 * rep1.eta_h, rel=1e-11)
    assert rep2.eta_k == pytest.approx(2.0 * rep1.eta_k, rel=1e-11)
    assert rep2.eta_beta == pytest.approx(2.0 * rep1.eta_beta, rel=1e-11)


def test_single_step_run_localizes_to_one_indicator(rig):
    space, forms, scen, traj, dual = rig
    scen1 = scen.with_horizon(8 * HOUR)
    forms1 = Forms(space, PhysParams(), scen1)
    tr, _ = simulate(forms1, 8 * HOUR, SolverSettings(), scen1.T)
    du = dual_simulate(forms1, tr, scen1.goal)
    rep = estimate(forms1, tr, du, scen1.goal)
    assert rep.per_step.shape == (1,)
    assert rep.per_step_signed[0] == pytest.approx(
        rep.eta_k + rep.eta_beta, rel=1e-12)


def test_mismatch_rejected(rig):
    space, forms, scen, traj, dual = rig
    other = DualTrajectory(space.mesh, traj.k / 2,
                           dual.zx, dual.zy, dual.qA, dual.qH)
    with pytest.raises(ValueError):
        estimate(forms, traj, other, scen.goal)
    mesh2 = uniform_mesh(2)
    m2 = mesh2.n_nodes
    small = DualTrajectory(mesh2, traj.k, *(np.zeros((5, m2)),) * 4)
    with pytest.raises(ValueError):
        estimate(forms, traj, small, scen.goal)


# -- residual evaluators against the independently tested space-time forms ----

def rand_test(space, rng, n_rows):
    m = space.n_nodes
    z = rng.standard_normal((n_rows, m))
    z[:, space.mesh.boundary_nodes] = 0.0
    qa = rng.standard_normal((n_rows, m))
    qh = rng.standard_normal((n_rows, m))
    return z, -z, qa, qh


def test_residual_evaluator_matches_space_time_form(rig):
    # plugging a piecewise-constant test into the weight slots must reproduce
    # the split space-time form evaluated by the model module; use a random
    # primal so the form is far from its Galerkin zero at the solution
    space, forms, scen, traj, dual = rig
    rng = np.random.default_rng(17)
    m = space.n_nodes
    prim_rows = Trajectory(space.mesh, traj.k,
                           rng.normal(0.0, 0.1, (4, m)),
                           rng.normal(0.0, 0.1, (4, m)),
                           rng.uniform(0.5, 1.1, (4, m)),   # penalty active
                           rng.uniform(0.1, 0.5, (4, m)))
    zx, zy, qa, qh = rand_test(space, rng, 4)
    test = Trajectory(space.mesh, traj.k, zx, zy, qa, qh)
    total = 0.0
    for n in range(1, prim_rows.n_steps + 1):
        prim = _prim_q(forms, prim_rows, n, 2)
        s = space
        W = {"jump": {"zx": s.values(zx[n]), "zy": s.values(zy[n]),
                      "qA": s.values(qa[n]), "qH": s.values(qh[n])},
             "zx_mid": s.values(zx[n]), "zy_mid": s.values(zy[n]),
             "gzx_mid": s.grads(zx[n]), "gzy_mid": s.grads(zy[n]),
             "qA_mid": s.values(qa[n]), "qH_mid": s.values(qh[n])}
        total += _bs_step(forms, prim, W, prim_rows.k,
                          prim_rows.times[n], 2).sum()
    assert total == pytest.approx(form_Bs(forms, prim_rows, test), rel=1e-12)


def test_linearized_evaluator_matches_finite_differences(rig):
    # directional derivative of the split form in a piecewise-constant
    # direction: the weight-bundle evaluation against central differences;
    # concentrations are pulled below one so the differencing never crosses
    # the penalty kink
    space, forms, scen, traj, dual = rig
    rng = np.random.default_rng(19)
    dvx, dvy, dA, dH = rand_test(space, rng, 4)
    zxr, zyr, qar, qhr = rand_test(space, rng, 4)
    ztest = Trajectory(space.mesh, traj.k, zxr, zyr, qar, qhr)
    base = Trajectory(space.mesh, traj.k, traj.vx, traj.vy,
                      0.95 * traj.A, traj.H)

    lin = 0.0
    for n in range(1, base.n_steps + 1):
        prim = _prim_q(forms, base, n, 2)
        s = space
        Psi = {}
        for name, rows in (("vx", dvx), ("vy", dvy), ("A", dA), ("H", dH)):
            Psi[name + "_plus"] = s.values(rows[n])
            Psi[name + "_minus"] = s.values(rows[n - 1])
            Psi[name + "_mid"] = s.values(rows[n])
            Psi["g" + name + "_mid"] = s.grads(rows[n])
            Psi[name + "_slope"] = None
        Z = {"zx": s.values(zxr[n]), "zy": s.values(zyr[n]),
             "gzx": s.grads(zxr[n]), "gzy": s.grads(zyr[n]),
             "qA": s.values(qar[n]), "qH": s.values(qhr[n])}
        lin += _bsp_step(forms, prim, Psi, Z, base.k, 2).sum()

    eps = 1e-6

    def shifted(sign):
        return Trajectory(space.mesh, base.k,
                          base.vx + sign * eps * dvx, base.vy + sign * eps * dvy,
                          base.A + sign * eps * dA, base.H + sign * eps * dH)

    fd = (form_Bs(forms, shifted(+1), ztest)
          - form_Bs(forms, shifted(-1), ztest)) / (2 * eps)
    assert lin == pytest.approx(fd, rel=1e-5)


def test_dual_snapshot_bundle(rig):
    space, forms, scen, traj, dual = rig
    Z = _dual_snapshots(forms, dual, 2, 2)
    assert np.allclose(Z["zx"], space.values(dual.zx[2]))
    assert np.allclose(Z["gzy"], space.grads(dual.zy[2]))
