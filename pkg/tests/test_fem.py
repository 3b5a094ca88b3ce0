import numpy as np
import pytest

from vpice.fem import (DualTrajectory, PiecewiseLinear, Space, Trajectory,
                       gauss_rule, jump, l2_product, q1_basis, q2_basis,
                       reconstruct_time)
from vpice.mesh import refine, uniform_mesh


@pytest.fixture(scope="module")
def space4():
    return Space(uniform_mesh(4))


def test_gauss_rules_integrate_polynomials():
    for order, deg in [(2, 3), (3, 5)]:
        pts, w = gauss_rule(order)
        for p in range(deg + 1):
            val = np.sum(w * pts[:, 0] ** p)
            assert val == pytest.approx(1.0 / (p + 1), rel=1e-13)


def test_basis_partition_of_unity():
    pts = np.random.default_rng(0).uniform(0, 1, (20, 2))
    assert np.allclose(q1_basis(pts).sum(axis=-1), 1.0)
    assert np.allclose(q2_basis(pts).sum(axis=-1), 1.0)


def test_integrate_area_and_quadratic(space4):
    fq = np.ones((space4.mesh.n_elements, space4.rule(2)["w"].size))
    assert space4.integrate(fq).sum() == pytest.approx(500.0e3 ** 2, rel=1e-14)
    # (x/L)^2 evaluated at quadrature points integrates exactly (degree 2)
    xq = space4.qpoints()[..., 0]
    val = space4.integrate((xq / 500.0e3) ** 2).sum()
    assert val == pytest.approx(500.0e3 ** 2 / 3.0, rel=1e-13)


def test_mass_matrix_total(space4):
    M = space4.mass_matrix()
    assert M.sum() == pytest.approx(500.0e3 ** 2, rel=1e-14)
    # lumped row masses are positive
    assert (np.asarray(M.sum(axis=1)).ravel() > 0).all()


def test_nodal_interpolation_and_gradient(space4):
    u = space4.nodal(lambda x, y: x)
    g = space4.grads(u)
    assert np.allclose(g[..., 0], 1.0)
    assert np.allclose(g[..., 1], 0.0, atol=1e-12)
    v = space4.values(u)
    assert np.allclose(v, space4.qpoints()[..., 0])


def test_load_adjoint_of_values(space4):
    # (f, phi_i) load vector contracted with nodal u equals integral of f u_h
    rng = np.random.default_rng(3)
    u = rng.standard_normal(space4.n_nodes)
    fq = space4.qpoints()[..., 1] / 1.0e5
    lhs = space4.load(fq) @ u
    rhs = space4.integrate(fq * space4.values(u)).sum()
    assert np.isclose(lhs, rhs, rtol=1e-9, atol=1e-3 * abs(rhs) ** 0.5)


def test_biquadratic_patch_reconstruction_exact(space4):
    # the patch interpolation reproduces a full quadratic exactly
    f = lambda x, y: (x / 5e5) ** 2 + 0.3 * (y / 5e5) ** 2 - 0.2 * (x / 5e5)
    u = space4.nodal(f)
    pv = space4.patch_values(u)
    q = space4.qpoints()
    assert np.allclose(pv, f(q[..., 0], q[..., 1]), atol=1e-13)
    # patch gradients too
    pg = space4.patch_grads(u)
    gx = 2 * q[..., 0] / 5e5 ** 2 - 0.2 / 5e5
    assert np.allclose(pg[..., 0], gx, atol=1e-15)


def test_reconstruction_weight_vanishes_for_bilinear(space4):
    u = space4.nodal(lambda x, y: 1.0 + x / 5e5 + 0.5 * x * y / 25e10)
    wv, wg = space4.recon_weight(u)
    assert np.max(np.abs(wv)) < 1e-12
    assert np.max(np.abs(wg)) < 1e-17


def test_constraints_on_refined_mesh():
    mesh = uniform_mesh(2)
    mesh = refine(mesh, np.array([0]))
    space = Space(mesh)
    assert len(mesh.hanging_nodes) == 2
    # hanging values are the averages of their edge masters
    rng = np.random.default_rng(1)
    u = space.distribute(rng.standard_normal(space.P.shape[1]))
    for h, (a, b) in zip(mesh.hanging_nodes, mesh.hanging_masters):
        assert u[h] == pytest.approx(0.5 * (u[a] + u[b]))
    # Dirichlet prolongation leaves boundary rows zero
    ud = space.distribute(rng.standard_normal(space.Pd.shape[1]), space.Pd)
    assert np.allclose(ud[mesh.boundary_nodes], 0.0)


def test_window_quadrature_exact(space4):
    # axis-aligned window that cuts elements: integrates x exactly
    rect = (150.0e3, 410.0e3, 30.0e3, 500.0e3)
    els, pts, wts = space4.window_quad(rect)
    xs = space4.eval_at(space4.nodal(lambda x, y: x), els, pts)
    exact = 0.5 * (410e3 ** 2 - 150e3 ** 2) * (500e3 - 30e3)
    assert np.sum(wts * xs) == pytest.approx(exact, rel=1e-13)
    area = np.sum(wts)
    assert area == pytest.approx((410e3 - 150e3) * (500e3 - 30e3), rel=1e-13)


def test_l2_product_symmetry(space4):
    rng = np.random.default_rng(5)
    f = rng.standard_normal(space4.n_nodes)
    g = rng.standard_normal(space4.n_nodes)
    a = l2_product(space4, f, g)
    assert a == pytest.approx(l2_product(space4, g, f), rel=1e-14)
    assert a == pytest.approx(f @ (space4.mass_matrix() @ g), rel=1e-12)


def test_trajectory_jump_and_times():
    mesh = uniform_mesh(2)
    N, m = 3, mesh.n_nodes
    arrs = [np.arange(N + 1)[:, None] * np.ones(m) * (i + 1) for i in range(4)]
    tr = Trajectory(mesh, 60.0, *arrs)
    assert tr.n_steps == N and tr.T == 180.0
    assert np.allclose(jump(tr, 2, "A"), 3.0)
    with pytest.raises(IndexError):
        jump(tr, 0, "A")


def test_time_reconstruction_forward():
    mesh = uniform_mesh(2)
    m = mesh.n_nodes
    vals = np.array([0.0, 2.0, 6.0])[:, None] * np.ones(m)
    tr = Trajectory(mesh, 10.0, vals, vals, vals, vals)
    rec = reconstruct_time(tr, "A")
    assert np.allclose(rec(5.0), 1.0)
    assert np.allclose(rec.midpoint(2), 4.0)


def test_time_reconstruction_dual_terminal_zero():
    # interval value sits at the left node; reconstruction joins Z_n to Z_{n+1}
    mesh = uniform_mesh(2)
    m = mesh.n_nodes
    z = np.zeros((4, m))          # rows 0..N+1 with N = 2
    z[1], z[2] = 4.0, 2.0
    du = DualTrajectory(mesh, 10.0, z, z, z, z)
    rec = reconstruct_time(du, "zx")
    assert np.allclose(rec(0.0), 4.0)
    assert np.allclose(rec.midpoint(1), 3.0)       # between Z_1 and Z_2
    assert np.allclose(rec.midpoint(2), 1.0)       # Z_3 = 0 terminal
    assert np.allclose(rec(20.0), 0.0)


def test_piecewise_linear_clamps():
    pl = PiecewiseLinear([0.0, 1.0], np.array([[1.0], [3.0]]))
    assert pl(-1.0) == pytest.approx(1.0)
    assert pl(2.0) == pytest.approx(3.0)
    assert pl(0.25) == pytest.approx(1.5)
