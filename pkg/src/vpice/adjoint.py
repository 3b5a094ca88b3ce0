"""Backward-in-time dual sweep for the split scheme.

The dual problem of the partitioned backward-Euler scheme reverses both the
time direction and the splitting order: within each step the dual tracer
equations are solved first and the dual momentum equation afterwards.  Every
system matrix is the transpose of a primal Newton Jacobian frozen at the
converged primal state, so the sweep is the exact discrete adjoint of the
forward scheme and no separate linearization has to be derived.

Step n couples to step n+1 through three blocks of the forward scheme:

  * the momentum solve at t_{n+1} sees A_n, H_n through the ice strength
    (stress rows) and H_n additionally through the inertia/Coriolis scaling;
  * the transport solves at t_{n+1} see A_n, H_n through the mass term.

Their transposes feed the right-hand sides below.  Terminal convention:
Z_{N+1} = 0.
"""

import numpy as np
import scipy.sparse as sp

from .fem import DualTrajectory
from .model import goal_J_gradient, stress_vtensor, tau_vmatrix
from .solver import SolverSettings, linear_solve


class DualState:
    """Dual unknowns of one interval: momentum pair and the two tracers."""

    def __init__(self, zx, zy, qA, qH):
        self.zx, self.zy, self.qA, self.qH = zx, zy, qA, qH

    @classmethod
    def zero(cls, n_nodes):
        return cls(*(np.zeros(n_nodes) for _ in range(4)))


def step_matrices(forms, primal, n):
    """Primal Jacobian blocks of step n, frozen at the converged states.

    Returns the three diagonal solve blocks (momentum, A-transport with the
    concentration penalty, H-transport) and the two velocity-coupling blocks
    of the transport equations.  All matrices act on full nodal vectors;
    constraint reduction happens at solve time.
    """
    k = primal.k
    vx, vy, A, H = primal.state(n)
    _, _, Ap, Hp = primal.state(n - 1)
    t = primal.times[n]
    K_vv = forms.momentum_jacobian(vx, vy, Ap, Hp, t, k)
    K_AA = forms.transport_jacobian(A, vx, vy, k, penalty=True)
    K_HH = forms.transport_jacobian(H, vx, vy, k, penalty=False)
    K_Av = forms.block_dtrans_dv(A, k)
    K_Hv = forms.block_dtrans_dv(H, k)
    return K_vv, K_AA, K_HH, K_Av, K_Hv


def dual_step(forms, primal, n, Znext, goal, st=None):
    """One backward step: solve q_A, q_H, then z for interval n.

    Znext holds the already-computed dual state of interval n+1 (zeros for
    n = N).  The tracer right-hand sides collect the goal derivative and the
    transposed couplings into step n+1; the momentum right side collects the
    transposed transport-velocity couplings of the current step.
    """
    if st is None:
        st = SolverSettings()
    space = forms.space
    k = primal.k
    K_vv, K_AA, K_HH, K_Av, K_Hv = step_matrices(forms, primal, n)

    rhs_A = goal_J_gradient(forms, primal, goal, n)
    rhs_H = np.zeros(space.n_nodes)
    if n < primal.n_steps:
        vnx, vny, _, _ = primal.state(n + 1)
        vx, vy, A, H = primal.state(n)
        M = space.mass_matrix()
        B_vA = forms.block_dmom_dA(vnx, vny, A, H, k)
        B_vH = forms.block_dmom_dH(vnx, vny, vx, vy, A, k)
        z_next = np.concatenate([Znext.zx, Znext.zy])
        rhs_A = rhs_A + M @ Znext.qA - B_vA.T @ z_next
        rhs_H = rhs_H + M @ Znext.qH - B_vH.T @ z_next

    qA = space.distribute(linear_solve(
        space.reduce_matrix(K_AA.T), space.reduce_vector(rhs_A), st,
        what="dual A-transport"))
    qH = space.distribute(linear_solve(
        space.reduce_matrix(K_HH.T), space.reduce_vector(rhs_H), st,
        what="dual H-transport"))

    rhs_z = -(K_Av.T @ qA) - (K_Hv.T @ qH)
    if n < primal.n_steps:
        _, _, _, H = primal.state(n)
        Mr = forms.mass_rho_H(H)
        rhs_z = rhs_z + Mr @ z_next
    Pv = space.Pv
    zfree = linear_solve(
        space.reduce_matrix(K_vv.T, Pv), space.reduce_vector(rhs_z, Pv), st,
        what="dual momentum")
    z = space.distribute(zfree, Pv)
    m = space.n_nodes
    return DualState(z[:m], z[m:], qA, qH)


def handwritten_dual_matrices(forms, primal, n):
    """Dual system matrices assembled directly from the integrated-by-parts
    dual forms instead of by transposition.

    Transport rows move the advection derivative onto the dual variable,
    -k (v . grad q, psi), which equals the transpose of the conservative
    primal form because the quadrature integrates the product rule exactly
    and the discrete velocity vanishes on the boundary.  The momentum matrix
    reuses the symmetric stress and drag linearizations and flips the sign
    of the skew Coriolis blocks.  Agreement with step_matrices transposes is
    a roundoff-level identity, checked in the tests.
    """
    s, p = forms.space, forms.params
    k = primal.k
    vx, vy, A, H = primal.state(n)
    _, _, Ap, Hp = primal.state(n - 1)

    vxq, vyq = s.values(vx), s.values(vy)
    adv = s.matrix(s.op_blocks(c0g=k * np.stack([vxq, vyq], axis=-1)))
    M = s.mass_matrix()
    chi = (s.values(A) > 1.0).astype(float)
    D_AA = M - adv + s.matrix(s.op_blocks(c00=k * chi))
    D_HH = M - adv

    gvx, gvy = s.grads(vx), s.grads(vy)
    Aq, Hq = s.values(Ap), s.values(Hp)
    vox, voy = forms.ocean_q()
    D = stress_vtensor(gvx, gvy, Aq, Hq, p)
    Txx, Txy, Tyy = tau_vmatrix(vxq, vyq, vox, voy, p)
    mH = p.rho_ice * Hq
    cor = k * p.rho_ice * p.f_c * Hq
    Kxx = s.op_blocks(c00=mH - k * Txx, cgg=k * D[..., 0, :, 0, :])
    Kxy = s.op_blocks(c00=cor - k * Txy, cgg=k * D[..., 0, :, 1, :])
    Kyx = s.op_blocks(c00=-cor - k * Txy, cgg=k * D[..., 1, :, 0, :])
    Kyy = s.op_blocks(c00=mH - k * Tyy, cgg=k * D[..., 1, :, 1, :])
    D_vv = sp.bmat([[s.matrix(Kxx), s.matrix(Kxy)],
                    [s.matrix(Kyx), s.matrix(Kyy)]], format="csr")
    return D_vv, D_AA, D_HH


def handwritten_momentum_rhs(forms, primal, n, qA, qH):
    """Transport-coupling load of the dual momentum equation in its
    integrated-by-parts shape, +k (A grad qA + H grad qH, phi).

    The primal coupling is the conservative derivative k (div(phi C), q);
    transposed and moved to the right-hand side it picks up a minus sign,
    and integration by parts (exact under the product quadrature, with the
    velocity test function vanishing along the boundary) turns
    -k (div(phi C), q) into +k (C grad q, phi)."""
    s = forms.space
    k = primal.k
    _, _, A, H = primal.state(n)
    Aq, Hq = s.values(A), s.values(H)
    gA, gH = s.grads(qA), s.grads(qH)
    fx = k * s.load(Aq * gA[..., 0] + Hq * gH[..., 0])
    fy = k * s.load(Aq * gA[..., 1] + Hq * gH[..., 1])
    return np.concatenate([fx, fy])


def dual_simulate(forms, primal, goal, st=None):
    """Full backward sweep n = N..1; returns a DualTrajectory whose rows 0
    and N+1 stay zero."""
    if st is None:
        st = SolverSettings()
    N = primal.n_steps
    m = forms.space.n_nodes
    zx = np.zeros((N + 2, m))
    zy = np.zeros((N + 2, m))
    qA = np.zeros((N + 2, m))
    qH = np.zeros((N + 2, m))
    Z = DualState.zero(m)
    for n in range(N, 0, -1):
        Z = dual_step(forms, primal, n, Z, goal, st)
        zx[n], zy[n], qA[n], qH[n] = Z.zx, Z.zy, Z.qA, Z.qH
    return DualTrajectory(primal.mesh, primal.k, zx, zy, qA, qH)
