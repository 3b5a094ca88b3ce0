"""Viscous-plastic sea-ice physics.

Strong form on Omega = (0, L)^2 with v = 0 on the boundary:

    rho_ice H (dv/dt + f_c e_r x (v - v_ocean)) = div sigma + tau(v)
    dA/dt + div(v A) = 0,   dH/dt + div(v H) = 0

with the VP rheology

    sigma = 2 eta eps' + zeta tr(eps) I - P/2 I,
    zeta = P / (2 Delta),  eta = zeta / 4,
    Delta = sqrt(1/2 eps':eps' + tr(eps)^2 + Delta_min^2),
    P = P_star H exp(-C_conc (1 - A)),

ocean/atmosphere traction

    tau = C_ocean rho_ocean |v_o - v| (v_o - v) + C_atm rho_atm |v_a| v_a,

and the weak constraint A <= 1 through the penalty term -(min{0, 1-A}, psi)
on the right-hand side of the A-transport equation, written against the
rate form k^-1 (A_n - A_{n-1}) + div(v A_n); in the jump-scaled residual
used here the penalty therefore carries a factor k (active where A > 1).

It is convenient to write sigma = P * G(eps) with

    G = eps'/(4 Delta) + tr(eps)/(2 Delta) I - 1/2 I,

so the coefficient derivatives are simply sigma'_A = C_conc sigma dA and
sigma'_H = P_star exp(-C_conc(1-A)) G dH, while sigma'_v follows from

    dDelta = (eps':deps' + 2 tr(eps) tr(deps)) / (2 Delta).

All kernels below are plain array functions of quadrature-sampled fields;
`Forms` bundles them with a FE space and scenario data into residuals,
Jacobians and the coupling blocks needed by the adjoint sweep.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class PhysParams:
    rho_ice: float = 900.0          # kg/m^3
    rho_atm: float = 1.3            # kg/m^3
    rho_ocean: float = 1026.0       # kg/m^3
    C_atm: float = 1.2e-3
    C_ocean: float = 5.5e-3
    f_c: float = 1.46e-4            # 1/s
    P_star: float = 27.5e3          # N/m^2
    C_conc: float = 20.0
    Delta_min: float = 2e-9         # 1/s

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            if getattr(self, name) <= 0:
                raise ValueError(f"physical parameter {name} must be positive")


@dataclass(frozen=True)
class GoalSpec:
    """Time-averaged ice concentration integrated over a rectangular window,
    J = int_t int_rect A / ((t_end - t_start) * area_scale); the area scale
    sets the reporting unit (default (100 km)^2)."""
    rect: tuple                      # (x0, x1, y0, y1) in meters
    t_start: float
    t_end: float
    area_scale: float = 1.0e10       # (100 km)^2

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise ValueError("empty goal time window")

    def overlap(self, t0, t1):
        return max(0.0, min(t1, self.t_end) - max(t0, self.t_start))

    def coeff(self, t0, t1):
        """Weight of one time step in the discrete goal (box rule)."""
        return self.overlap(t0, t1) / ((self.t_end - self.t_start) * self.area_scale)


# -- pointwise kernels (arbitrary array shapes) -------------------------------

def strain(gvx, gvy):
    """Symmetric gradient components (e11, e12, e22) from velocity gradients
    gvx, gvy of shape (..., 2)."""
    return (gvx[..., 0],
            0.5 * (gvx[..., 1] + gvy[..., 0]),
            gvy[..., 1])


def delta(e11, e12, e22, params):
    return np.sqrt(e12 ** 2 + 0.25 * (e11 - e22) ** 2 + (e11 + e22) ** 2
                   + params.Delta_min ** 2)


def ice_strength(H, A, params):
    return params.P_star * H * np.exp(-params.C_conc * (1.0 - A))


def stress_G(e11, e12, e22, params):
    """Dimensionless tensor G with sigma = P G; returns (G11, G12, G22, Delta)."""
    D = delta(e11, e12, e22, params)
    dev = 0.125 * (e11 - e22) / D
    tr = 0.5 * (e11 + e22) / D
    return dev + tr - 0.5, 0.25 * e12 / D, -dev + tr - 0.5, D


def stress(gvx, gvy, A, H, params):
    """VP stress components (s11, s12, s22) at sampled points."""
    e11, e12, e22 = strain(gvx, gvy)
    G11, G12, G22, _ = stress_G(e11, e12, e22, params)
    P = ice_strength(H, A, params)
    return P * G11, P * G12, P * G22


def stress_prime_v(gvx, gvy, A, H, dgvx, dgvy, params):
    """Directional derivative of sigma in a velocity direction (gradients
    dgvx, dgvy), at fixed A, H."""
    e11, e12, e22 = strain(gvx, gvy)
    f11, f12, f22 = strain(dgvx, dgvy)
    G11, G12, G22, D = stress_G(e11, e12, e22, params)
    dD = (0.5 * (e11 - e22) * (f11 - f22) + 2.0 * e12 * f12
          + 2.0 * (e11 + e22) * (f11 + f22)) / (2.0 * D)
    P = ice_strength(H, A, params)
    rel = dD / D
    dev = 0.125 * (f11 - f22) / D
    tr = 0.5 * (f11 + f22) / D
    dG11 = dev + tr - rel * (G11 + 0.5)
    dG12 = 0.25 * f12 / D - rel * G12
    dG22 = -dev + tr - rel * (G22 + 0.5)
    return P * dG11, P * dG12, P * dG22


def stress_prime_A(gvx, gvy, A, H, dA, params):
    s11, s12, s22 = stress(gvx, gvy, A, H, params)
    c = params.C_conc * dA
    return c * s11, c * s12, c * s22


def stress_prime_H(gvx, gvy, A, H, dH, params):
    e11, e12, e22 = strain(gvx, gvy)
    G11, G12, G22, _ = stress_G(e11, e12, e22, params)
    c = params.P_star * np.exp(-params.C_conc * (1.0 - A)) * dH
    return c * G11, c * G12, c * G22


def stress_vtensor(gvx, gvy, A, H, params):
    """Full velocity Jacobian of sigma as D[a, b, c, d] = d sigma_ab / d(dv_c/dx_d),
    shape (..., 2, 2, 2, 2), built from four directional derivatives."""
    shape = gvx.shape[:-1]
    D = np.empty(shape + (2, 2, 2, 2))
    zeros = np.zeros(shape + (2,))
    for c in range(2):
        for d in range(2):
            dgx, dgy = zeros.copy(), zeros.copy()
            (dgx if c == 0 else dgy)[..., d] = 1.0
            s11, s12, s22 = stress_prime_v(gvx, gvy, A, H, dgx, dgy, params)
            D[..., 0, 0, c, d] = s11
            D[..., 0, 1, c, d] = s12
            D[..., 1, 0, c, d] = s12
            D[..., 1, 1, c, d] = s22
    return D


def forcing_tau(vx, vy, vox, voy, vax, vay, params):
    """Ocean + atmosphere traction (quadratic drag laws)."""
    dx, dy = vox - vx, voy - vy
    no = np.sqrt(dx ** 2 + dy ** 2)
    na = np.sqrt(vax ** 2 + vay ** 2)
    co = params.C_ocean * params.rho_ocean
    ca = params.C_atm * params.rho_atm
    return co * no * dx + ca * na * vax, co * no * dy + ca * na * vay


def tau_prime(vx, vy, vox, voy, dvx, dvy, params):
    """Directional derivative of tau in the ice-velocity direction (dvx, dvy).
    The atmospheric part does not depend on v.  At v = v_ocean both factors of
    the ocean term vanish to first order, so the derivative is zero there."""
    dx, dy = vox - vx, voy - vy
    n = np.sqrt(dx ** 2 + dy ** 2)
    co = params.C_ocean * params.rho_ocean
    with np.errstate(invalid="ignore", divide="ignore"):
        dn = np.where(n > 0.0, -(dx * dvx + dy * dvy) / np.where(n > 0, n, 1.0), 0.0)
    return co * (dn * dx - n * dvx), co * (dn * dy - n * dvy)


def tau_vmatrix(vx, vy, vox, voy, params):
    """Ocean-drag Jacobian T with d tau = T dv; components (Txx, Txy, Tyy)."""
    dx, dy = vox - vx, voy - vy
    n = np.sqrt(dx ** 2 + dy ** 2)
    co = params.C_ocean * params.rho_ocean
    inv = np.where(n > 0, 1.0 / np.where(n > 0, n, 1.0), 0.0)
    return (-co * (n + dx * dx * inv),
            -co * (dx * dy * inv),
            -co * (n + dy * dy * inv))


# -- assembled forms ----------------------------------------------------------

class Forms:
    """Residuals, Jacobians and coupling blocks of the split scheme on a fixed
    FE space with scenario forcing.

    Momentum step n (coefficients lagged to step n-1, box rule at t_n):

        rho (Hc (v - v_prev), phi) + k rho f_c (Hc e_r x (v - v_ocean), phi)
        + k (sigma(grad v, Ac, Hc), grad phi) - k (tau(v, t_n), phi) = 0

    Transport steps (Ac = A_{n-1} etc. are the *previous* values only through
    the initial guess; the advected velocity is the fresh v_n):

        (C - C_prev, psi) + k (div(v C), psi) [- (min{0, 1-C}, psi) for A] = 0
    """

    def __init__(self, space, params, scen):
        self.space = space
        self.params = params
        self.scen = scen
        self._ocean = {}
        self._wind = {}
        self._wload = {}

    # forcing caches ----------------------------------------------------------

    def ocean_q(self, order=2):
        if order not in self._ocean:
            X = self.space.qpoints(order)
            vox, voy = self.scen.ocean(X[..., 0], X[..., 1])
            self._ocean[order] = (np.broadcast_to(vox, X[..., 0].shape).copy(),
                                  np.broadcast_to(voy, X[..., 0].shape).copy())
        return self._ocean[order]

    def wind_q(self, t, order=2):
        key = (float(t), order)
        if key not in self._wind:
            if len(self._wind) > 8:
                self._wind.pop(next(iter(self._wind)))
            X = self.space.qpoints(order)
            vax, vay = self.scen.wind(X[..., 0], X[..., 1], t)
            self._wind[key] = (np.broadcast_to(vax, X[..., 0].shape).copy(),
                               np.broadcast_to(vay, X[..., 0].shape).copy())
        return self._wind[key]

    def window_load(self, rect):
        """Nodal vector of integrals of each basis function over Omega ∩ rect."""
        if rect not in self._wload:
            from .fem import q1_basis
            els, pts, wts = self.space.window_quad(rect, 2)
            N = q1_basis(pts)
            out = np.zeros(self.space.n_nodes)
            np.add.at(out, self.space.conn[els], np.einsum("eq,eqi->ei", wts, N))
            self._wload[rect] = out
        return self._wload[rect]

    # momentum ----------------------------------------------------------------

    def _vel_q(self, vx, vy, order=2):
        s = self.space
        return (s.values(vx, order), s.values(vy, order),
                s.grads(vx, order), s.grads(vy, order))

    def momentum_residual(self, vx, vy, vpx, vpy, Ac, Hc, t, k, with_scale=False):
        """Full nodal residual (2M,) of the momentum step; optionally also a
        magnitude scale (sum of term norms) for roundoff-floor convergence."""
        s, p = self.space, self.params
        vxq, vyq, gvx, gvy = self._vel_q(vx, vy)
        vpxq, vpyq = s.values(vpx), s.values(vpy)
        Aq, Hq = s.values(Ac), s.values(Hc)
        vox, voy = self.ocean_q()
        vax, vay = self.wind_q(t)

        rx_m = s.load(p.rho_ice * Hq * (vxq - vpxq))
        ry_m = s.load(p.rho_ice * Hq * (vyq - vpyq))
        rx_c = k * s.load(-p.rho_ice * p.f_c * Hq * (vyq - voy))
        ry_c = k * s.load(p.rho_ice * p.f_c * Hq * (vxq - vox))
        s11, s12, s22 = stress(gvx, gvy, Aq, Hq, p)
        rx_s = k * s.load_grad(np.stack([s11, s12], axis=-1))
        ry_s = k * s.load_grad(np.stack([s12, s22], axis=-1))
        tx, ty = forcing_tau(vxq, vyq, vox, voy, vax, vay, p)
        rx_t = -k * s.load(tx)
        ry_t = -k * s.load(ty)

        r = np.concatenate([rx_m + rx_c + rx_s + rx_t, ry_m + ry_c + ry_s + ry_t])
        if not with_scale:
            return r
        scale = sum(np.linalg.norm(np.concatenate([a, b]))
                    for a, b in ((rx_m, ry_m), (rx_c, ry_c), (rx_s, ry_s), (rx_t, ry_t)))
        return r, scale

    def momentum_jacobian(self, vx, vy, Ac, Hc, t, k):
        """Sparse (2M, 2M) Jacobian of momentum_residual w.r.t. (vx, vy)."""
        s, p = self.space, self.params
        vxq, vyq, gvx, gvy = self._vel_q(vx, vy)
        Aq, Hq = s.values(Ac), s.values(Hc)
        vox, voy = self.ocean_q()

        D = stress_vtensor(gvx, gvy, Aq, Hq, p)
        Txx, Txy, Tyy = tau_vmatrix(vxq, vyq, vox, voy, p)
        mH = p.rho_ice * Hq
        cor = k * p.rho_ice * p.f_c * Hq

        Kxx = s.op_blocks(c00=mH - k * Txx, cgg=k * D[..., 0, :, 0, :])
        Kxy = s.op_blocks(c00=-cor - k * Txy, cgg=k * D[..., 0, :, 1, :])
        Kyx = s.op_blocks(c00=cor - k * Txy, cgg=k * D[..., 1, :, 0, :])
        Kyy = s.op_blocks(c00=mH - k * Tyy, cgg=k * D[..., 1, :, 1, :])
        return sp.bmat([[s.matrix(Kxx), s.matrix(Kxy)],
                        [s.matrix(Kyx), s.matrix(Kyy)]], format="csr")

    # transport ---------------------------------------------------------------

    def transport_residual(self, C, Cp, vx, vy, k, penalty, with_scale=False,
                           pen_scale=1.0):
        s = self.space
        Cq, Cpq = s.values(C), s.values(Cp)
        gC = s.grads(C)
        vxq, vyq = s.values(vx), s.values(vy)
        divv = s.grads(vx)[..., 0] + s.grads(vy)[..., 1]
        r_m = s.load(Cq - Cpq)
        r_a = k * s.load(vxq * gC[..., 0] + vyq * gC[..., 1] + divv * Cq)
        terms = [r_m, r_a]
        if penalty:
            terms.append(-pen_scale * k * s.load(np.minimum(0.0, 1.0 - Cq)))
        r = sum(terms)
        if not with_scale:
            return r
        return r, sum(np.linalg.norm(v) for v in terms)

    def transport_jacobian(self, C, vx, vy, k, penalty, pen_scale=1.0):
        s = self.space
        vxq, vyq = s.values(vx), s.values(vy)
        divv = s.grads(vx)[..., 0] + s.grads(vy)[..., 1]
        c00 = k * divv
        if penalty:
            c00 = c00 + pen_scale * k * (s.values(C) > 1.0).astype(float)
        blocks = s.op_blocks(c00=c00, c0g=k * np.stack([vxq, vyq], axis=-1))
        return s.matrix(blocks) + s.mass_matrix()

    # coupling blocks for the adjoint sweep ------------------------------------

    def block_dmom_dA(self, vx, vy, Ac, Hc, k):
        """(2M, M) block: derivative of the momentum residual w.r.t. the
        concentration coefficient (stress only)."""
        s, p = self.space, self.params
        _, _, gvx, gvy = self._vel_q(vx, vy)
        Aq, Hq = s.values(Ac), s.values(Hc)
        s11, s12, s22 = stress(gvx, gvy, Aq, Hq, p)
        c = k * p.C_conc
        Bx = s.matrix(s.op_blocks(cg0=c * np.stack([s11, s12], axis=-1)))
        By = s.matrix(s.op_blocks(cg0=c * np.stack([s12, s22], axis=-1)))
        return sp.vstack([Bx, By], format="csr")

    def block_dmom_dH(self, vx, vy, vpx, vpy, Ac, k):
        """(2M, M) block: derivative of the momentum residual w.r.t. the
        thickness coefficient (inertial mass, Coriolis, stress)."""
        s, p = self.space, self.params
        vxq, vyq, gvx, gvy = self._vel_q(vx, vy)
        vpxq, vpyq = s.values(vpx), s.values(vpy)
        Aq = s.values(Ac)
        vox, voy = self.ocean_q()
        e11, e12, e22 = strain(gvx, gvy)
        G11, G12, G22, _ = stress_G(e11, e12, e22, p)
        c = k * p.P_star * np.exp(-p.C_conc * (1.0 - Aq))
        mx = p.rho_ice * (vxq - vpxq) - k * p.rho_ice * p.f_c * (vyq - voy)
        my = p.rho_ice * (vyq - vpyq) + k * p.rho_ice * p.f_c * (vxq - vox)
        Bx = s.matrix(s.op_blocks(c00=mx, cg0=c[..., None] * np.stack([G11, G12], axis=-1)))
        By = s.matrix(s.op_blocks(c00=my, cg0=c[..., None] * np.stack([G12, G22], axis=-1)))
        return sp.vstack([Bx, By], format="csr")

    def block_dtrans_dv(self, C, k):
        """(M, 2M) block: derivative of a transport residual w.r.t. velocity,
        k (div(dv C), psi)."""
        s = self.space
        Cq = s.values(C)
        gC = s.grads(C)
        zero = np.zeros_like(Cq)
        Bx = s.matrix(s.op_blocks(c00=k * gC[..., 0],
                                  c0g=k * np.stack([Cq, zero], axis=-1)))
        By = s.matrix(s.op_blocks(c00=k * gC[..., 1],
                                  c0g=k * np.stack([zero, Cq], axis=-1)))
        return sp.hstack([Bx, By], format="csr")

    def mass_rho_H(self, Hc):
        """(2M, 2M) block-diagonal rho_ice (Hc . , .) mass operator."""
        M = self.space.mass_matrix(self.params.rho_ice * self.space.values(Hc))
        return sp.block_diag([M, M], format="csr")


# -- goal functional ----------------------------------------------------------

def goal_J(forms, traj, gs):
    """Discrete goal: box-rule time mean of the Omega_2 concentration integral,
    in (100 km)^2 units."""
    w = forms.window_load(gs.rect)
    total = 0.0
    for n in range(1, traj.n_steps + 1):
        c = gs.coeff(traj.times[n - 1], traj.times[n])
        if c:
            total += c * float(w @ traj.A[n])
    return total


def goal_J_gradient(forms, traj, gs, n):
    """Nodal gradient of the discrete goal w.r.t. A_n."""
    c = gs.coeff(traj.times[n - 1], traj.times[n])
    return c * forms.window_load(gs.rect)


# -- space-time forms on piecewise-constant (dG0) tests -----------------------

def _form_terms(forms, traj, test, n, split, t=None):
    """One step of the coupled (split=False) or split (split=True) space-time
    form against a dG(0) test; the test's interval-n values are row n of the
    test trajectory.  Box rule in time (sample at t_n), matching the solver."""
    s, p = forms.space, forms.params
    k = traj.k
    t = traj.times[n] if t is None else t
    vx, vy, A, H = traj.state(n)
    vpx, vpy, Ap, Hp = traj.state(n - 1)
    Ac, Hc = (Ap, Hp) if split else (A, H)
    px, py, pA, pH = test.state(n)

    vxq, vyq = s.values(vx), s.values(vy)
    gvx, gvy = s.grads(vx), s.grads(vy)
    pxq, pyq = s.values(px), s.values(py)
    gpx, gpy = s.grads(px), s.grads(py)
    Aq, Hq = s.values(Ac), s.values(Hc)
    vox, voy = forms.ocean_q()
    vax, vay = forms.wind_q(t)

    jx = vxq - s.values(vpx)
    jy = vyq - s.values(vpy)
    out = float(s.integrate(p.rho_ice * Hq * (jx * pxq + jy * pyq)).sum())
    out += k * float(s.integrate(p.rho_ice * p.f_c * Hq *
                                 (-(vyq - voy) * pxq + (vxq - vox) * pyq)).sum())
    s11, s12, s22 = stress(gvx, gvy, Aq, Hq, p)
    out += k * float(s.integrate(s11 * gpx[..., 0] + s12 * (gpx[..., 1] + gpy[..., 0])
                                 + s22 * gpy[..., 1]).sum())
    tx, ty = forcing_tau(vxq, vyq, vox, voy, vax, vay, p)
    out -= k * float(s.integrate(tx * pxq + ty * pyq).sum())

    for C, Cp, pC, pen in ((A, Ap, pA, True), (H, Hp, pH, False)):
        Cq = s.values(C)
        gC = s.grads(C)
        divv = gvx[..., 0] + gvy[..., 1]
        pCq = s.values(pC)
        out += float(s.integrate((Cq - s.values(Cp)) * pCq).sum())
        out += k * float(s.integrate((vxq * gC[..., 0] + vyq * gC[..., 1]
                                      + divv * Cq) * pCq).sum())
        if pen:
            out -= k * float(s.integrate(np.minimum(0.0, 1.0 - Cq) * pCq).sum())
    return out


def form_B(forms, traj, test):
    """Coupled space-time form of the full system on dG(0) tests."""
    return sum(_form_terms(forms, traj, test, n, split=False)
               for n in range(1, traj.n_steps + 1))


def form_Bs(forms, traj, test):
    """Split form: momentum coefficients lagged to the previous step value.
    Vanishes (to solver tolerance) on the split solver's own trajectory."""
    return sum(_form_terms(forms, traj, test, n, split=True)
               for n in range(1, traj.n_steps + 1))


def form_beta(forms, traj, test):
    """Splitting defect beta = B_s - B, accumulated term-wise: only the
    momentum terms whose coefficients are lagged contribute."""
    s, p = forms.space, forms.params
    k = traj.k
    total = 0.0
    for n in range(1, traj.n_steps + 1):
        vx, vy, A, H = traj.state(n)
        vpx, vpy, Ap, Hp = traj.state(n - 1)
        px, py = test.state(n)[:2]
        pxq, pyq = s.values(px), s.values(py)
        gpx, gpy = s.grads(px), s.grads(py)
        gvx, gvy = s.grads(vx), s.grads(vy)
        dHq = s.values(Hp) - s.values(H)
        jx = s.values(vx) - s.values(vpx)
        jy = s.values(vy) - s.values(vpy)
        vox, voy = forms.ocean_q()
        total += float(s.integrate(p.rho_ice * dHq * (jx * pxq + jy * pyq)).sum())
        total += k * float(s.integrate(
            p.rho_ice * p.f_c * dHq *
            (-(s.values(vy) - voy) * pxq + (s.values(vx) - vox) * pyq)).sum())
        a11, a12, a22 = stress(gvx, gvy, s.values(Ap), s.values(Hp), p)
        b11, b12, b22 = stress(gvx, gvy, s.values(A), s.values(H), p)
        total += k * float(s.integrate(
            (a11 - b11) * gpx[..., 0] + (a12 - b12) * (gpx[..., 1] + gpy[..., 0])
            + (a22 - b22) * gpy[..., 1]).sum())
    return total
