"""Bilinear (Q1) finite elements on quadtree meshes.

All elements are axis-aligned squares, so the geometry mapping is a pure
scaling: gradients pick up a factor 1/size and the Jacobian determinant is
size^2.  Reference coordinates live on [0, 1]^2, corner order [SW, SE, NW, NE].

Hanging nodes are eliminated through a sparse prolongation matrix P that maps
free (unconstrained) coefficients to all nodal coefficients, giving each
hanging node the mean of its two edge masters.  Reduced operators are P^T K P,
reduced residuals P^T r; velocity spaces additionally drop the boundary rows
(homogeneous Dirichlet).

The error estimator needs two reconstructions (see estimator.py): linear in
time through the step values, and patchwise-biquadratic in space over 2x2
sibling patches.  The biquadratic tables are precomputed per patch position.
"""

import numpy as np
import scipy.sparse as sp

# -- quadrature on [0, 1] -----------------------------------------------------

_G2 = (np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)]),
       np.array([0.5, 0.5]))
_G3 = (np.array([0.5 - 0.5 * np.sqrt(0.6), 0.5, 0.5 + 0.5 * np.sqrt(0.6)]),
       np.array([5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0]))


def gauss_rule(order):
    """Tensor Gauss rule on [0,1]^2: points (Q, 2), weights (Q,).  order 2 is
    exact through degree 3 per variable, order 3 through degree 5."""
    g, w = {2: _G2, 3: _G3}[order]
    X, Y = np.meshgrid(g, g, indexing="xy")
    W = np.outer(w, w)
    return np.stack([X.ravel(), Y.ravel()], axis=1), W.ravel()


def q1_basis(pts):
    """Bilinear shape functions at pts (..., 2) -> (..., 4), order [SW,SE,NW,NE]."""
    x, y = pts[..., 0], pts[..., 1]
    return np.stack([(1 - x) * (1 - y), x * (1 - y), (1 - x) * y, x * y], axis=-1)


def q1_dbasis(pts):
    """Reference gradients at pts (..., 2) -> (..., 4, 2)."""
    x, y = pts[..., 0], pts[..., 1]
    dx = np.stack([-(1 - y), (1 - y), -y, y], axis=-1)
    dy = np.stack([-(1 - x), -x, (1 - x), x], axis=-1)
    return np.stack([dx, dy], axis=-1)


def _lag3(t):
    """1D quadratic Lagrange basis on nodes {0, 1/2, 1}: (..., 3)."""
    return np.stack([2 * (t - 0.5) * (t - 1), 4 * t * (1 - t), 2 * t * (t - 0.5)],
                    axis=-1)


def _dlag3(t):
    return np.stack([4 * t - 3, 4 - 8 * t, 4 * t - 1], axis=-1)


def q2_basis(pts):
    """Biquadratic shape functions at pts (..., 2) -> (..., 9), 3x3 row-major
    from SW (matches QuadMesh.patches node order)."""
    lx, ly = _lag3(pts[..., 0]), _lag3(pts[..., 1])
    return (ly[..., :, None] * lx[..., None, :]).reshape(pts.shape[:-1] + (9,))


def q2_dbasis(pts):
    lx, ly = _lag3(pts[..., 0]), _lag3(pts[..., 1])
    dlx, dly = _dlag3(pts[..., 0]), _dlag3(pts[..., 1])
    gx = (ly[..., :, None] * dlx[..., None, :]).reshape(pts.shape[:-1] + (9,))
    gy = (dly[..., :, None] * lx[..., None, :]).reshape(pts.shape[:-1] + (9,))
    return np.stack([gx, gy], axis=-1)


class Space:
    """Per-mesh FE workspace: constraint operators, quadrature caches,
    vectorized evaluation/assembly over all elements at once."""

    def __init__(self, mesh):
        self.mesh = mesh
        self.conn = mesh.elements
        self.n_nodes = mesh.n_nodes
        self.size = mesh.size
        self.detJ = mesh.size ** 2

        hang = mesh.hanging_nodes
        is_h = np.zeros(self.n_nodes, dtype=bool)
        is_h[hang] = True
        self.free_nodes = np.nonzero(~is_h)[0]
        on_b = np.zeros(self.n_nodes, dtype=bool)
        on_b[mesh.boundary_nodes] = True
        self.interior_free = np.nonzero(~is_h & ~on_b)[0]

        self.P = self._prolongation(self.free_nodes)
        self.Pd = self._prolongation(self.interior_free)
        self.Pv = sp.block_diag([self.Pd, self.Pd], format="csr")

        self._rules = {}
        for order in (2, 3):
            pts, w = gauss_rule(order)
            entry = {
                "pts": pts, "w": w,
                "N": q1_basis(pts).T.copy(),          # (4, Q)
                "dN": np.moveaxis(q1_dbasis(pts), 0, 1),   # (4, Q, 2)
                "B9": [], "dB9": [],
            }
            for pos in range(4):
                off = np.array([pos % 2, pos // 2], dtype=float)
                pp = (off + pts) / 2.0
                entry["B9"].append(q2_basis(pp).T.copy())              # (9, Q)
                entry["dB9"].append(np.moveaxis(q2_dbasis(pp), 0, 1))  # (9, Q, 2)
            self._rules[order] = entry
        self.pnodes = mesh.patches[mesh.patch_id]      # (E, 9)
        self._pos_groups = [np.nonzero(mesh.patch_pos == p)[0] for p in range(4)]

    # -- constraints ----------------------------------------------------------

    def _prolongation(self, free):
        mesh = self.mesh
        col_of = np.full(self.n_nodes, -1, dtype=np.int64)
        col_of[free] = np.arange(len(free))
        rows = list(free)
        cols = list(col_of[free])
        vals = [1.0] * len(free)
        for h, (a, b) in zip(mesh.hanging_nodes, mesh.hanging_masters):
            for m in (a, b):
                if col_of[m] >= 0:
                    rows.append(h)
                    cols.append(col_of[m])
                    vals.append(0.5)
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.n_nodes, len(free)))

    def distribute(self, u_free, P=None):
        """Free coefficients -> full nodal vector (hanging nodes averaged)."""
        return (P if P is not None else self.P) @ u_free

    def reduce_matrix(self, K, P=None):
        P = self.P if P is None else P
        return (P.T @ K @ P).tocsr()

    def reduce_vector(self, r, P=None):
        P = self.P if P is None else P
        return P.T @ r

    # -- evaluation at quadrature points -------------------------------------

    def rule(self, order):
        return self._rules[order]

    def qpoints(self, order=2):
        """Physical coordinates of the rule points, (E, Q, 2)."""
        R = self._rules[order]
        return (self.mesh.origin[:, None, :]
                + self.size[:, None, None] * R["pts"][None, :, :])

    def nodal(self, f):
        """Sample a callable f(x, y) at the mesh nodes."""
        x = self.mesh.nodes
        return np.asarray(f(x[:, 0], x[:, 1]), dtype=float)

    def values(self, u, order=2):
        R = self._rules[order]
        return u[self.conn] @ R["N"]                       # (E, Q)

    def grads(self, u, order=2):
        R = self._rules[order]
        g = np.einsum("ei,iqd->eqd", u[self.conn], R["dN"])
        return g / self.size[:, None, None]

    def patch_values(self, u, order=2):
        """Patchwise-biquadratic reconstruction evaluated at the rule points."""
        R = self._rules[order]
        out = np.empty((len(self.conn), R["w"].size))
        up = u[self.pnodes]
        for pos, idx in enumerate(self._pos_groups):
            out[idx] = up[idx] @ R["B9"][pos]
        return out

    def patch_grads(self, u, order=2):
        R = self._rules[order]
        out = np.empty((len(self.conn), R["w"].size, 2))
        up = u[self.pnodes]
        for pos, idx in enumerate(self._pos_groups):
            out[idx] = np.einsum("ei,iqd->eqd", up[idx], R["dB9"][pos])
        return out / (2.0 * self.size)[:, None, None]

    def recon_weight(self, u, order=2):
        """Values and gradients of (biquadratic reconstruction - u)."""
        return (self.patch_values(u, order) - self.values(u, order),
                self.patch_grads(u, order) - self.grads(u, order))

    # -- integration and load assembly ----------------------------------------

    def integrate(self, fq, order=2):
        """Per-element integrals of a sampled integrand fq (E, Q) -> (E,)."""
        R = self._rules[order]
        return (fq @ R["w"]) * self.detJ

    def load(self, fq, order=2):
        """Nodal assembly of ∫ fq * phi_i -> (M,)."""
        R = self._rules[order]
        el = np.einsum("eq,iq,q->ei", fq, R["N"], R["w"]) * self.detJ[:, None]
        out = np.zeros(self.n_nodes)
        np.add.at(out, self.conn, el)
        return out

    def load_grad(self, gq, order=2):
        """Nodal assembly of ∫ gq . grad(phi_i) -> (M,); gq is (E, Q, 2)."""
        R = self._rules[order]
        el = np.einsum("eqd,iqd,q->ei", gq, R["dN"], R["w"]) * self.size[:, None]
        out = np.zeros(self.n_nodes)
        np.add.at(out, self.conn, el)
        return out

    # -- matrix assembly -------------------------------------------------------

    def matrix(self, blocks):
        """Scatter element blocks (E, 4, 4) into a CSR matrix (test i, trial j)."""
        E = len(self.conn)
        rows = np.repeat(self.conn, 4, axis=1).ravel()
        cols = np.tile(self.conn, (1, 4)).ravel()
        K = sp.coo_matrix((blocks.reshape(E, 16).ravel(), (rows, cols)),
                          shape=(self.n_nodes, self.n_nodes))
        return K.tocsr()

    def op_blocks(self, order=2, c00=None, c0g=None, cg0=None, cgg=None):
        """Element matrices for ∫ [c00 N_j N_i + (c0g.grad N_j) N_i
        + (cg0.grad N_i) N_j + grad N_i . cgg . grad N_j].

        c00: (E,Q); c0g, cg0: (E,Q,2); cgg: (E,Q,2,2) contracted as
        dNi_a cgg[a,b] dNj_b.  Any may be None.
        """
        R = self._rules[order]
        N, dN, w = R["N"], R["dN"], R["w"]
        E = len(self.conn)
        out = np.zeros((E, 4, 4))
        if c00 is not None:
            out += np.einsum("eq,iq,jq,q->eij", c00, N, N, w) * self.detJ[:, None, None]
        if c0g is not None:
            out += np.einsum("eqd,jqd,iq,q->eij", c0g, dN, N, w) * self.size[:, None, None]
        if cg0 is not None:
            out += np.einsum("eqd,iqd,jq,q->eij", cg0, dN, N, w) * self.size[:, None, None]
        if cgg is not None:
            out += np.einsum("iqa,eqab,jqb,q->eij", dN, cgg, dN, w)
        return out

    def mass_matrix(self, coef=None, order=2):
        if coef is None:
            E = len(self.conn)
            coef = np.ones((E, self._rules[order]["w"].size))
        return self.matrix(self.op_blocks(order, c00=coef))

    # -- evaluation at arbitrary per-element points ---------------------------

    def eval_at(self, u, els, pts):
        """u at per-element reference points pts (E', Q, 2) -> (E', Q)."""
        N = q1_basis(pts)                                  # (E', Q, 4)
        return np.einsum("ei,eqi->eq", u[self.conn[els]], N)

    def patch_eval_at(self, u, els, pts):
        off = np.stack([self.mesh.patch_pos[els] % 2,
                        self.mesh.patch_pos[els] // 2], axis=1).astype(float)
        pp = (off[:, None, :] + pts) / 2.0
        B = q2_basis(pp)                                   # (E', Q, 9)
        return np.einsum("ei,eqi->eq", u[self.pnodes[els]], B)

    def window_quad(self, rect, order=2):
        """Exact quadrature for ∫_{K ∩ rect} over every element K intersecting
        the axis-aligned rectangle rect = (x0, x1, y0, y1).

        Returns (els, pts, wts): element indices, per-element reference points
        (E', Q, 2) and physical weights (E', Q).
        """
        x0, x1, y0, y1 = rect
        m = self.mesh
        a = np.maximum(m.origin[:, 0], x0)
        b = np.minimum(m.origin[:, 0] + m.size, x1)
        c = np.maximum(m.origin[:, 1], y0)
        d = np.minimum(m.origin[:, 1] + m.size, y1)
        els = np.nonzero((b - a > 1e-9 * m.L) & (d - c > 1e-9 * m.L))[0]
        a, b, c, d = a[els], b[els], c[els], d[els]
        g, wg = {2: _G2, 3: _G3}[order]
        gx = a[:, None] + (b - a)[:, None] * g[None, :]    # (E', q)
        gy = c[:, None] + (d - c)[:, None] * g[None, :]
        q = len(g)
        X = np.repeat(gx[:, None, :], q, axis=1).reshape(len(els), q * q)
        Y = np.repeat(gy[:, :, None], q, axis=2).reshape(len(els), q * q)
        W = ((b - a) * (d - c))[:, None] * np.outer(wg, wg).ravel()[None, :]
        ox = m.origin[els]
        s = m.size[els]
        pts = np.stack([(X - ox[:, 0:1]) / s[:, None],
                        (Y - ox[:, 1:2]) / s[:, None]], axis=2)
        return els, pts, W


def l2_product(space, f, g, order=2):
    """∫_Ω f g dx for nodal fields (or pairs of nodal fields for vectors)."""
    if isinstance(f, tuple) or (np.ndim(f) == 2):
        return sum(l2_product(space, fc, gc, order) for fc, gc in zip(f, g))
    fq = space.values(np.asarray(f, dtype=float), order)
    gq = space.values(np.asarray(g, dtype=float), order)
    return float(space.integrate(fq * gq, order).sum())


# -- trajectories -------------------------------------------------------------

class Trajectory:
    """Forward dG(0) trajectory: snapshot m is the value on (t_{m-1}, t_m]
    (snapshot 0 is the initial state).  Arrays have shape (N+1, n_nodes)."""

    def __init__(self, mesh, k, vx, vy, A, H):
        self.mesh = mesh
        self.k = float(k)
        self.vx, self.vy, self.A, self.H = vx, vy, A, H
        self.n_steps = len(A) - 1
        self.times = k * np.arange(len(A))

    @property
    def T(self):
        return self.times[-1]

    def state(self, n):
        return self.vx[n], self.vy[n], self.A[n], self.H[n]


class DualTrajectory:
    """Backward sweep values: row n holds the dual state of interval I_n,
    n = 1..N; rows 0 and N+1 are kept zero (terminal convention)."""

    def __init__(self, mesh, k, zx, zy, qA, qH):
        self.mesh = mesh
        self.k = float(k)
        self.zx, self.zy, self.qA, self.qH = zx, zy, qA, qH
        self.n_steps = len(zx) - 2

    def state(self, n):
        return self.zx[n], self.zy[n], self.qA[n], self.qH[n]


def jump(traj, n, component):
    """Temporal jump [u]_{n-1} = u_n − u_{n-1} of a trajectory component."""
    arr = getattr(traj, component)
    if not 1 <= n <= traj.n_steps:
        raise IndexError(f"step {n} outside 1..{traj.n_steps}")
    return arr[n] - arr[n - 1]


class PiecewiseLinear:
    """Linear-in-time reconstruction through given node values."""

    def __init__(self, times, values):
        self.times = np.asarray(times, dtype=float)
        self.values = np.asarray(values, dtype=float)

    def __call__(self, t):
        tt = self.times
        i = np.clip(np.searchsorted(tt, t, side="right") - 1, 0, len(tt) - 2)
        w = (t - tt[i]) / (tt[i + 1] - tt[i])
        w = np.clip(w, 0.0, 1.0)
        return (1 - w) * self.values[i] + w * self.values[i + 1]

    def midpoint(self, n):
        """Value at the midpoint of (t_{n-1}, t_n)."""
        return 0.5 * (self.values[n - 1] + self.values[n])


def reconstruct_time(traj, component):
    """Piecewise-linear reconstruction of a trajectory component.

    For forward trajectories the nodes are the snapshots themselves.  For
    backward (dual) trajectories the interval-n value is attached to the left
    node t_{n-1}, so the reconstruction on I_n joins state n to state n+1 with
    the terminal convention state(N+1) = 0; the midpoint weight against the
    piecewise-constant trajectory is half the forward difference.
    """
    arr = getattr(traj, component)
    if isinstance(traj, DualTrajectory):
        N = traj.n_steps
        times = traj.k * np.arange(N + 1)
        return PiecewiseLinear(times, arr[1:])
    return PiecewiseLinear(traj.times, arr)
