"""Adaptive quadrilateral meshes on a square domain.

The mesh is a leaf-only quadtree over (0, L)^2.  Every element is an axis-
aligned square identified by an integer triple (level, i, j): the level-0
grid is n0 x n0, and cell (l, i, j) spans
[i*h_l, (i+1)*h_l] x [j*h_l, (j+1)*h_l] with h_l = L / (n0 * 2**l).

Refinement is by quadrisection with a 2:1 edge-balance closure: marking an
element also marks any coarser edge neighbor, repeated to a fixpoint.  Under
that rule a hanging node is always the midpoint of exactly one coarser edge,
its two masters (the edge endpoints) are regular nodes, and no hanging node
lies on the domain boundary.

Elements store their four corner nodes in tensor order [SW, SE, NW, NE].
Sibling groups of four elements form patches (3x3 node grids) used for the
patchwise-biquadratic reconstruction in the error estimator; on the initial
(even n) grid the patches are the 2x2 blocks of level-0 cells.
"""

import hashlib

import numpy as np

__all__ = ["QuadMesh", "uniform_mesh", "refine", "region_partition", "is_balanced"]


class QuadMesh:
    """Immutable leaf-quadtree mesh.

    Attributes
    ----------
    nodes : (M, 2) float array of node coordinates (meters).
    elements : (E, 4) int array, corner node ids in tensor order [SW, SE, NW, NE].
    cells : (E, 3) int array of (level, i, j) quadtree keys.
    level : (E,) int array (= cells[:, 0]).
    size : (E,) float array of element side lengths.
    origin : (E, 2) float array of SW corners.
    patch_id, patch_pos : (E,) int arrays; patch_pos is 0=SW, 1=SE, 2=NW, 3=NE
        within the owning 2x2 sibling block.
    patches : (P, 9) int array of patch node ids (3x3 grid, row-major from SW).
    patch_origin : (P, 2), patch_size : (P,) geometry of each patch.
    hanging_nodes : (C,) int array; hanging_masters : (C, 2) int array.  Each
        hanging node is the midpoint of the edge joining its two masters.
    boundary_nodes : sorted int array of node ids on the boundary of (0, L)^2.
    region_id : (E,) int array, 4x4 checkerboard region of the element center.
    """

    def __init__(self, n0, L, cells):
        self.n0 = int(n0)
        self.L = float(L)
        cells = np.asarray(cells, dtype=np.int64)
        if cells.ndim != 2 or cells.shape[1] != 3:
            raise ValueError("cells must be an (E, 3) integer array")
        maxlev = int(cells[:, 0].max()) if len(cells) else 0
        self.max_level = maxlev
        # lattice: integer coordinates at the finest level
        nfine = self.n0 << maxlev
        self._nfine = nfine
        scale = 1 << (maxlev - cells[:, 0])          # lattice units per cell side
        ox = cells[:, 1] * scale
        oy = cells[:, 2] * scale
        # canonical element order: by SW corner (y outer, x inner), then level
        order = np.lexsort((cells[:, 0], ox, oy))
        cells = cells[order]
        scale, ox, oy = scale[order], ox[order], oy[order]
        self.cells = cells
        self.level = cells[:, 0].copy()

        # corner lattice keys, tensor order [SW, SE, NW, NE]
        cx = np.stack([ox, ox + scale, ox, ox + scale], axis=1)
        cy = np.stack([oy, oy, oy + scale, oy + scale], axis=1)
        key = cx * (nfine + 1) + cy   # unique int per lattice point
        uniq, inv = np.unique(key, return_inverse=True)
        # renumber row-major (y outer): uniq is sorted by key = x*(n+1)+y;
        # re-sort by (y, x)
        ux, uy = uniq // (nfine + 1), uniq % (nfine + 1)
        perm = np.lexsort((ux, uy))
        rank = np.empty_like(perm)
        rank[perm] = np.arange(len(perm))
        self.elements = rank[inv].reshape(-1, 4)
        ux, uy = ux[perm], uy[perm]
        hfine = self.L / nfine
        self.nodes = np.stack([ux * hfine, uy * hfine], axis=1)
        self._node_key = dict(zip(ux * (nfine + 1) + uy, range(len(ux))))
        self._leafset = {tuple(c): e for e, c in enumerate(map(tuple, cells))}

        self.size = scale * hfine
        self.origin = np.stack([ox * hfine, oy * hfine], axis=1)

        on_b = (ux == 0) | (ux == nfine) | (uy == 0) | (uy == nfine)
        self.boundary_nodes = np.nonzero(on_b)[0]

        self._find_hanging(ox, oy, scale)
        self._build_patches(ox, oy, scale)
        self.region_id = region_partition(self, 4, 4)

    # -- construction helpers -------------------------------------------------

    def _find_hanging(self, ox, oy, scale):
        """Hanging node = existing node at the midpoint of a leaf's edge."""
        nk = self._node_key
        nf1 = self._nfine + 1
        hang, masters = [], []
        coarse = np.nonzero(scale > 1)[0]
        for e in coarse:
            s, x0, y0 = scale[e], ox[e], oy[e]
            half = s // 2
            # (midpoint key, endpoint keys) for S, N, W, E edges
            edges = (
                ((x0 + half) * nf1 + y0, x0 * nf1 + y0, (x0 + s) * nf1 + y0),
                ((x0 + half) * nf1 + (y0 + s), x0 * nf1 + (y0 + s), (x0 + s) * nf1 + (y0 + s)),
                (x0 * nf1 + (y0 + half), x0 * nf1 + y0, x0 * nf1 + (y0 + s)),
                ((x0 + s) * nf1 + (y0 + half), (x0 + s) * nf1 + y0, (x0 + s) * nf1 + (y0 + s)),
            )
            for mid, a, b in edges:
                m = nk.get(mid)
                if m is not None:
                    hang.append(m)
                    masters.append((nk[a], nk[b]))
        if hang:
            order = np.argsort(hang)
            self.hanging_nodes = np.asarray(hang, dtype=np.int64)[order]
            self.hanging_masters = np.asarray(masters, dtype=np.int64)[order]
        else:
            self.hanging_nodes = np.empty(0, dtype=np.int64)
            self.hanging_masters = np.empty((0, 2), dtype=np.int64)

    def _build_patches(self, ox, oy, scale):
        """Group elements into 2x2 sibling blocks and record the 3x3 node grids.

        Level-0 cells pair into the even-index blocks of the initial grid
        (hence the even-n requirement); finer cells group under their parent.
        """
        cells = self.cells
        nf1 = self._nfine + 1
        # patch key: (level-1, i//2, j//2); level-0 uses block key at "level 0"
        pkey = {}
        pid = np.empty(len(cells), dtype=np.int64)
        ppos = np.empty(len(cells), dtype=np.int64)
        plist = []
        for e, (l, i, j) in enumerate(cells):
            key = (int(l), int(i) >> 1, int(j) >> 1)
            if key not in pkey:
                pkey[key] = len(plist)
                plist.append(key)
            pid[e] = pkey[key]
            ppos[e] = (i & 1) + 2 * (j & 1)
        self.patch_id = pid
        self.patch_pos = ppos

        nk = self._node_key
        P = len(plist)
        pat = np.empty((P, 9), dtype=np.int64)
        porig = np.empty((P, 2))
        psize = np.empty(P)
        hfine = self.L / self._nfine
        for p, (l, bi, bj) in enumerate(plist):
            s = 1 << (self.max_level - l)          # child-cell side, lattice units
            x0, y0 = 2 * bi * s, 2 * bj * s
            for gy in range(3):
                for gx in range(3):
                    pat[p, 3 * gy + gx] = nk[(x0 + gx * s) * nf1 + (y0 + gy * s)]
            porig[p] = (x0 * hfine, y0 * hfine)
            psize[p] = 2 * s * hfine
        self.patches = pat
        self.patch_origin = porig
        self.patch_size = psize

    # -- public helpers -------------------------------------------------------

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_elements(self):
        return len(self.elements)

    def centers(self):
        return self.origin + 0.5 * self.size[:, None]

    def element_at(self, x, y):
        """Index of the leaf containing point (x, y); ties go to the SE."""
        nfine = self._nfine
        ix = min(int(x / self.L * nfine), nfine - 1)
        iy = min(int(y / self.L * nfine), nfine - 1)
        for l in range(self.max_level, -1, -1):
            sh = self.max_level - l
            e = self._leafset.get((l, ix >> sh, iy >> sh))
            if e is not None:
                return e
        raise ValueError(f"point ({x}, {y}) not inside the mesh")

    @property
    def mesh_hash(self):
        h = hashlib.sha256()
        h.update(b"vpice-quadmesh-1")
        h.update(np.float64(self.L).tobytes())
        h.update(np.int64(self.n0).tobytes())
        h.update(np.ascontiguousarray(self.cells).tobytes())
        return h.hexdigest()

    def __repr__(self):
        return (f"QuadMesh(n0={self.n0}, L={self.L:g}, elements={self.n_elements}, "
                f"nodes={self.n_nodes}, levels 0..{self.max_level})")


def uniform_mesh(n, L=500e3):
    """Uniform n x n mesh of (0, L)^2.  n must be even so sibling patches exist."""
    n = int(n)
    if n < 2 or n % 2:
        raise ValueError("element count per edge must be even and >= 2")
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    cells = np.stack([np.zeros(n * n, dtype=np.int64), i.ravel(), j.ravel()], axis=1)
    return QuadMesh(n, L, cells)


def _normalize_marks(mesh, marks):
    marks = np.asarray(marks)
    if marks.dtype == bool:
        if marks.shape != (mesh.n_elements,):
            raise ValueError("boolean marks must have one entry per element")
        return np.nonzero(marks)[0]
    return np.unique(marks.astype(np.int64))


def refine(mesh, marks):
    """Quadrisect the marked elements; returns a new mesh.

    Applies the 2:1 closure first: any coarser edge neighbor of a marked
    element is marked as well, repeated until stable, so the result is again
    edge-balanced.  Unmarked elements are carried over unchanged.
    """
    idx = _normalize_marks(mesh, marks)
    leafset = mesh._leafset
    marked = set(map(tuple, mesh.cells[idx]))
    queue = list(marked)
    while queue:
        l, i, j = queue.pop()
        if l == 0:
            continue
        # coarser neighbor exists only across a parent-boundary edge
        cand = []
        if i % 2 == 0:
            cand.append((l - 1, i // 2 - 1, j // 2))
        else:
            cand.append((l - 1, i // 2 + 1, j // 2))
        if j % 2 == 0:
            cand.append((l - 1, i // 2, j // 2 - 1))
        else:
            cand.append((l - 1, i // 2, j // 2 + 1))
        for key in cand:
            if key in leafset and key not in marked:
                marked.add(key)
                queue.append(key)

    out = []
    for c in map(tuple, mesh.cells):
        if c in marked:
            l, i, j = c
            out.extend([(l + 1, 2 * i, 2 * j), (l + 1, 2 * i + 1, 2 * j),
                        (l + 1, 2 * i, 2 * j + 1), (l + 1, 2 * i + 1, 2 * j + 1)])
        else:
            out.append(c)
    return QuadMesh(mesh.n0, mesh.L, np.asarray(out, dtype=np.int64))


def region_partition(mesh, rows, cols):
    """Assign each element to a cell of a rows x cols block partition of the
    domain (by element center); region id = row * cols + col, row-major from SW."""
    c = mesh.centers()
    cx = np.minimum((c[:, 0] / mesh.L * cols).astype(np.int64), cols - 1)
    cy = np.minimum((c[:, 1] / mesh.L * rows).astype(np.int64), rows - 1)
    return cy * cols + cx


def is_balanced(mesh):
    """True if no two edge-adjacent leaves differ by more than one level."""
    leafset = mesh._leafset
    n0 = mesh.n0
    for l, i, j in map(tuple, mesh.cells):
        n_side = n0 << l
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            ni, nj = i + di, j + dj
            if not (0 <= ni < n_side and 0 <= nj < n_side):
                continue
            # ascend to the leaf covering the neighbor cell
            cl, ci, cj = l, ni, nj
            while cl >= 0 and (cl, ci, cj) not in leafset:
                cl, ci, cj = cl - 1, ci >> 1, cj >> 1
            if cl >= 0:
                if abs(cl - l) > 1:
                    return False
                continue
            # neighbor is refined: walk down the face, two children per step
            stack = [(l + 1, c)
                     for c in _face_children(ni, nj, -di, -dj)]
            while stack:
                cl, (ci, cj) = stack.pop()
                if (cl, ci, cj) in leafset:
                    if cl - l > 1:
                        return False
                else:
                    stack.extend((cl + 1, c)
                                 for c in _face_children(ci, cj, -di, -dj))
    return True


def _face_children(i, j, fi, fj):
    """Children of cell (i, j) touching its face in direction (fi, fj)."""
    if fi != 0:
        a = 2 * i + (1 if fi > 0 else 0)
        return [(a, 2 * j), (a, 2 * j + 1)]
    b = 2 * j + (1 if fj > 0 else 0)
    return [(2 * i, b), (2 * i + 1, b)]
