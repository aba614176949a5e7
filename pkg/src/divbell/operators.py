"""Flux-form discretization of L = -div(A grad u) + V u on rectangular grids.

The operator is assembled as L_h = G^T A_h G + diag(V):

* G is the staggered first-difference gradient (nodes to faces),
* A_h acts on the concatenated face space.  Diagonal entries a_aa are
  averaged onto each face from its two endpoint lattice samples; the
  cross entries a_ab (a != b) couple an axis-a face to the four axis-b
  faces sharing one of its endpoints, with weight a_ab(shared vertex)/4.

That arrangement keeps the discrete accretivity exact: grouping the real
part of <A_h w, w> by lattice vertex and applying Jensen's inequality to
the per-vertex face averages gives Re <A_h w, w> >= gamma ||w||^2 for every
complex face field w, with gamma the minimum eigenvalue of the symmetrized
coefficient samples.  The antisymmetric part of A cancels in the real part
because the (f, g) and (g, f) couplings are placed transpose-symmetrically.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache, reduce

import numpy as np
import scipy.sparse as sp

from .errors import DomainError
from .grids import Grid, GridFunction


# ---------------------------------------------------------------------------
# coefficient and potential fields
# ---------------------------------------------------------------------------

@dataclass
class CoefficientField:
    """Real dim x dim coefficient matrices sampled on the lattice vertices.

    On Dirichlet grids the samples include the boundary ring, so every face
    average is well defined.
    """

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        d = self.grid.dim
        want = self.grid.vertex_shape + (d, d)
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != want:
            raise DomainError(f"coefficient shape {vals.shape}, expected {want}")
        self.values = vals

    @classmethod
    def constant(cls, grid: Grid, matrix) -> "CoefficientField":
        m = np.asarray(matrix, dtype=np.float64)
        if m.shape != (grid.dim, grid.dim):
            raise DomainError(f"matrix shape {m.shape} does not match dim {grid.dim}")
        vals = np.broadcast_to(m, grid.vertex_shape + m.shape).copy()
        return cls(grid, vals)

    @classmethod
    def identity(cls, grid: Grid) -> "CoefficientField":
        return cls.constant(grid, np.eye(grid.dim))

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "CoefficientField":
        """fn maps per-axis coordinate arrays to (..., dim, dim) samples."""
        coords = grid.vertex_coords()
        return cls(grid, np.asarray(fn(*coords), dtype=np.float64))

    @property
    def gamma(self) -> float:
        return check_accretive(self)

    @property
    def sup_norm(self) -> float:
        return float(np.abs(self.values).max())

    def entry(self, i: int, j: int) -> np.ndarray:
        return self.values[..., i, j]


@dataclass
class PotentialField:
    """Nonnegative scalar potential sampled on the grid nodes."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape == (self.grid.n_nodes,):
            vals = vals.reshape(self.grid.node_shape)
        if vals.shape != self.grid.node_shape:
            raise DomainError(
                f"potential shape {vals.shape}, expected {self.grid.node_shape}")
        if np.any(vals < 0.0):
            raise DomainError("potential must be nonnegative at every node")
        self.values = vals

    @classmethod
    def zero(cls, grid: Grid) -> "PotentialField":
        return cls(grid, np.zeros(grid.node_shape))

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "PotentialField":
        return cls(grid, np.asarray(fn(*grid.node_coords()), dtype=np.float64))


def check_accretive(A: CoefficientField) -> float:
    """gamma = min over samples of the smallest eigenvalue of (A + A^T)/2.

    The field is admissible iff the result is positive; a nonpositive value
    is returned, not raised.
    """
    sym = 0.5 * (A.values + np.swapaxes(A.values, -1, -2))
    eig = np.linalg.eigvalsh(sym.reshape(-1, A.grid.dim, A.grid.dim))
    return float(eig[:, 0].min())


def symmetrize(A: CoefficientField) -> CoefficientField:
    """Per-sample symmetric part (a_ij + a_ji)/2."""
    return CoefficientField(A.grid, 0.5 * (A.values + np.swapaxes(A.values, -1, -2)))


def matrix_sqrt_spd(M: np.ndarray) -> np.ndarray:
    """Symmetric positive-definite square root of a stack of small SPD
    matrices, via eigendecomposition.  Raises DomainError on non-SPD input."""
    M = np.asarray(M, dtype=np.float64)
    d = M.shape[-1]
    if M.shape[-2] != d:
        raise DomainError("input must be square matrices")
    if np.abs(M - np.swapaxes(M, -1, -2)).max() > 1e-12 * max(np.abs(M).max(), 1e-300):
        raise DomainError("input matrices must be symmetric")
    w, V = np.linalg.eigh(M.reshape(-1, d, d))
    lam_min = float(w[:, 0].min())
    if lam_min <= 0.0:
        raise DomainError(f"matrix not positive definite (lambda_min = {lam_min})")
    S = np.einsum("nij,nj,nkj->nik", V, np.sqrt(w), V)
    return S.reshape(M.shape)


# ---------------------------------------------------------------------------
# sparse building blocks (cached per grid)
# ---------------------------------------------------------------------------

def _diff_1d(n: int, h: float, periodic: bool) -> sp.csr_matrix:
    """1D staggered difference, faces x nodes."""
    if periodic:
        rows = np.repeat(np.arange(n), 2)
        cols = np.empty(2 * n, dtype=np.int64)
        vals = np.empty(2 * n)
        cols[0::2] = np.arange(n)
        vals[0::2] = -1.0 / h
        cols[1::2] = (np.arange(n) + 1) % n
        vals[1::2] = 1.0 / h
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    rows, cols, vals = [], [], []
    for f in range(n):
        if f >= 1:
            rows.append(f)
            cols.append(f - 1)
            vals.append(-1.0 / h)
        if f <= n - 2:
            rows.append(f)
            cols.append(f)
            vals.append(1.0 / h)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n - 1))


def _vertex_avg_1d(n: int, periodic: bool) -> sp.csr_matrix:
    """Averages the two endpoint vertex samples onto each face."""
    if periodic:
        rows = np.repeat(np.arange(n), 2)
        cols = np.empty(2 * n, dtype=np.int64)
        cols[0::2] = np.arange(n)
        cols[1::2] = (np.arange(n) + 1) % n
        return sp.csr_matrix((np.full(2 * n, 0.5), (rows, cols)), shape=(n, n))
    rows = np.repeat(np.arange(n), 2)
    cols = np.empty(2 * n, dtype=np.int64)
    cols[0::2] = np.arange(n)
    cols[1::2] = np.arange(n) + 1
    return sp.csr_matrix((np.full(2 * n, 0.5), (rows, cols)), shape=(n, n + 1))


def _vertex_select_1d(n: int, periodic: bool) -> sp.csr_matrix:
    """Vertex samples restricted to node lines (interior for Dirichlet)."""
    if periodic:
        return sp.identity(n, format="csr")
    rows = np.arange(n - 1)
    cols = np.arange(1, n)
    return sp.csr_matrix((np.ones(n - 1), (rows, cols)), shape=(n - 1, n + 1))


def _face_to_node_avg_1d(n: int, periodic: bool) -> sp.csr_matrix:
    """Averages the two adjacent face values onto each node."""
    if periodic:
        rows = np.repeat(np.arange(n), 2)
        cols = np.empty(2 * n, dtype=np.int64)
        cols[0::2] = (np.arange(n) - 1) % n
        cols[1::2] = np.arange(n)
        return sp.csr_matrix((np.full(2 * n, 0.5), (rows, cols)), shape=(n, n))
    rows = np.repeat(np.arange(n - 1), 2)
    cols = np.empty(2 * (n - 1), dtype=np.int64)
    cols[0::2] = np.arange(n - 1)
    cols[1::2] = np.arange(n - 1) + 1
    return sp.csr_matrix((np.full(2 * (n - 1), 0.5), (rows, cols)), shape=(n - 1, n))


def _kron(mats) -> sp.csr_matrix:
    return reduce(lambda a, b: sp.kron(a, b, format="csr"), mats)


@lru_cache(maxsize=32)
def _grid_maps(grid: Grid):
    """Per-grid sparse maps: gradient G_a, vertex-to-face T_a, face-to-node
    averaging N_a, per axis a."""
    d = grid.dim
    per = grid.periodic
    eye_nodes = [sp.identity(m, format="csr") for m in grid.node_shape]
    grads, t_maps, n_maps = [], [], []
    for a in range(d):
        g_parts, t_parts, n_parts = [], [], []
        for b in range(d):
            n = grid.cells[b]
            if b == a:
                g_parts.append(_diff_1d(n, grid.spacing[b], per))
                t_parts.append(_vertex_avg_1d(n, per))
                n_parts.append(_face_to_node_avg_1d(n, per))
            else:
                g_parts.append(eye_nodes[b])
                t_parts.append(_vertex_select_1d(n, per))
                n_parts.append(eye_nodes[b])
        grads.append(_kron(g_parts))
        t_maps.append(_kron(t_parts))
        n_maps.append(_kron(n_parts))
    return grads, t_maps, n_maps


def _node_restriction(grid: Grid) -> sp.csr_matrix:
    """Vertex samples restricted to the node lattice."""
    return _kron([_vertex_select_1d(n, grid.periodic) for n in grid.cells])


# ---------------------------------------------------------------------------
# operator assembly
# ---------------------------------------------------------------------------

@dataclass
class DiscreteOperator:
    """Sparse L_h with its flux-form factors retained."""

    grid: Grid
    matrix: sp.csr_matrix = field(repr=False)
    gradient: sp.csr_matrix = field(repr=False)      # G: nodes -> faces
    divergence: sp.csr_matrix = field(repr=False)    # G^T: faces -> nodes
    face_action: sp.csr_matrix = field(repr=False)   # A_h: faces -> faces
    potential: np.ndarray = field(repr=False)        # V per node, flat
    gamma: float = 0.0
    coefficients: CoefficientField | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def face_offsets(self) -> list[int]:
        offs = [0]
        for a in range(self.grid.dim):
            offs.append(offs[-1] + self.grid.n_faces(a))
        return offs

    def is_monotone_stencil(self, tol: float = 1e-12) -> bool:
        """True when every off-diagonal entry of L_h is nonpositive, so the
        backward Euler step matrix is an M-matrix."""
        c = self.matrix.tocoo()
        off = c.row != c.col
        if not off.any():
            return True
        scale = max(abs(c.data).max(), 1e-300)
        return bool(c.data[off].max(initial=-np.inf) <= tol * scale)


def assemble(grid: Grid, A: CoefficientField, V: PotentialField) -> DiscreteOperator:
    """Assemble L_h = G^T A_h G + diag(V).

    Raises DomainError, citing gamma, when the coefficient field is not
    accretive.
    """
    if A.grid != grid or V.grid != grid:
        raise DomainError("coefficient/potential fields must live on the given grid")
    gamma = check_accretive(A)
    if gamma <= 0.0:
        raise DomainError(f"coefficient field is not accretive: gamma = {gamma}")
    d = grid.dim
    grads, t_maps, _ = _grid_maps(grid)
    G = sp.vstack(grads, format="csr")
    blocks = [[None] * d for _ in range(d)]
    for a in range(d):
        for b in range(d):
            coeff = A.entry(a, b).ravel()
            if a == b:
                blocks[a][b] = sp.diags(t_maps[a] @ coeff)
            else:
                # each (a-face, b-face) pair shares one vertex and inherits
                # weight 1/4 from the two averaging maps
                blocks[a][b] = t_maps[a] @ sp.diags(coeff) @ t_maps[b].T
    Ah = sp.bmat(blocks, format="csr")
    Vflat = V.values.ravel()
    L = (G.T @ Ah @ G + sp.diags(Vflat)).tocsr()
    return DiscreteOperator(grid=grid, matrix=L, gradient=G, divergence=G.T.tocsr(),
                            face_action=Ah, potential=Vflat, gamma=gamma, coefficients=A)


def apply(op: DiscreteOperator, u: GridFunction) -> GridFunction:
    """Sparse matrix-vector product L_h u."""
    if u.grid != op.grid:
        raise DomainError("grid function does not match the operator's grid")
    return GridFunction(op.grid, op.matrix @ u.flat)


def gradient(grid: Grid, u: GridFunction) -> list[np.ndarray]:
    """Staggered per-face differences, one array per axis in face_shape."""
    grads, _, _ = _grid_maps(grid)
    return [np.asarray(g @ u.flat).reshape(grid.face_shape(a))
            for a, g in enumerate(grads)]


def grad_sq_at_nodes(grid: Grid, u: GridFunction) -> np.ndarray:
    """|grad_h u|^2 averaged to nodes: per axis the arithmetic mean of the
    squared differences on the two adjacent faces."""
    grads, _, n_maps = _grid_maps(grid)
    out = np.zeros(grid.n_nodes)
    for a in range(grid.dim):
        w = grads[a] @ u.flat
        out += n_maps[a] @ (np.abs(w) ** 2)
    return out.reshape(grid.node_shape)


def star_norm(grid: Grid, u: GridFunction, V: PotentialField) -> GridFunction:
    """Pointwise weighted norm sqrt(|grad_h u|^2 + V |u|^2)."""
    if V.grid != grid or u.grid != grid:
        raise DomainError("grid mismatch in star_norm")
    vals = np.sqrt(grad_sq_at_nodes(grid, u) + V.values * np.abs(u.values) ** 2)
    return GridFunction(grid, vals)


def node_coefficients(A: CoefficientField) -> np.ndarray:
    """Coefficient samples restricted to the node lattice, (n_nodes, d, d)."""
    grid = A.grid
    R = _node_restriction(grid)
    d = grid.dim
    flat = A.values.reshape(-1, d * d)
    return (R @ flat).reshape(grid.n_nodes, d, d)
