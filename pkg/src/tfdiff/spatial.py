"""Uniform box meshes, elliptic operator assembly and shifted resolvent solves.

The elliptic operator A = -div(a grad .) + q with homogeneous Dirichlet
conditions is discretized by second-order centered finite differences on a
uniform grid over an interval or a rectangle.  The diffusion coefficient is
scalar or diagonal per node and is harmonically averaged at half-nodes;
coefficient fields are sampled on the closed grid (boundary included) so the
half-node averages next to the boundary are well defined.

Resolvent systems (A + diag(m)) v = rhs with a complex nodal shift m are
solved by sparse direct LU factorization; factorizations are reusable and
bitwise deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import EllipticityError, ResolventError

_PIVOT_FLOOR = 1e-14


@dataclass(frozen=True)
class Mesh:
    """Uniform grid on (0, L) or (0, L1) x (0, L2), interior nodes only.

    Node ordering is lexicographic by coordinates (x first, then y), fixed.
    """

    extents: tuple
    n: int

    @property
    def dim(self):
        return len(self.extents)

    @property
    def h(self):
        return tuple(L / self.n for L in self.extents)

    @property
    def interior_shape(self):
        return (self.n - 1,) * self.dim

    @property
    def n_interior(self):
        return (self.n - 1) ** self.dim

    @property
    def n_closed(self):
        return (self.n + 1) ** self.dim

    @property
    def coords(self):
        """Interior node coordinates, shape (n_interior, dim)."""
        axes = [np.linspace(0.0, L, self.n + 1)[1:-1] for L in self.extents]
        return self._lex_product(axes)

    @property
    def closed_coords(self):
        """All grid node coordinates including the boundary."""
        axes = [np.linspace(0.0, L, self.n + 1) for L in self.extents]
        return self._lex_product(axes)

    @staticmethod
    def _lex_product(axes):
        if len(axes) == 1:
            return axes[0][:, None]
        x, y = axes
        xx = np.repeat(x, y.size)
        yy = np.tile(y, x.size)
        return np.column_stack([xx, yy])

    def interior_closed_indices(self):
        """Indices of interior nodes within the closed-grid ordering."""
        if self.dim == 1:
            return np.arange(1, self.n)
        nc = self.n + 1
        ix = np.repeat(np.arange(1, self.n), self.n - 1)
        iy = np.tile(np.arange(1, self.n), self.n - 1)
        return ix * nc + iy

    def describe(self):
        ext = "x".join(f"(0,{L:g})" for L in self.extents)
        return f"{self.dim}d {ext} n={self.n}"


def build_mesh(extents, n: int) -> Mesh:
    """Uniform mesh with n subdivisions per axis over a box domain."""
    if np.isscalar(extents):
        extents = (float(extents),)
    else:
        extents = tuple(float(L) for L in extents)
    if len(extents) not in (1, 2):
        raise ValueError("only 1d intervals and 2d rectangles are supported")
    if any(L <= 0.0 for L in extents):
        raise ValueError("domain extents must be positive")
    if n < 2:
        raise ValueError(f"need n >= 2 subdivisions for an interior node, got {n}")
    return Mesh(extents=extents, n=int(n))


def check_ellipticity(a: np.ndarray) -> float:
    """Smallest admissible ellipticity constant of a nodal coefficient field.

    Accepts a scalar field (n,), a per-node diagonal (n, d) or a full
    per-node matrix (n, d, d); the latter must be symmetric.  Returns the
    minimum over nodes of the smallest eigenvalue; raises EllipticityError
    if it is not positive.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim <= 2:
        c = float(np.min(a))
    elif a.ndim == 3:
        if not np.allclose(a, np.swapaxes(a, 1, 2), rtol=0.0, atol=0.0):
            raise ValueError("coefficient matrix must be symmetric per node")
        c = float(np.min(np.linalg.eigvalsh(a)))
    else:
        raise ValueError("unrecognized coefficient field shape")
    if not c > 0.0:
        raise EllipticityError(
            f"ellipticity violated: smallest coefficient eigenvalue {c:.6g} <= 0"
        )
    return c


@dataclass(frozen=True)
class StiffnessOperator:
    """Sparse symmetric discretization of -div(a grad .) + q, Dirichlet rows
    eliminated.  ``a_field``/``q_field`` are the closed-grid nodal samples
    the operator was assembled from."""

    matrix: sp.csr_matrix
    mesh: Mesh
    a_field: np.ndarray
    q_field: np.ndarray

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def norm_inf(self):
        return spla.norm(self.matrix, np.inf)

    def apply(self, v):
        return self.matrix @ v


def _harmonic(a1, a2):
    return 2.0 * a1 * a2 / (a1 + a2)


def assemble_operator(mesh: Mesh, a: np.ndarray, q: np.ndarray) -> StiffnessOperator:
    """Assemble the stiffness operator from closed-grid coefficient samples.

    ``a`` has shape (n_closed,) for a scalar coefficient or (n_closed, dim)
    for a per-axis diagonal one; ``q`` has shape (n_closed,) and must be
    non-negative.
    """
    a = np.asarray(a, dtype=float)
    q = np.asarray(q, dtype=float)
    n_closed = mesh.n_closed
    if a.shape[0] != n_closed or q.shape[0] != n_closed:
        raise ValueError(
            f"coefficients must be sampled on the closed grid ({n_closed} nodes)"
        )
    check_ellipticity(a)
    if a.ndim == 1:
        a = np.repeat(a[:, None], mesh.dim, axis=1)
    interior = mesh.interior_closed_indices()
    if np.any(q[interior] < 0.0):
        raise ValueError("potential q must be non-negative")

    n = mesh.n
    if mesh.dim == 1:
        h2 = mesh.h[0] ** 2
        ax = a[:, 0]
        a_plus = _harmonic(ax[1:n], ax[2:n + 1])     # between node i and i+1
        a_minus = _harmonic(ax[1:n], ax[0:n - 1])    # between node i and i-1
        diag = (a_plus + a_minus) / h2 + q[interior]
        off = -a_plus[:-1] / h2
        matrix = sp.diags([off, diag, off], [-1, 0, 1], format="csr")
    else:
        nc = n + 1
        ni = n - 1
        hx2, hy2 = mesh.h[0] ** 2, mesh.h[1] ** 2
        ax = a[:, 0].reshape(nc, nc)   # indexed [ix, iy]
        ay = a[:, 1].reshape(nc, nc)
        qg = q.reshape(nc, nc)
        ix = np.arange(1, n)
        iy = np.arange(1, n)
        IX, IY = np.meshgrid(ix, iy, indexing="ij")
        axp = _harmonic(ax[IX, IY], ax[IX + 1, IY]) / hx2
        axm = _harmonic(ax[IX, IY], ax[IX - 1, IY]) / hx2
        ayp = _harmonic(ay[IX, IY], ay[IX, IY + 1]) / hy2
        aym = _harmonic(ay[IX, IY], ay[IX, IY - 1]) / hy2
        diag = (axp + axm + ayp + aym + qg[IX, IY]).ravel()

        def node(jx, jy):
            return jx * ni + jy

        rows, cols, vals = [np.arange(ni * ni)], [np.arange(ni * ni)], [diag]
        # x-direction neighbors (stride ni), y-direction neighbors (stride 1)
        kx = node(np.arange(ni - 1)[:, None], np.arange(ni)[None, :]).ravel()
        rows.append(kx)
        cols.append(kx + ni)
        vals.append(-axp[:-1, :].ravel())
        ky_base = node(np.arange(ni)[:, None], np.arange(ni - 1)[None, :]).ravel()
        rows.append(ky_base)
        cols.append(ky_base + 1)
        vals.append(-ayp[:, :-1].ravel())
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        vals = np.concatenate(vals)
        upper = sp.coo_matrix((vals, (rows, cols)), shape=(ni * ni, ni * ni))
        strict = sp.triu(upper, k=1)
        matrix = (sp.diags(diag) + strict + strict.T).tocsr()

    a_store = a.copy()
    a_store.flags.writeable = False
    q_store = q.copy()
    q_store.flags.writeable = False
    return StiffnessOperator(matrix=matrix, mesh=mesh, a_field=a_store,
                             q_field=q_store)


def sine_eigenpairs(mesh: Mesh, a_const: float = 1.0, q_const: float = 0.0):
    """Exact eigenpairs of the 1d constant-coefficient stiffness matrix.

    lambda_k = q + a * (4/h^2) sin^2(k pi h / (2 L)), phi_k(x_i) = sin(k pi
    x_i / L); the discrete modes satisfy sum_i phi_k phi_m = (n/2) delta_km.
    """
    if mesh.dim != 1:
        raise ValueError("sine eigenpairs are defined for 1d meshes only")
    L = mesh.extents[0]
    h = mesh.h[0]
    k = np.arange(1, mesh.n)
    lams = q_const + a_const * (4.0 / h ** 2) * np.sin(k * np.pi * h / (2.0 * L)) ** 2
    x = mesh.coords[:, 0]
    vecs = np.sin(np.outer(x, k) * np.pi / L)
    return lams, vecs


@dataclass
class ResolventFactorization:
    """Reusable LU factorization of (A + diag(m)) for a fixed complex shift."""

    shift: np.ndarray
    _lu: object

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return self._lu.solve(np.asarray(rhs, dtype=complex))


def factorize_resolvent(Aop: StiffnessOperator, m) -> ResolventFactorization:
    """Factor (A + diag(m)); raises ResolventError if singular or the
    smallest pivot falls below 1e-14 * ||A + diag(m)||_inf."""
    n = Aop.shape[0]
    m_vec = np.broadcast_to(np.asarray(m, dtype=complex), (n,)).copy()
    system = (Aop.matrix.astype(complex) + sp.diags(m_vec)).tocsc()
    norm = spla.norm(system, np.inf)
    try:
        lu = spla.splu(system)
    except RuntimeError as exc:
        raise ResolventError(m_vec, f"factorization failed: {exc}") from exc
    pivots = np.abs(lu.U.diagonal())
    if pivots.size and pivots.min() < _PIVOT_FLOOR * norm:
        raise ResolventError(
            m_vec,
            f"near-singular resolvent: pivot {pivots.min():.3e} below "
            f"{_PIVOT_FLOOR:g} * ||A + diag(m)|| = {_PIVOT_FLOOR * norm:.3e}",
        )
    return ResolventFactorization(shift=m_vec, _lu=lu)


def resolvent_solve(Aop: StiffnessOperator, m, rhs: np.ndarray) -> np.ndarray:
    """Solve (A + diag(m)) v = rhs by a fresh sparse direct factorization."""
    return factorize_resolvent(Aop, m).solve(rhs)
