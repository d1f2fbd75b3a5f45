"""Variable-coefficient Dirichlet problem ``div(sigma grad phi) = 0`` on the
uniform grid, the conjugate-gradient solver shared with the heat step, and
the Joule heating quantities.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .grid import FaceCoeffs, Field, GridSpec, _values, grad_sq_array

logger = logging.getLogger(__name__)

DEGENERATE_THRESHOLD = 1e-300
DENSE_FALLBACK_MAX = 400


class NonconvergenceError(RuntimeError):
    def __init__(self, msg, residual=float("nan"), iterations=0):
        super().__init__(msg)
        self.residual = residual
        self.iterations = iterations


@dataclass
class LinearSystem:
    """Interior-node system ``A x = b``; boundary values are kept for
    re-attaching to the solution."""

    grid: GridSpec
    matrix: sp.csr_matrix
    rhs: np.ndarray
    interior: np.ndarray
    bc: np.ndarray
    degenerate: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    warnings: list[str] = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.rhs.size

    def full_field(self, x: np.ndarray) -> Field:
        out = self.bc.copy()
        out[self.interior] = x
        return Field(self.grid, out)

    def to_matrix_market(self) -> str:
        """Coordinate Matrix-Market text of ``[A | b]`` for debugging."""
        A = self.matrix.tocoo()
        lines = ["%%MatrixMarket matrix coordinate real general",
                 f"% rhs follows as column {self.n + 1}",
                 f"{self.n} {self.n + 1} {A.nnz + self.n}"]
        for i, j, v in sorted(zip(A.row, A.col, A.data)):
            lines.append(f"{i + 1} {j + 1} {v!r}")
        for i, v in enumerate(self.rhs):
            lines.append(f"{i + 1} {self.n + 1} {float(v)!r}")
        return "\n".join(lines) + "\n"


def _node_face_sums(faces: FaceCoeffs) -> np.ndarray:
    g = faces.grid
    s = np.zeros(g.shape)
    s[:, :-1] += faces.x
    s[:, 1:] += faces.x
    if g.dim == 2:
        s[:-1, :] += faces.y
        s[1:, :] += faces.y
    return s.ravel()


def stiffness(faces: FaceCoeffs):
    """Full nodal matrix of ``sum_faces c_f (u_i - u_j) / h**2`` (all nodes)."""
    g = faces.grid
    idx = np.arange(g.n_nodes).reshape(g.shape)
    rows, cols, vals = [], [], []
    inv_h2 = 1.0 / g.h**2
    pairs = [(idx[:, :-1], idx[:, 1:], faces.x)]
    if g.dim == 2:
        pairs.append((idx[:-1, :], idx[1:, :], faces.y))
    for a, b, c in pairs:
        a, b, c = a.ravel(), b.ravel(), c.ravel() * inv_h2
        rows += [a, b]
        cols += [b, a]
        vals += [-c, -c]
    diag = _node_face_sums(faces) * inv_h2
    rows.append(np.arange(g.n_nodes))
    cols.append(np.arange(g.n_nodes))
    vals.append(diag)
    K = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(g.n_nodes, g.n_nodes),
    )
    K.sum_duplicates()
    K.sort_indices()
    return K


def boundary_projection(grid: GridSpec, bc) -> np.ndarray:
    """Each node gets the boundary value of its nearest boundary node
    (ties broken towards lower index along x, then y)."""
    b = _values(bc, grid).reshape(grid.shape)
    ny, nx = grid.shape
    out = b.copy()
    if grid.dim == 1:
        i = np.arange(nx)
        out[0] = np.where(i <= (nx - 1 - i), b[0, 0], b[0, -1])
        return out.ravel()
    for j in range(1, ny - 1):
        for i in range(1, nx - 1):
            d = [(i, b[j, 0]), (nx - 1 - i, b[j, -1]), (j, b[0, i]), (ny - 1 - j, b[-1, i])]
            out[j, i] = min(d, key=lambda t: t[0])[1]
    return out.ravel()


def assemble(faces: FaceCoeffs, phi_bc, regularization=None) -> LinearSystem:
    """Interior system for ``div(c grad phi) = 0`` with Dirichlet data.

    Row ``i`` is ``sum_f c_f (phi_i - phi_j) / h**2 = 0`` with boundary
    neighbours moved to the right-hand side. Interior nodes whose adjacent
    faces are all (numerically) zero are decoupled from the equation; their
    rows are replaced by identity with the value taken from
    ``regularization`` (a nodal array, e.g. the previous potential) or, when
    absent, from the nearest boundary value.
    """
    g = faces.grid
    if np.any(faces.x < 0) or (faces.y is not None and np.any(faces.y < 0)):
        raise ValueError("face coefficients must be nonnegative")
    bc = _values(phi_bc, g).copy()
    mask = g.boundary_mask()
    interior = np.flatnonzero(~mask)
    K = stiffness(faces)
    A = K[interior][:, interior].tocsr()
    b = -(K[interior][:, np.flatnonzero(mask)] @ bc[mask])

    sums = _node_face_sums(faces)[interior]
    degenerate = np.flatnonzero(sums <= DEGENERATE_THRESHOLD)
    warnings = []
    if degenerate.size:
        reg = (boundary_projection(g, bc) if regularization is None
               else _values(regularization, g))
        A = A.tolil()
        for r in degenerate:
            A.rows[r] = [r]
            A.data[r] = [1.0]
        A = A.tocsr()
        b[degenerate] = reg[interior[degenerate]]
        msg = f"{degenerate.size} interior node(s) fully decoupled; regularized to identity rows"
        warnings.append(msg)
        logger.warning(msg)
    A.sort_indices()
    return LinearSystem(g, A, b, interior, bc, degenerate, warnings)


def _dot(a, b):
    # pairwise summation: same result for any BLAS thread count
    return float(np.sum(a * b))


def conjugate_gradient(A, b, x0=None, tol=1e-10, max_iter=None):
    """Jacobi-preconditioned CG. Returns ``(x, iterations, relative_residual)``."""
    n = b.size
    if max_iter is None:
        max_iter = 10 * n
    bnorm = np.sqrt(_dot(b, b))
    if bnorm == 0.0:
        return np.zeros(n), 0, 0.0
    d = A.diagonal()
    if np.any(d <= 0):
        raise ValueError("matrix has a nonpositive diagonal entry")
    minv = 1.0 / d
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    rel = np.sqrt(_dot(r, r)) / bnorm
    if rel <= tol:
        return x, 0, rel
    z = minv * r
    p = z.copy()
    rz = _dot(r, z)
    for k in range(1, max_iter + 1):
        Ap = A @ p
        pAp = _dot(p, Ap)
        if pAp <= 0:
            break
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        rel = np.sqrt(_dot(r, r)) / bnorm
        if rel <= tol:
            # guard against drift of the recursive residual
            rt = b - A @ x
            rel_true = np.sqrt(_dot(rt, rt)) / bnorm
            if rel_true <= tol:
                return x, k, rel_true
            r = rt
        z = minv * r
        rz_new = _dot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    rt = b - A @ x
    rel = np.sqrt(_dot(rt, rt)) / bnorm
    raise NonconvergenceError(
        f"CG did not reach relative residual {tol:g} in {max_iter} iterations "
        f"(last {rel:.3e})", residual=rel, iterations=max_iter,
    )


def solve_spd(system: LinearSystem, tol: float = 1e-10, max_iter: int | None = None,
              x0=None, dense_fallback: bool = True) -> Field:
    """Solve the assembled system; boundary values are re-attached.

    Conjugate gradients with diagonal preconditioning. If CG stalls on a
    system with at most 400 unknowns, a dense LU solve is used instead;
    larger systems raise NonconvergenceError carrying the last residual.
    ``x0`` is an optional initial guess (interior values or a full Field).
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if isinstance(x0, Field):
        x0 = x0.values[system.interior]
    try:
        x, _, _ = conjugate_gradient(system.matrix, system.rhs, x0, tol, max_iter)
    except NonconvergenceError:
        if not dense_fallback or system.n > DENSE_FALLBACK_MAX:
            raise
        logger.warning("CG stalled on n=%d; falling back to dense solve", system.n)
        x = np.linalg.solve(system.matrix.toarray(), system.rhs)
    return system.full_field(x)


def relative_residual(system: LinearSystem, phi: Field) -> float:
    x = phi.values[system.interior]
    r = system.rhs - system.matrix @ x
    bn = np.sqrt(_dot(system.rhs, system.rhs))
    rn = np.sqrt(_dot(r, r))
    return rn if bn == 0 else rn / bn


def joule_density(sigma_nodes: Field, phi: Field, phi_bc=None) -> Field:
    """Nodal Joule heating ``sigma * |grad phi|**2``."""
    g = sigma_nodes.grid
    if phi.grid != g:
        from .grid import GridMismatchError
        raise GridMismatchError("sigma and phi live on different grids")
    v = phi.values
    if phi_bc is not None:
        v = v.copy()
        m = g.boundary_mask()
        v[m] = _values(phi_bc, g)[m]
    return Field(g, sigma_nodes.values * grad_sq_array(v, g))


def face_weights(grid: GridSpec):
    """Quadrature weight per face: ``h**dim``, halved for faces lying on the
    boundary (2D only), so that the sum reproduces the domain integral."""
    ny, nx = grid.shape
    hd = grid.h ** grid.dim
    wx = np.full((ny, nx - 1), hd)
    if grid.dim == 1:
        return wx, None
    wx[[0, -1], :] *= 0.5
    wy = np.full((ny - 1, nx), hd)
    wy[:, [0, -1]] *= 0.5
    return wx, wy


def dirichlet_energy(faces: FaceCoeffs, phi: Field) -> float:
    """Discrete ``integral sigma |grad phi|**2``: sum of ``c_f (dphi/h)**2`` times
    the face quadrature weight."""
    g = faces.grid
    if phi.grid != g:
        from .grid import GridMismatchError
        raise GridMismatchError("faces and phi live on different grids")
    u = phi.as_2d()
    wx, wy = face_weights(g)
    e = np.sum(faces.x * (np.diff(u, axis=1) / g.h) ** 2 * wx)
    if g.dim == 2:
        e += np.sum(faces.y * (np.diff(u, axis=0) / g.h) ** 2 * wy)
    return float(e)


def boundary_extension(grid: GridSpec, bc) -> Field:
    """Extend boundary values inward: linear interpolation in 1D, the
    transfinite (Coons) blend of the four edges in 2D."""
    b = _values(bc, grid).reshape(grid.shape)
    ny, nx = grid.shape
    s = np.linspace(0.0, 1.0, nx)
    if grid.dim == 1:
        return Field(grid, (1 - s) * b[0, 0] + s * b[0, -1])
    t = np.linspace(0.0, 1.0, ny)[:, None]
    S = s[None, :]
    left, right = b[:, :1], b[:, -1:]
    bottom, top = b[:1, :], b[-1:, :]
    out = ((1 - S) * left + S * right + (1 - t) * bottom + t * top
           - ((1 - S) * (1 - t) * b[0, 0] + S * (1 - t) * b[0, -1]
              + (1 - S) * t * b[-1, 0] + S * t * b[-1, -1]))
    return Field(grid, out)


def solve_potential(sigma_nodes: Field, phi_bc, tol=1e-10, x0=None,
                    regularization=None) -> tuple[Field, LinearSystem]:
    """Convenience: harmonic faces, assemble and solve."""
    from .grid import sigma_faces
    faces = sigma_faces(sigma_nodes)
    system = assemble(faces, phi_bc, regularization)
    return solve_spd(system, tol=tol, x0=x0), system
