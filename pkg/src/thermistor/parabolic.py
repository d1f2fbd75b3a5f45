"""Backward-Euler step for ``u_t - Laplace(u) = source`` with Dirichlet data
on the parabolic boundary."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .elliptic import LinearSystem, solve_spd, stiffness
from .grid import FaceCoeffs, Field, GridSpec, _values

logger = logging.getLogger(__name__)

SpaceTimeFn = Callable[[np.ndarray, np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class BoundaryData:
    """Temperature data ``u0(x, y, t)`` and potential data ``phi0(x, y, t)``.

    Both are vectorized callables. ``u0`` is sampled on the lateral boundary
    at every step and over the whole grid at ``t = 0``; ``phi0`` is only ever
    needed on the lateral boundary, but its interior samples serve as the
    comparison extension for the Joule energy bound.
    """

    u0: SpaceTimeFn
    phi0: SpaceTimeFn

    def _sample(self, fn, grid: GridSpec, t: float) -> np.ndarray:
        x, y = grid.coords()
        return np.broadcast_to(np.asarray(fn(x, y, t), dtype=float), x.shape).copy()

    def u_nodes(self, grid: GridSpec, t: float) -> np.ndarray:
        return self._sample(self.u0, grid, t)

    def phi_nodes(self, grid: GridSpec, t: float) -> np.ndarray:
        return self._sample(self.phi0, grid, t)

    def phi_sup(self, grid: GridSpec, t_final: float, n_times: int = 51) -> float:
        """Max of ``|phi0|`` over lateral boundary nodes and sampled times."""
        mask = grid.boundary_mask()
        ts = np.linspace(0.0, t_final, n_times) if t_final > 0 else [0.0]
        return float(max(np.max(np.abs(self.phi_nodes(grid, t)[mask])) for t in ts))


@lru_cache(maxsize=32)
def _heat_matrix(grid: GridSpec, dt: float):
    K = stiffness(FaceCoeffs.constant(grid, 1.0))
    mask = grid.boundary_mask()
    inner = np.flatnonzero(~mask)
    bnd = np.flatnonzero(mask)
    Kii = K[inner][:, inner]
    A = (sp.identity(inner.size, format="csr") + dt * Kii).tocsr()
    A.sort_indices()
    Kib = K[inner][:, bnd].tocsr()
    return A, Kib, inner, bnd


def heat_system(u_old: Field, source, dt: float, bc_next) -> LinearSystem:
    """``(I + dt*K) u = u_old + dt*source`` on interior nodes, where ``K`` is
    the negative discrete Laplacian; boundary neighbours go to the rhs."""
    g = u_old.grid
    A, Kib, inner, bnd = _heat_matrix(g, float(dt))
    bc = _values(bc_next, g).copy()
    src = _values(source, g)
    b = u_old.values[inner] + dt * src[inner] - dt * (Kib @ bc[bnd])
    return LinearSystem(g, A, b, inner, bc)


def implicit_euler_step(u_old: Field, source, dt: float, bc_next, tol: float = 1e-12,
                        x0=None) -> Field:
    """One fully implicit step; boundary nodes are set to ``bc_next``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    src = _values(source, u_old.grid)
    if np.any(src < 0):
        logger.warning("negative heat source (min %.3e); positivity not guaranteed", src.min())
    system = heat_system(u_old, src, dt, bc_next)
    return solve_spd(system, tol=tol, x0=x0)


def step_residual(u_new: Field, u_old: Field, source, dt: float) -> float:
    """Max-norm interior residual of ``u_new - u_old - dt*(Lap u_new + source)``."""
    from .grid import laplacian_apply
    lap = laplacian_apply(u_new, u_new).values
    r = u_new.values - u_old.values - dt * (lap + _values(source, u_new.grid))
    inner = u_new.grid.interior_index()
    return float(np.max(np.abs(r[inner])))


def comparison_floor(u: Field) -> float:
    """How far ``u`` dips below zero: ``max(0, -min u)``."""
    return float(max(0.0, -np.min(u.values)))
