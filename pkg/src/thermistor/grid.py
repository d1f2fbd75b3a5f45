"""Uniform grids on an interval or rectangle and the finite-difference operators
shared by the potential and temperature equations.

Nodes are ordered lexicographically with x fastest: node ``(i, j)`` has flat
index ``j * nx + i``. A 1D grid is stored internally as a single row
(``ny == 1``) so every operator works on ``(ny, nx)`` views.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class GridMismatchError(ValueError):
    """Raised when fields living on different grids are combined."""


@dataclass(frozen=True)
class GridSpec:
    dim: int
    nx: int
    lx: float = 1.0
    ny: int = 1
    ly: float = 0.0

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.nx < 3:
            raise ValueError(f"nx must be >= 3, got {self.nx}")
        if not self.lx > 0:
            raise ValueError(f"lx must be positive, got {self.lx}")
        if self.dim == 1:
            object.__setattr__(self, "ny", 1)
            object.__setattr__(self, "ly", 0.0)
        else:
            if self.ny < 3:
                raise ValueError(f"ny must be >= 3, got {self.ny}")
            if not self.ly > 0:
                raise ValueError(f"ly must be positive, got {self.ly}")
            hx = self.lx / (self.nx - 1)
            hy = self.ly / (self.ny - 1)
            if abs(hx - hy) > 1e-12 * hx:
                raise ValueError(
                    f"cells must be square: lx/(nx-1)={hx!r} but ly/(ny-1)={hy!r}"
                )

    @property
    def h(self) -> float:
        return self.lx / (self.nx - 1)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def n_nodes(self) -> int:
        return self.nx * self.ny

    @property
    def measure(self) -> float:
        return self.lx if self.dim == 1 else self.lx * self.ly

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Flat x and y node coordinates (y is all zeros in 1D)."""
        x = np.arange(self.nx) * self.h
        if self.dim == 1:
            return x, np.zeros_like(x)
        y = np.arange(self.ny) * self.h
        X, Y = np.meshgrid(x, y)
        return X.ravel(), Y.ravel()

    def boundary_mask(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        m[:, 0] = m[:, -1] = True
        if self.dim == 2:
            m[0, :] = m[-1, :] = True
        return m.ravel()

    def interior_index(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_mask())

    def quadrature_weights(self) -> np.ndarray:
        """Tensor trapezoid weights; they sum to the domain measure."""
        wx = np.full(self.nx, self.h)
        wx[[0, -1]] *= 0.5
        if self.dim == 1:
            return wx
        wy = np.full(self.ny, self.h)
        wy[[0, -1]] *= 0.5
        return np.outer(wy, wx).ravel()

    def to_dict(self) -> dict:
        d = {"dim": self.dim, "nx": self.nx, "lx": self.lx}
        if self.dim == 2:
            d.update(ny=self.ny, ly=self.ly)
        return d


@dataclass(frozen=True)
class Field:
    """Nodal values on a grid. Values must be finite."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=float).reshape(-1)
        if v.size != self.grid.n_nodes:
            raise ValueError(
                f"field has {v.size} values but grid has {self.grid.n_nodes} nodes"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains non-finite values")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: GridSpec, fn) -> "Field":
        x, y = grid.coords()
        return cls(grid, np.broadcast_to(fn(x, y), x.shape))

    @classmethod
    def constant(cls, grid: GridSpec, c: float) -> "Field":
        return cls(grid, np.full(grid.n_nodes, float(c)))

    def as_2d(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def to_csv(self, path=None, name: str = "value") -> str:
        return fields_to_csv(self.grid, {name: self.values}, path)


@dataclass(frozen=True)
class FaceCoeffs:
    """Coefficients on the edges between adjacent nodes.

    ``x`` has shape ``(ny, nx - 1)``: the face between nodes ``(i, j)`` and
    ``(i + 1, j)``. ``y`` has shape ``(ny - 1, nx)`` in 2D and is ``None`` in 1D.
    """

    grid: GridSpec
    x: np.ndarray = field(repr=False)
    y: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        ny, nx = self.grid.shape
        if self.x.shape != (ny, nx - 1):
            raise ValueError(f"x faces must have shape {(ny, nx - 1)}")
        if self.grid.dim == 2 and (self.y is None or self.y.shape != (ny - 1, nx)):
            raise ValueError(f"y faces must have shape {(ny - 1, nx)}")
        for a in (self.x, self.y):
            if a is not None and (np.any(a < 0) or not np.all(np.isfinite(a))):
                raise ValueError("face coefficients must be finite and >= 0")

    @classmethod
    def constant(cls, grid: GridSpec, c: float = 1.0) -> "FaceCoeffs":
        ny, nx = grid.shape
        y = np.full((ny - 1, nx), float(c)) if grid.dim == 2 else None
        return cls(grid, np.full((ny, nx - 1), float(c)), y)

    def scaled(self, lam: float) -> "FaceCoeffs":
        return FaceCoeffs(self.grid, lam * self.x, None if self.y is None else lam * self.y)


def _values(obj, grid: GridSpec) -> np.ndarray:
    """Accept a Field on ``grid`` or a raw nodal array."""
    if isinstance(obj, Field):
        if obj.grid != grid:
            raise GridMismatchError(f"field grid {obj.grid} differs from {grid}")
        return obj.values
    a = np.asarray(obj, dtype=float).reshape(-1)
    if a.size != grid.n_nodes:
        raise GridMismatchError(f"expected {grid.n_nodes} nodal values, got {a.size}")
    return a


def with_boundary(f: Field, bc) -> np.ndarray:
    """Copy of ``f`` with its boundary nodes overwritten by ``bc``."""
    g = f.grid
    out = f.values.copy()
    mask = g.boundary_mask()
    out[mask] = _values(bc, g)[mask]
    return out


def laplacian_apply(f: Field, bc) -> Field:
    """Five-point (three-point in 1D) Laplacian.

    Interior nodes get ``sum_j (f_j - f_i) / h**2`` with boundary neighbours
    read from ``bc``; boundary nodes carry ``bc`` through unchanged.
    """
    g = f.grid
    bcv = _values(bc, g)
    u = with_boundary(f, bcv).reshape(g.shape)
    out = np.zeros(g.shape)
    inv_h2 = 1.0 / g.h**2
    if g.dim == 1:
        out[0, 1:-1] = (u[0, :-2] - 2 * u[0, 1:-1] + u[0, 2:]) * inv_h2
    else:
        c = u[1:-1, 1:-1]
        out[1:-1, 1:-1] = (
            u[1:-1, :-2] + u[1:-1, 2:] + u[:-2, 1:-1] + u[2:, 1:-1] - 4 * c
        ) * inv_h2
    out = out.ravel()
    mask = g.boundary_mask()
    out[mask] = bcv[mask]
    return Field(g, out)


def _node_average_of_faces(face_vals: np.ndarray, axis: int) -> np.ndarray:
    """Average face values onto nodes; end nodes see only their single face."""
    shape = list(face_vals.shape)
    shape[axis] += 1
    acc = np.zeros(shape)
    cnt = np.zeros(shape)
    lo = [slice(None)] * 2
    hi = [slice(None)] * 2
    lo[axis] = slice(0, -1)
    hi[axis] = slice(1, None)
    acc[tuple(lo)] += face_vals
    acc[tuple(hi)] += face_vals
    cnt[tuple(lo)] += 1
    cnt[tuple(hi)] += 1
    return acc / cnt


def grad_sq_array(u: np.ndarray, g: GridSpec) -> np.ndarray:
    u = u.reshape(g.shape)
    dx2 = (np.diff(u, axis=1) / g.h) ** 2
    out = _node_average_of_faces(dx2, axis=1)
    if g.dim == 2:
        dy2 = (np.diff(u, axis=0) / g.h) ** 2
        out = out + _node_average_of_faces(dy2, axis=0)
    return out.ravel()


def grad_sq(f: Field, bc) -> Field:
    """Squared gradient magnitude at nodes.

    Per axis, the squared one-sided differences on the two adjacent faces are
    averaged (a boundary node uses its only face). Exact for affine data.
    """
    return Field(f.grid, grad_sq_array(with_boundary(f, bc), f.grid))


def harmonic_mean(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    s = a + b
    out = np.zeros(np.broadcast(a, b).shape)
    nz = s > 0
    out[nz] = 2.0 * a[nz] * b[nz] / s[nz]
    return out


def sigma_faces(s: Field) -> FaceCoeffs:
    """Harmonic mean of adjacent nodal conductivities (0 when both are 0)."""
    if np.any(s.values < 0):
        raise ValueError("nodal conductivities must be nonnegative")
    g = s.grid
    a = s.as_2d()
    fx = harmonic_mean(a[:, :-1], a[:, 1:])
    fy = harmonic_mean(a[:-1, :], a[1:, :]) if g.dim == 2 else None
    return FaceCoeffs(g, fx, fy)


def fields_to_csv(grid: GridSpec, columns: dict[str, np.ndarray], path=None) -> str:
    """One row per node: ``x[,y]`` then the named columns. Floats use repr."""
    x, y = grid.coords()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    head = ["x"] + (["y"] if grid.dim == 2 else []) + list(columns)
    w.writerow(head)
    cols = [np.asarray(v, dtype=float).reshape(-1) for v in columns.values()]
    for k in range(grid.n_nodes):
        row = [x[k]] + ([y[k]] if grid.dim == 2 else []) + [c[k] for c in cols]
        w.writerow([repr(float(v)) for v in row])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def field_from_csv(grid: GridSpec, text: str, column: str = "value") -> Field:
    rows = list(csv.DictReader(io.StringIO(text)))
    if len(rows) != grid.n_nodes:
        raise GridMismatchError(f"csv has {len(rows)} rows, grid has {grid.n_nodes} nodes")
    return Field(grid, np.array([float(r[column]) for r in rows]))
