"""Independent reference computations used to cross-check the production
solvers: a dense direct solve, an explicit time integrator and manufactured
solutions with known forcing."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .conductivity import Constant, ConductivityModel
from .elliptic import LinearSystem, assemble
from .grid import Field, GridSpec, _values, grad_sq_array, laplacian_apply, sigma_faces
from .parabolic import BoundaryData

DENSE_MAX = 400


class SingularSystemError(ArithmeticError):
    pass


def gauss_solve(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Gaussian elimination with partial pivoting (row operations only)."""
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    n = b.size
    scale = np.max(np.abs(A)) if n else 0.0
    for k in range(n):
        p = k + int(np.argmax(np.abs(A[k:, k])))
        if abs(A[p, k]) <= 1e-14 * scale:
            raise SingularSystemError(f"zero pivot in column {k}")
        if p != k:
            A[[k, p]] = A[[p, k]]
            b[[k, p]] = b[[p, k]]
        f = A[k + 1:, k] / A[k, k]
        A[k + 1:, k:] -= np.outer(f, A[k, k:])
        b[k + 1:] -= f * b[k]
    x = np.zeros(n)
    for k in range(n - 1, -1, -1):
        x[k] = (b[k] - A[k, k + 1:] @ x[k + 1:]) / A[k, k]
    return x


def dense_elliptic_solve(system: LinearSystem) -> Field:
    """Direct solve of an assembled system with at most 400 unknowns."""
    if system.n > DENSE_MAX:
        raise ValueError(f"dense oracle limited to n <= {DENSE_MAX}, got {system.n}")
    A = system.matrix.toarray()
    x = gauss_solve(A, system.rhs)
    r = system.rhs - A @ x
    bn = np.linalg.norm(system.rhs)
    if np.linalg.norm(r) > 1e-12 * max(bn, np.linalg.norm(A, np.inf) * np.linalg.norm(x)):
        raise SingularSystemError("dense solve residual above 1e-12 relative")
    return system.full_field(x)


def explicit_reference(u0: Field, source_fn: Callable, dt_fine: float, T: float,
                       bc_fn: Callable | None = None) -> Field:
    """Forward Euler ``u += dt*(Lap u + source(t, u))`` up to ``T``.

    ``dt_fine`` must satisfy ``dt_fine <= h**2/4``; it is shrunk slightly so
    that an integer number of steps lands on ``T``. ``bc_fn(t)`` gives the
    boundary values (default: those of ``u0``, held fixed).
    """
    g = u0.grid
    limit = g.h**2 / 4
    if not 0 < dt_fine <= limit * (1 + 1e-12):
        raise ValueError(f"explicit step {dt_fine:g} violates dt <= h^2/4 = {limit:g}")
    n = max(1, math.ceil(T / dt_fine - 1e-9))
    dt = T / n
    u = u0.values.copy()
    mask = g.boundary_mask()
    for k in range(n):
        t = k * dt
        src = _values(source_fn(t, Field(g, u)), g)
        u = u + dt * (laplacian_apply(Field(g, u), u).values + src)
        bc = u0.values if bc_fn is None else _values(bc_fn(t + dt), g)
        u[mask] = bc[mask]
    return Field(g, u)


def coupled_source(model: ConductivityModel, bdata: BoundaryData, grid: GridSpec,
                   scale: float = 1.0) -> Callable:
    """Joule source of the coupled problem, with the potential obtained by
    the dense oracle at every call."""
    def source(t, u: Field):
        sig = model.sigma(np.maximum(u.values, 0.0))
        system = assemble(sigma_faces(Field(grid, sig)), bdata.phi_nodes(grid, t))
        phi = dense_elliptic_solve(system)
        return scale * sig * grad_sq_array(phi.values, grid)
    return source


def observed_order(sizes, errors) -> float:
    """Least-squares slope of ``log(error)`` against ``log(size)``."""
    x = np.log(np.asarray(sizes, dtype=float))
    y = np.log(np.asarray(errors, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


# ---------------------------------------------------------------------------
# manufactured solutions


@dataclass(frozen=True)
class ManufacturedCase:
    """Exact temperature/potential pair and the forcing added to the heat
    equation so that the pair solves it exactly.

    The callables take ``(x, y, t)``. ``forcing`` equals
    ``u_t - Lap u - sigma(u)|grad phi|^2`` evaluated analytically.
    """

    id: str
    dim: int
    u: Callable
    u_t: Callable
    lap_u: Callable
    phi: Callable
    grad_phi_sq: Callable
    forcing: Callable
    sigma: ConductivityModel
    exact: bool = False

    def residual(self, x, y, t):
        s = self.sigma.sigma(np.maximum(self.u(x, y, t), 0.0))
        return (self.u_t(x, y, t) - self.lap_u(x, y, t)
                - s * self.grad_phi_sq(x, y, t) - self.forcing(x, y, t))


_PI = math.pi

CASES = {
    # quadratic in space, linear in time: reproduced to rounding by the scheme
    "quadratic_exact": ManufacturedCase(
        id="quadratic_exact", dim=1,
        u=lambda x, y, t: (1 + t) * x * (1 - x),
        u_t=lambda x, y, t: x * (1 - x),
        lap_u=lambda x, y, t: -2.0 * (1 + t) + 0 * x,
        phi=lambda x, y, t: x,
        grad_phi_sq=lambda x, y, t: 1.0 + 0 * x,
        forcing=lambda x, y, t: x * (1 - x) + 2.0 * (1 + t) - 1.0,
        sigma=Constant(1.0), exact=True,
    ),
    "sine_decay": ManufacturedCase(
        id="sine_decay", dim=1,
        u=lambda x, y, t: np.exp(-t) * np.sin(_PI * x),
        u_t=lambda x, y, t: -np.exp(-t) * np.sin(_PI * x),
        lap_u=lambda x, y, t: -_PI**2 * np.exp(-t) * np.sin(_PI * x),
        phi=lambda x, y, t: x,
        grad_phi_sq=lambda x, y, t: 1.0 + 0 * x,
        forcing=lambda x, y, t: (_PI**2 - 1) * np.exp(-t) * np.sin(_PI * x) - 1.0,
        sigma=Constant(1.0),
    ),
    "sine_decay_2d": ManufacturedCase(
        id="sine_decay_2d", dim=2,
        u=lambda x, y, t: np.exp(-t) * np.sin(_PI * x) * np.sin(_PI * y),
        u_t=lambda x, y, t: -np.exp(-t) * np.sin(_PI * x) * np.sin(_PI * y),
        lap_u=lambda x, y, t: -2 * _PI**2 * np.exp(-t) * np.sin(_PI * x) * np.sin(_PI * y),
        phi=lambda x, y, t: x + 2 * y,
        grad_phi_sq=lambda x, y, t: 5.0 + 0 * x,
        forcing=lambda x, y, t: ((2 * _PI**2 - 1) * np.exp(-t) * np.sin(_PI * x)
                                 * np.sin(_PI * y) - 5.0),
        sigma=Constant(1.0),
    ),
}


def case_config(case: ManufacturedCase, nx: int, dt: float, T: float):
    from .coupler import SolverConfig
    grid = GridSpec(case.dim, nx, 1.0, nx if case.dim == 2 else 1, 1.0 if case.dim == 2 else 0.0)
    return SolverConfig(
        grid=grid, sigma=case.sigma, bdata=BoundaryData(case.u, case.phi), dt=dt, T_final=T,
        picard_tol=1e-11, solver_tol=1e-11, heat_tol=1e-11, forcing=case.forcing,
        snapshot_every=10**9, keep_states=False, figures=False, a2_radii=(1,),
    )


def manufactured_error(case: ManufacturedCase, nx: int, dt: float, T: float) -> float:
    """Max-norm error at ``T`` of the full coupled solver on ``case``."""
    from .coupler import run_simulation
    cfg = case_config(case, nx, dt, T)
    res = run_simulation(cfg)
    x, y = cfg.grid.coords()
    return float(np.max(np.abs(res.final.u.values - case.u(x, y, T))))


@dataclass
class ConvergenceStudy:
    case: str
    h: list[float]
    err_h: list[float]
    order_h: float | None
    dt: list[float]
    err_dt: list[float]
    order_dt: float | None
    exact: bool


def convergence_study(case: ManufacturedCase, grids, dts, T: float = 0.5,
                      space_dt_factor: float = 0.5, time_nx: int | None = None) -> ConvergenceStudy:
    """Observed orders in ``h`` and ``dt`` against the exact solution.

    Spatial runs tie the step to the mesh, ``dt = space_dt_factor * h**2``,
    so the temporal error shrinks like ``h**2`` as well. Temporal runs use
    the grid ``time_nx`` (default: the finest in ``grids``). When every
    error is at rounding level the orders are ``None`` and ``exact`` is set.
    """
    grids = list(grids)
    dts = list(dts)
    if len(grids) < 3 or len(dts) < 3:
        raise ValueError("need at least 3 grid levels and 3 time steps")
    hs, eh = [], []
    for nx in grids:
        h = 1.0 / (nx - 1)
        n = max(1, round(T / (space_dt_factor * h * h)))
        hs.append(h)
        eh.append(manufactured_error(case, nx, T / n, T))
    nx_t = time_nx or grids[-1]
    et = [manufactured_error(case, nx_t, dt, T) for dt in dts]
    exact = max(eh + et) < 1e-11
    return ConvergenceStudy(
        case.id, hs, eh, None if exact else observed_order(hs, eh),
        dts, et, None if exact else observed_order(dts, et), exact,
    )


# ---------------------------------------------------------------------------
# suites behind the `verify` subcommand


def random_elliptic_system(rng, grid: GridSpec, log_range: float = 3.0) -> LinearSystem:
    sig = np.exp(rng.uniform(-log_range, log_range, grid.n_nodes))
    bc = rng.uniform(-1, 1, grid.n_nodes)
    return assemble(sigma_faces(Field(grid, sig)), bc)


def suite_elliptic(seed: int = 0, n_instances: int = 20) -> dict:
    from .elliptic import solve_spd
    rng = np.random.default_rng(seed)
    worst_err = 0.0
    worst_mp = 0.0
    for k in range(n_instances):
        grid = GridSpec(2, 22, 1.0, 22, 1.0) if k % 2 else GridSpec(1, 402)
        system = random_elliptic_system(rng, grid)
        x_cg = solve_spd(system, tol=1e-13, dense_fallback=False).values
        x_d = dense_elliptic_solve(system).values
        worst_err = max(worst_err, np.linalg.norm(x_cg - x_d) / np.linalg.norm(x_d))
        bcv = system.bc[grid.boundary_mask()]
        worst_mp = max(worst_mp, x_cg.max() - bcv.max(), bcv.min() - x_cg.min())
    ok = worst_err <= 1e-10 and worst_mp <= 1e-8
    return {"suite": "elliptic", "cg_vs_dense_rel_err": worst_err,
            "max_principle_defect": max(worst_mp, 0.0), "ok": bool(ok)}


def temporal_order_vs_explicit(cfg, dts, T: float, dt_fine_factor: float = 0.125) -> dict:
    """Coupled implicit runs against a forward-Euler reference of the same
    semi-discrete system; returns errors and the fitted order."""
    from dataclasses import replace
    from .coupler import run_simulation
    g = cfg.grid
    u0 = Field(g, cfg.scale * cfg.bdata.u_nodes(g, 0.0))
    src = coupled_source(cfg.sigma, cfg.bdata, g, cfg.scale)
    ref = explicit_reference(u0, src, dt_fine_factor * g.h**2, T,
                             bc_fn=lambda t: cfg.scale * cfg.bdata.u_nodes(g, t))
    errs = []
    for dt in dts:
        run = run_simulation(replace(cfg, dt=dt, T_final=T, keep_states=False, figures=False,
                                     snapshot_every=10**9))
        errs.append(float(np.max(np.abs(run.final.u.values - ref.values))))
    return {"dts": list(dts), "errors": errs, "order": observed_order(dts, errs)}


def suite_parabolic() -> dict:
    from .config_io import reference_config
    cfg = reference_config()
    out = temporal_order_vs_explicit(cfg, [0.02, 0.01, 0.005, 0.0025], T=0.1)
    out.update(suite="parabolic", ok=bool(out["order"] >= 0.8))
    return out


def suite_mms() -> dict:
    st = convergence_study(CASES["sine_decay"], [11, 21, 41, 81], [0.05, 0.025, 0.0125, 0.00625],
                           T=0.5, time_nx=161)
    ok = abs(st.order_h - 2.0) <= 0.2 and abs(st.order_dt - 1.0) <= 0.15
    return {"suite": "mms", "order_h": st.order_h, "order_dt": st.order_dt,
            "err_h": st.err_h, "err_dt": st.err_dt, "ok": bool(ok)}


SUITES = {"elliptic": suite_elliptic, "parabolic": suite_parabolic, "mms": suite_mms}
