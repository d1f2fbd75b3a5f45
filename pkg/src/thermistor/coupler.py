"""Decoupling fixed-point map and the time-marching driver.

One application of the map freezes the temperature ``v``, solves the
potential equation with conductivity ``sigma(v)`` and then takes one
backward-Euler step of the heat equation with the resulting Joule source.
Picard iteration of that map gives a time step of the coupled system.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .conductivity import ConductivityModel, exp_moment_threshold, level_eps_max
from .elliptic import (
    LinearSystem,
    NonconvergenceError,
    assemble,
    relative_residual,
    solve_spd,
)
from .estimates import EstimateReport, EstimateTracker
from .grid import Field, GridSpec, grad_sq_array, sigma_faces
from .parabolic import BoundaryData, comparison_floor, heat_system, step_residual

logger = logging.getLogger(__name__)

CLAMP_WARN = 1e-10
FLOOR_TOL = 1e-12
PHI_TOL = 1e-8
ENERGY_RTOL = 1e-8


class PicardNonconvergence(RuntimeError):
    def __init__(self, msg, t=float("nan"), dt=float("nan"), last_change=float("nan")):
        super().__init__(msg)
        self.t = t
        self.dt = dt
        self.last_change = last_change


class SimulationError(RuntimeError):
    """A run aborted; ``partial`` holds everything computed before the failure."""

    def __init__(self, msg, partial=None, cause=None):
        super().__init__(msg)
        self.partial = partial
        self.cause = cause


@dataclass
class SolverConfig:
    grid: GridSpec
    sigma: ConductivityModel
    bdata: BoundaryData
    dt: float
    T_final: float
    picard_tol: float = 1e-9
    picard_max: int = 50
    solver_tol: float = 1e-10
    heat_tol: float = 1e-12
    eps_homotopy: tuple[float, ...] = (0.25, 0.5, 0.75, 1.0)
    m: float | None = None
    eps_exp: float | None = None
    ell: float | None = None
    report_every: int = 1
    snapshot_every: int = 100
    a2_radii: tuple[int, ...] = (1, 2, 4)
    slab_length: float = 1.0
    slab_constants: dict | None = None
    forcing: Callable | None = None
    scale: float = 1.0  # homotopy parameter applied to source and u-data
    keep_states: bool = True
    figures: bool = True
    document: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.T_final >= 0:
            raise ValueError("T_final must be nonnegative")
        if not self.picard_tol > 0:
            raise ValueError("picard_tol must be positive")
        if not 0 < self.scale <= 1:
            raise ValueError("homotopy parameter must lie in (0, 1]")
        N = self.grid.dim
        c1 = self.sigma.h1.c1
        if self.ell is None:
            self.ell = 0.5 * (1.0 + (N + 2) / N)
        if not 1.0 < self.ell < (N + 2) / N:
            raise ValueError(f"[lemma-range] ell must lie in (1, {(N + 2) / N})")
        if self.m is None:
            self.m = 0.5 * exp_moment_threshold(c1, self.phi0_sup)
        if not self.m > 0:
            raise ValueError("m must be positive")
        if self.eps_exp is None:
            self.eps_exp = 0.5 * level_eps_max(c1, self.ell, self.phi0_sup)

    @property
    def phi0_sup(self) -> float:
        return self.bdata.phi_sup(self.grid, self.T_final)

    @property
    def n_steps(self) -> int:
        return int(round(self.T_final / self.dt))


@dataclass
class SimState:
    t: float
    u: Field
    phi: Field
    picard_iters_last: int = 0
    slab_index: int = 0
    elliptic_residual: float = 0.0
    step_residual: float = 0.0


def sigma_nodes(v: Field, model: ConductivityModel) -> Field:
    """``sigma(v)`` with ``v`` clamped at 0 from below (logged above 1e-10)."""
    vmin = float(np.min(v.values))
    if vmin < -CLAMP_WARN:
        logger.warning("clamping temperature %.3e to 0 before evaluating sigma", vmin)
    return Field(v.grid, model.sigma(np.maximum(v.values, 0.0)))


def _u_data(cfg: SolverConfig, t: float) -> np.ndarray:
    return cfg.scale * cfg.bdata.u_nodes(cfg.grid, t)


def _solve_phi(sig: Field, cfg: SolverConfig, t: float, phi_prev: Field | None):
    phi_bc = cfg.bdata.phi_nodes(cfg.grid, t)
    system = assemble(sigma_faces(sig), phi_bc, regularization=phi_prev)
    phi = solve_spd(system, tol=cfg.solver_tol, x0=phi_prev)
    return phi, system


def _source(sig: Field, phi: Field, cfg: SolverConfig, t: float) -> np.ndarray:
    q = cfg.scale * sig.values * grad_sq_array(phi.values, cfg.grid)
    if cfg.forcing is not None:
        x, y = cfg.grid.coords()
        q = q + np.broadcast_to(cfg.forcing(x, y, t), q.shape)
    return q


def _apply_B(v, t_next, dt, u_old, cfg, phi_prev=None):
    sig = sigma_nodes(v, cfg.sigma)
    phi, _ = _solve_phi(sig, cfg, t_next, phi_prev)
    q = _source(sig, phi, cfg, t_next)
    system = heat_system(u_old, q, dt, _u_data(cfg, t_next))
    u_new = solve_spd(system, tol=cfg.heat_tol, x0=v)
    return u_new, phi, q


def apply_B(v: Field, t_next: float, dt: float, u_old: Field, cfg: SolverConfig,
            phi_prev: Field | None = None) -> tuple[Field, Field]:
    """One application of the decoupled map.

    Solves ``div(sigma(v) grad phi) = 0`` with ``phi = phi0(., t_next)`` on
    the boundary, then one implicit step of ``u_t - Lap u = sigma(v)|grad phi|^2``
    from ``u_old``. Returns ``(u_new, phi)``.
    """
    if np.min(v.values) < -CLAMP_WARN:
        raise ValueError("the frozen temperature must be nonnegative")
    u_new, phi, _ = _apply_B(v, t_next, dt, u_old, cfg, phi_prev)
    return u_new, phi


def picard_advance(state: SimState, dt: float, cfg: SolverConfig) -> SimState:
    """Successive substitution ``v^{k+1} = B(v^k)`` from ``v^0 = u(t)``.

    Stops at the first ``k`` with ``|v^{k+1} - v^k|_inf <= picard_tol`` and
    records that ``k`` as ``picard_iters_last`` (so a map that ignores ``v``
    reports 1; the count is never below 1 since the accepted temperature is
    always an image of the map). The returned potential is re-solved with ``sigma`` of the
    accepted temperature so that the pair is consistent at ``t + dt``.
    """
    t_next = state.t + dt
    v = state.u
    phi = state.phi
    change = math.inf
    for k in range(cfg.picard_max + 1):
        u_new, phi, q = _apply_B(v, t_next, dt, state.u, cfg, phi)
        change = float(np.max(np.abs(u_new.values - v.values)))
        v = u_new
        if change <= cfg.picard_tol:
            break
    else:
        raise PicardNonconvergence(
            f"Picard iteration stalled at t={t_next:.6g} (dt={dt:.3g}, last change "
            f"{change:.3e}); try a smaller time step", t=t_next, dt=dt, last_change=change,
        )
    iters = max(k, 1)
    sig = sigma_nodes(v, cfg.sigma)
    phi_final, system = _solve_phi(sig, cfg, t_next, phi)
    q_final = _source(sig, phi_final, cfg, t_next)
    return SimState(
        t=t_next, u=v, phi=phi_final, picard_iters_last=iters, slab_index=state.slab_index,
        elliptic_residual=relative_residual(system, phi_final),
        step_residual=step_residual(v, state.u, q_final, dt),
    )


def advance(state: SimState, dt: float, cfg: SolverConfig) -> SimState:
    """``picard_advance`` with one retry as two half steps."""
    try:
        return picard_advance(state, dt, cfg)
    except PicardNonconvergence:
        logger.warning("Picard failed at t=%.6g; retrying with dt/2", state.t + dt)
        half = picard_advance(state, dt / 2, cfg)
        out = picard_advance(half, dt / 2, cfg)
        out.t = state.t + dt
        out.picard_iters_last = half.picard_iters_last + out.picard_iters_last
        return out


def initial_state(cfg: SolverConfig) -> SimState:
    u = Field(cfg.grid, _u_data(cfg, 0.0))
    phi, system = _solve_phi(sigma_nodes(u, cfg.sigma), cfg, 0.0, None)
    return SimState(0.0, u, phi, 0, 0, relative_residual(system, phi), 0.0)


@dataclass
class Violation:
    t: float
    kind: str
    value: float


@dataclass
class SimulationResult:
    config: SolverConfig
    states: list[SimState]
    reports: list[EstimateReport]
    snapshots: list[SimState]
    violations: list[Violation]
    slabs: list[dict]
    status: str = "ok"
    error: str | None = None
    last: SimState | None = field(default=None, repr=False)

    @property
    def final(self) -> SimState:
        """Most recent accepted state (kept even when states are not stored)."""
        return self.last if self.last is not None else self.snapshots[-1]

    def summary(self) -> dict:
        reps = self.reports
        fin = [r for r in reps if math.isfinite(r.exp_moment)]
        worst = {}
        for v in self.violations:
            worst[v.kind] = max(worst.get(v.kind, 0.0), v.value)
        return {
            "status": self.status,
            "error": self.error,
            "t_reached": reps[-1].t if reps else 0.0,
            "n_reports": len(reps),
            "u_min": min((r.u_min for r in reps), default=0.0),
            "u_sup": max((r.u_sup for r in reps), default=0.0),
            "phi_max_defect": max((r.phi_max_defect for r in reps), default=0.0),
            "exp_moment_sup": max((r.exp_moment for r in fin), default=0.0),
            "grad_u_sup": max((r.grad_u_sup for r in reps), default=0.0),
            "grad_phi_sup": max((r.grad_phi_sup for r in reps), default=0.0),
            "coeff_sup": max((r.coeff_sup for r in reps), default=0.0),
            "a2_worst": max((r.a2_worst for r in reps if math.isfinite(r.a2_worst)), default=float("nan")),
            "picard_iters_max": max((r.picard_iters for r in reps), default=0),
            "overflow": any(r.overflow for r in reps),
            "violations": {k: worst[k] for k in sorted(worst)},
            "m": self.config.m,
            "m_threshold": exp_moment_threshold(self.config.sigma.h1.c1, self.config.phi0_sup),
            "eps_exp": self.config.eps_exp,
            "ell": self.config.ell,
            "slabs": self.slabs,
        }


def _check_invariants(state: SimState, rep: EstimateReport, out: list[Violation]):
    floor = comparison_floor(state.u)
    if floor > FLOOR_TOL:
        out.append(Violation(state.t, "negative_temperature", floor))
    if rep.phi_max_defect > PHI_TOL:
        out.append(Violation(state.t, "max_principle", rep.phi_max_defect))
    excess = rep.joule_energy - rep.joule_energy_bc * (1 + ENERGY_RTOL)
    if excess > 0:
        out.append(Violation(state.t, "joule_energy", excess))
    if rep.overflow:
        out.append(Violation(state.t, "exp_overflow", math.inf))


def _slab_summary(index, t0, t1, reps, cfg) -> dict:
    d = {
        "slab": index, "t_start": t0, "t_end": t1,
        "exp_moment_sup": max((r.exp_moment for r in reps), default=0.0),
        "mixed_moment": reps[-1].mixed_moment if reps else 0.0,
        "grad_phi_sup": max((r.grad_phi_sup for r in reps), default=0.0),
        "grad_u_sup": max((r.grad_u_sup for r in reps), default=0.0),
    }
    sc = cfg.slab_constants
    if sc and reps:
        crit = slab_criterion(sc["eps_coef"], sc["b"], sc["c"], grad_phi0=reps[0].grad_phi_sup)
        d.update(tau0=crit.tau0, g_min=crit.g_min, cont1_ok=crit.cont1_ok,
                 cont2_ok=crit.cont2_ok, bound_ok=d["grad_phi_sup"] <= crit.tau0)
    return d


def run_simulation(cfg: SolverConfig, out_dir=None) -> SimulationResult:
    """March from ``t = 0`` to ``T_final`` in steps of ``dt``.

    Time is split into slabs of ``slab_length``; the running space-time
    integrals restart at each slab boundary and a per-slab summary is kept.
    Every step is checked against the nonnegativity, maximum-principle and
    Joule-energy invariants. When ``out_dir`` is given the outputs are
    written even if a step fails; the failure is then re-raised as
    SimulationError with the partial result attached.
    """
    state = initial_state(cfg)
    tracker = EstimateTracker(cfg)
    rep = tracker.update(state)
    states = [state] if cfg.keep_states else []
    reports = [rep]
    snapshots = [state]
    violations: list[Violation] = []
    _check_invariants(state, rep, violations)
    slabs = []
    slab_reports = [rep]
    slab_start = 0.0
    result = SimulationResult(cfg, states, reports, snapshots, violations, slabs)
    n_steps = cfg.n_steps
    try:
        for n in range(1, n_steps + 1):
            state = advance(state, cfg.dt, cfg)
            state.t = n * cfg.dt
            new_slab = state.t > slab_start + cfg.slab_length + 1e-12 * cfg.slab_length
            if new_slab:
                slabs.append(_slab_summary(len(slabs), slab_start, slab_reports[-1].t,
                                           slab_reports, cfg))
                slab_start = slab_reports[-1].t
                tracker.new_slab()
                slab_reports = [slab_reports[-1]]
            state.slab_index = len(slabs)
            rep = tracker.update(state)
            slab_reports.append(rep)
            _check_invariants(state, rep, violations)
            if cfg.keep_states:
                states.append(state)
            if n % cfg.report_every == 0 or n == n_steps:
                reports.append(rep)
            if n % cfg.snapshot_every == 0:
                snapshots.append(state)
            result.last = state
    except (PicardNonconvergence, NonconvergenceError) as exc:
        result.status = "nonconvergence"
        result.error = str(exc)
        slabs.append(_slab_summary(len(slabs), slab_start, slab_reports[-1].t, slab_reports, cfg))
        if out_dir is not None:
            from .config_io import write_outputs
            write_outputs(result, out_dir)
        raise SimulationError(str(exc), partial=result, cause=exc) from exc
    slabs.append(_slab_summary(len(slabs), slab_start, slab_reports[-1].t, slab_reports, cfg))
    if violations:
        result.status = "invariant_violation"
    if out_dir is not None:
        from .config_io import write_outputs
        write_outputs(result, out_dir)
    return result


@dataclass
class SweepEntry:
    eps: float
    status: str
    u_sup: float
    phi_sup: float
    picard_iters_max: int
    error: str | None = None
    result: SimulationResult | None = field(default=None, repr=False)


def homotopy_sweep(cfg: SolverConfig, eps_list: Sequence[float], workers: int = 1) -> list[SweepEntry]:
    """Run the family ``u = eps * B(u)``: source and temperature data scaled by
    ``eps``. Failures are recorded per ``eps`` and the sweep continues.
    Results are ordered by ``eps`` regardless of ``workers``."""
    eps_sorted = sorted(float(e) for e in eps_list)
    for e in eps_sorted:
        if not 0 < e <= 1:
            raise ValueError(f"homotopy parameter {e} outside (0, 1]")

    def one(e):
        try:
            res = run_simulation(replace(cfg, scale=e * cfg.scale, figures=False))
        except SimulationError as exc:
            p = exc.partial
            reps = p.reports if p else []
            return SweepEntry(e, "nonconvergence",
                              max((r.u_sup for r in reps), default=math.nan),
                              max((r.grad_phi_sup for r in reps), default=math.nan),
                              max((r.picard_iters for r in reps), default=0), str(exc), p)
        s = res.summary()
        phi_sup = max(st.phi.sup() for st in (res.states or res.snapshots))
        return SweepEntry(e, res.status, s["u_sup"], phi_sup, s["picard_iters_max"], None, res)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(one, eps_sorted))
    return [one(e) for e in eps_sorted]


@dataclass
class SlabCriterion:
    tau0: float
    g_min: float
    cont1_ok: bool
    cont2_ok: bool | None = None


def slab_criterion(eps_coef: float, b: float, c_const: float,
                   grad_phi0: float | None = None) -> SlabCriterion:
    """Small-time test on ``g(tau) = eps*tau**b - tau + c``.

    ``g`` is minimal at ``tau0 = (eps*b)**(-1/(b-1))``. ``cont1_ok`` is the
    condition ``(c + eps) * eps**(1/(b-1)) <= (b-1) / b**(b/(b-1))`` which is
    equivalent to ``g(tau0) <= -eps``; with ``grad_phi0`` the start-up
    condition ``grad_phi0 <= tau0`` is reported too.
    """
    if not b > 1:
        raise ValueError("b must exceed 1")
    if not eps_coef > 0 or not c_const > 0:
        raise ValueError("eps_coef and c must be positive")
    e, c = float(eps_coef), float(c_const)
    tau0 = (e * b) ** (-1.0 / (b - 1))
    g_min = e * tau0**b - tau0 + c
    cont1 = (c + e) * e ** (1.0 / (b - 1)) <= (b - 1) / b ** (b / (b - 1))
    cont2 = None if grad_phi0 is None else bool(grad_phi0 <= tau0)
    return SlabCriterion(tau0, g_min, bool(cont1), cont2)


def fixed_point_residuals(state: SimState, prev: SimState, cfg: SolverConfig) -> tuple[float, float]:
    """Discrete residuals of both equations for an accepted step."""
    sig = sigma_nodes(state.u, cfg.sigma)
    system: LinearSystem = assemble(sigma_faces(sig), cfg.bdata.phi_nodes(cfg.grid, state.t))
    q = _source(sig, state.phi, cfg, state.t)
    return relative_residual(system, state.phi), step_residual(state.u, prev.u, q, state.t - prev.t)
