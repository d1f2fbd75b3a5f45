"""A priori functionals of the coupled solution and numeric versions of the
auxiliary inequalities (Gronwall, level-set recursions, interpolation).

Space integrals use the grid's trapezoid weights; time integrals are
left-endpoint sums over the stored time levels.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import mpmath
import numpy as np
from scipy.integrate import cumulative_trapezoid

from .conductivity import a2_diagnostic
from .elliptic import dirichlet_energy
from .grid import Field, GridSpec, grad_sq_array, sigma_faces

EXP_OVERFLOW = 700.0

CSV_COLUMNS = ("t", "phi_max_defect", "joule_energy", "exp_moment_m", "grad_u_sup",
               "grad_phi_sup", "picard_iters")


@dataclass
class EstimateReport:
    t: float
    phi_max_defect: float
    joule_energy: float
    joule_energy_bc: float
    exp_moment: float
    mixed_moment: float
    grad_u_sup: float
    grad_phi_sup: float
    coeff_sup: float
    u_sup: float
    u_min: float
    a2_worst: float
    picard_iters: int = 0
    overflow: bool = False

    def csv_row(self) -> list:
        return [self.t, self.phi_max_defect, self.joule_energy, self.exp_moment,
                self.grad_u_sup, self.grad_phi_sup, self.picard_iters]

    def to_dict(self) -> dict:
        return asdict(self)


def exp_moment(u: Field, m: float) -> tuple[float, bool]:
    """``integral exp(m*u) dx`` computed around the max exponent.

    Returns ``(value, overflow)``; above ``exp(700)`` the value is ``inf``
    and the flag is set instead of raising.
    """
    w = u.grid.quadrature_weights()
    z = m * u.values
    zmax = float(np.max(z))
    total = float(np.sum(w * np.exp(z - zmax)))
    log_val = zmax + math.log(total)
    if log_val > EXP_OVERFLOW:
        return math.inf, True
    return math.exp(log_val), False


def mixed_integrand(u: Field, m: float) -> float:
    """``integral exp(m*u) |grad u|**2 dx`` at one time level."""
    g = u.grid
    z = m * u.values
    if np.max(z) > EXP_OVERFLOW:
        return math.inf
    return float(np.sum(g.quadrature_weights() * np.exp(z) * grad_sq_array(u.values, g)))


def report(state, cfg, mixed_moment: float = 0.0) -> EstimateReport:
    """All monitored functionals of one state.

    ``cfg`` supplies the conductivity law, boundary data, exponent ``m`` and
    the A2 window radii; ``mixed_moment`` is the running time integral kept
    by EstimateTracker.
    """
    g = state.u.grid
    u, phi = state.u, state.phi
    model = cfg.sigma
    us = np.maximum(u.values, 0.0)
    sig = np.asarray(model.sigma(us), dtype=float)
    faces = sigma_faces(Field(g, sig))
    mask = g.boundary_mask()
    phi_ext = cfg.bdata.phi_nodes(g, state.t)
    phi0_sup = float(np.max(np.abs(phi_ext[mask])))

    gu2 = grad_sq_array(u.values, g)
    gp2 = grad_sq_array(phi.values, g)
    coeff = np.abs(np.asarray(model.sigma_prime(us), dtype=float) / sig) * np.sqrt(gu2)
    em, overflow = exp_moment(u, cfg.m)
    radii = [r for r in cfg.a2_radii if 2 * r <= min(g.nx, g.ny if g.dim == 2 else g.nx)]
    a2 = a2_diagnostic(Field(g, sig), radii) if radii else float("nan")
    return EstimateReport(
        t=float(state.t),
        phi_max_defect=max(0.0, phi.sup() - phi0_sup),
        joule_energy=dirichlet_energy(faces, phi),
        joule_energy_bc=dirichlet_energy(faces, Field(g, phi_ext)),
        exp_moment=em,
        mixed_moment=float(mixed_moment),
        grad_u_sup=float(np.sqrt(np.max(gu2))),
        grad_phi_sup=float(np.sqrt(np.max(gp2))),
        coeff_sup=float(np.max(coeff)),
        u_sup=u.sup(),
        u_min=float(np.min(u.values)),
        a2_worst=a2,
        picard_iters=int(getattr(state, "picard_iters_last", 0)),
        overflow=overflow,
    )


class EstimateTracker:
    """Feeds states in time order and keeps the running space-time integral
    ``int int exp(m u)|grad u|^2`` (left-endpoint rule). ``new_slab`` resets it."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.mixed = 0.0
        self._prev_t = None
        self._prev_integrand = 0.0

    def new_slab(self):
        self.mixed = 0.0

    def update(self, state) -> EstimateReport:
        if self._prev_t is not None:
            self.mixed += (state.t - self._prev_t) * self._prev_integrand
        self._prev_t = state.t
        self._prev_integrand = mixed_integrand(state.u, self.cfg.m)
        return report(state, self.cfg, self.mixed)


# ---------------------------------------------------------------------------
# level-set (De Giorgi) sequence


@dataclass
class LevelSequence:
    k: float
    ell: float
    levels: list[float]
    y: list[float]
    measures: list[float]
    converged: bool

    def first_silent_level(self) -> int | None:
        """Index of the first ``k_n`` with every later ``y`` identically zero."""
        for n in range(len(self.y)):
            if all(v == 0.0 for v in self.y[n:]):
                return n
        return None


def _time_weights(times) -> np.ndarray:
    t = np.asarray(times, dtype=float)
    if t.size == 1:
        return np.ones(1)
    if np.any(np.diff(t) <= 0):
        raise ValueError("times must be strictly increasing")
    return np.append(np.diff(t), 0.0)


def degiorgi_sequence(w, times, grid: GridSpec, k: float, ell: float, n_max: int = 30,
                      u0_sup: float | None = None) -> LevelSequence:
    """Truncation norms over the levels ``k_n = k - k / 2**(n+1)``.

    ``y_n = (sum_t sum_x [(w - k_n)^+]^(2*ell) dx dt)^(1/ell)`` with the
    left-endpoint rule in time (a single time level is integrated in space
    only). ``w`` is an array of shape ``(n_times, n_nodes)`` or a list of
    Fields. When ``u0_sup`` is given, ``k`` must satisfy
    ``k >= 2*max(1, exp(u0_sup))``.
    """
    N = grid.dim
    if not (1.0 < ell < (N + 2) / N):
        raise ValueError(f"[lemma-range] ell must lie in (1, {(N + 2) / N}), got {ell}")
    if not k > 0:
        raise ValueError("k must be positive")
    if u0_sup is not None and k < 2 * max(1.0, math.exp(u0_sup)):
        raise ValueError("[lemma-range] k must be at least 2*max(1, exp(sup u0))")
    if isinstance(w, (list, tuple)) and w and isinstance(w[0], Field):
        w = np.stack([f.values for f in w])
    W = np.atleast_2d(np.asarray(w, dtype=float))
    tw = _time_weights(times)
    if W.shape != (tw.size, grid.n_nodes):
        raise ValueError(f"w must have shape {(tw.size, grid.n_nodes)}, got {W.shape}")
    qw = tw[:, None] * grid.quadrature_weights()[None, :]

    levels, ys, meas = [], [], []
    for n in range(n_max + 1):
        kn = k - k / 2.0 ** (n + 1)
        over = np.maximum(W - kn, 0.0)
        levels.append(kn)
        ys.append(float(np.sum(qw * over ** (2 * ell)) ** (1.0 / ell)))
        meas.append(float(np.sum(qw * (W >= kn))))
    y0 = ys[0]
    tail = ys[len(ys) // 2:]
    monotone = all(b <= a for a, b in zip(tail, tail[1:]))
    converged = y0 == 0.0 or (ys[-1] <= 1e-6 * y0 and monotone)
    return LevelSequence(float(k), float(ell), levels, ys, meas, converged)


# ---------------------------------------------------------------------------
# Gronwall


def gronwall_bound(h0: float, c: float, g_samples, t_grid) -> np.ndarray:
    """``h0*exp(c t) + int_0^t g(s) exp(c (t - s)) ds`` at each grid time
    (trapezoid rule on the samples)."""
    t = np.asarray(t_grid, dtype=float)
    g = np.broadcast_to(np.asarray(g_samples, dtype=float), t.shape)
    if t[0] != 0 or np.any(np.diff(t) <= 0):
        raise ValueError("t_grid must start at 0 and increase")
    inner = cumulative_trapezoid(g * np.exp(-c * t), t, initial=0.0)
    return np.exp(c * t) * (h0 + inner)


# ---------------------------------------------------------------------------
# geometric recursion y_{n+1} = c b^n y_n^(1+alpha)


@dataclass
class YnbResult:
    threshold: float
    sequence: list[float]
    converged: bool
    y0: float


def ynb_threshold(c: float, b: float, alpha: float) -> float:
    return float(mpmath.power(c, -1 / mpmath.mpf(alpha)) * mpmath.power(b, -1 / mpmath.mpf(alpha) ** 2))


def ynb_check(c: float, b: float, alpha: float, y0=None, n_max: int = 200,
              rel: float = 1.0) -> YnbResult:
    """Iterate ``y_{n+1} = c * b**n * y_n**(1+alpha)`` and report whether
    ``y_{n_max} < 1e-12``.

    Exactly at the threshold ``c**(-1/alpha) * b**(-1/alpha**2)`` the orbit
    is the unstable separatrix: any rounding is amplified by a factor
    ``(1+alpha)`` per step. The recursion therefore runs in mpmath with
    enough digits to absorb that growth over ``n_max`` steps. Pass ``y0``
    explicitly, or leave it ``None`` to start at ``rel * threshold``
    computed at working precision.
    """
    if not b > 1 or not c > 0 or not alpha > 0:
        raise ValueError("need b > 1 and c, alpha > 0")
    dps = 30 + int(math.ceil(n_max * math.log10(1 + alpha)))
    with mpmath.workdps(dps):
        C, B, A = mpmath.mpf(c), mpmath.mpf(b), mpmath.mpf(alpha)
        thr = C ** (-1 / A) * B ** (-1 / A**2)
        y = thr * mpmath.mpf(rel) if y0 is None else mpmath.mpf(y0)
        if y < 0:
            raise ValueError("y0 must be nonnegative")
        seq = [y]
        huge = mpmath.mpf(10) ** 300
        for n in range(n_max):
            y = C * B**n * y ** (1 + A)
            seq.append(y)
            if y > huge:
                break
        converged = len(seq) == n_max + 1 and seq[-1] < mpmath.mpf("1e-12")
        return YnbResult(float(thr), [float(v) for v in seq], bool(converged), float(seq[0]))


# ---------------------------------------------------------------------------
# bounded recursion b_k <= b_0 + lambda b_{k-1}^(1+alpha)


@dataclass
class SmallLemmaResult:
    hypothesis_ok: bool
    bound: float
    sequence_max: float
    sequence: list[float] = field(repr=False)
    diverged: bool = False

    @property
    def bound_holds(self) -> bool:
        return self.hypothesis_ok and self.sequence_max <= self.bound * (1 + 1e-12)


def small_lemma_check(b0: float, lam: float, alpha: float, k_max: int = 200) -> SmallLemmaResult:
    """Iterate the extremal case ``b_k = b0 + lam * b_{k-1}**(1+alpha)`` and
    compare with ``b0 / (1 - lam*(2*b0)**alpha)``, which is only asserted
    when ``2*lam*(2*b0)**alpha < 1`` (otherwise ``bound`` is ``inf``)."""
    if min(b0, lam, alpha) < 0:
        raise ValueError("inputs must be nonnegative")
    q = lam * (2 * b0) ** alpha
    ok = 2 * q < 1
    bound = b0 / (1 - q) if ok else math.inf
    seq = [float(b0)]
    diverged = False
    for _ in range(k_max):
        try:
            nxt = b0 + lam * seq[-1] ** (1 + alpha)
        except OverflowError:
            nxt = math.inf
        if not math.isfinite(nxt) or nxt > 1e300:
            diverged = True
            seq.append(math.inf)
            break
        seq.append(nxt)
    return SmallLemmaResult(ok, bound, max(seq), seq, diverged)


# ---------------------------------------------------------------------------
# interpolation between Lebesgue norms


@dataclass
class InterpolationResult:
    lhs: float
    rhs: float
    ok: bool
    mu: float


def interpolation_exponent(ell: float, q: float, r: float) -> float:
    """``mu = (1/ell - 1/q) / (1/q - 1/r)`` (``inf`` when ``q == r > ell``)."""
    num = 1 / ell - 1 / q
    den = 1 / q - 1 / r
    if den == 0:
        return 0.0 if num == 0 else math.inf
    return num / den


def lp_norm(f: Field, p: float) -> float:
    """Discrete ``L^p`` norm with uniform weights ``h**dim``."""
    hd = f.grid.h ** f.grid.dim
    a = np.abs(f.values)
    amax = float(np.max(a))
    if amax == 0:
        return 0.0
    return amax * float(np.sum((a / amax) ** p) * hd) ** (1.0 / p)


def interpolation_check(f: Field, ell: float, q: float, r: float, eps: float) -> InterpolationResult:
    """Evaluate ``|f|_q <= eps*|f|_r + eps**(-mu) * |f|_ell``."""
    if not (1 <= ell <= q <= r):
        raise ValueError(f"need 1 <= ell <= q <= r, got {ell}, {q}, {r}")
    if not eps > 0:
        raise ValueError("eps must be positive")
    mu = interpolation_exponent(ell, q, r)
    lhs = lp_norm(f, q)
    nl = lp_norm(f, ell)
    if nl == 0:
        second = 0.0
    elif math.isinf(mu):
        second = math.inf if eps < 1 else (nl if eps == 1 else 0.0)
    else:
        with np.errstate(over="ignore"):
            second = float(np.float64(eps) ** (-mu)) * nl
    rhs = eps * lp_norm(f, r) + second
    return InterpolationResult(lhs, rhs, bool(lhs <= rhs * (1 + 1e-12)), mu)
