"""Temperature-dependent electrical conductivity laws and checks on their
growth constants.

Every law carries the five constants of the structural hypothesis
``c0*exp(-beta*s) <= sigma(s) <= c1`` and ``|sigma'(s)| <= c2*exp(gamma*s)``
so that a model can be checked against its own claims by sampling.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator


class ExtrapolationError(ValueError):
    """A tabulated law was evaluated outside its sample range."""


@dataclass(frozen=True)
class H1Constants:
    c0: float
    c1: float
    c2: float
    beta: float
    gamma: float


def _check_s(s):
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValueError(f"conductivity evaluated at negative temperature (min {s.min()!r})")
    return s


class ConductivityModel:
    """Base class. Subclasses implement ``_sigma`` and ``_dsigma`` on arrays."""

    kind = "abstract"
    h1: H1Constants

    def __call__(self, s):
        return self.sigma(s)

    def sigma(self, s):
        s = _check_s(s)
        return self._sigma(s)

    def sigma_prime(self, s):
        s = _check_s(s)
        return self._dsigma(s)

    def is_constant(self) -> bool:
        return False

    def to_dict(self) -> dict:
        raise NotImplementedError


def _h1_dict(h: H1Constants) -> dict:
    return {"c0": h.c0, "c1": h.c1, "c2": h.c2, "beta": h.beta, "gamma": h.gamma}


@dataclass(frozen=True)
class Constant(ConductivityModel):
    value: float = 1.0
    h1: H1Constants = None

    kind = "constant"

    def __post_init__(self):
        if not self.value > 0:
            raise ValueError("constant conductivity must be positive")
        if self.h1 is None:
            v = self.value
            object.__setattr__(self, "h1", H1Constants(v, v, 1.0, 1.0, 1.0))

    def _sigma(self, s):
        return np.full(np.shape(s), self.value) if np.ndim(s) else self.value

    def _dsigma(self, s):
        return np.zeros(np.shape(s)) if np.ndim(s) else 0.0

    def is_constant(self):
        return True

    def to_dict(self):
        return {"kind": self.kind, "value": self.value, **_h1_dict(self.h1)}


@dataclass(frozen=True)
class ExponentialDecay(ConductivityModel):
    """``sigma(s) = exp(-c*s)``; the only law here that is an A2 weight for
    every bounded temperature profile."""

    c: float = 1.0
    h1: H1Constants = None

    kind = "exponential_decay"

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("decay rate must be positive")
        if self.h1 is None:
            object.__setattr__(self, "h1", H1Constants(1.0, 1.0, self.c, self.c, 1.0))

    def _sigma(self, s):
        return np.exp(-self.c * s)

    def _dsigma(self, s):
        return -self.c * np.exp(-self.c * s)

    def to_dict(self):
        return {"kind": self.kind, "c": self.c, **_h1_dict(self.h1)}


EXP_CLAMP = 700.0


@dataclass(frozen=True)
class OscillatorySine(ConductivityModel):
    """``sigma(s) = c3*(1 + sin(exp(gamma*s))) + c0*exp(-beta*s)``.

    Oscillates between roughly 0 and ``2*c3`` ever faster as ``s`` grows, so
    ``liminf sigma = 0`` while ``limsup sigma = 2*c3``. Without explicit
    ``c1``/``c2`` the tight constants ``2*c3 + c0`` and ``c3*gamma + c0*beta``
    are used.
    """

    c3: float = 0.5
    c0: float = 0.1
    beta: float = 1.0
    gamma: float = 1.0
    c1: float | None = None
    c2: float | None = None
    h1: H1Constants = field(init=False, default=None)

    kind = "oscillatory"

    def __post_init__(self):
        for name in ("c3", "c0", "beta", "gamma"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        c1 = 2 * self.c3 + self.c0 if self.c1 is None else self.c1
        c2 = self.c3 * self.gamma + self.c0 * self.beta if self.c2 is None else self.c2
        object.__setattr__(self, "h1", H1Constants(self.c0, c1, c2, self.beta, self.gamma))

    def _inner(self, s):
        # Once gamma*s passes ~37 the float64 spacing of exp(gamma*s) exceeds
        # 2*pi and the phase is noise anyway; clamping keeps it finite.
        return np.exp(np.minimum(self.gamma * s, EXP_CLAMP))

    def _sigma(self, s):
        return self.c3 * (1.0 + np.sin(self._inner(s))) + self.c0 * np.exp(-self.beta * s)

    def _dsigma(self, s):
        e = self._inner(s)
        return self.c3 * self.gamma * e * np.cos(e) - self.c0 * self.beta * np.exp(-self.beta * s)

    def to_dict(self):
        return {
            "kind": self.kind, "c3": self.c3, "c0": self.c0, "beta": self.beta,
            "gamma": self.gamma, "c1": self.h1.c1, "c2": self.h1.c2,
        }


class Tabulated(ConductivityModel):
    """Monotone piecewise-cubic (PCHIP) interpolation of ``(s, sigma)`` samples.

    PCHIP is C1, so the derivative is continuous as the growth hypothesis
    requires. Evaluation outside ``[s[0], s[-1]]`` raises ExtrapolationError.
    """

    kind = "tabulated"

    def __init__(self, s, values, h1: H1Constants | None = None):
        s = np.asarray(s, dtype=float)
        v = np.asarray(values, dtype=float)
        if s.ndim != 1 or s.shape != v.shape or s.size < 2:
            raise ValueError("need at least two (s, sigma) samples of equal length")
        if np.any(np.diff(s) <= 0):
            raise ValueError("sample abscissae must be strictly increasing")
        if s[0] > 0:
            raise ValueError("table must start at s <= 0")
        if np.any(v <= 0):
            raise ValueError("tabulated conductivity must be positive")
        self.s = s
        self.values = v
        self._p = PchipInterpolator(s, v, extrapolate=False)
        self._dp = self._p.derivative()
        if h1 is None:
            dmax = float(np.max(np.abs(self._dp(np.linspace(s[0], s[-1], 4 * s.size)))))
            h1 = H1Constants(float(v.min()), float(v.max()), max(dmax, 1e-12), 1.0, 1.0)
        self.h1 = h1

    @classmethod
    def from_csv(cls, path, h1=None):
        rows = [r for r in csv.reader(io.StringIO(Path(path).read_text())) if r]
        data = []
        for r in rows:
            try:
                data.append((float(r[0]), float(r[1])))
            except ValueError:
                continue  # header
        arr = np.array(data)
        return cls(arr[:, 0], arr[:, 1], h1)

    def _range_check(self, s):
        if np.any(s > self.s[-1]) or np.any(s < self.s[0]):
            raise ExtrapolationError(
                f"s outside tabulated range [{self.s[0]}, {self.s[-1]}]"
            )

    def _sigma(self, s):
        self._range_check(s)
        out = self._p(s)
        return float(out) if np.ndim(s) == 0 else out

    def _dsigma(self, s):
        self._range_check(s)
        out = self._dp(s)
        return float(out) if np.ndim(s) == 0 else out

    def to_dict(self):
        return {
            "kind": self.kind,
            "samples": [[float(a), float(b)] for a, b in zip(self.s, self.values)],
            **_h1_dict(self.h1),
        }


def sigma_eval(model: ConductivityModel, s):
    return model.sigma(s)


def sigma_prime_eval(model: ConductivityModel, s):
    return model.sigma_prime(s)


@dataclass
class H1Report:
    lower_ok: bool
    upper_ok: bool
    deriv_ok: bool
    lower_margin: float
    upper_margin: float
    deriv_margin: float
    lower_worst_s: float
    upper_worst_s: float
    deriv_worst_s: float
    constants: H1Constants
    s_max: float
    n_samples: int

    @property
    def ok(self) -> bool:
        return self.lower_ok and self.upper_ok and self.deriv_ok

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["constants"] = _h1_dict(self.constants)
        d["ok"] = self.ok
        return d


def verify_h1(model: ConductivityModel, s_max: float, n_samples: int = 2001,
              constants: H1Constants | None = None) -> H1Report:
    """Sample ``[0, s_max]`` uniformly and test the three growth inequalities.

    Margins are the worst signed slack over the samples (``>= 0`` means the
    bound holds); the matching ``*_worst_s`` is where it is attained. The
    derivative bound is compared in log form to stay finite for large ``s``.
    """
    if not s_max > 0:
        raise ValueError("s_max must be positive")
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    k = model.h1 if constants is None else constants
    s = np.linspace(0.0, s_max, n_samples)
    sig = np.asarray(model.sigma(s), dtype=float)
    dsig = np.abs(np.asarray(model.sigma_prime(s), dtype=float))

    lower = sig - k.c0 * np.exp(-k.beta * s)
    upper = k.c1 - sig
    # |sigma'| <= c2 e^{gamma s}  <=>  c2 - |sigma'| e^{-gamma s} >= 0
    deriv = k.c2 - dsig * np.exp(-k.gamma * s)

    il, iu, idv = int(np.argmin(lower)), int(np.argmin(upper)), int(np.argmin(deriv))
    return H1Report(
        lower_ok=bool(lower[il] >= 0), upper_ok=bool(upper[iu] >= 0),
        deriv_ok=bool(deriv[idv] >= 0),
        lower_margin=float(lower[il]), upper_margin=float(upper[iu]),
        deriv_margin=float(deriv[idv]),
        lower_worst_s=float(s[il]), upper_worst_s=float(s[iu]), deriv_worst_s=float(s[idv]),
        constants=k, s_max=float(s_max), n_samples=int(n_samples),
    )


def _window_means(a: np.ndarray, w: int, axis: int) -> np.ndarray:
    c = np.cumsum(a, axis=axis)
    zero_shape = list(a.shape)
    zero_shape[axis] = 1
    c = np.concatenate([np.zeros(zero_shape), c], axis=axis)
    hi = np.take(c, np.arange(w, c.shape[axis]), axis=axis)
    lo = np.take(c, np.arange(0, c.shape[axis] - w), axis=axis)
    return (hi - lo) / w


def a2_products(s, radius: int) -> np.ndarray:
    """``mean(s) * mean(1/s)`` over every axis-aligned window of ``2*radius``
    nodes per axis.

    A window of radius ``r`` (in cells) centred at a cell midpoint holds the
    ``2r`` nearest nodes along each axis, which is the discrete open ball
    ``B_r(y)`` in the max norm. Windows must lie inside the grid.
    """
    from .grid import Field

    if not isinstance(s, Field):
        raise TypeError("a2_products expects a Field")
    g = s.grid
    w = 2 * int(radius)
    if radius < 1:
        raise ValueError("window radius must be >= 1")
    if w > g.nx or (g.dim == 2 and w > g.ny):
        raise ValueError(f"window of radius {radius} does not fit in the grid")
    a = s.as_2d()
    if np.any(a <= 0):
        raise ValueError("weight must be positive")
    m1 = _window_means(a, w, axis=1)
    m2 = _window_means(1.0 / a, w, axis=1)
    if g.dim == 2:
        m1 = _window_means(m1, w, axis=0)
        m2 = _window_means(m2, w, axis=0)
    return (m1 * m2).ravel()


def a2_diagnostic(s, window_radii) -> float:
    """Largest window product ``avg(s) * avg(1/s)`` over the given radii.

    Always ``>= 1`` by Cauchy-Schwarz; a bounded value under refinement is the
    empirical signature of an A2 weight.
    """
    radii = list(window_radii)
    if not radii:
        raise ValueError("need at least one window radius")
    return float(max(np.max(a2_products(s, r)) for r in radii))


DEFAULT_OSCILLATORY = dict(c3=0.5, c0=0.1, beta=1.0, gamma=1.0, c1=1.2, c2=1.0)


def model_from_dict(d: dict, base_dir=None) -> ConductivityModel:
    """Build a model from its JSON form (``{"kind": ..., params...}``)."""
    d = dict(d)
    kind = d.pop("kind", "oscillatory")
    h1_keys = ("c0", "c1", "c2", "beta", "gamma")

    def h1_override(defaults: H1Constants):
        if not any(k in d for k in h1_keys):
            return None
        vals = {k: float(d.get(k, getattr(defaults, k))) for k in h1_keys}
        return H1Constants(**vals)

    if kind == "constant":
        m = Constant(float(d.get("value", 1.0)))
        over = h1_override(m.h1)
        return m if over is None else Constant(m.value, over)
    if kind == "exponential_decay":
        m = ExponentialDecay(float(d.get("c", 1.0)))
        over = h1_override(m.h1)
        return m if over is None else ExponentialDecay(m.c, over)
    if kind == "oscillatory":
        p = {**DEFAULT_OSCILLATORY, **d}
        return OscillatorySine(
            c3=float(p["c3"]), c0=float(p["c0"]), beta=float(p["beta"]),
            gamma=float(p["gamma"]),
            c1=None if p.get("c1") is None else float(p["c1"]),
            c2=None if p.get("c2") is None else float(p["c2"]),
        )
    if kind == "tabulated":
        h1 = None
        if all(k in d for k in h1_keys):
            h1 = H1Constants(**{k: float(d[k]) for k in h1_keys})
        if "samples" in d:
            arr = np.asarray(d["samples"], dtype=float)
            return Tabulated(arr[:, 0], arr[:, 1], h1)
        if "file" in d:
            p = Path(d["file"])
            if base_dir is not None and not p.is_absolute():
                p = Path(base_dir) / p
            return Tabulated.from_csv(p, h1)
        raise ValueError("tabulated conductivity needs 'samples' or 'file'")
    raise ValueError(f"unknown conductivity kind {kind!r}")


def exp_moment_threshold(c1: float, phi0_sup: float) -> float:
    """Upper limit for the exponential-moment exponent ``m``.

    Uses ``1 / (c1 * |phi0|_inf**2)``, the condition the energy argument
    actually needs; it is the smaller of the two candidates whenever
    ``|phi0|_inf >= 1``.
    """
    if phi0_sup == 0:
        return math.inf
    return 1.0 / (c1 * phi0_sup**2)


def level_eps_max(c1: float, ell: float, phi0_sup: float) -> float:
    """Upper limit for ``eps`` in ``w = exp(eps*u)``: ``min(1, 1/(2*c1*ell*|phi0|^2))``."""
    if phi0_sup == 0:
        return 1.0
    return min(1.0, 1.0 / (2.0 * c1 * ell * phi0_sup**2))
