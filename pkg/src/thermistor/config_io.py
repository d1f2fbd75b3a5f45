"""JSON run configuration and the files a run writes.

Every validation problem is collected before raising so that a config can be
fixed in one pass. Messages start with a tag naming what was violated:
``[schema]``, ``[expr]``, ``[H1]`` (conductivity growth bounds), ``[H2]``
(sign of the temperature data) or ``[lemma-range]`` (estimate parameters).
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .conductivity import exp_moment_threshold, level_eps_max, model_from_dict, verify_h1
from .coupler import SimulationResult, SolverConfig
from .estimates import CSV_COLUMNS, EstimateReport
from .expr import ExprError, Expression
from .grid import GridSpec, fields_to_csv
from .parabolic import BoundaryData

_NUM = {"type": "number"}
_POS_INT = {"type": "integer", "minimum": 1}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["grid", "boundary", "time"],
    "properties": {
        "grid": {
            "type": "object", "additionalProperties": False, "required": ["dim", "nx"],
            "properties": {"dim": {"enum": [1, 2]}, "nx": _POS_INT, "ny": _POS_INT,
                           "lx": _NUM, "ly": _NUM},
        },
        "sigma": {
            "type": "object", "required": ["kind"],
            "properties": {"kind": {"enum": ["constant", "exponential_decay", "oscillatory",
                                             "tabulated"]},
                           "h1_smax": _NUM},
        },
        "boundary": {
            "type": "object", "additionalProperties": False, "required": ["u0", "phi0"],
            "properties": {"u0": {"type": ["string", "number"]},
                           "phi0": {"type": ["string", "number"]}},
        },
        "time": {
            "type": "object", "additionalProperties": False, "required": ["dt", "T"],
            "properties": {"dt": _NUM, "T": _NUM, "slab_length": _NUM},
        },
        "picard": {
            "type": "object", "additionalProperties": False,
            "properties": {"tol": _NUM, "max_iter": _POS_INT},
        },
        "solver": {
            "type": "object", "additionalProperties": False,
            "properties": {"tol": _NUM, "heat_tol": _NUM},
        },
        "estimates": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "m": _NUM, "eps_exp": _NUM, "ell": _NUM, "report_every": _POS_INT,
                "a2_radii": {"type": "array", "items": _POS_INT},
                "slab": {"type": "object", "required": ["eps_coef", "b", "c"],
                         "properties": {"eps_coef": _NUM, "b": _NUM, "c": _NUM}},
            },
        },
        "homotopy": {
            "type": "object", "additionalProperties": False,
            "properties": {"eps": {"type": "array", "items": _NUM, "minItems": 1}},
        },
        "output": {
            "type": "object", "additionalProperties": False,
            "properties": {"snapshot_every": _POS_INT, "figures": {"type": "boolean"},
                           "keep_states": {"type": "boolean"}},
        },
    },
}

H2_SAMPLES = 1000


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


def _expr(value, where, errors):
    try:
        return Expression(str(value))
    except ExprError as exc:
        errors.append(f"[expr] {where}: {exc}")
        return None


def _check_u0_sign(u0: Expression, grid: GridSpec, T: float, errors):
    """``u0 >= 0`` on the initial slice and the lateral boundary, at least
    1000 samples in total."""
    x, y = grid.coords()
    mask = grid.boundary_mask()
    nb = int(mask.sum())
    n_t = max(2, math.ceil(max(H2_SAMPLES - grid.n_nodes, 0) / nb) + 1)
    checks = [(0.0, u0(x, y, 0.0))]
    for t in np.linspace(0.0, T, n_t):
        checks.append((float(t), u0(x[mask], y[mask], float(t))))
    for t, vals in checks:
        vals = np.asarray(vals)
        if not np.all(np.isfinite(vals)):
            errors.append(f"[H2] boundary.u0: non-finite value at t={t:g}")
            return
        if np.min(vals) < 0:
            errors.append(
                f"[H2] boundary.u0: temperature data must be >= 0 on the parabolic boundary "
                f"(found {float(np.min(vals)):.6g} at t={t:g})"
            )
            return


def parse_config(text: str, base_dir=None, check_h1: bool = True) -> SolverConfig:
    """Validate a JSON config and build the solver configuration.

    Raises ConfigError listing every violation found.
    """
    errors: list[str] = []
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"[schema] not valid JSON: {exc}"]) from exc
    validator = jsonschema.Draft7Validator(SCHEMA)
    for e in sorted(validator.iter_errors(doc), key=lambda e: list(e.path)):
        where = ".".join(str(p) for p in e.path) or "<root>"
        errors.append(f"[schema] {where}: {e.message}")
    if errors:
        raise ConfigError(errors)

    g = doc["grid"]
    grid = None
    try:
        grid = GridSpec(dim=g["dim"], nx=g["nx"], lx=float(g.get("lx", 1.0)),
                        ny=g.get("ny", g["nx"] if g["dim"] == 2 else 1),
                        ly=float(g.get("ly", g.get("lx", 1.0) if g["dim"] == 2 else 0.0)))
    except ValueError as exc:
        errors.append(f"[schema] grid: {exc}")

    sdoc = dict(doc.get("sigma", {"kind": "oscillatory"}))
    h1_smax = float(sdoc.pop("h1_smax", 20.0))
    model = None
    try:
        model = model_from_dict(sdoc, base_dir)
    except (ValueError, OSError, IndexError) as exc:
        errors.append(f"[schema] sigma: {exc}")
    if model is not None and check_h1:
        try:
            rep = verify_h1(model, h1_smax)
        except ValueError as exc:
            errors.append(f"[H1] sigma: {exc}")
        else:
            if not rep.lower_ok:
                errors.append(f"[H1] sigma: lower bound c0*exp(-beta*s) violated at s={rep.lower_worst_s:g} "
                              f"(margin {rep.lower_margin:.3g})")
            if not rep.upper_ok:
                errors.append(f"[H1] sigma: upper bound c1 violated at s={rep.upper_worst_s:g} "
                              f"(margin {rep.upper_margin:.3g})")
            if not rep.deriv_ok:
                errors.append(f"[H1] sigma: derivative bound c2*exp(gamma*s) violated at "
                              f"s={rep.deriv_worst_s:g} (margin {rep.deriv_margin:.3g})")

    u0 = _expr(doc["boundary"]["u0"], "boundary.u0", errors)
    phi0 = _expr(doc["boundary"]["phi0"], "boundary.phi0", errors)

    tdoc = doc["time"]
    dt, T = float(tdoc["dt"]), float(tdoc["T"])
    slab = float(tdoc.get("slab_length", 1.0))
    if not dt > 0:
        errors.append("[schema] time.dt: must be positive")
    if not T >= 0:
        errors.append("[schema] time.T: must be nonnegative")
    if dt > 0 and T > 0 and abs(T / dt - round(T / dt)) > 1e-9 * max(1.0, T / dt):
        errors.append("[schema] time.T: must be an integer multiple of time.dt")
    if not slab > 0:
        errors.append("[schema] time.slab_length: must be positive")

    if grid is not None and u0 is not None and T >= 0:
        _check_u0_sign(u0, grid, T, errors)

    pdoc = doc.get("picard", {})
    sodoc = doc.get("solver", {})
    edoc = doc.get("estimates", {})
    odoc = doc.get("output", {})
    hdoc = doc.get("homotopy", {})
    for key, val in (("picard.tol", pdoc.get("tol", 1.0)), ("solver.tol", sodoc.get("tol", 1.0)),
                     ("solver.heat_tol", sodoc.get("heat_tol", 1.0))):
        if not val > 0:
            errors.append(f"[schema] {key}: must be positive")
    eps_list = [float(e) for e in hdoc.get("eps", [0.25, 0.5, 0.75, 1.0])]
    for e in eps_list:
        if not 0 < e <= 1:
            errors.append(f"[schema] homotopy.eps: {e} outside (0, 1]")

    ell = m = eps_exp = None
    if grid is not None:
        N = grid.dim
        ell = float(edoc.get("ell", 0.5 * (1 + (N + 2) / N)))
        if not 1 < ell < (N + 2) / N:
            errors.append(f"[lemma-range] estimates.ell: must lie in (1, (N+2)/N) = (1, {(N + 2) / N:g}) "
                          f"for N={N}, got {ell:g}")
    if grid is not None and model is not None and phi0 is not None and ell is not None:
        bd = BoundaryData(u0 or Expression("0"), phi0)
        phi_sup = bd.phi_sup(grid, max(T, 0.0))
        c1 = model.h1.c1
        m = float(edoc.get("m", 0.5 * exp_moment_threshold(c1, phi_sup)))
        if not m > 0:
            errors.append("[lemma-range] estimates.m: must be positive")
        eps_hi = level_eps_max(c1, ell, phi_sup)
        eps_exp = float(edoc.get("eps_exp", 0.5 * eps_hi))
        if not 0 < eps_exp < eps_hi:
            errors.append(f"[lemma-range] estimates.eps_exp: must lie in (0, {eps_hi:.6g}) = "
                          f"(0, min(1, 1/(2*c1*ell*|phi0|^2)))")
    sl = edoc.get("slab")
    if sl is not None and not (sl["b"] > 1 and sl["eps_coef"] > 0 and sl["c"] > 0):
        errors.append("[lemma-range] estimates.slab: need b > 1, eps_coef > 0, c > 0")

    if errors:
        raise ConfigError(errors)

    canon = {
        "grid": grid.to_dict(),
        "sigma": {**model.to_dict(), "h1_smax": h1_smax},
        "boundary": {"u0": u0.canonical(), "phi0": phi0.canonical()},
        "time": {"dt": dt, "T": T, "slab_length": slab},
        "picard": {"tol": float(pdoc.get("tol", 1e-9)), "max_iter": int(pdoc.get("max_iter", 50))},
        "solver": {"tol": float(sodoc.get("tol", 1e-10)),
                   "heat_tol": float(sodoc.get("heat_tol", 1e-12))},
        "estimates": {"m": m, "eps_exp": eps_exp, "ell": ell,
                      "report_every": int(edoc.get("report_every", 1)),
                      "a2_radii": [int(r) for r in edoc.get("a2_radii", [1, 2, 4])]},
        "homotopy": {"eps": eps_list},
        "output": {"snapshot_every": int(odoc.get("snapshot_every", 100)),
                   "figures": bool(odoc.get("figures", True)),
                   "keep_states": bool(odoc.get("keep_states", True))},
    }
    if sl is not None:
        canon["estimates"]["slab"] = {k: float(sl[k]) for k in ("eps_coef", "b", "c")}
    return SolverConfig(
        grid=grid, sigma=model, bdata=BoundaryData(u0, phi0), dt=dt, T_final=T,
        picard_tol=canon["picard"]["tol"], picard_max=canon["picard"]["max_iter"],
        solver_tol=canon["solver"]["tol"], heat_tol=canon["solver"]["heat_tol"],
        eps_homotopy=tuple(eps_list), m=m, eps_exp=eps_exp, ell=ell,
        report_every=canon["estimates"]["report_every"],
        snapshot_every=canon["output"]["snapshot_every"],
        a2_radii=tuple(canon["estimates"]["a2_radii"]), slab_length=slab,
        slab_constants=canon["estimates"].get("slab"),
        keep_states=canon["output"]["keep_states"], figures=canon["output"]["figures"],
        document=canon,
    )


def load_config(path, check_h1: bool = True) -> SolverConfig:
    p = Path(path)
    return parse_config(p.read_text(encoding="utf-8"), base_dir=p.parent, check_h1=check_h1)


def dump_config(cfg: SolverConfig) -> str:
    """Canonical JSON text; ``parse_config(dump_config(c))`` dumps identically."""
    return json.dumps(cfg.document, indent=2, sort_keys=True) + "\n"


def reference_config_text(name: str = "reference_1d") -> str:
    return resources.files("thermistor.configs").joinpath(f"{name}.json").read_text()


def reference_config(name: str = "reference_1d", **overrides) -> SolverConfig:
    """One of the shipped configs, optionally with top-level sections patched
    (e.g. ``time={"T": 0.1}`` merges into the ``time`` section)."""
    doc = json.loads(reference_config_text(name))
    for section, patch in overrides.items():
        if isinstance(patch, dict):
            doc.setdefault(section, {}).update(patch)
        else:
            doc[section] = patch
    return parse_config(json.dumps(doc))


# ---------------------------------------------------------------------------
# outputs


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else ("inf" if f > 0 else "-inf" if f < 0 else "nan")
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def write_trajectory(snapshots, reports: list[EstimateReport], out_dir, document=None,
                     summary=None, figures: bool = False) -> dict:
    """Write snapshot CSVs, ``estimates.csv``, ``estimates_full.csv``,
    ``report.json``, optional figures, and ``manifest.json`` with SHA-256
    hashes. Returns the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: dict[str, bytes] = {}

    def put(name, text):
        data = text.encode("utf-8") if isinstance(text, str) else text
        (out / name).write_bytes(data)
        written[name] = data

    snap_meta = []
    for i, st in enumerate(snapshots):
        name = f"states_{i:04d}.csv"
        put(name, fields_to_csv(st.u.grid, {"u": st.u.values, "phi": st.phi.values}))
        snap_meta.append({"file": name, "t": float(st.t), "slab": int(st.slab_index)})

    put("estimates.csv", _csv_text(CSV_COLUMNS, [r.csv_row() for r in reports]))
    full_cols = list(EstimateReport.__dataclass_fields__)
    put("estimates_full.csv", _csv_text(full_cols, [[getattr(r, c) for c in full_cols]
                                                    for r in reports]))
    rep = {"config": document or {}, "summary": summary or {}, "snapshots": snap_meta}
    put("report.json", json.dumps(_jsonable(rep), indent=2, sort_keys=True) + "\n")

    if figures and snapshots:
        from . import plotting
        for name, data in plotting.run_figures(snapshots, reports).items():
            put(name, data)

    manifest = {"files": [{"name": n, "bytes": len(d), "sha256": hashlib.sha256(d).hexdigest()}
                          for n, d in sorted(written.items())]}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def write_outputs(result: SimulationResult, out_dir, figures: bool | None = None) -> dict:
    cfg = result.config
    return write_trajectory(
        result.snapshots, result.reports, out_dir, document=cfg.document,
        summary=result.summary(), figures=cfg.figures if figures is None else figures,
    )


def write_sweep(entries, out_dir, figures: bool = True) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = {}
    rows = [[e.eps, e.status, e.u_sup, e.phi_sup, e.picard_iters_max] for e in entries]
    text = _csv_text(["eps", "status", "u_sup", "phi_sup", "picard_iters_max"], rows)
    (out / "sweep.csv").write_text(text)
    written["sweep.csv"] = text.encode()
    if figures:
        from . import plotting
        data = plotting.sweep_figure(entries)
        (out / "sweep.png").write_bytes(data)
        written["sweep.png"] = data
    manifest = {"files": [{"name": n, "bytes": len(d), "sha256": hashlib.sha256(d).hexdigest()}
                          for n, d in sorted(written.items())]}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest
