import dataclasses
import math

import numpy as np
import pytest

from thermistor.conductivity import Constant, OscillatorySine
from thermistor.config_io import reference_config
from thermistor.coupler import (
    PicardNonconvergence, SimulationError, SolverConfig, apply_B, fixed_point_residuals,
    homotopy_sweep, initial_state, picard_advance, run_simulation, slab_criterion,
)
from thermistor.grid import Field, GridSpec
from thermistor.parabolic import BoundaryData, implicit_euler_step


def make_cfg(sigma=None, u0=lambda x, y, t: 0 * x, phi0=lambda x, y, t: x, nx=21, dt=1e-2,
             T=0.1, **kw):
    kw.setdefault("figures", False)
    return SolverConfig(grid=GridSpec(1, nx), sigma=sigma or Constant(1.0),
                        bdata=BoundaryData(u0, phi0), dt=dt, T_final=T, **kw)


def test_config_validation():
    with pytest.raises(ValueError, match="lemma-range"):
        make_cfg(ell=3.5)
    with pytest.raises(ValueError):
        make_cfg(dt=0.0)
    with pytest.raises(ValueError):
        make_cfg(scale=1.5)
    cfg = make_cfg()
    assert 1 < cfg.ell < 3
    assert cfg.m == pytest.approx(0.5 / (1.0 * 1.0**2))


def test_apply_B_constant_sigma_ignores_v():
    cfg = make_cfg()
    st = initial_state(cfg)
    rng = np.random.default_rng(0)
    v1 = Field(cfg.grid, rng.uniform(0, 3, cfg.grid.n_nodes))
    v2 = Field(cfg.grid, rng.uniform(0, 3, cfg.grid.n_nodes))
    a = apply_B(v1, cfg.dt, cfg.dt, st.u, cfg)
    b = apply_B(v2, cfg.dt, cfg.dt, st.u, cfg)
    np.testing.assert_allclose(a[0].values, b[0].values, atol=1e-13)
    np.testing.assert_allclose(a[1].values, b[1].values, atol=1e-13)


def test_apply_B_constant_potential_is_pure_heat_step():
    cfg = make_cfg(sigma=OscillatorySine(), u0=lambda x, y, t: np.sin(np.pi * x) ** 2 + 0 * t,
                   phi0=lambda x, y, t: 2.0 + 0 * x)
    st = initial_state(cfg)
    u, phi = apply_B(st.u, cfg.dt, cfg.dt, st.u, cfg)
    np.testing.assert_allclose(phi.values, 2.0)
    heat = implicit_euler_step(st.u, np.zeros(cfg.grid.n_nodes), cfg.dt, st.u.values)
    np.testing.assert_allclose(u.values, heat.values, atol=1e-13)


def test_apply_B_rejects_negative_v():
    cfg = make_cfg()
    st = initial_state(cfg)
    v = Field(cfg.grid, -np.ones(cfg.grid.n_nodes))
    with pytest.raises(ValueError):
        apply_B(v, cfg.dt, cfg.dt, st.u, cfg)


def test_apply_B_reference_benchmark():
    cfg = reference_config()
    st = initial_state(cfg)
    u, phi = apply_B(st.u, cfg.dt, cfg.dt, st.u, cfg)
    assert u.values.min() >= 0
    assert phi.sup() <= 1.0 + 1e-12


def test_picard_one_iteration_cases():
    cfg = make_cfg()
    assert picard_advance(initial_state(cfg), cfg.dt, cfg).picard_iters_last == 1
    for u0 in (lambda x, y, t: 0 * x, lambda x, y, t: np.sin(np.pi * x)):
        cfg = make_cfg(sigma=OscillatorySine(), u0=u0, phi0=lambda x, y, t: 1.0 + 0 * x)
        assert picard_advance(initial_state(cfg), cfg.dt, cfg).picard_iters_last == 1


def test_picard_reference_iteration_bound(reference_run):
    iters = [s.picard_iters_last for s in reference_run.states[1:]]
    assert max(iters) <= 10 and min(iters) >= 1


def test_fixed_point_consistency(reference_run):
    cfg = reference_run.config
    states = reference_run.states
    for k in (1, 10, 500, len(states) - 1):
        r_ell, r_heat = fixed_point_residuals(states[k], states[k - 1], cfg)
        assert r_ell <= 10 * cfg.solver_tol
        assert r_heat <= 10 * cfg.picard_tol


def test_trajectory_invariants(reference_run):
    assert reference_run.status == "ok"
    for s in reference_run.states:
        assert s.u.values.min() >= -1e-12
        assert s.phi.sup() <= 1.0 + 1e-8


def test_run_T_zero():
    res = run_simulation(make_cfg(T=0.0))
    assert len(res.states) == 1 and len(res.reports) == 1
    assert res.final.t == 0.0


def test_constant_sigma_approaches_parabola():
    cfg = make_cfg(nx=41, dt=0.02, T=4.0)
    res = run_simulation(cfg)
    sups = [r.u_sup for r in res.reports]
    assert all(b >= a - 1e-15 for a, b in zip(sups, sups[1:]))
    x, _ = cfg.grid.coords()
    assert np.max(np.abs(res.final.u.values - x * (1 - x) / 2)) < 1e-3


def test_slabs_restart_mixed_moment():
    cfg = make_cfg(nx=21, dt=0.01, T=0.3, slab_length=0.1)
    res = run_simulation(cfg)
    assert len(res.slabs) == 3
    assert [s["slab"] for s in res.slabs] == [0, 1, 2]
    assert res.slabs[-1]["t_end"] == pytest.approx(0.3)
    # the running integral restarts: first report of slab 2 is small again
    i = next(k for k, r in enumerate(res.reports) if r.t > 0.1 + 1e-9)
    assert res.reports[i].mixed_moment < res.reports[i - 1].mixed_moment


def test_slab_constants_summary():
    cfg = make_cfg(T=0.1, slab_constants={"eps_coef": 0.01, "b": 2.0, "c": 1.0})
    res = run_simulation(cfg)
    s = res.slabs[0]
    assert s["tau0"] == pytest.approx(50.0) and s["cont1_ok"] and s["bound_ok"]


def test_negative_data_flags_violation():
    cfg = make_cfg(u0=lambda x, y, t: -0.5 + 0 * x, T=0.02)
    res = run_simulation(cfg)
    assert res.status == "invariant_violation"
    assert any(v.kind == "negative_temperature" for v in res.violations)


def test_picard_failure_and_partial_outputs(tmp_path):
    cfg = reference_config(picard={"max_iter": 1, "tol": 1e-14}, time={"dt": 0.05, "T": 0.2})
    cfg = dataclasses.replace(cfg, figures=False)
    with pytest.raises(PicardNonconvergence):
        picard_advance(initial_state(cfg), cfg.dt, cfg)
    with pytest.raises(SimulationError) as ei:
        run_simulation(cfg, out_dir=tmp_path)
    assert ei.value.partial.status == "nonconvergence"
    assert (tmp_path / "estimates.csv").exists()
    assert (tmp_path / "report.json").exists()


def test_homotopy_identity_and_limit():
    cfg = reference_config(time={"T": 0.05})
    cfg = dataclasses.replace(cfg, figures=False)
    base = run_simulation(cfg)
    sweep = homotopy_sweep(cfg, [1.0, 1e-6])
    assert [e.eps for e in sweep] == [1e-6, 1.0]
    one = sweep[1].result
    assert one.final.u.values.tobytes() == base.final.u.values.tobytes()
    assert sweep[0].u_sup < 1e-6
    with pytest.raises(ValueError):
        homotopy_sweep(cfg, [0.0])


def test_homotopy_parallel_matches_serial():
    cfg = dataclasses.replace(reference_config(time={"T": 0.03}), figures=False)
    a = homotopy_sweep(cfg, [0.5, 0.25, 1.0], workers=1)
    b = homotopy_sweep(cfg, [1.0, 0.5, 0.25], workers=3)
    assert [e.eps for e in a] == [e.eps for e in b] == [0.25, 0.5, 1.0]
    assert [e.u_sup for e in a] == [e.u_sup for e in b]


def test_slab_criterion_examples():
    c = slab_criterion(0.01, 2, 1)
    assert c.tau0 == pytest.approx(50.0) and c.g_min == pytest.approx(-24.0) and c.cont1_ok
    c = slab_criterion(1, 2, 1)
    assert c.tau0 == pytest.approx(0.5) and c.g_min == pytest.approx(0.75) and not c.cont1_ok
    with pytest.raises(ValueError):
        slab_criterion(1, 1, 1)


def test_slab_criterion_identity():
    rng = np.random.default_rng(3)
    for _ in range(100):
        e, b, c = 10 ** rng.uniform(-3, 0), rng.uniform(1.1, 4), rng.uniform(0.01, 3)
        crit = slab_criterion(e, b, c)
        closed = c - e * (b - 1) / (e * b) ** (b / (b - 1))
        assert crit.g_min == pytest.approx(closed, rel=1e-12, abs=1e-12 * crit.tau0)
        # cont1 is the statement g(tau0) <= -eps
        assert crit.cont1_ok == (crit.g_min <= -e + 1e-12 * max(1, crit.tau0)) or math.isclose(
            crit.g_min, -e, rel_tol=1e-9)
