import numpy as np

from thermistor import plotting
from thermistor.coupler import SimState
from thermistor.estimates import report
from thermistor.config_io import reference_config
from thermistor.grid import Field, GridSpec

PNG = b"\x89PNG\r\n\x1a\n"


def _states(grid, n=3):
    x, y = grid.coords()
    return [SimState(0.1 * k, Field(grid, k * x * (1 - x) + 0 * y), Field(grid, x))
            for k in range(n)]


def test_run_figures_1d_and_2d():
    cfg = reference_config()
    states = _states(cfg.grid)
    reps = [report(s, cfg) for s in states]
    figs = plotting.run_figures(states, reps)
    assert set(figs) == {"profiles.png", "estimates.png"}
    assert all(v.startswith(PNG) for v in figs.values())
    g2 = GridSpec(2, 9, 1.0, 9, 1.0)
    assert plotting.profiles_figure(_states(g2)).startswith(PNG)


def test_png_bytes_deterministic():
    cfg = reference_config()
    states = _states(cfg.grid)
    assert plotting.profiles_figure(states) == plotting.profiles_figure(states)


def test_convergence_figure():
    h = np.array([0.1, 0.05, 0.025])
    assert plotting.convergence_figure(h, h**2, h, h).startswith(PNG)
