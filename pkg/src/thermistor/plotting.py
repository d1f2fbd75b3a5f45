"""Figures for run, sweep and verification reports.

Rendering happens off-screen (Agg) and every function returns PNG bytes so
callers decide where they go. PNG metadata is stripped to keep the bytes a
pure function of the data.
"""

from __future__ import annotations

import functools
import io
import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.family": "DejaVu Sans",
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.2,
    "figure.dpi": 100,
    "savefig.dpi": 100,
}


def _styled(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        with plt.rc_context(STYLE):
            return fn(*args, **kwargs)
    return wrapper


def size(scale=1.0, ratio=None):
    width = 7.0 * scale
    if ratio is None:
        ratio = (math.sqrt(5.0) - 1.0) / 2.0
    return (width, width * ratio)


def new(nrows=1, ncols=1, scale=1.0, ratio=None):
    return plt.subplots(nrows, ncols, figsize=size(scale, ratio), squeeze=False)


def to_png(fig) -> bytes:
    buf = io.BytesIO()
    fig.tight_layout()
    fig.savefig(buf, format="png", metadata={"Software": None})
    plt.close(fig)
    return buf.getvalue()


@_styled
def profiles_figure(snapshots) -> bytes:
    g = snapshots[0].u.grid
    if g.dim == 1:
        fig, ax = new(1, 2, ratio=0.4)
        x = np.arange(g.nx) * g.h
        cmap = plt.get_cmap("viridis")
        t_end = max(snapshots[-1].t, 1e-300)
        for st in snapshots:
            c = cmap(st.t / t_end)
            ax[0, 0].plot(x, st.u.values, color=c)
            ax[0, 1].plot(x, st.phi.values, color=c)
        ax[0, 0].set(xlabel="x", ylabel="u", title="temperature")
        ax[0, 1].set(xlabel="x", ylabel=r"$\varphi$", title="potential")
        sm = plt.cm.ScalarMappable(cmap=cmap, norm=plt.Normalize(0.0, snapshots[-1].t))
        fig.colorbar(sm, ax=ax[0, 1], label="t")
        return to_png(fig)
    st = snapshots[-1]
    fig, ax = new(1, 2, ratio=0.45)
    ext = (0, g.lx, 0, g.ly)
    for a, f, title in ((ax[0, 0], st.u, "u"), (ax[0, 1], st.phi, r"$\varphi$")):
        im = a.imshow(f.as_2d(), origin="lower", extent=ext, cmap="inferno")
        a.set(title=f"{title} at t={st.t:.3g}", xlabel="x", ylabel="y")
        a.grid(False)
        fig.colorbar(im, ax=a, shrink=0.85)
    return to_png(fig)


@_styled
def estimates_figure(reports) -> bytes:
    t = np.array([r.t for r in reports])
    fig, ax = new(2, 2, ratio=0.75)
    a = ax[0, 0]
    a.plot(t, [r.exp_moment for r in reports])
    a.set(xlabel="t", ylabel=r"$\int e^{mu}\,dx$", title="exponential moment")
    a = ax[0, 1]
    a.plot(t, [r.joule_energy for r in reports], label=r"$\int\sigma|\nabla\varphi|^2$")
    a.plot(t, [r.joule_energy_bc for r in reports], "--", label="boundary-data extension")
    a.set(xlabel="t", title="Joule energy")
    a.legend(loc="best")
    a = ax[1, 0]
    a.plot(t, [r.grad_u_sup for r in reports], label=r"$|\nabla u|_\infty$")
    a.plot(t, [r.grad_phi_sup for r in reports], label=r"$|\nabla\varphi|_\infty$")
    a.plot(t, [r.coeff_sup for r in reports], label=r"$|\sigma'/\sigma\,\nabla u|_\infty$")
    a.set(xlabel="t", title="gradient bounds")
    a.legend(loc="best")
    a = ax[1, 1]
    a.step(t, [r.picard_iters for r in reports], where="post")
    a.set(xlabel="t", ylabel="sweeps", title="Picard iterations")
    return to_png(fig)


def run_figures(snapshots, reports) -> dict[str, bytes]:
    return {"profiles.png": profiles_figure(snapshots),
            "estimates.png": estimates_figure(reports)}


@_styled
def sweep_figure(entries) -> bytes:
    fig, ax = new(1, 1, scale=0.6)
    ok = [e for e in entries if e.status != "nonconvergence"]
    ax[0, 0].plot([e.eps for e in ok], [e.u_sup for e in ok], "o-")
    ax[0, 0].set(xlabel=r"$\varepsilon$", ylabel=r"$\sup |u_\varepsilon|$",
                 title="homotopy family")
    return to_png(fig)


@_styled
def convergence_figure(h, err_h, dt, err_dt) -> bytes:
    fig, ax = new(1, 2, ratio=0.4)
    ax[0, 0].loglog(h, err_h, "o-")
    ax[0, 0].set(xlabel="h", ylabel="max error", title="spatial refinement")
    ax[0, 1].loglog(dt, err_dt, "s-")
    ax[0, 1].set(xlabel="dt", ylabel="max error", title="temporal refinement")
    return to_png(fig)
