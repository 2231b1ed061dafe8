"""Figure rendering for experiment reports.

Every CLI report writes CSV first; these helpers render the matching PNG
next to it.  Import cost is deferred so the core library never needs a
display stack.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

_RC = {
    "figure.figsize": (6.4, 4.0),
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "savefig.dpi": 160,
    "savefig.bbox": "tight",
}


def _pyplot():
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    plt.rcParams.update(_RC)
    return plt


def save_loss_curve(report, path) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots()
    ax.semilogy(report.iters, np.maximum(report.loss_history, 1e-300), "b-")
    if report.stage_boundary is not None and 0 < report.stage_boundary < len(report.iters):
        ax.axvline(report.iters[report.stage_boundary], color="k", ls=":", lw=1)
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.set_title(f"{report.pipeline}: training loss")
    fig.savefig(path)
    plt.close(fig)
    return Path(path)


def save_knot_trajectory(report, path) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots()
    traj = report.knot_trajectory
    for j in range(traj.shape[1]):
        ax.plot(traj[:, j], report.iters, "b-", lw=0.7)
    ax.set_xlabel("knot location")
    ax.set_ylabel("iteration")
    ax.set_title(f"{report.pipeline}: knot evolution")
    fig.savefig(path)
    plt.close(fig)
    return Path(path)


def save_convergence(ns, losses, slope, path, title="convergence") -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots()
    ns = np.asarray(ns, dtype=float)
    losses = np.asarray(losses, dtype=float)
    ax.loglog(ns, losses, "bo-", label="measured")
    if slope is not None and math.isfinite(slope):
        anchor = losses[-1] * (ns / ns[-1]) ** slope
        ax.loglog(ns, anchor, "k--", lw=1, label=f"slope {slope:.2f}")
        ax.legend()
    ax.set_xlabel("N")
    ax.set_ylabel("loss")
    ax.set_title(title)
    fig.savefig(path)
    plt.close(fig)
    return Path(path)


def save_conditioning(reports, path) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots()
    ns = [r.n for r in reports]
    ax.loglog(ns, [r.kappa_M for r in reports], "o-", label="kappa(M)")
    ax.loglog(ns, [r.kappa_T for r in reports], "s-", label="kappa(T)")
    ax.loglog(ns, [r.kappa_MTinv for r in reports], "^-", label="kappa(M T^-1)")
    ax.loglog(ns, [r.predicted_kappa_MTinv for r in reports], "k--", lw=1,
              label="12 N^2 / pi^2")
    ax.set_xlabel("N")
    ax.set_ylabel("condition number")
    ax.legend()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)


def save_model_fit(model, u, path, n_plot=2000) -> Path:
    plt = _pyplot()
    from .losses import model_values

    x = np.linspace(0.0, 1.0, n_plot)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.plot(x, u.f(x), "k:", label="target")
    ax1.plot(x, model_values(model, x), "b-", label="fit")
    ax1.plot(model.knots.values, model_values(model, model.knots.values), "r.",
             ms=4, label="knots")
    ax1.legend()
    ax1.set_xlabel("x")
    ax2.semilogy(x, np.abs(model_values(model, x) - u.f(x)) + 1e-300, "b-")
    ax2.set_xlabel("x")
    ax2.set_ylabel("abs error")
    fig.savefig(path)
    plt.close(fig)
    return Path(path)
