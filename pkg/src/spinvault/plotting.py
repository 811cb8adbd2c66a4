"""PNG figures for the CLI reports.

Figures are built on the Agg canvas directly, without pyplot state, so they
are safe to render from worker processes.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib
import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.colors import ListedColormap
from matplotlib.figure import Figure

from .model import StateTrajectory
from .optimizer import RegimeLabel, TraceRecord

__all__ = ["STYLE", "plot_modes", "plot_regime_map", "plot_trace", "plot_waveforms"]

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.linewidth": 0.6,
    "axes.grid": True,
    "grid.linewidth": 0.3,
    "grid.alpha": 0.5,
    "legend.fontsize": 8,
    "legend.frameon": False,
    "lines.linewidth": 1.2,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "savefig.dpi": 150,
}
COLORS = ("#0072B2", "#E69F00", "#009E73", "#CC79A7", "#D55E00", "#56B4E9")
REGIME_COLORS = {RegimeLabel.SEQUENTIAL.value: "#0072B2", RegimeLabel.INTERMEDIATE.value: "#F0E442",
                 RegimeLabel.ADIABATIC.value: "#D55E00"}


def _figure(nrows: int = 1, ncols: int = 1, size: tuple[float, float] = (5.0, 3.2)):
    with matplotlib.rc_context(STYLE):
        fig = Figure(figsize=size, layout="constrained")
        FigureCanvasAgg(fig)
        axes = fig.subplots(nrows, ncols, squeeze=False)
    return fig, axes


def _save(fig: Figure, path: str | Path) -> None:
    with matplotlib.rc_context(STYLE):
        fig.savefig(Path(path), format="png", metadata={"Software": None})


def plot_waveforms(traj: StateTrajectory, path: str | Path, E_out: np.ndarray | None = None,
                   title: str = "") -> None:
    """Controls on top, excitation and field intensities below."""
    with matplotlib.rc_context(STYLE):
        fig, ax = _figure(2, 1, (5.0, 4.6))
        t = traj.times
        top, bottom = ax[0, 0], ax[1, 0]
        top.plot(t, traj.ctrl.gamma_Omega, color=COLORS[0], label=r"$\gamma_\Omega$")
        for arr, name, c in ((traj.ctrl.delta_s, r"$\delta_s$", COLORS[3]), (traj.ctrl.delta_k, r"$\delta_k$", COLORS[4])):
            if np.any(arr):
                top.plot(t, arr, color=c, ls="--", label=name)
        top.set_ylabel("rate")
        top.legend(loc="upper right")
        if title:
            top.set_title(title)
        E_out = traj.E_out if E_out is None else E_out
        bottom.plot(t, np.abs(traj.S) ** 2, color=COLORS[1], label=r"$|S|^2$")
        bottom.plot(t, np.abs(traj.K) ** 2, color=COLORS[2], label=r"$|K|^2$")
        bottom.plot(t, np.abs(traj.E_in) ** 2, color="0.4", ls=":", label=r"$|E_{in}|^2$")
        bottom.plot(t, np.abs(E_out) ** 2, color=COLORS[5], ls="-.", label=r"$|E_{out}|^2$")
        bottom.set_xlabel("t")
        bottom.set_ylabel("population")
        bottom.legend(loc="upper right")
        _save(fig, path)


def plot_trace(trace: Sequence[TraceRecord], path: str | Path) -> None:
    with matplotlib.rc_context(STYLE):
        fig, ax = _figure()
        a = ax[0, 0]
        seeds = sorted({r.seed for r in trace})
        for i, seed in enumerate(seeds):
            pts = [(r.iteration, r.eta_in) for r in trace if r.seed == seed]
            a.plot(*zip(*pts), color=COLORS[i % len(COLORS)], label=seed)
        a.set_xlabel("iteration")
        a.set_ylabel(r"$\eta_{in}$ at end of storage")
        a.legend(loc="lower right")
        _save(fig, path)


def plot_regime_map(x: Sequence[float], y: Sequence[float], labels: Sequence[Sequence[str]], path: str | Path,
                    xlabel: str = r"$\gamma_sT$", ylabel: str = r"$J/\gamma_s$") -> None:
    """Regime labels on a (y rows, x columns) grid with log axes."""
    order = [RegimeLabel.SEQUENTIAL.value, RegimeLabel.INTERMEDIATE.value, RegimeLabel.ADIABATIC.value]
    codes = np.array([[order.index(v) for v in row] for row in labels], dtype=float)
    with matplotlib.rc_context(STYLE):
        fig, ax = _figure(size=(4.6, 3.6))
        a = ax[0, 0]
        cmap = ListedColormap([REGIME_COLORS[k] for k in order])
        a.pcolormesh(_edges(x), _edges(y), codes, cmap=cmap, vmin=-0.5, vmax=2.5, shading="flat")
        a.set_xscale("log")
        a.set_yscale("log")
        a.set_xlabel(xlabel)
        a.set_ylabel(ylabel)
        a.grid(False)
        for k in order:
            a.plot([], [], "s", color=REGIME_COLORS[k], label=k)
        a.legend(loc="upper left", bbox_to_anchor=(1.0, 1.0))
        _save(fig, path)


def _edges(v: Sequence[float]) -> np.ndarray:
    v = np.log10(np.asarray(v, dtype=float))
    if len(v) == 1:
        return 10.0 ** np.array([v[0] - 0.5, v[0] + 0.5])
    mid = 0.5 * (v[1:] + v[:-1])
    return 10.0 ** np.concatenate([[2 * v[0] - mid[0]], mid, [2 * v[-1] - mid[-1]]])


def plot_modes(c: np.ndarray, path: str | Path) -> None:
    """Overlap matrix between alkali (rows) and noble-gas (columns) modes."""
    with matplotlib.rc_context(STYLE):
        fig, ax = _figure(size=(4.2, 3.6))
        a = ax[0, 0]
        im = a.imshow(c, cmap="RdBu_r", vmin=-1.0, vmax=1.0)
        a.set_xlabel("noble-gas mode n")
        a.set_ylabel("alkali mode m")
        a.grid(False)
        fig.colorbar(im, ax=a, label=r"$c_{mn}$")
        _save(fig, path)
