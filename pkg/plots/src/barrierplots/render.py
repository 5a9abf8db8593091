"""Figure builders: phase portraits with barrier level sets, and time
histories of the barrier and gating signals.

Figures are built on explicit Figure objects (no pyplot state), so rendering
is a pure function of the parsed CSV content.
"""

from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np
from matplotlib.figure import Figure

from .io import read_grid, read_trajectory

__all__ = ["PlotSpec", "RenderResult", "render_phase", "render_timeseries"]

# one color per level-set family, shared by legend and contours
LEVEL_STYLES = [
    ("h_s", "tab:red", "safe set boundary"),
    ("h_b", "tab:purple", "backup set boundary"),
    ("h", "tab:green", "soft barrier zero level"),
    ("hbar_star", "tab:blue", "sampled barrier zero level"),
]


@dataclass
class PlotSpec:
    """What to draw: trajectory CSVs, optional level-set grid CSV, output path.

    ``epsilon`` and ``kappa`` add the gate-threshold and ramp-width reference
    lines to time histories when given (they are run parameters, not columns).
    """

    kind: str
    inputs: list
    out: Optional[str] = None
    grid: Optional[str] = None
    epsilon: Optional[float] = None
    kappa: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("phase", "timeseries"):
            raise ValueError(f"unknown figure kind: {self.kind!r}")
        if self.kind == "phase" and self.grid is None:
            raise ValueError("phase plots need a level-set grid CSV")
        if self.kind == "timeseries" and not self.inputs:
            raise ValueError("time histories need at least one trajectory CSV")


@dataclass
class RenderResult:
    figure: Figure
    n_trajectories: int = 0
    n_contours: int = 0
    series: dict = dc_field(default_factory=dict)

    def save(self, out):
        self.figure.savefig(out, dpi=150, bbox_inches="tight")


def render_phase(spec):
    """Zero-level contours of the barrier family with trajectories on top."""
    grid = read_grid(spec.grid)
    trajectories = [read_trajectory(p) for p in spec.inputs]
    fig = Figure(figsize=(6.0, 5.0))
    ax = fig.subplots()
    mesh0, mesh1 = np.meshgrid(grid.x0, grid.x1, indexing="ij")
    n_contours = 0
    for name, color, label in LEVEL_STYLES:
        values = getattr(grid, name)
        if values.min() < 0.0 < values.max():
            ax.contour(mesh0, mesh1, values, levels=[0.0], colors=color, linewidths=1.2)
            n_contours += 1
            ax.plot([], [], color=color, label=label)
    series = {}
    for traj in trajectories:
        (line,) = ax.plot(traj.states[:, 0], traj.states[:, 1], lw=1.0, color="0.25")
        ax.plot(traj.states[0, 0], traj.states[0, 1], "o", ms=4, color="0.25")
        ax.plot(traj.states[-1, 0], traj.states[-1, 1], "D", ms=4, color="0.1")
        series[traj.path.name] = np.asarray(line.get_xydata())
    ax.set_xlabel("state[0]")
    ax.set_ylabel("state[1]")
    ax.legend(loc="upper right", fontsize=8)
    if spec.out:
        fig.savefig(spec.out, dpi=150, bbox_inches="tight")
    return RenderResult(
        figure=fig,
        n_trajectories=len(trajectories),
        n_contours=n_contours,
        series=series,
    )


def render_timeseries(spec):
    """Two stacked panels: barrier values on top, gating signals below."""
    traj = read_trajectory(spec.inputs[0])
    fig = Figure(figsize=(6.5, 5.5))
    top, bottom = fig.subplots(2, 1, sharex=True)
    series = {}
    for name, values in (("h", traj.h), ("h_s", traj.h_s), ("hbar_star", traj.hbar_star)):
        (line,) = top.plot(traj.t, values, label=name)
        series[name] = np.asarray(line.get_xydata())
    top.axhline(0.0, color="0.6", lw=0.6)
    top.set_ylabel("barrier values")
    top.legend(loc="upper right", fontsize=8)

    for name, values in (("gamma", traj.gamma), ("beta", traj.beta)):
        (line,) = bottom.plot(traj.t, values, label=name)
        series[name] = np.asarray(line.get_xydata())
    if spec.epsilon is not None:
        (line,) = bottom.plot(traj.t, traj.h - spec.epsilon, label="h - epsilon")
        series["h_minus_epsilon"] = np.asarray(line.get_xydata())
    if spec.kappa is not None:
        bottom.axhline(spec.kappa, color="0.4", lw=0.8, ls="--", label="kappa")
    bottom.axhline(0.0, color="0.6", lw=0.6)
    bottom.set_xlabel("t [s]")
    bottom.set_ylabel("gating signals")
    bottom.legend(loc="upper right", fontsize=8)
    if spec.out:
        fig.savefig(spec.out, dpi=150, bbox_inches="tight")
    return RenderResult(figure=fig, n_trajectories=1, series=series)
