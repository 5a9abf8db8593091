"""Plotting for softbarrier CSV logs: phase portraits over barrier level sets
and time histories of the barrier and gating signals."""

from .io import LevelGrid, PlotDataError, Trajectory, read_grid, read_trajectory
from .render import PlotSpec, RenderResult, render_phase, render_timeseries

__version__ = "0.1.0"
