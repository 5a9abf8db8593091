"""CSV readers for trajectory logs and barrier level-set grids.

The schemas are fixed by the simulation tool: trajectory columns are
``t, x0..x{n-1}, u0..u{m-1}, h, hbar_star, h_s, beta, gamma, mode`` and grid
columns are ``x0, x1, h, hbar_star, h_s, h_b`` in row-major order over a
rectangular mesh.  Anything else is rejected, naming the offending column.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = ["PlotDataError", "Trajectory", "LevelGrid", "read_trajectory", "read_grid"]

GRID_COLUMNS = ["x0", "x1", "h", "hbar_star", "h_s", "h_b"]
MODES = {"backup", "blend", "qp"}


class PlotDataError(ValueError):
    pass


@dataclass
class Trajectory:
    path: Path
    t: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    h: np.ndarray
    hbar_star: np.ndarray
    h_s: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    modes: list


@dataclass
class LevelGrid:
    x0: np.ndarray  # (n0,)
    x1: np.ndarray  # (n1,)
    h: np.ndarray  # (n0, n1)
    hbar_star: np.ndarray
    h_s: np.ndarray
    h_b: np.ndarray


def _expected_trajectory_columns(n, m):
    return (
        ["t"]
        + [f"x{i}" for i in range(n)]
        + [f"u{j}" for j in range(m)]
        + ["h", "hbar_star", "h_s", "beta", "gamma", "mode"]
    )


def read_trajectory(path):
    path = Path(path)
    lines = path.read_text(encoding="utf-8").strip().splitlines()
    if not lines:
        raise PlotDataError(f"{path}: empty trajectory file")
    header = lines[0].split(",")
    n = sum(1 for c in header if c.startswith("x") and c[1:].isdigit())
    m = sum(1 for c in header if c.startswith("u") and c[1:].isdigit())
    expected = _expected_trajectory_columns(n, m)
    if header != expected:
        bad = next(
            (c for c, e in zip(header, expected) if c != e),
            header[-1] if len(header) != len(expected) else header[0],
        )
        raise PlotDataError(f"{path}: trajectory schema mismatch at column {bad!r}")
    rows = [line.split(",") for line in lines[1:]]
    for row in rows:
        if len(row) != len(header):
            raise PlotDataError(f"{path}: row with {len(row)} fields, expected {len(header)}")
        if row[-1] not in MODES:
            raise PlotDataError(f"{path}: unknown value in column 'mode': {row[-1]!r}")
    data = np.array([[float(v) for v in row[:-1]] for row in rows])
    return Trajectory(
        path=path,
        t=data[:, 0],
        states=data[:, 1 : 1 + n],
        controls=data[:, 1 + n : 1 + n + m],
        h=data[:, 1 + n + m],
        hbar_star=data[:, 2 + n + m],
        h_s=data[:, 3 + n + m],
        beta=data[:, 4 + n + m],
        gamma=data[:, 5 + n + m],
        modes=[row[-1] for row in rows],
    )


def read_grid(path):
    path = Path(path)
    lines = path.read_text(encoding="utf-8").strip().splitlines()
    if not lines:
        raise PlotDataError(f"{path}: empty grid file")
    header = lines[0].split(",")
    if header != GRID_COLUMNS:
        bad = next((c for c in header if c not in GRID_COLUMNS), header[0])
        raise PlotDataError(f"{path}: grid schema mismatch at column {bad!r}")
    data = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    x0 = np.unique(data[:, 0])
    x1 = np.unique(data[:, 1])
    n0, n1 = x0.size, x1.size
    if n0 * n1 != data.shape[0]:
        raise PlotDataError(f"{path}: grid is not a full {n0} x {n1} mesh")
    order = np.lexsort((data[:, 1], data[:, 0]))  # row-major in x0, then x1
    data = data[order]
    fields = {
        name: data[:, k].reshape(n0, n1)
        for k, name in enumerate(GRID_COLUMNS)
        if name not in ("x0", "x1")
    }
    return LevelGrid(x0=x0, x1=x1, **fields)
