import numpy as np
import pytest


def format_float(v):
    return "%.17g" % v


@pytest.fixture()
def make_trajectory_csv(tmp_path):
    """Write a small synthetic trajectory CSV with the production schema."""

    def _make(name="run_00.csv", rows=None, n=2, m=1):
        if rows is None:
            t = np.arange(5) * 0.1
            rows = []
            for k, tk in enumerate(t):
                rows.append(
                    [tk]
                    + [0.1 * k, -0.2 * k][:n]
                    + [0.05] * m
                    + [0.3, 0.35, 1.2, 0.8, 0.3, "blend"]
                )
        header = (
            ["t"]
            + [f"x{i}" for i in range(n)]
            + [f"u{j}" for j in range(m)]
            + ["h", "hbar_star", "h_s", "beta", "gamma", "mode"]
        )
        lines = [",".join(header)]
        for row in rows:
            lines.append(
                ",".join(format_float(v) if not isinstance(v, str) else v for v in row)
            )
        path = tmp_path / name
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    return _make


@pytest.fixture()
def make_grid_csv(tmp_path):
    """Write a synthetic level-set grid whose fields cross zero."""

    def _make(name="grid.csv", n0=21, n1=19):
        x0 = np.linspace(-2.0, 2.0, n0)
        x1 = np.linspace(-2.0, 2.0, n1)
        lines = ["x0,x1,h,hbar_star,h_s,h_b"]
        for a in x0:
            for b in x1:
                r2 = a * a + b * b
                h = 1.0 - r2
                lines.append(
                    ",".join(
                        format_float(v)
                        for v in (a, b, h - 0.05, h, 1.5 - r2, 0.3 - r2)
                    )
                )
        path = tmp_path / name
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    return _make
