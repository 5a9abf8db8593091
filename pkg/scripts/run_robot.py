#!/usr/bin/env python3
"""Robot runs with the shipped configuration: three goals in the obstacle map,
CSV logs, summary, and the level-set grid for phase plots."""

import sys
from pathlib import Path

from softbarrier.cli import main

ROOT = Path(__file__).resolve().parents[1]

if __name__ == "__main__":
    argv = [
        "sweep",
        "--config", str(ROOT / "configs" / "robot.yaml"),
        "--out", str(ROOT / "out" / "robot"),
        "--grid",
    ] + sys.argv[1:]
    sys.exit(main(argv))
