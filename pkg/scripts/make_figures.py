#!/usr/bin/env python3
"""Render the figure families from the CSVs produced by run_experiments.py.

Requires the sibling ``figures`` package (console script ``render``); the
renderer only reads the CSVs, never the simulator.
"""

import subprocess
import sys
from pathlib import Path

OUT = Path("out")
FIG = OUT / "figures"


def render(family, inputs, stem):
    cmd = ["render", "--family", family, "--out", str(FIG / f"{stem}.png"),
           "--summary", str(FIG / f"{stem}.summary.json")]
    for path in inputs:
        cmd += ["--in", str(path)]
    print("+", " ".join(cmd))
    subprocess.run(cmd, check=True)


def main():
    FIG.mkdir(parents=True, exist_ok=True)
    render("g_curve", [OUT / "sweep_tau.csv"], "g_curve")
    traces = sorted(OUT.glob("train_idle_*.csv"))[:1] + sorted(OUT.glob("train_noisy_*.csv"))[:1]
    if traces:
        render("trajectory", traces, "trajectory")
    for axis in ("K", "P"):
        if (OUT / f"sweep_{axis}.csv").exists():
            render("disparity", [OUT / f"sweep_{axis}.csv"], f"disparity_{axis}")
    render("portion", [OUT / "sweep_portion.csv"], "portion")


if __name__ == "__main__":
    sys.exit(main())
