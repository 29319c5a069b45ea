#!/usr/bin/env python3
"""Drive the full experiment pipeline into ./out.

Runs the two-stage optimizer, per-strategy training traces, every sweep
axis, the privacy surfaces, and the self-check suite, all through the CLI so
the outputs are exactly the documented CSV schemas.
"""

import json
import subprocess
import sys
from pathlib import Path

OUT = Path("out")
STRATEGIES = (
    "noisy",
    "idle",
    "mixed:0.5",
    "baseline:gamma_based",
    "baseline:h_min",
    "baseline:is_based",
    "baseline:noise_free",
)


def run(*args):
    cmd = [sys.executable, "-m", "otafl.cli", *args]
    print("+", " ".join(cmd))
    subprocess.run(cmd, check=True)


def main():
    OUT.mkdir(exist_ok=True)
    config = OUT / "config.json"
    if not config.exists():
        config.write_text(json.dumps({"num_seeds": 20}, indent=2) + "\n")

    run("optimize", "--config", str(config), "--out", str(OUT))
    for strategy in STRATEGIES:
        run("train", "--config", str(config), "--out", str(OUT), "--strategy", strategy)
    for axis in ("tau", "K", "P", "gamma_bar", "portion"):
        run("sweep", "--config", str(config), "--out", str(OUT), "--axis", axis)
    run("rdp", "--config", str(config), "--out", str(OUT))
    run("validate", "--config", str(config), "--out", str(OUT))


if __name__ == "__main__":
    main()
