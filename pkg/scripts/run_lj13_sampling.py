#!/usr/bin/env python3
"""Draw near-optimal 13-particle configurations from the perturbed finest
relaxation and write samples.csv."""
import sys
from pathlib import Path

from mmropt.cli import main

ROOT = Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    sys.exit(main([
        "sample",
        "--config", str(ROOT / "configs" / "lj13.toml"),
        "--seeds", "5",
        "--out", "out/lj13_samples",
    ] + sys.argv[1:]))
