#!/usr/bin/env python3
"""Seed sweep on the small sensor-localization preset.

Compares the multiscale pipeline (with local refinement) against simulated
annealing and local descent from random starts, writing compare.csv.
"""
import sys
from pathlib import Path

from mmropt.cli import main

ROOT = Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    sys.exit(main([
        "compare",
        "--config", str(ROOT / "configs" / "snl_small.toml"),
        "--methods", "mmr+refine,sa,local-only",
        "--seeds", "10",
        "--out", "out/snl_compare",
    ] + sys.argv[1:]))
