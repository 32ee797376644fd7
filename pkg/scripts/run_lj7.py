#!/usr/bin/env python3
"""Solve the 7-particle identical-pair cluster and report refined energy."""
import sys
from pathlib import Path

from mmropt.cli import main

ROOT = Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    sys.exit(main([
        "solve",
        "--config", str(ROOT / "configs" / "lj7.toml"),
        "--out", "out/lj7",
    ] + sys.argv[1:]))
