#!/usr/bin/env python3
"""Cross-check enumeration against the chain dynamic program."""
import sys
from pathlib import Path

from mmropt.cli import main

ROOT = Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    sys.exit(main([
        "oracle",
        "--config", str(ROOT / "configs" / "cycle1d.toml"),
        "--out", "out/oracle",
    ] + sys.argv[1:]))
