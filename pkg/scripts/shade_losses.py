#!/usr/bin/env python3
"""
Shade Loss Command-Line Script

Thin wrapper around the command-line interface in src/cli.py:

    python scripts/shade_losses.py corpus --k 6
    python scripts/shade_losses.py analyze --input power.csv --out results
    python scripts/shade_losses.py synth --out synthetic --obstruction 150 210 40 1
    python scripts/shade_losses.py validate --report results/shade_report.json --truth synthetic/ground_truth.json
"""

import sys
from pathlib import Path

# Add src directory to path so we can import our modules
sys.path.append(str(Path(__file__).parent.parent / "src"))

import cli


if __name__ == "__main__":
    sys.exit(cli.main())
