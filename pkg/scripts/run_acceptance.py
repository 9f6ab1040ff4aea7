#!/usr/bin/env python3
"""Run the shipped acceptance configuration and write report artifacts.

Usage:
    python scripts/run_acceptance.py [--out results] [--config configs/acceptance.json]

Exit code 0 when every experiment passes its threshold, 1 otherwise.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default=str(REPO / "configs" / "acceptance.json"))
    parser.add_argument("--out", default=str(REPO / "results"))
    args = parser.parse_args()

    from atomlab.cli import main as cli_main

    return cli_main(["suite", "--config", args.config, "--out", args.out])


if __name__ == "__main__":
    sys.exit(main())
