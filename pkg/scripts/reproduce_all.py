"""Run every pinned experiment and print one line per acceptance criterion."""

import argparse
import sys

from bcslab.cli import main

if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--output")
    args = parser.parse_args()
    sys.exit(main((["--output", args.output] if args.output else []) + ["reproduce-all"]))
