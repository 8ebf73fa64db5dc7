"""Shared command line for the per-experiment scripts."""

import argparse
import sys

from bcslab.experiments import PINNED_SEEDS, ExperimentConfig, output_root, run_experiment


def main(experiment: str, description: str) -> int:
    parser = argparse.ArgumentParser(description=description)
    parser.add_argument("--seed", type=int, default=PINNED_SEEDS[experiment])
    parser.add_argument("--output", help="output root (default: $BCSLAB_OUTPUT or ./bcslab-output)")
    args = parser.parse_args()
    target = output_root(args.output) / experiment
    manifest = run_experiment(ExperimentConfig(experiment, args.seed), target)
    for chk in manifest.checks:
        print(f"{'PASS' if chk['passed'] else 'FAIL'}  {chk['name']:<36} {chk['value']:<14.6g} {chk['threshold']}")
    print(f"artifacts in {target} ({manifest.runtime_s:.1f} s)")
    return 0 if manifest.passed else 4


if __name__ == "__main__":
    sys.exit("run one of the experiment scripts instead")
