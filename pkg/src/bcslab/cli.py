"""Command line entry point: ``bcslab validate|run|reproduce-all|sweep``.

Exit codes: 0 success, 2 configuration error, 3 numerical error, 4 an
acceptance check failed.  The output root is ``--output``, else the
``BCSLAB_OUTPUT`` environment variable, else ``./bcslab-output``.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigError, NumericError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_ACCEPTANCE = 4


def _print_checks(checks) -> None:
    for chk in checks:
        tag = "PASS" if chk["passed"] else "FAIL"
        crit = f" [criterion {chk['criterion']}]" if chk["criterion"] is not None else ""
        print(f"  {tag} {chk['name']} = {chk['value']:.6g} ({chk['threshold']}){crit}")


def _cmd_validate(args) -> int:
    from .bcsnode import load_node, validate

    report = validate(load_node(args.node))
    print(f"valid: {report.valid}  boundary rank {report.boundary_rank}/{report.boundary_rows}")
    for msg in report.failures:
        print(f"  {msg}")
    return EXIT_OK if report.valid else EXIT_CONFIG


def _cmd_run(args) -> int:
    from .experiments import load_config, output_root, run_experiment

    cfg = load_config(args.config)
    target = output_root(args.output or cfg.output) / cfg.experiment
    manifest = run_experiment(cfg, target)
    print(f"{cfg.experiment}: {'PASS' if manifest.passed else 'FAIL'}  ({manifest.runtime_s:.1f} s, {target})")
    _print_checks(manifest.checks)
    return EXIT_OK if manifest.passed else EXIT_ACCEPTANCE


def _cmd_reproduce(args) -> int:
    from .experiments import reproduce_all

    aggregate = reproduce_all(args.output)
    for crit, ok in aggregate["criteria"].items():
        print(f"criterion {crit}: {'PASS' if ok else 'FAIL'}")
    print(f"total runtime {aggregate['runtime_s']:.1f} s")
    return EXIT_OK if aggregate["passed"] else EXIT_ACCEPTANCE


def _cmd_sweep(args) -> int:
    from .experiments import output_root, run_sweep

    try:
        with open(args.config) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read sweep config {args.config}: {exc}") from exc
    target = output_root(args.output or doc.get("output")) / "sweep"
    summary = run_sweep(doc, target)
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bcslab", description="Boundary control system experiments.")
    parser.add_argument("--output", help="output root directory (overrides BCSLAB_OUTPUT)")
    sub = parser.add_subparsers(dest="verb", required=True)
    p = sub.add_parser("validate", help="check a node file")
    p.add_argument("node")
    p.set_defaults(func=_cmd_validate)
    p = sub.add_parser("run", help="run one experiment config")
    p.add_argument("config")
    p.set_defaults(func=_cmd_run)
    p = sub.add_parser("reproduce-all", help="run every pinned experiment")
    p.set_defaults(func=_cmd_reproduce)
    p = sub.add_parser("sweep", help="resolvent sweep of one generator")
    p.add_argument("config")
    p.set_defaults(func=_cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numerical error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
