"""Command line entry point: ``camelg run|validate|dea-only|version``.

Exit codes: 0 success, 1 partial run (some stage failed) or validation
issues, 2 configuration or ingest failure.
"""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .pipeline import (
    OUTPUT_DIR_ENV,
    ConfigError,
    IngestError,
    IoFailure,
    load_config,
    run_dea_only,
    run_pipeline,
    validate,
)

EXIT_OK, EXIT_PARTIAL, EXIT_FATAL = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="camelg",
        description="Two-stage bank efficiency pipeline (SBM-DEA, then panel regressions).",
        epilog=f"{OUTPUT_DIR_ENV} overrides the configured output directory.",
    )
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in (("run", "run every stage and write all tables"),
                       ("validate", "load the inputs and report data issues"),
                       ("dea-only", "compute efficiency scores only")):
        cmd = sub.add_parser(name, help=text)
        cmd.add_argument("config", nargs="?", default=None,
                         help="INI config file (defaults: bundled synthetic data)")
    sub.add_parser("version", help="print the package version")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "version":
        print(f"camelg {__version__}")
        return EXIT_OK
    try:
        config = load_config(args.config)
        if args.command == "validate":
            report = validate(config)
            for issue in report.issues:
                print(f"issue: {issue}")
            print("ok" if report.ok else f"{len(report.issues)} issue(s)")
            return EXIT_OK if report.ok else EXIT_PARTIAL
        bundle = (run_pipeline if args.command == "run" else run_dea_only)(config)
    except (ConfigError, IngestError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL
    except IoFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL
    for line in bundle.summary:
        print(line)
    print(f"wrote {len(bundle.files)} files to {bundle.directory}")
    return bundle.exit_code


if __name__ == "__main__":
    sys.exit(main())
