"""``lorlab <experiment> --config <path> [--out <dir>] [--threads N] [--expect-negative]``.

Writes ``report.json`` (schema ``lorlab-report/1``), one CSV per scalar
field and ``timings.json`` under ``--out``.  The report holds no timings or
paths, so identical configs and seeds give byte-identical reports.

Exit codes: 0 all checks pass, 1 a check failed (or a module rejected the
input), 2 usage or configuration error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from .config import EXPERIMENTS, load_config
from .errors import LorlabError, UsageError
from .experiments import run_experiment
from .grid import write_field_csv
from .parallel import resolve_threads

SCHEMA = "lorlab-report/1"
EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_INTERNAL = 0, 1, 2, 3


def plain(obj):
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats as strings."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def dump_report(report: dict) -> str:
    return json.dumps(plain(report), sort_keys=True, indent=2) + "\n"


def build_report(cfg, outcome, expect_negative: bool) -> tuple:
    checks = [c.as_dict() for c in outcome.checks]
    ok = True
    for c, d in zip(outcome.checks, checks):
        if c.primary and expect_negative:
            passed = (not c.passed) if c.negative_passed is None else c.negative_passed
            d["expected_negative"] = True
            d["counted_as_passed"] = bool(passed)
        else:
            passed = c.passed
        ok &= bool(passed)
    report = {
        "schema": SCHEMA,
        "tool": {"name": "lorlab", "version": __version__},
        "experiment": cfg.experiment,
        "config": cfg.echo(),
        "expect_negative": expect_negative,
        "checks": checks,
        "results": outcome.results,
        "fields": sorted(f"{name}.csv" for name in outcome.fields),
        "verdict": "pass" if ok else "fail",
    }
    return report, ok


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="lorlab", description="Run a lorlab experiment.")
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", required=True, help="path to a key = value config file")
    parser.add_argument("--out", default="lorlab-out", help="output directory (default: lorlab-out)")
    parser.add_argument("--threads", type=int, default=None, help="worker cap (default: $LORLAB_THREADS or 1)")
    parser.add_argument("--expect-negative", action="store_true",
                        help="the primary check is expected to fail (negative control)")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_PASS

    out_dir = Path(args.out)
    report_path = out_dir / "report.json"
    started = time.perf_counter()
    cfg = None
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        threads = resolve_threads(args.threads)
        cfg = load_config(args.config, args.experiment)
        expect_negative = bool(args.expect_negative or cfg.get("expect.negative", False))
        outcome = run_experiment(cfg, threads)
        report, ok = build_report(cfg, outcome, expect_negative)
        for name, field in sorted(outcome.fields.items()):
            write_field_csv(field, out_dir / f"{name}.csv")
        code = EXIT_PASS if ok else EXIT_FAIL
    except UsageError as exc:
        report, code = _error_report(args.experiment, cfg, exc), EXIT_USAGE
    except (LorlabError, ValueError) as exc:
        report, code = _error_report(args.experiment, cfg, exc), EXIT_FAIL
    except Exception as exc:  # noqa: BLE001 - reported as an internal error
        report, code = _error_report(args.experiment, cfg, exc), EXIT_INTERNAL
        report["error"]["traceback"] = traceback.format_exc().splitlines()
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        report_path.write_text(dump_report(report))
        (out_dir / "timings.json").write_text(
            json.dumps({"seconds": round(time.perf_counter() - started, 3)}, indent=2) + "\n"
        )
    except OSError as exc:
        print(f"lorlab: cannot write outputs: {exc}", file=sys.stderr)
        return EXIT_USAGE
    summary = report.get("verdict", "error")
    print(f"lorlab {args.experiment}: {summary} (exit {code}); report at {report_path}")
    if "error" in report:
        print(f"  {report['error']['type']}: {report['error']['message']}", file=sys.stderr)
    else:
        for c in report["checks"]:
            mark = "ok  " if c.get("counted_as_passed", c["passed"]) else "FAIL"
            note = " (expected negative)" if c.get("expected_negative") else ""
            print(f"  [{mark}] {c['name']}: {plain(c['measured'])} {c['relation']} {plain(c['tolerance'])}{note}")
    return code


def _error_report(experiment, cfg, exc) -> dict:
    return {
        "schema": SCHEMA,
        "tool": {"name": "lorlab", "version": __version__},
        "experiment": experiment,
        "config": cfg.echo() if cfg is not None else None,
        "error": {"type": type(exc).__name__, "message": str(exc)},
        "verdict": "error",
    }


if __name__ == "__main__":
    sys.exit(main())
