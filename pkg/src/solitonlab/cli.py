"""Command-line entry point: ``solitonlab verify | sweep | transport``.

Every run writes a JSON report and a flat CSV with one row per check.
Exit status is 0 when all checks pass, 1 when any fails and 2 for
configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import replace
from typing import Optional

from .errors import ConfigError, SolitonLabError
from .suites import (SWEEP, TRANSPORT_SUITES, VERIFY_SUITES, SuiteConfig, SuiteReport,
                     default_workers, run_suite)

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

_INT_KEYS = {"n", "points", "seed", "grid", "steps", "workers"}
_STR_KEYS = {"suite", "flow", "out", "kind", "pipeline", "metric"}
CONFIG_KEYS = _INT_KEYS | _STR_KEYS | {"N", "tol", "timing"}


def parse_N(text: str) -> tuple:
    try:
        vals = tuple(float(v) for v in text.replace(" ", "").split(",") if v)
    except ValueError as exc:
        raise ConfigError(f"bad N list {text!r}") from exc
    if not vals:
        raise ConfigError("empty N list")
    return vals


def parse_tolerances(items) -> dict:
    out = {}
    for item in items or ():
        for part in str(item).split(","):
            if not part.strip():
                continue
            if "=" not in part:
                raise ConfigError(f"tolerance override {part!r} is not name=value")
            k, v = part.split("=", 1)
            try:
                out[k.strip()] = float(v)
            except ValueError as exc:
                raise ConfigError(f"tolerance {k!r} must be a number") from exc
    return out


def read_config_file(path: str) -> dict:
    """Flat ``key=value`` file; ``#`` starts a comment."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path!r}: {exc}") from exc
    out = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_") if key.replace("-", "_") in CONFIG_KEYS else key
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def _coerce(key: str, value):
    if value is None:
        return None
    if key in _INT_KEYS:
        try:
            return int(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key} must be an integer, got {value!r}") from exc
    if key == "N":
        return parse_N(value) if isinstance(value, str) else tuple(value)
    if key == "tol":
        return parse_tolerances([value] if isinstance(value, str) else value)
    if key == "timing":
        return value if isinstance(value, bool) else str(value).lower() in ("1", "true", "yes")
    return value


def build_config(suite: Optional[str], args: argparse.Namespace) -> SuiteConfig:
    file_values = read_config_file(args.config) if getattr(args, "config", None) else {}
    merged = {k: _coerce(k, v) for k, v in file_values.items()}
    for key in CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None and flag != [] and flag is not False:
            merged[key] = _coerce(key, flag)
    if suite is not None:
        merged["suite"] = suite
    if not merged.get("suite"):
        raise ConfigError("no suite given")
    tol = merged.pop("tol", None) or {}
    cfg = SuiteConfig(suite=merged.pop("suite"))
    fields = {k: v for k, v in merged.items() if v is not None}
    fields.setdefault("workers", default_workers())
    cfg = replace(cfg, **fields, tolerances=tol)
    return cfg


def render_json(report: SuiteReport) -> str:
    return json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n"


def render_csv(report: SuiteReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["suite", "id", "value", "target", "tolerance", "pass", "note"])
    for r in report.rows:
        d = r.as_dict()
        w.writerow([report.config.suite, d["id"], repr(d["value"]), repr(d["target"]) if d["target"] is not None else "",
                    repr(d["tolerance"]), "1" if d["pass"] else "0", d["note"]])
    return buf.getvalue()


def _out_paths(out: str):
    base, ext = os.path.splitext(out)
    if ext.lower() in (".json", ".csv"):
        out = base
    return out + ".json", out + ".csv"


def write_report(report: SuiteReport, out: Optional[str]) -> None:
    if out is None:
        return
    jpath, cpath = _out_paths(out)
    parent = os.path.dirname(jpath)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(jpath, "w", encoding="utf-8") as fh:
        fh.write(render_json(report))
    with open(cpath, "w", encoding="utf-8") as fh:
        fh.write(render_csv(report))


def _summarise(report: SuiteReport, stream) -> None:
    failed = [r for r in report.rows if not r.passed]
    status = "PASS" if report.passed else "FAIL"
    print(f"{status} {report.config.suite}: {len(report.rows) - len(failed)}/{len(report.rows)} checks",
          file=stream)
    for r in failed[:20]:
        print(f"  failed {r.id}: value={r.value!r} tolerance={r.tolerance!r}", file=stream)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value file; command-line flags override it")
    p.add_argument("--out", help="report path stem; writes <stem>.json and <stem>.csv")
    p.add_argument("--seed", type=int)
    p.add_argument("--points", type=int, help="number of sample points or instances")
    p.add_argument("--workers", type=int, help="thread pool size")
    p.add_argument("--tol", action="append", default=[], metavar="NAME=VALUE",
                   help="override a named tolerance (repeatable)")
    p.add_argument("--timing", action="store_true", help="record wall time (reports stop being byte-stable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="solitonlab",
                                     description="Numerical checks for space-time soliton constructions.")
    sub = parser.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="run one soliton or geodesic suite")
    v.add_argument("suite", choices=sorted(VERIFY_SUITES))
    v.add_argument("--flow", help="flow key, e.g. sphere2, flat2, hyp2, prod:sphere2+flat1")
    v.add_argument("--n", type=int, help="dimension (required for bare family names)")
    v.add_argument("--N", help="comma separated, strictly increasing N values")
    v.add_argument("--kind", choices=("shrinking", "steady"))
    v.add_argument("--pipeline", choices=("closed-form", "numeric", "full-fd"))
    _add_common(v)

    s = sub.add_parser("sweep", help="run every suite with its default configuration")
    _add_common(s)

    t = sub.add_parser("transport", help="run one transport suite")
    t.add_argument("suite", choices=sorted(TRANSPORT_SUITES))
    t.add_argument("--grid", type=int, help="number of cells M")
    t.add_argument("--steps", type=int, help="number of monitored time levels")
    t.add_argument("--metric", choices=("static", "shrinking", "expanding"),
                   help="circle metric for thm31 (default: all three, expanding as control)")
    _add_common(t)
    return parser


def _sweep(args, stream) -> int:
    base = build_config("sweep-placeholder", args)
    all_pass = True
    summary = []
    for idx, (suite, overrides) in enumerate(SWEEP):
        cfg = replace(base, suite=suite, **overrides)
        report = run_suite(cfg)
        _summarise(report, stream)
        if args.out:
            write_report(report, os.path.join(args.out, f"{idx:02d}-{suite}"))
        all_pass &= report.passed
        summary.append({"index": idx, "suite": suite, "overrides": {k: list(v) if isinstance(v, tuple) else v
                                                                    for k, v in overrides.items()},
                        "pass": report.passed, "failed": sum(not r.passed for r in report.rows)})
    if args.out:
        with open(os.path.join(args.out, "summary.json"), "w", encoding="utf-8") as fh:
            fh.write(json.dumps({"pass": all_pass, "suites": summary}, indent=2, sort_keys=True) + "\n")
    return EXIT_PASS if all_pass else EXIT_FAIL


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    stream = sys.stdout
    try:
        if args.command == "sweep":
            return _sweep(args, stream)
        cfg = build_config(args.suite, args)
        report = run_suite(cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolitonLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    write_report(report, cfg.out)
    _summarise(report, stream)
    return EXIT_PASS if report.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
