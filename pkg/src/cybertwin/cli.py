"""Command-line entry point: ``validate``, ``run`` and ``report``.

Exit codes: 0 success, 1 usage error or missing artifacts, 2 config error,
3 simulation error. ``CYBERTWIN_LOG`` sets the log level (default WARNING).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
import tempfile

from .config import load_config
from .errors import ConfigError, CybertwinError, MissingArtifacts
from .harness.metrics import render_table
from .harness.scenario import MODES, Scenario, dumps_compare

log = logging.getLogger("cybertwin")

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_SIM = 0, 1, 2, 3

ARTIFACTS = ("report.json", "trace.ndjson", "ledger.csv", "contracts.ndjson", "registry.ndjson",
             "timeseries.csv", "compare.json")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cybertwin", description="Cybertwin network simulator.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    v = sub.add_parser("validate", help="check a run config")
    v.add_argument("path")
    r = sub.add_parser("run", help="run a scenario and write its artifacts")
    r.add_argument("path")
    r.add_argument("--mode", choices=MODES + ("both",), default="cybertwin")
    r.add_argument("--seed", type=int, default=None, help="override the config seed")
    r.add_argument("--out", default=None, help="output directory (default: the config's output_dir)")
    rep = sub.add_parser("report", help="print the metric table of a run directory")
    rep.add_argument("dir")
    return p


def _configure_logging() -> None:
    level = os.environ.get("CYBERTWIN_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _config_failure(exc: ConfigError) -> int:
    for line in exc.diagnostics:
        print(line, file=sys.stderr)
    return EXIT_CONFIG


def cmd_validate(path: str) -> int:
    try:
        load_config(path)
    except ConfigError as exc:
        return _config_failure(exc)
    print("OK")
    return EXIT_OK


def _artifacts(result) -> dict:
    return {
        "report.json": result.report.dumps() + "\n",
        "trace.ndjson": result.trace_ndjson(),
        "ledger.csv": result.ledger_csv(),
        "contracts.ndjson": result.contracts_ndjson(),
        "registry.ndjson": result.registry_ndjson(),
        "timeseries.csv": result.timeseries_csv(),
    }


def write_atomically(out_dir: str, files: dict) -> None:
    """Write every file into a scratch directory, then move them into place.

    A failure before the move leaves ``out_dir`` untouched. Artifacts from an
    earlier run that this run does not produce are removed so the directory
    never mixes two runs.
    """
    out_dir = os.path.abspath(out_dir)
    parent = os.path.dirname(out_dir)
    os.makedirs(parent, exist_ok=True)
    tmp = tempfile.mkdtemp(prefix=".cybertwin-", dir=parent)
    try:
        for name, text in files.items():
            with open(os.path.join(tmp, name), "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        if not os.path.exists(out_dir):
            os.replace(tmp, out_dir)
            return
        for name in ARTIFACTS:
            if name not in files and os.path.exists(os.path.join(out_dir, name)):
                os.remove(os.path.join(out_dir, name))
        for name in files:
            os.replace(os.path.join(tmp, name), os.path.join(out_dir, name))
    finally:
        shutil.rmtree(tmp, ignore_errors=True)


def cmd_run(path: str, mode: str = "cybertwin", seed=None, out=None) -> int:
    try:
        rc = load_config(path)
    except ConfigError as exc:
        return _config_failure(exc)
    if seed is not None:
        rc = rc.with_seed(seed)
    out = out or rc.output_dir
    if out is None:
        print("cybertwin: error: no --out given and the config has no output_dir", file=sys.stderr)
        return EXIT_USAGE
    modes = MODES if mode == "both" else (mode,)
    try:
        results = {}
        for m in modes:
            log.info("running %s seed=%d", m, rc.seed)
            results[m] = Scenario(rc.scenario, m).run()
        files = _artifacts(results[modes[0]])
        if mode == "both":
            files["compare.json"] = dumps_compare({m: r.report.to_json() for m, r in results.items()}) + "\n"
    except CybertwinError as exc:
        print(f"simulation error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SIM
    write_atomically(out, files)
    for m, r in results.items():
        print(f"{m}: determinism hash {r.report.determinism_hash}")
    print(f"artifacts written to {out}")
    return EXIT_OK


def load_reports(out_dir: str) -> dict:
    """``{mode: report dict}`` from a run directory; compare.json wins if present."""
    cmp_path = os.path.join(out_dir, "compare.json")
    rep_path = os.path.join(out_dir, "report.json")
    if os.path.isfile(cmp_path):
        with open(cmp_path, encoding="utf-8") as fh:
            return json.load(fh)
    if os.path.isfile(rep_path):
        with open(rep_path, encoding="utf-8") as fh:
            report = json.load(fh)
        return {report.get("mode", "run"): report}
    raise MissingArtifacts(f"{out_dir}: no report.json or compare.json")


def cmd_report(out_dir: str) -> int:
    try:
        reports = load_reports(out_dir)
    except MissingArtifacts as exc:
        print(f"cybertwin: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, json.JSONDecodeError) as exc:
        print(f"cybertwin: unreadable artifacts in {out_dir}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    sys.stdout.write(render_table(reports))
    return EXIT_OK


def main(argv=None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        return cmd_validate(args.path)
    if args.command == "run":
        return cmd_run(args.path, args.mode, args.seed, args.out)
    return cmd_report(args.dir)


if __name__ == "__main__":
    sys.exit(main())
