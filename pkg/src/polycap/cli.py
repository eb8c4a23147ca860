"""Command line entry point: ``polycap run|verify|list-examples``.

Exit codes: 0 success, 1 usage or configuration error, 2 a verdict or
regression check failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from importlib import resources
from pathlib import Path

import jsonschema

from .config import ConfigError, load_config, parse_config
from .harness import default_workers, record_schema, run_experiment, worker_map, write_outputs

log = logging.getLogger("polycap")

EXIT_OK, EXIT_ERROR, EXIT_FAILED = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _examples_dir():
    return resources.files("polycap").joinpath("examples")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="polycap", description="Polynomial capacities and Poincare constants on grids.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config", help="YAML config, or the name of a bundled example")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.add_argument("--workers", type=int, default=None,
                     help="worker processes (default: $POLYCAP_WORKERS or the CPU count)")
    run.add_argument("--out-dir", type=Path, default=None, help="output directory (default: config output.dir or .)")
    run.add_argument("--format", choices=("json", "csv", "both"), default=None)
    run.add_argument("--fixture", type=Path, default=None, help="regression fixture for equivalence runs")

    ver = sub.add_parser("verify", help="run an acceptance suite")
    ver.add_argument("suite", help="suite name, or 'all'")
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--workers", type=int, default=None)
    ver.add_argument("--out-dir", type=Path, default=None, help="write a JSON summary here")
    ver.add_argument("--fixtures", type=Path, default=None, help="fixture directory")

    sub.add_parser("list-examples", help="list bundled example configs")
    return ap


def _resolve_config(name: str) -> Path:
    p = Path(name)
    if p.exists():
        return p
    bundled = _examples_dir().joinpath(name if name.endswith(".yaml") else f"{name}.yaml")
    if bundled.is_file():
        return Path(str(bundled))
    return p


def cmd_run(args) -> int:
    cfg = load_config(_resolve_config(args.config)).with_seed(args.seed)
    out = cfg.data.get("output", {})
    out_dir = args.out_dir or Path(out.get("dir", "."))
    fmt = args.format or out.get("format", "both")
    fixture = args.fixture or (Path(out["fixture"]) if "fixture" in out else None)
    stem = cfg.data.get("name") or Path(cfg.source).stem
    workers = args.workers if args.workers is not None else default_workers()
    log.info("running %s (%d items, %d workers)", stem, len(cfg.items), workers)
    with worker_map(workers) as map_fn:
        record, timing = run_experiment(cfg, map_fn, fixture)
    jsonschema.validate(json.loads(json.dumps(record)), record_schema())
    for p in write_outputs(record, timing, out_dir, stem, fmt):
        print(p)
    for name, ok in record["verdicts"].items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    return EXIT_OK if record["passed"] else EXIT_FAILED


def cmd_verify(args) -> int:
    from .acceptance import ALL_SUITES, run_suite

    names = list(ALL_SUITES) if args.suite == "all" else [args.suite]
    unknown = [n for n in names if n not in ALL_SUITES]
    if unknown:
        print(f"polycap: unknown suite {unknown[0]!r}; choose from {', '.join(ALL_SUITES)} or 'all'", file=sys.stderr)
        return EXIT_ERROR
    checks = []
    workers = args.workers if args.workers is not None else default_workers()
    with worker_map(workers) as map_fn:
        for name in names:
            for c in run_suite(name, map_fn, seed=args.seed, fixtures=args.fixtures):
                print(c.line(), flush=True)
                checks.append(c)
    passed = all(c.passed for c in checks)
    if args.out_dir is not None:
        args.out_dir.mkdir(parents=True, exist_ok=True)
        summary = {"suites": names, "passed": passed, "checks": [c.as_dict() for c in checks]}
        (args.out_dir / "verify.json").write_text(json.dumps(summary, indent=2, sort_keys=True, default=str) + "\n")
    print(f"{sum(c.passed for c in checks)}/{len(checks)} checks passed")
    return EXIT_OK if passed else EXIT_FAILED


def cmd_list_examples(args) -> int:
    status = EXIT_OK
    for f in sorted(_examples_dir().iterdir(), key=lambda f: f.name):
        if not f.name.endswith(".yaml"):
            continue
        try:
            cfg = parse_config(f.read_text(), f.name)
        except ConfigError as exc:
            print(f"{f.name:36s} INVALID {exc}")
            status = EXIT_ERROR
            continue
        desc = cfg.data.get("description", "").strip().splitlines()
        print(f"{f.name[:-5]:36s} {cfg.experiment:20s} {desc[0] if desc else ''}")
    return status


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "verify":
            return cmd_verify(args)
        return cmd_list_examples(args)
    except ConfigError as exc:
        print(f"polycap: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, OSError) as exc:
        print(f"polycap: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
