"""Command-line entry point: ``arealaw <subcommand> [--config FILE] [--out DIR]``.

Exit codes: 0 success, 1 usage or config error, 2 numerical failure,
3 bound falsification.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import os
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, bounds
from .config import SCHEMA_VERSION, ConfigError, load_config, parse_config_text, validate_config
from .experiments import RUNNERS, ExperimentResult, Table, grid_points, sweep_point

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_FALSIFIED = 0, 1, 2, 3
WORKERS_ENV = "AREALAW_WORKERS"
SUBCOMMANDS = ("run", "quench", "lr-truncation", "shells", "qac", "ghz", "bounds", "sweep")

logger = logging.getLogger("arealaw")


def write_table(path: Path, table: Table) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, quoting=csv.QUOTE_MINIMAL, lineterminator="\n")
        w.writerow(table.header)
        w.writerows(table.rows)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def _cell(v):
    if v is None:
        return ""
    return f"{v:.12e}" if isinstance(v, float) else v


def run_sweep(exp: dict, workers: int, base_dir: Path | None) -> ExperimentResult:
    points = grid_points(exp)
    base = exp["base"]
    if workers > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(sweep_point, [base] * len(points), points, [base_dir] * len(points)))
    else:
        rows = [sweep_point(base, p, base_dir) for p in points]
    header = ["model", "alpha", "N", "status", "bound", "min_margin", "max_rate", "max_fd_difference", "error"]
    table = Table(header, [[r[h] if h == "alpha" else _cell(r[h]) for h in header] for r in rows])
    res = ExperimentResult(exp.get("name", "sweep"), "sweep", {"sweep": table})
    res.falsified = any(r["status"] == "falsified" for r in rows)
    failed = [r for r in rows if r["status"] == "failed"]
    res.summary = {"points": len(rows), "failed": len(failed)}
    if failed:
        res.summary["failures"] = [f"{r['model']} alpha={r['alpha']} N={r['N']}: {r['error']}" for r in failed]
    return res


def execute(experiments: list[dict], out: Path, *, seed: int, workers: int, base_dir: Path | None,
            config_text: str | None = None) -> int:
    """Run experiments, write CSVs and the manifest, return the exit code."""
    out.mkdir(parents=True, exist_ok=True)
    entries, code = [], EXIT_OK
    for k, exp in enumerate(experiments):
        name = exp.get("name") or (exp["kind"] if len(experiments) == 1 else f"{exp['kind']}-{k}")
        exp = {**exp, "name": name}
        entry = {"name": name, "kind": exp["kind"], "status": "ok", "files": []}
        try:
            if exp["kind"] == "sweep":
                res = run_sweep(exp, workers, base_dir)
                if res.summary.get("failed"):
                    entry["status"] = "failed-points"
                    code = max(code, EXIT_NUMERICAL)
            else:
                res = RUNNERS[exp["kind"]](exp, base_dir=base_dir, seed=seed)
        except bounds.BoundFalsified as exc:
            entry.update(status="falsified", error=str(exc))
            code = max(code, EXIT_FALSIFIED)
            entries.append(entry)
            continue
        except Exception as exc:
            logger.error("%s failed: %s", name, exc)
            entry.update(status="failed", error=f"{type(exc).__name__}: {exc}")
            code = max(code, EXIT_NUMERICAL)
            entries.append(entry)
            continue
        for tname, table in res.tables.items():
            fname = f"{name}_{tname}.csv"
            write_table(out / fname, table)
            entry["files"].append(fname)
        if res.reports:
            fname = f"{name}_reports.json"
            (out / fname).write_text(json.dumps(_jsonable(res.reports), indent=1, sort_keys=True) + "\n")
            entry["files"].append(fname)
        entry["summary"] = _jsonable(res.summary)
        if res.falsified:
            entry["status"] = "falsified"
            code = max(code, EXIT_FALSIFIED)
        entries.append(entry)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "tool": {"name": "arealaw", "version": __version__, "python": platform.python_version(),
                 "numpy": np.__version__},
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "seed": seed,
        "workers": workers,
        "frozen_constants": {k: asdict(v) for k, v in bounds.FROZEN_LR_PARAMS.items()},
        "config": config_text,
        "experiments": entries,
        "exit_code": code,
    }
    (out / "manifest.json").write_text(json.dumps(_jsonable(manifest), indent=1, sort_keys=True) + "\n")
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="arealaw", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"arealaw {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=f"{name} experiment" if name != "run" else "run every experiment in a config")
        p.add_argument("--config", type=Path, required=name in ("run", "sweep"), help="YAML config file")
        p.add_argument("--out", type=Path, default=Path("arealaw-out"), help="output directory")
        p.add_argument("--workers", type=int, default=None,
                       help=f"sweep worker processes (default: ${WORKERS_ENV} or 1)")
        p.add_argument("--seed", type=int, default=None, help="RNG seed for sampled checks")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    kind = None if args.command == "run" else args.command
    try:
        if args.config is not None:
            cfg = load_config(args.config)
            base_dir = args.config.resolve().parent
            text = args.config.read_text()
        else:
            cfg = parse_config_text("{}", "<defaults>")
            base_dir, text = None, None
        experiments = validate_config(cfg, kind)
        data = cfg.data if isinstance(cfg.data, dict) else {}
        seed = args.seed if args.seed is not None else int(data.get("seed", 0))
        env = os.environ.get(WORKERS_ENV)
        workers = args.workers or (int(env) if env else None) or int(data.get("workers", 1))
        if workers < 1:
            raise ConfigError("workers must be >= 1")
    except ConfigError as exc:
        print(f"arealaw: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"arealaw: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    code = execute(experiments, args.out, seed=seed, workers=workers, base_dir=base_dir, config_text=text)
    if code:
        print(f"arealaw: finished with exit code {code}; see {args.out / 'manifest.json'}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
