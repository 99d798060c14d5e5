"""Command-line front end: ``empowerment run|verify <config.json>``."""
from __future__ import annotations

import argparse
import logging
import platform
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy

from . import export
from .config import ConfigError, RunConfig, load_config
from .infotheory import ValidationError
from .scenarios import RUNNERS, Artifacts

EXIT_OK, EXIT_COMPUTE, EXIT_CONFIG = 0, 1, 2
N_GRID_ACTIONS = 5

log = logging.getLogger("empowerment")


def _versions() -> dict:
    try:
        pkg = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        pkg = "unknown"
    return {"package": pkg, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__}


def advisories(cfg: RunConfig) -> list[str]:
    """Non-fatal warnings about a config, mainly enumeration budget overruns."""
    p = cfg.params
    notes = []
    solver = p.get("solver") or {}
    budget = solver.get("budget")
    if cfg.scenario in ("maze", "box", "horizon-sweep") and p["method"] == "ba":
        horizons = p.get("horizons") or [p["horizon"]]
        for n in horizons:
            if N_GRID_ACTIONS**n > budget:
                notes.append(
                    f"horizon {n}: {N_GRID_ACTIONS}^{n} = {N_GRID_ACTIONS**n} action sequences exceed "
                    f"the enumeration budget {budget}; use method 'impoverished' "
                    "(segment length, segments, budget) for long horizons"
                )
    if cfg.scenario in ("maze", "box", "horizon-sweep", "impoverished") and p["method"] == "impoverished":
        if N_GRID_ACTIONS**p["horizon"] > budget:
            notes.append(f"segment length {p['horizon']} exceeds the enumeration budget {budget}; "
                         "use shorter segments and more of them")
    if cfg.scenario == "context" and not p.get("model_file"):
        count = p["random_actions"] ** p["horizon"]
        if count > budget:
            notes.append(f"{count} action sequences exceed the enumeration budget {budget}; "
                         "impoverished mode is the only option at this horizon")
    return notes


def execute(cfg: RunConfig, out: Path | None = None) -> dict:
    """Run a validated config and write artifacts plus ``manifest.json``."""
    root = Path(out if out is not None else cfg.output_dir)
    art = Artifacts(root)
    t0 = time.perf_counter()
    summary = RUNNERS[cfg.scenario](cfg, art)
    elapsed = time.perf_counter() - t0
    manifest = {
        "config": cfg.echo(),
        "versions": _versions(),
        "wall_clock_seconds": elapsed,
        "summary": summary,
        "artifacts": [
            {"path": p.relative_to(root).as_posix(), "sha256": export.sha256(p), "bytes": p.stat().st_size}
            for p in art.paths
        ],
    }
    export.write_json(root / "manifest.json", manifest)
    return manifest


def _load(args) -> RunConfig:
    return load_config(args.config, output_dir=args.out, workers=args.workers, seed=args.seed)


def cmd_run(args) -> int:
    cfg = _load(args)
    for note in advisories(cfg):
        log.warning("advisory: %s", note)
    manifest = execute(cfg)
    print(export.dumps({"scenario": cfg.scenario, "output_dir": cfg.output_dir,
                        "summary": manifest["summary"]}), end="")
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _load(args)
    print(export.dumps(cfg.echo()), end="")
    for note in advisories(cfg):
        print(f"advisory: {note}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="empowerment", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, text in (("run", cmd_run, "run a scenario and write its artifacts"),
                           ("verify", cmd_verify, "validate a config and print resolved parameters")):
        p = sub.add_parser(name, help=text)
        p.add_argument("config", type=Path)
        p.add_argument("--out", help="output directory (overrides output_dir)")
        p.add_argument("--workers", type=int, help="worker processes (overrides workers)")
        p.add_argument("--seed", type=int, help="RNG seed (overrides seed)")
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as exc:
        for line in exc.errors:
            print(f"config error: {line}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValidationError, ValueError, ArithmeticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
