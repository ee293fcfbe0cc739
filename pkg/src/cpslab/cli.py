"""Command line entry point: ``cps-lab run`` and ``cps-lab validate``.

Exit status: 0 on PASS or a completed experiment, 2 on a FAIL verdict,
1 on configuration or runtime errors.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, load_config
from .errors import CpsLabError

log = logging.getLogger("cpslab")

SCHEMA_VERSION = 1
OUT_ENV = "CPS_LAB_OUT"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def _dump_json(data, target: Path) -> str:
    text = json.dumps(_jsonable(data), indent=2, sort_keys=True, allow_nan=True) + "\n"
    target.write_text(text, encoding="utf-8")
    return hashlib.sha256(text.encode()).hexdigest()


def _write_csv(rows: list[dict], target: Path) -> str:
    fields: list[str] = []
    for row in rows:
        fields.extend(k for k in row if k not in fields)
    with target.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\r\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return hashlib.sha256(target.read_bytes()).hexdigest()


def _output_dir(cfg: ExperimentConfig, config_path: Path, override: str | None) -> Path:
    if override:
        return Path(override)
    if cfg.output_dir:
        return Path(cfg.output_dir)
    root = Path(os.environ.get(OUT_ENV, "cps-lab-out"))
    return root / config_path.stem


def _config_echo(cfg: ExperimentConfig) -> dict:
    model = None
    if cfg.model is not None:
        m = cfg.model
        model = {
            "kind": m.kind,
            "sigma": m.sigma,
            "x0": m.x0,
            "hurst": m.hurst,
            "transform_id": m.transform_id,
            "driver_kind": m.driver_kind,
            "tag": m.tag,
        }
    return {
        "experiment": cfg.experiment,
        "n_paths": cfg.n_paths,
        "base_seed": cfg.base_seed,
        "grid": {"horizon": cfg.grid.horizon, "n_steps": cfg.grid.n_steps},
        "model": model,
        "delta0": cfg.delta0,
        "source_sha256": cfg.source_sha256,
    }


def _set_threads(k: int | None) -> None:
    if not k:
        return
    import numba

    numba.set_num_threads(max(1, min(k, numba.config.NUMBA_NUM_THREADS)))


def cmd_run(args) -> int:
    from .experiments import run_experiment

    config_path = Path(args.config)
    cfg = load_config(config_path)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    _set_threads(args.threads)
    out = _output_dir(cfg, config_path, args.out)
    out.mkdir(parents=True, exist_ok=True)

    outcome = run_experiment(cfg)
    report = {
        "schema_version": SCHEMA_VERSION,
        "toolkit_version": __version__,
        "config": _config_echo(cfg),
        "verdict": outcome.verdict,
        "results": outcome.results,
    }
    files = {
        "report.json": _dump_json(report, out / "report.json"),
        "summary.csv": _write_csv(outcome.rows, out / "summary.csv"),
    }
    if outcome.plots and not args.no_plots:
        from .plots import write_plots

        try:
            for name in write_plots(outcome.plots, out):
                files[name] = hashlib.sha256((out / name).read_bytes()).hexdigest()
        except Exception as exc:  # plots never change the verdict
            log.warning("plotting failed: %s", exc)
    manifest = {
        "toolkit_version": __version__,
        "config_path": str(config_path),
        "config_sha256": cfg.source_sha256,
        "experiment": cfg.experiment,
        "base_seed": cfg.base_seed,
        "n_paths": cfg.n_paths,
        "seed_derivation": "path i uses splitmix64(base_seed, i) with a PCG64 generator",
        "files": files,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "created_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    _dump_json(manifest, out / "manifest.json")
    print(f"{cfg.experiment}: {outcome.verdict} -> {out}")
    return outcome.exit_code


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    print(f"{args.config}: valid {cfg.experiment} configuration")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cps-lab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config")
    run.add_argument("--out", help="output directory")
    run.add_argument("--seed", type=int, help="override base_seed")
    run.add_argument("--threads", type=int, help="cap on worker threads")
    run.add_argument("--no-plots", action="store_true")
    run.set_defaults(func=cmd_run)
    val = sub.add_parser("validate", help="check a config without simulating")
    val.add_argument("config")
    val.set_defaults(func=cmd_validate)
    return p


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CpsLabError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
