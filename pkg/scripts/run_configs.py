"""Run every shipped experiment config and print one verdict line each.

Usage: python3 scripts/run_configs.py [--out DIR] [--no-plots] [config ...]
"""

import argparse
import sys
import time
from pathlib import Path

from cpslab.cli import main as cli_main

ROOT = Path(__file__).resolve().parent.parent


def main() -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("configs", nargs="*", type=Path)
    p.add_argument("--out", type=Path, default=ROOT / "cps-lab-out")
    p.add_argument("--no-plots", action="store_true")
    args = p.parse_args()
    configs = args.configs or sorted((ROOT / "configs").glob("*.toml"))
    worst = 0
    for cfg in configs:
        t0 = time.perf_counter()
        extra = ["--no-plots"] if args.no_plots else []
        code = cli_main(["run", str(cfg), "--out", str(args.out / cfg.stem), *extra])
        print(f"  exit {code} in {time.perf_counter() - t0:.1f}s")
        worst = max(worst, 1 if code == 1 else 0)
    return worst


if __name__ == "__main__":
    sys.exit(main())
