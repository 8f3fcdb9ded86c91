#!/usr/bin/env python3
"""ON/OFF channel sweep: completion time vs availability for the oracle,
average, and distributed variants. Takes a few minutes at the full 20
repetitions; use --repetitions to shrink it."""
import argparse
import subprocess
import sys
from dataclasses import replace
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--out-dir", default="results/pon")
    parser.add_argument("--config", default=str(ROOT / "configs" / "pon_sweep.yaml"))
    parser.add_argument("--repetitions", type=int, default=None)
    parser.add_argument("--workers", type=int, default=None)
    args = parser.parse_args()

    from coopalloc.cli import run_sweep
    from coopalloc.config import Scenario, parse_config

    scenario = parse_config(args.config)
    if args.repetitions:
        scenario = Scenario(
            specs=scenario.specs,
            sim=scenario.sim,
            sweep=replace(scenario.sweep, repetitions=args.repetitions),
        )
    out = Path(args.out_dir)
    files = run_sweep(scenario, out, workers=args.workers)
    print(files[0])
    try:
        subprocess.run(
            [sys.executable, "-m", "coopplots", "pon", str(files[0]), "0",
             str(out / "completion_vs_pon.svg")],
            check=True,
        )
    except (subprocess.CalledProcessError, FileNotFoundError, ModuleNotFoundError):
        print("(plots package not installed; skipped figure)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
