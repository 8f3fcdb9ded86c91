#!/usr/bin/env python3
"""Completion times versus group size: concurrent cooperation against the
one-application-at-a-time baseline."""
import argparse
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--out-dir", default="results/device_sweep")
    parser.add_argument("--config", default=str(ROOT / "configs" / "device_sweep.yaml"))
    args = parser.parse_args()

    from coopalloc.cli import run_sweep
    from coopalloc.config import parse_config

    scenario = parse_config(args.config)
    files = run_sweep(scenario, Path(args.out_dir))
    print(files[0])

    from coopalloc.cli import run_single

    print(f"{'N':>3} {'policy':>12} {'app 0':>6} {'app 1':>6}")
    for n in (1, 2, 3, 4):
        for policy in ("aact", "sequential"):
            s = run_single(scenario, policy=policy, n_devices=n).summary
            c = s.completion_times
            print(f"{n:>3} {policy:>12} {c[0]:>6} {c[1]:>6}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
