#!/usr/bin/env python3
"""Constant-capacity comparison: run the two-device scenario under every
policy, print completion times, and emit per-slot CSVs plus battery figures
(figures only if the coopalloc-plots package is installed)."""
import argparse
import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--out-dir", default="results/constant_caps")
    parser.add_argument("--config", default=str(ROOT / "configs" / "constant_caps.yaml"))
    args = parser.parse_args()

    from coopalloc.config import parse_config
    from coopalloc.cli import run_single, write_per_slot_csv, write_summary_json

    scenario = parse_config(args.config)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    for policy in ("aact", "no-coop", "sequential", "aact-distributed"):
        outcome = run_single(scenario, policy=policy)
        sub = out / policy
        sub.mkdir(exist_ok=True)
        write_per_slot_csv(sub / "per_slot.csv", outcome)
        write_summary_json(sub / "summary.json", outcome)
        s = outcome.summary
        print(
            f"{policy:18s} completion={s.completion_times} "
            f"final_battery={tuple(round(b, 3) for b in s.final_battery)}"
        )
        try:
            subprocess.run(
                [sys.executable, "-m", "coopplots", "battery",
                 str(sub / "per_slot.csv"), str(sub / "battery.svg")],
                check=True,
            )
        except (subprocess.CalledProcessError, FileNotFoundError, ModuleNotFoundError):
            print("  (plots package not installed; skipped figure)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
