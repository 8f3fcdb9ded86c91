"""Render figures from the simulator's per-slot and sweep CSV files.

Pure transformations: read a CSV, write an image, return the plotted data so
callers can cross-check markers against the run's summary JSON.
"""
from __future__ import annotations

import csv
from collections import OrderedDict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

PER_SLOT_COLUMNS = [
    "run_id", "t", "device_id", "app_id", "eta_ij", "eta_j",
    "w_used", "c_used", "battery", "remaining_work",
]
SWEEP_COLUMNS = [
    "param", "value", "policy", "app_id",
    "mean_completion", "std_completion", "mean_battery_at_completion",
]


class CsvSchemaError(ValueError):
    pass


def _read_rows(path: str | Path, required: list[str]) -> list[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise CsvSchemaError(f"{path}: missing columns {missing}")
        rows = list(reader)
    if not rows:
        raise CsvSchemaError(f"{path}: no data rows")
    return rows


def plot_battery_timeseries(per_slot_csv: str | Path, out_image: str | Path) -> dict:
    """Battery level of every device over time, with each application's
    completion slot marked; applications that never finish are noted in the
    legend instead.

    Returns the plotted data: per-device series and per-app completion slots
    (1-indexed, None when unfinished).
    """
    rows = _read_rows(per_slot_csv, PER_SLOT_COLUMNS)

    battery: dict[int, OrderedDict[int, float]] = {}
    remaining: dict[int, OrderedDict[int, float]] = {}
    for row in rows:
        t = int(row["t"])
        dev = int(row["device_id"])
        app = int(row["app_id"])
        battery.setdefault(dev, OrderedDict())[t] = float(row["battery"])
        remaining.setdefault(app, OrderedDict())[t] = float(row["remaining_work"])

    completion: dict[int, int | None] = {}
    for app, series in remaining.items():
        completion[app] = None
        for t, left in series.items():
            if left <= 0.0:
                completion[app] = t + 1  # slot counts are 1-indexed
                break

    fig, ax = plt.subplots(figsize=(7, 4))
    for dev in sorted(battery):
        ts = list(battery[dev].keys())
        ax.plot([t + 1 for t in ts], list(battery[dev].values()), label=f"device {dev}")

    top = max(max(s.values()) for s in battery.values())
    for app in sorted(completion):
        slot = completion[app]
        if slot is None:
            ax.plot([], [], " ", label=f"app {app}: not completed")
            continue
        ax.axvline(slot, color="black", linestyle=":", linewidth=0.8)
        ax.annotate(
            f"app {app} done",
            xy=(slot, 0.0),
            xytext=(slot, top * (0.35 + 0.12 * (app % 4))),
            arrowprops={"arrowstyle": "->", "color": "black"},
            ha="center",
            fontsize=8,
        )

    ax.set_xlabel("time slot")
    ax.set_ylabel("battery level")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(out_image)
    plt.close(fig)
    return {
        "devices": sorted(battery),
        "completion": completion,
        "out": str(out_image),
    }


def plot_completion_vs_pon(
    sweep_csv: str | Path, app_id: int, out_image: str | Path
) -> dict:
    """Mean completion time (and battery at completion) of one application
    against channel availability, one error-barred series per policy label.

    Returns the plotted series keyed by policy label.
    """
    rows = _read_rows(sweep_csv, SWEEP_COLUMNS)
    rows = [r for r in rows if r["param"] == "p_on" and int(r["app_id"]) == int(app_id)]
    if not rows:
        raise CsvSchemaError(f"{sweep_csv}: no p_on rows for app {app_id}")

    series: dict[str, list[tuple[float, float, float, float]]] = {}
    for row in rows:
        series.setdefault(row["policy"], []).append(
            (
                float(row["value"]),
                float(row["mean_completion"]),
                float(row["std_completion"]),
                float(row["mean_battery_at_completion"]),
            )
        )
    for label in series:
        series[label].sort()

    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    for label in sorted(series):
        pts = series[label]
        xs = [p[0] for p in pts]
        ax1.errorbar(
            xs, [p[1] for p in pts], yerr=[p[2] for p in pts],
            marker="o", capsize=3, label=label,
        )
        ax2.plot(xs, [p[3] for p in pts], marker="s", label=label)
    ax1.set_ylabel(f"completion time of app {app_id} (slots)")
    ax1.legend(fontsize=8)
    ax2.set_xlabel("channel ON probability")
    ax2.set_ylabel("battery at completion")
    fig.tight_layout()
    fig.savefig(out_image)
    plt.close(fig)
    return {
        "series": {
            label: [{"value": v, "mean": m, "std": s, "battery": b} for v, m, s, b in pts]
            for label, pts in series.items()
        },
        "out": str(out_image),
    }
