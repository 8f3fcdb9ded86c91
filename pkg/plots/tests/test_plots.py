"""The plots package consumes the simulator only through its public surface:
the CLI and its CSV/JSON files."""
import json
import subprocess
import sys
from pathlib import Path

import pytest

from coopplots import plot_battery_timeseries, plot_completion_vs_pon
from coopplots.cli import main as plot_main
from coopplots.render import CsvSchemaError

ROOT = Path(__file__).resolve().parents[2]

SMALL_RUN = """\
devices:
  - {id: 0, battery_init: 3.0, cpu: 1.0, bw: 0.25}
  - {id: 1, battery_init: 9.0, cpu: 0.5, bw: 0.5}
apps:
  - {id: 0, cpu_req: 0.5, bw_req: 1.0, size: 2.0, interested: [0]}
  - {id: 1, cpu_req: 1.5, bw_req: 0.0, size: 5.0, interested: [1]}
energy: {gamma_c: 1.0, gamma_w: 1.0}
sim: {T: 60, omega: 10, policy: aact, estimator: oracle, seed: 0,
      utility: linear, slot_discount: 0.9}
"""

SMALL_SWEEP = """\
devices:
  - id: 0
    battery_init: 200.0
    cpu: 1.0
    bw: {kind: bernoulli, level: 0.5, p_on: 0.5}
  - id: 1
    battery_init: 200.0
    cpu: 0.5
    bw: {kind: bernoulli, level: 0.25, p_on: 0.5}
apps:
  - {id: 0, cpu_req: 0.5, bw_req: 1.0, size: 1.0, interested: [0]}
  - {id: 1, cpu_req: 1.5, bw_req: 0.0, size: 2.0, interested: [1]}
energy: {gamma_c: 1.0, gamma_w: 1.0}
sim: {T: 60, omega: 8, policy: aact, estimator: oracle, seed: 1,
      utility: linear, slot_discount: 0.9}
sweep:
  parameter: p_on
  values: [0.3, 0.6, 0.9]
  repetitions: 2
  variants:
    - {policy: aact, estimator: oracle}
    - {policy: aact, estimator: average}
"""


def _simulate(tmp_path: Path, config_text: str, command: str) -> Path:
    cfg = tmp_path / "scenario.yaml"
    cfg.write_text(config_text)
    out = tmp_path / f"out-{command}"
    proc = subprocess.run(
        [sys.executable, "-m", "coopalloc", command, str(cfg), "--out-dir", str(out)],
        capture_output=True,
        text=True,
        check=False,
    )
    assert proc.returncode == 0, proc.stderr
    return out


@pytest.fixture(scope="module")
def run_outputs(tmp_path_factory):
    return _simulate(tmp_path_factory.mktemp("run"), SMALL_RUN, "run")


@pytest.fixture(scope="module")
def sweep_outputs(tmp_path_factory):
    return _simulate(tmp_path_factory.mktemp("sweep"), SMALL_SWEEP, "sweep")


def test_battery_plot_matches_summary(run_outputs, tmp_path):
    out_img = tmp_path / "battery.svg"
    meta = plot_battery_timeseries(run_outputs / "per_slot.csv", out_img)
    assert out_img.exists() and out_img.stat().st_size > 0
    summary = json.loads((run_outputs / "summary.json").read_text())
    assert meta["devices"] == [0, 1]
    for app, slot in meta["completion"].items():
        assert slot == summary["completion_times"][str(app)]


def test_battery_plot_single_device(tmp_path):
    single = SMALL_RUN.replace(
        "devices:\n  - {id: 0, battery_init: 3.0, cpu: 1.0, bw: 0.25}\n"
        "  - {id: 1, battery_init: 9.0, cpu: 0.5, bw: 0.5}",
        "devices:\n  - {id: 0, battery_init: 30.0, cpu: 1.0, bw: 0.5}",
    ).replace("interested: [1]", "interested: [0]")
    out = _simulate(tmp_path, single, "run")
    meta = plot_battery_timeseries(out / "per_slot.csv", tmp_path / "one.svg")
    assert meta["devices"] == [0]


def test_battery_plot_uncompleted_app(tmp_path):
    starved = SMALL_RUN.replace("size: 5.0", "size: 500.0").replace("T: 60", "T: 20")
    out = _simulate(tmp_path, starved, "run")
    meta = plot_battery_timeseries(out / "per_slot.csv", tmp_path / "starved.svg")
    assert meta["completion"][1] is None
    summary = json.loads((out / "summary.json").read_text())
    assert summary["completion_times"]["1"] is None


def test_pon_plot_two_series(sweep_outputs, tmp_path):
    out_img = tmp_path / "pon.svg"
    meta = plot_completion_vs_pon(sweep_outputs / "sweep.csv", 0, out_img)
    assert out_img.exists() and out_img.stat().st_size > 0
    assert set(meta["series"]) == {"aact-oracle", "aact-average"}
    for pts in meta["series"].values():
        assert [p["value"] for p in pts] == [0.3, 0.6, 0.9]


def test_pon_plot_single_series(sweep_outputs, tmp_path):
    # filtering to one policy leaves one series
    import csv as csv_mod

    src = sweep_outputs / "sweep.csv"
    dst = tmp_path / "one.csv"
    with open(src) as fh:
        rows = list(csv_mod.DictReader(fh))
    with open(dst, "w", newline="") as fh:
        writer = csv_mod.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        for r in rows:
            if r["policy"] == "aact-oracle":
                writer.writerow(r)
    meta = plot_completion_vs_pon(dst, 0, tmp_path / "one.svg")
    assert list(meta["series"]) == ["aact-oracle"]


def test_pon_plot_missing_columns(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    with pytest.raises(CsvSchemaError, match="missing columns"):
        plot_completion_vs_pon(bad, 0, tmp_path / "x.svg")


def test_battery_plot_empty_csv(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("run_id,t,device_id,app_id,eta_ij,eta_j,w_used,c_used,battery,remaining_work\n")
    with pytest.raises(CsvSchemaError, match="no data rows"):
        plot_battery_timeseries(empty, tmp_path / "x.svg")


def test_cli_battery_and_pon(run_outputs, sweep_outputs, tmp_path):
    out1 = tmp_path / "fig_battery"
    assert plot_main(["battery", str(run_outputs / "per_slot.csv"), str(out1)]) == 0
    assert (tmp_path / "fig_battery.svg").exists()

    out2 = tmp_path / "fig_pon.pdf"
    assert plot_main(["pon", str(sweep_outputs / "sweep.csv"), "0", str(out2)]) == 0
    assert out2.exists()

    out3 = tmp_path / "fig_raster"
    assert plot_main(
        ["battery", str(run_outputs / "per_slot.csv"), str(out3), "--format", "png"]
    ) == 0
    assert (tmp_path / "fig_raster.png").exists()


def test_cli_schema_error_exit_code(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("nope\n1\n")
    assert plot_main(["battery", str(bad), str(tmp_path / "x.svg")]) == 1
