"""Command-line front end: run one scenario or a parameter sweep, emit CSV
and JSON results.

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .channel import BERNOULLI, ChannelConfig, realize_trace
from .config import ConfigError, Scenario, parse_config
from .controller import ControllerConfig, TraceBundle
from .engine import POLICY_SEQUENTIAL, MetricsSummary, SimulationResult, make_policy, metrics, run_simulation
from .model import AppSpec, SystemSpec
from .window import UtilitySpec

_FLOAT_FMT = "%.12g"


def _fmt(x: float) -> str:
    return _FLOAT_FMT % float(x)


def _run_seed(global_seed: int, rep: int) -> int:
    """Per-repetition seed; sweep-value index deliberately excluded so every
    parameter value sees the same random world (common random numbers)."""
    return int(np.random.SeedSequence([int(global_seed), int(rep)]).generate_state(1)[0])


def _shrink_specs(specs: SystemSpec, n_devices: int) -> SystemSpec:
    devices = specs.devices[:n_devices]
    kept = {d.id for d in devices}
    apps = []
    for a in specs.apps:
        interested = frozenset(i for i in a.interested_devices if i in kept) or frozenset({0})
        apps.append(
            AppSpec(a.id, a.cpu_req, a.bw_req, a.size, a.utility_weight, interested)
        )
    return SystemSpec(devices=devices, apps=tuple(apps), energy=specs.energy)


def _override_p_on(ch: ChannelConfig, p_on: float) -> ChannelConfig:
    if ch.kind != BERNOULLI:
        return ch
    return ChannelConfig(kind=ch.kind, level=ch.level, p_on=p_on, path=ch.path, seed=ch.seed)


def build_traces(specs: SystemSpec, T: int, seed: int, p_on: Optional[float] = None) -> TraceBundle:
    cpu, bw, cpu_ch, bw_ch = [], [], [], []
    for d in specs.devices:
        cch = _override_p_on(d.cpu_channel, p_on) if p_on is not None else d.cpu_channel
        wch = _override_p_on(d.bw_channel, p_on) if p_on is not None else d.bw_channel
        cpu.append(realize_trace(cch, T, seed, d.id, "cpu"))
        bw.append(realize_trace(wch, T, seed, d.id, "bw"))
        cpu_ch.append(cch)
        bw_ch.append(wch)
    return TraceBundle(cpu=tuple(cpu), bw=tuple(bw), cpu_channels=tuple(cpu_ch), bw_channels=tuple(bw_ch))


@dataclass(frozen=True)
class RunOutcome:
    result: SimulationResult
    summary: MetricsSummary
    specs: SystemSpec
    label: str


def run_single(
    scenario: Scenario,
    policy: Optional[str] = None,
    estimator: Optional[str] = None,
    rep: int = 0,
    seed: Optional[int] = None,
    p_on: Optional[float] = None,
    n_devices: Optional[int] = None,
) -> RunOutcome:
    """One full simulation with derived per-repetition randomness."""
    sim = scenario.sim
    policy_name = policy or sim.policy
    estimator = estimator or sim.estimator
    base_seed = sim.seed if seed is None else seed
    run_seed = _run_seed(base_seed, rep)

    specs = scenario.specs
    if n_devices is not None:
        specs = _shrink_specs(specs, n_devices)
    traces = build_traces(specs, sim.T, run_seed, p_on=p_on)

    config = ControllerConfig(
        omega=sim.omega,
        estimator=estimator,
        eps=sim.eps,
        tol=sim.tol,
        max_iters=sim.max_iters,
        rng_seed=run_seed,
        utility=UtilitySpec(kind=sim.utility, slot_discount=sim.slot_discount),
    )
    app_order = sim.app_order if policy_name == POLICY_SEQUENTIAL else None
    policy_obj = make_policy(policy_name, specs, traces, config, app_order=app_order)
    result = run_simulation(
        specs, traces, policy_obj, sim.T, utility=config.utility, early_stop=sim.early_stop
    )
    return RunOutcome(
        result=result,
        summary=metrics(result),
        specs=specs,
        label=f"{policy_name}-{estimator}",
    )


def write_per_slot_csv(path: Path, outcome: RunOutcome, run_id: str = "0:0") -> None:
    specs = outcome.specs
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("run_id,t,device_id,app_id,eta_ij,eta_j,w_used,c_used,battery,remaining_work\n")
        for rec in outcome.result.per_slot:
            for i in range(specs.n_devices):
                for j in range(specs.n_apps):
                    fh.write(
                        ",".join(
                            [
                                run_id,
                                str(rec.t),
                                str(i),
                                str(j),
                                _fmt(rec.decision.eta_ij[i, j]),
                                _fmt(rec.decision.eta_j[j]),
                                _fmt(rec.decision.w_used[i]),
                                _fmt(rec.decision.c_used[i]),
                                _fmt(rec.battery[i]),
                                _fmt(rec.remaining_work[j]),
                            ]
                        )
                        + "\n"
                    )


def summary_to_dict(outcome: RunOutcome) -> dict:
    s = outcome.summary
    return {
        "label": outcome.label,
        "completion_times": {str(j): s.completion_times[j] for j in range(len(s.completion_times))},
        "final_battery": {str(i): s.final_battery[i] for i in range(len(s.final_battery))},
        "energy_consumed": {str(i): s.energy_consumed[i] for i in range(len(s.energy_consumed))},
        "battery_at_completion": {
            str(j): s.battery_at_completion[j] for j in range(len(s.battery_at_completion))
        },
        "total_utility": s.total_utility,
        "slots_run": s.slots_run,
        "solver": {"iterations": s.solver_iterations, "statuses": s.solver_statuses},
        "decision_makers": outcome.result.decision_makers,
    }


def write_summary_json(path: Path, outcome: RunOutcome) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(summary_to_dict(outcome), fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_scenario(scenario: Scenario, out_dir: Path, seed: Optional[int] = None) -> list[Path]:
    """Execute the configured single run; returns the files written."""
    out_dir.mkdir(parents=True, exist_ok=True)
    outcome = run_single(scenario, seed=seed)
    csv_path = out_dir / "per_slot.csv"
    json_path = out_dir / "summary.json"
    write_per_slot_csv(csv_path, outcome)
    write_summary_json(json_path, outcome)
    return [csv_path, json_path]


def _sweep_one(scenario, variant, value_idx, rep, seed):
    sweep = scenario.sweep
    value = sweep.values[value_idx]
    kwargs = {}
    if sweep.parameter == "p_on":
        kwargs["p_on"] = value
    else:
        kwargs["n_devices"] = int(value)
    outcome = run_single(
        scenario, policy=variant.policy, estimator=variant.estimator,
        rep=rep, seed=seed, **kwargs,
    )
    return outcome.summary, outcome.specs.n_apps


def run_sweep(
    scenario: Scenario,
    out_dir: Path,
    seed: Optional[int] = None,
    workers: Optional[int] = None,
) -> list[Path]:
    """All (variant, value, repetition) runs plus the aggregate CSV.

    Applications that never complete within T are aggregated at T (censored).
    """
    sweep = scenario.sweep
    if sweep is None:
        raise ConfigError("sweep section missing from configuration")
    out_dir.mkdir(parents=True, exist_ok=True)
    workers = workers or os.cpu_count() or 1

    jobs = [
        (vi, value_idx, rep)
        for vi in range(len(sweep.variants))
        for value_idx in range(len(sweep.values))
        for rep in range(sweep.repetitions)
    ]

    def job(args):
        vi, value_idx, rep = args
        summary, n_apps = _sweep_one(scenario, sweep.variants[vi], value_idx, rep, seed)
        return (vi, value_idx, rep), summary, n_apps

    results: dict[tuple[int, int, int], MetricsSummary] = {}
    n_apps = scenario.specs.n_apps
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            for key, summary, napps in ex.map(job, jobs):
                results[key] = summary
                n_apps = napps
    else:
        for args in jobs:
            key, summary, napps = job(args)
            results[key] = summary
            n_apps = napps

    T = scenario.sim.T
    csv_path = out_dir / "sweep.csv"
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("param,value,policy,app_id,mean_completion,std_completion,mean_battery_at_completion\n")
        for vi, variant in enumerate(sweep.variants):
            for value_idx, value in enumerate(sweep.values):
                for j in range(n_apps):
                    comps, batts = [], []
                    for rep in range(sweep.repetitions):
                        s = results[(vi, value_idx, rep)]
                        tj = s.completion_times[j]
                        comps.append(float(tj) if tj is not None else float(T))
                        bj = s.battery_at_completion[j]
                        batts.append(bj if bj is not None else float(np.mean(s.final_battery)))
                    comps_arr = np.array(comps)
                    fh.write(
                        ",".join(
                            [
                                sweep.parameter,
                                _fmt(value),
                                variant.label,
                                str(j),
                                _fmt(comps_arr.mean()),
                                _fmt(comps_arr.std()),
                                _fmt(float(np.mean(batts))),
                            ]
                        )
                        + "\n"
                    )
    return [csv_path]


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="coopalloc",
        description="Cooperative time-allocation simulator for D2D device groups",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("run", "run one scenario"), ("sweep", "run a parameter sweep")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="scenario configuration file (YAML)")
        p.add_argument("--out-dir", default="out", help="output directory (default: ./out)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--workers", type=int, default=None, help="parallel runs (sweep only)")

    args = parser.parse_args(argv)
    try:
        scenario = parse_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    try:
        out_dir = Path(args.out_dir)
        if args.command == "run":
            files = run_scenario(scenario, out_dir, seed=args.seed)
        else:
            files = run_sweep(scenario, out_dir, seed=args.seed, workers=args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 2

    for f in files:
        print(f)
    return 0


if __name__ == "__main__":
    sys.exit(main())
