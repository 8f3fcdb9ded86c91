"""Scenario configuration: YAML parsing, validation, and re-serialization.

Validation errors carry the offending field path (``devices[1].alpha``) so
config mistakes are diagnosable from the CLI exit message alone.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import yaml

from .channel import BERNOULLI, CONSTANT, FILE, ChannelConfig
from .engine import POLICIES
from .controller import ESTIMATORS
from .model import AppSpec, DeviceSpec, EnergyModel, SystemSpec
from .window import LINEAR, LOG1P, UtilitySpec

SWEEP_PARAMS = ("p_on", "n_devices")


class ConfigError(ValueError):
    """A configuration file failed schema or invariant validation."""


@dataclass(frozen=True)
class SimConfig:
    T: int
    omega: int
    policy: str = "aact"
    estimator: str = "oracle"
    seed: int = 0
    eps: float = 1e-4
    tol: float = 1e-8
    max_iters: int = 10_000
    utility: str = LOG1P
    slot_discount: float = 1.0
    early_stop: bool = True
    app_order: Optional[tuple[int, ...]] = None


@dataclass(frozen=True)
class SweepVariant:
    policy: str
    estimator: str
    label: str


@dataclass(frozen=True)
class SweepConfig:
    parameter: str
    values: tuple[float, ...]
    repetitions: int = 1
    variants: tuple[SweepVariant, ...] = ()


@dataclass(frozen=True)
class Scenario:
    specs: SystemSpec
    sim: SimConfig
    sweep: Optional[SweepConfig] = None

    @property
    def utility_spec(self) -> UtilitySpec:
        return UtilitySpec(kind=self.sim.utility, slot_discount=self.sim.slot_discount)


def _require(table: dict, key: str, path: str) -> Any:
    if key not in table:
        raise ConfigError(f"missing required field {path}.{key}" if path else f"missing required section {key!r}")
    return table[key]


def _expect_type(value, types, path: str):
    if not isinstance(value, types):
        names = types.__name__ if isinstance(types, type) else "/".join(t.__name__ for t in types)
        raise ConfigError(f"{path}: expected {names}, got {type(value).__name__}")
    return value


def _parse_channel(table: Any, path: str) -> ChannelConfig:
    if isinstance(table, (int, float)) and not isinstance(table, bool):
        table = {"kind": CONSTANT, "level": float(table)}
    _expect_type(table, dict, path)
    kind = table.get("kind", CONSTANT)
    if kind not in (CONSTANT, BERNOULLI, FILE):
        raise ConfigError(f"{path}.kind: unknown channel kind {kind!r}")
    level = table.get("level", 0.0)
    _expect_type(level, (int, float), f"{path}.level")
    if level < 0:
        raise ConfigError(f"{path}.level: must be >= 0")
    p_on = table.get("p_on", 1.0)
    _expect_type(p_on, (int, float), f"{path}.p_on")
    if not 0 <= p_on <= 1:
        raise ConfigError(f"{path}.p_on: must lie in [0, 1]")
    seed = table.get("seed")
    if seed is not None:
        _expect_type(seed, int, f"{path}.seed")
    trace_path = table.get("path")
    if kind == FILE and not trace_path:
        raise ConfigError(f"{path}.path: required for file channels")
    return ChannelConfig(kind=kind, level=float(level), p_on=float(p_on), path=trace_path, seed=seed)


def _parse_device(table: dict, idx: int) -> DeviceSpec:
    path = f"devices[{idx}]"
    _expect_type(table, dict, path)
    dev_id = _require(table, "id", path)
    _expect_type(dev_id, int, f"{path}.id")
    battery = _require(table, "battery_init", path)
    _expect_type(battery, (int, float), f"{path}.battery_init")
    if battery < 0:
        raise ConfigError(f"{path}.battery_init: must be >= 0")
    alpha = table.get("alpha", 1.0)
    if isinstance(alpha, list):
        values = [float(_expect_type(a, (int, float), f"{path}.alpha[{k}]")) for k, a in enumerate(alpha)]
        if any(not 0 <= a <= 1 for a in values):
            raise ConfigError(f"{path}.alpha: entries must lie in [0, 1]")
        alpha_val: Any = tuple(values)
    else:
        _expect_type(alpha, (int, float), f"{path}.alpha")
        if not 0 <= alpha <= 1:
            raise ConfigError(f"{path}.alpha: must lie in [0, 1]")
        alpha_val = float(alpha)
    cpu = _parse_channel(_require(table, "cpu", path), f"{path}.cpu")
    bw = _parse_channel(_require(table, "bw", path), f"{path}.bw")
    return DeviceSpec(
        id=dev_id, battery_init=float(battery), alpha=alpha_val,
        cpu_channel=cpu, bw_channel=bw,
    )


def _parse_app(table: dict, idx: int, device_ids: set[int]) -> AppSpec:
    path = f"apps[{idx}]"
    _expect_type(table, dict, path)
    app_id = _require(table, "id", path)
    _expect_type(app_id, int, f"{path}.id")
    cpu_req = _require(table, "cpu_req", path)
    bw_req = _require(table, "bw_req", path)
    size = _require(table, "size", path)
    for name, v in (("cpu_req", cpu_req), ("bw_req", bw_req), ("size", size)):
        _expect_type(v, (int, float), f"{path}.{name}")
    if cpu_req < 0 or bw_req < 0:
        raise ConfigError(f"{path}: requirements must be >= 0")
    if cpu_req == 0 and bw_req == 0:
        raise ConfigError(f"{path}: cpu_req and bw_req cannot both be zero")
    if size <= 0:
        raise ConfigError(f"{path}.size: must be > 0")
    weight = table.get("utility_weight", 1.0)
    _expect_type(weight, (int, float), f"{path}.utility_weight")
    if weight <= 0:
        raise ConfigError(f"{path}.utility_weight: must be > 0")
    interested = _require(table, "interested", path)
    _expect_type(interested, list, f"{path}.interested")
    if not interested:
        raise ConfigError(f"{path}.interested: cannot be empty")
    for k, d in enumerate(interested):
        _expect_type(d, int, f"{path}.interested[{k}]")
        if d not in device_ids:
            raise ConfigError(f"{path}.interested[{k}]: unknown device id {d}")
    return AppSpec(
        id=app_id, cpu_req=float(cpu_req), bw_req=float(bw_req), size=float(size),
        utility_weight=float(weight), interested_devices=frozenset(interested),
    )


def _parse_sim(table: dict, n_apps: int) -> SimConfig:
    path = "sim"
    _expect_type(table, dict, path)
    T = _require(table, "T", path)
    _expect_type(T, int, f"{path}.T")
    if T < 1:
        raise ConfigError(f"{path}.T: must be >= 1")
    omega = _require(table, "omega", path)
    _expect_type(omega, int, f"{path}.omega")
    if omega < 1:
        raise ConfigError(f"{path}.omega: must be >= 1")
    policy = table.get("policy", "aact")
    if policy not in POLICIES:
        raise ConfigError(f"{path}.policy: unknown policy {policy!r} (choose from {POLICIES})")
    estimator = table.get("estimator", "oracle")
    if estimator not in ESTIMATORS:
        raise ConfigError(f"{path}.estimator: unknown estimator {estimator!r}")
    utility = table.get("utility", LOG1P)
    if utility not in (LOG1P, LINEAR):
        raise ConfigError(f"{path}.utility: unknown utility kind {utility!r}")
    discount = table.get("slot_discount", 1.0)
    _expect_type(discount, (int, float), f"{path}.slot_discount")
    if not 0 < discount <= 1:
        raise ConfigError(f"{path}.slot_discount: must lie in (0, 1]")
    seed = table.get("seed", 0)
    _expect_type(seed, int, f"{path}.seed")
    eps = table.get("eps", 1e-4)
    tol = table.get("tol", 1e-8)
    max_iters = table.get("max_iters", 10_000)
    _expect_type(eps, (int, float), f"{path}.eps")
    _expect_type(tol, (int, float), f"{path}.tol")
    _expect_type(max_iters, int, f"{path}.max_iters")
    early_stop = table.get("early_stop", True)
    _expect_type(early_stop, bool, f"{path}.early_stop")
    app_order = table.get("app_order")
    if app_order is not None:
        _expect_type(app_order, list, f"{path}.app_order")
        if sorted(app_order) != list(range(n_apps)):
            raise ConfigError(f"{path}.app_order: must be a permutation of application ids")
        app_order = tuple(int(a) for a in app_order)
    return SimConfig(
        T=T, omega=omega, policy=policy, estimator=estimator, seed=seed,
        eps=float(eps), tol=float(tol), max_iters=max_iters, utility=utility,
        slot_discount=float(discount), early_stop=early_stop, app_order=app_order,
    )


def _parse_sweep(table: dict, sim: SimConfig) -> SweepConfig:
    path = "sweep"
    _expect_type(table, dict, path)
    parameter = _require(table, "parameter", path)
    if parameter not in SWEEP_PARAMS:
        raise ConfigError(f"{path}.parameter: must be one of {SWEEP_PARAMS}")
    values = _require(table, "values", path)
    _expect_type(values, list, f"{path}.values")
    if not values:
        raise ConfigError(f"{path}.values: cannot be empty")
    parsed_values = []
    for k, v in enumerate(values):
        _expect_type(v, (int, float), f"{path}.values[{k}]")
        if parameter == "p_on" and not 0 <= v <= 1:
            raise ConfigError(f"{path}.values[{k}]: p_on must lie in [0, 1]")
        if parameter == "n_devices" and (not isinstance(v, int) or v < 1):
            raise ConfigError(f"{path}.values[{k}]: n_devices must be a positive integer")
        parsed_values.append(float(v))
    reps = table.get("repetitions", 1)
    _expect_type(reps, int, f"{path}.repetitions")
    if reps < 1:
        raise ConfigError(f"{path}.repetitions: must be >= 1")
    raw_variants = table.get("variants")
    variants = []
    if raw_variants is None:
        variants.append(SweepVariant(sim.policy, sim.estimator, f"{sim.policy}-{sim.estimator}"))
    else:
        _expect_type(raw_variants, list, f"{path}.variants")
        for k, v in enumerate(raw_variants):
            vpath = f"{path}.variants[{k}]"
            _expect_type(v, dict, vpath)
            policy = _require(v, "policy", vpath)
            if policy not in POLICIES:
                raise ConfigError(f"{vpath}.policy: unknown policy {policy!r}")
            estimator = v.get("estimator", sim.estimator)
            if estimator not in ESTIMATORS:
                raise ConfigError(f"{vpath}.estimator: unknown estimator {estimator!r}")
            label = v.get("label", f"{policy}-{estimator}")
            variants.append(SweepVariant(policy, estimator, str(label)))
    return SweepConfig(
        parameter=parameter, values=tuple(parsed_values), repetitions=reps,
        variants=tuple(variants),
    )


def parse_config_data(data: dict) -> Scenario:
    _expect_type(data, dict, "config")
    raw_devices = _require(data, "devices", "")
    _expect_type(raw_devices, list, "devices")
    if not raw_devices:
        raise ConfigError("devices: cannot be empty")
    devices = tuple(_parse_device(d, k) for k, d in enumerate(raw_devices))
    ids = [d.id for d in devices]
    if len(set(ids)) != len(ids):
        raise ConfigError("devices: duplicate ids")

    raw_apps = _require(data, "apps", "")
    _expect_type(raw_apps, list, "apps")
    if not raw_apps:
        raise ConfigError("apps: cannot be empty")
    apps = tuple(_parse_app(a, k, set(ids)) for k, a in enumerate(raw_apps))
    app_ids = [a.id for a in apps]
    if len(set(app_ids)) != len(app_ids):
        raise ConfigError("apps: duplicate ids")
    if app_ids != list(range(len(apps))):
        raise ConfigError("apps: ids must be 0..A-1 in order")
    if ids != list(range(len(devices))):
        raise ConfigError("devices: ids must be 0..N-1 in order")

    energy_table = data.get("energy", {})
    _expect_type(energy_table, dict, "energy")
    gamma_c = energy_table.get("gamma_c", 1.0)
    gamma_w = energy_table.get("gamma_w", 1.0)
    for name, v in (("gamma_c", gamma_c), ("gamma_w", gamma_w)):
        _expect_type(v, (int, float), f"energy.{name}")
        if v < 0:
            raise ConfigError(f"energy.{name}: must be >= 0")
    energy = EnergyModel(gamma_c=float(gamma_c), gamma_w=float(gamma_w))

    sim = _parse_sim(_require(data, "sim", ""), len(apps))
    sweep = None
    if "sweep" in data and data["sweep"] is not None:
        sweep = _parse_sweep(data["sweep"], sim)
        if sweep.parameter == "n_devices" and max(sweep.values) > len(devices):
            raise ConfigError(
                f"sweep.values: n_devices up to {int(max(sweep.values))} but only {len(devices)} devices configured"
            )
        if sweep.parameter == "p_on":
            has_bernoulli = any(
                ch.kind == BERNOULLI
                for d in devices
                for ch in (d.cpu_channel, d.bw_channel)
            )
            if not has_bernoulli:
                raise ConfigError("sweep.parameter=p_on requires at least one bernoulli channel")

    specs = SystemSpec(devices=devices, apps=apps, energy=energy)
    return Scenario(specs=specs, sim=sim, sweep=sweep)


def parse_config(path: str | Path) -> Scenario:
    """Load and validate a scenario file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    if data is None:
        raise ConfigError(f"{path}: empty config")
    return parse_config_data(data)


def _channel_to_data(ch: ChannelConfig) -> dict:
    out: dict[str, Any] = {"kind": ch.kind, "level": ch.level}
    if ch.kind == BERNOULLI:
        out["p_on"] = ch.p_on
    if ch.path is not None:
        out["path"] = ch.path
    if ch.seed is not None:
        out["seed"] = ch.seed
    return out


def scenario_to_data(sc: Scenario) -> dict:
    """Inverse of :func:`parse_config_data` (round-trips through YAML)."""
    devices = []
    for d in sc.specs.devices:
        alpha = list(d.alpha) if isinstance(d.alpha, tuple) else d.alpha
        devices.append(
            {
                "id": d.id,
                "battery_init": d.battery_init,
                "alpha": alpha,
                "cpu": _channel_to_data(d.cpu_channel),
                "bw": _channel_to_data(d.bw_channel),
            }
        )
    apps = [
        {
            "id": a.id,
            "cpu_req": a.cpu_req,
            "bw_req": a.bw_req,
            "size": a.size,
            "utility_weight": a.utility_weight,
            "interested": sorted(a.interested_devices),
        }
        for a in sc.specs.apps
    ]
    sim: dict[str, Any] = {
        "T": sc.sim.T,
        "omega": sc.sim.omega,
        "policy": sc.sim.policy,
        "estimator": sc.sim.estimator,
        "seed": sc.sim.seed,
        "eps": sc.sim.eps,
        "tol": sc.sim.tol,
        "max_iters": sc.sim.max_iters,
        "utility": sc.sim.utility,
        "slot_discount": sc.sim.slot_discount,
        "early_stop": sc.sim.early_stop,
    }
    if sc.sim.app_order is not None:
        sim["app_order"] = list(sc.sim.app_order)
    data = {
        "devices": devices,
        "apps": apps,
        "energy": {"gamma_c": sc.specs.energy.gamma_c, "gamma_w": sc.specs.energy.gamma_w},
        "sim": sim,
    }
    if sc.sweep is not None:
        values = [
            int(v) if sc.sweep.parameter == "n_devices" else v for v in sc.sweep.values
        ]
        data["sweep"] = {
            "parameter": sc.sweep.parameter,
            "values": values,
            "repetitions": sc.sweep.repetitions,
            "variants": [
                {"policy": v.policy, "estimator": v.estimator, "label": v.label}
                for v in sc.sweep.variants
            ],
        }
    return data


def emit_config(sc: Scenario) -> str:
    return yaml.safe_dump(scenario_to_data(sc), sort_keys=False)
