"""Slot loop: policy step, validation, battery and progress update, metrics.

One run is strictly sequential (slot t+1 depends on slot t); independent runs
may execute in parallel since they share only immutable specs.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import baselines, controller
from .controller import ControllerConfig, TraceBundle
from .model import AllocationDecision, SlotState, SystemSpec, battery_step, validate_allocation

COMPLETION_SNAP = 1e-9

# RNG sub-stream tags so election and ordering draws never collide
_ELECTION_STREAM = 1
_ORDER_STREAM = 2

POLICY_AACT = "aact"
POLICY_AACT_DISTRIBUTED = "aact-distributed"
POLICY_NO_COOP = "no-coop"
POLICY_SEQUENTIAL = "sequential"
POLICIES = (POLICY_AACT, POLICY_AACT_DISTRIBUTED, POLICY_NO_COOP, POLICY_SEQUENTIAL)


class EngineError(RuntimeError):
    pass


@dataclass
class SlotRecord:
    t: int
    decision: AllocationDecision
    battery: np.ndarray
    remaining_work: np.ndarray


@dataclass
class SimulationResult:
    per_slot: list[SlotRecord]
    completion_time: list[Optional[int]]  # 1-indexed slot counts
    energy_consumed: np.ndarray  # per device
    final_battery: np.ndarray
    total_utility: float
    solver_stats: list[tuple[int, str]]
    decision_makers: list[Optional[int]] = field(default_factory=list)

    @property
    def slots_run(self) -> int:
        return len(self.per_slot)


def update_completion(remaining: np.ndarray, eta_j: np.ndarray) -> np.ndarray:
    """Work left after one slot, floored at zero (overshoot is discarded)."""
    return np.maximum(0.0, np.asarray(remaining) - np.asarray(eta_j))


class AactPolicy:
    """Centralized receding-horizon policy."""

    name = POLICY_AACT

    def __init__(self, specs: SystemSpec, traces: TraceBundle, config: ControllerConfig):
        self.specs = specs
        self.traces = traces
        self.config = config
        self.stats: list[tuple[int, str]] = []
        self._warm = None

    def step(self, state: SlotState) -> AllocationDecision:
        decision, sol, warm_next = controller.aact_step_full(
            state, self.traces, self.specs, self.config, self._warm
        )
        self._warm = warm_next
        self.stats.append((sol.iterations, sol.status))
        return decision


class AactDistributedPolicy:
    """Distributed variant: a random decision maker each slot, stale windows
    for everyone else."""

    name = POLICY_AACT_DISTRIBUTED

    def __init__(self, specs: SystemSpec, traces: TraceBundle, config: ControllerConfig):
        self.specs = specs
        self.traces = traces
        self.config = config
        self.stats: list[tuple[int, str]] = []
        self.makers: list[int] = []
        self._warm = None
        self._rng = np.random.default_rng(
            np.random.SeedSequence([int(config.rng_seed), _ELECTION_STREAM])
        )

    def step(self, state: SlotState) -> AllocationDecision:
        maker, decision, sol, warm_next = controller.aact_distributed_step_full(
            state, self.traces, self.specs, self.config, self._rng, self._warm
        )
        self._warm = warm_next
        self.makers.append(maker)
        self.stats.append((sol.iterations, sol.status))
        return decision


class NoCooperationPolicy:
    """Every device runs only its own applications."""

    name = POLICY_NO_COOP

    def __init__(self, specs: SystemSpec, traces: TraceBundle, config: ControllerConfig):
        self.specs = specs
        self.traces = traces
        self.config = config
        self.stats: list[tuple[int, str]] = []
        self.copies = baselines.initial_copies(specs)
        self._warms: dict = {}

    def step(self, state: SlotState) -> AllocationDecision:
        decision, self.copies = baselines.no_cooperation_step(
            state, self.traces, self.specs, self.config, self.copies, self._warms
        )
        self.stats.append((0, "converged"))
        return decision


class SequentialPolicy:
    """All devices cooperate, one application at a time."""

    name = POLICY_SEQUENTIAL

    def __init__(
        self,
        specs: SystemSpec,
        traces: TraceBundle,
        config: ControllerConfig,
        app_order: Optional[tuple[int, ...]] = None,
    ):
        self.specs = specs
        self.traces = traces
        self.config = config
        self.stats: list[tuple[int, str]] = []
        if app_order is None:
            rng = np.random.default_rng(
                np.random.SeedSequence([int(config.rng_seed), _ORDER_STREAM])
            )
            app_order = baselines.draw_app_order(specs, rng)
        self.app_order = tuple(app_order)
        self._warm = None

    def step(self, state: SlotState) -> AllocationDecision:
        decision = baselines.sequential_cooperation_step(
            state, self.traces, self.specs, self.config, self.app_order, self._warm
        )
        self.stats.append((0, "converged"))
        return decision


def make_policy(
    name: str,
    specs: SystemSpec,
    traces: TraceBundle,
    config: ControllerConfig,
    app_order: Optional[tuple[int, ...]] = None,
):
    if name == POLICY_AACT:
        return AactPolicy(specs, traces, config)
    if name == POLICY_AACT_DISTRIBUTED:
        return AactDistributedPolicy(specs, traces, config)
    if name == POLICY_NO_COOP:
        return NoCooperationPolicy(specs, traces, config)
    if name == POLICY_SEQUENTIAL:
        return SequentialPolicy(specs, traces, config, app_order)
    raise ValueError(f"unknown policy {name!r}")


def run_simulation(
    specs: SystemSpec,
    traces: TraceBundle,
    policy,
    T: int,
    utility=None,
    early_stop: bool = True,
    validate: bool = True,
    validate_tol: float = 1e-6,
) -> SimulationResult:
    """Drive the slot loop and track completion, battery, and energy.

    Completion times are 1-indexed slot counts; an application that never
    finishes keeps ``None``.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    if T > traces.horizon:
        raise ValueError("T exceeds trace horizon")
    N, A = specs.n_devices, specs.n_apps
    battery = specs.battery_init.astype(np.float64).copy()
    remaining = specs.sizes.astype(np.float64).copy()
    completion: list[Optional[int]] = [None] * A
    records: list[SlotRecord] = []
    energy = np.zeros(N)
    utility = utility if utility is not None else getattr(policy.config, "utility", None)

    for t in range(T):
        state = SlotState(t=t, battery=battery.copy(), remaining_work=remaining.copy())
        try:
            decision = policy.step(state)
        except Exception as exc:  # noqa: BLE001 - annotate with slot context
            raise EngineError(f"policy {policy.name!r} failed at slot {t}: {exc}") from exc

        if validate:
            cpu_caps, bw_caps = traces.caps_at(t)
            violations = validate_allocation(
                state, cpu_caps, bw_caps, specs, decision, tol=validate_tol
            )
            if violations:
                detail = "; ".join(str(v) for v in violations)
                raise EngineError(f"slot {t}: infeasible decision: {detail}")

        for i, dev in enumerate(specs.devices):
            battery[i] = max(
                0.0,
                battery_step(
                    battery[i],
                    dev.alpha_at(t),
                    specs.energy,
                    float(decision.c_used[i]),
                    float(decision.w_used[i]),
                ),
            )
        energy += specs.energy.gamma_c * decision.c_used + specs.energy.gamma_w * decision.w_used

        remaining = update_completion(remaining, decision.eta_j)
        remaining[remaining <= COMPLETION_SNAP] = 0.0
        for j in range(A):
            if completion[j] is None and remaining[j] == 0.0:
                completion[j] = t + 1

        records.append(
            SlotRecord(t=t, decision=decision, battery=battery.copy(), remaining_work=remaining.copy())
        )
        if early_stop and bool(np.all(remaining == 0.0)):
            break

    total_utility = 0.0
    if utility is not None:
        weights = utility.weight_array(A) if utility.weights else specs.weights
        for rec in records:
            total_utility += float(utility.value(rec.decision.eta_j, weights).sum())

    return SimulationResult(
        per_slot=records,
        completion_time=completion,
        energy_consumed=energy,
        final_battery=battery.copy(),
        total_utility=total_utility,
        solver_stats=list(policy.stats),
        decision_makers=list(getattr(policy, "makers", [])),
    )


@dataclass(frozen=True)
class MetricsSummary:
    completion_times: tuple[Optional[int], ...]
    final_battery: tuple[float, ...]
    energy_consumed: tuple[float, ...]
    total_utility: float
    battery_at_completion: tuple[Optional[float], ...]  # per app, mean over devices
    slots_run: int
    solver_iterations: int
    solver_statuses: dict[str, int]


def metrics(result: SimulationResult) -> MetricsSummary:
    """Condense a run into the reported quantities."""
    batt_at_completion: list[Optional[float]] = []
    for j, tj in enumerate(result.completion_time):
        if tj is None:
            batt_at_completion.append(None)
            continue
        rec = result.per_slot[tj - 1]
        batt_at_completion.append(float(rec.battery.mean()))
    statuses: dict[str, int] = {}
    for _, st in result.solver_stats:
        statuses[st] = statuses.get(st, 0) + 1
    return MetricsSummary(
        completion_times=tuple(result.completion_time),
        final_battery=tuple(float(b) for b in result.final_battery),
        energy_consumed=tuple(float(x) for x in result.energy_consumed),
        total_utility=result.total_utility,
        battery_at_completion=tuple(batt_at_completion),
        slots_run=result.slots_run,
        solver_iterations=int(sum(it for it, _ in result.solver_stats)),
        solver_statuses=statuses,
    )
