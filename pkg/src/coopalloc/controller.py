"""Receding-horizon control steps and channel-capacity estimators.

Each step solves the window program on estimated capacities, applies only the
first slot, and clamps that slot against the true realized capacities (an
optimistic estimate may promise more bandwidth or compute than the slot
actually has).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .channel import ChannelConfig
from .model import AllocationDecision, SlotState, SystemSpec, Trace
from .solver import Solution, solve
from .window import UtilitySpec, build_window_problem

ORACLE = "oracle"
AVERAGE = "average"
HOLD_LAST = "hold_last"
ESTIMATORS = (ORACLE, AVERAGE, HOLD_LAST)


@dataclass(frozen=True)
class ControllerConfig:
    """Window size, estimator choice, and solver settings for one policy."""

    omega: int
    estimator: str = ORACLE
    eps: float = 1e-4
    tol: float = 1e-8
    max_iters: int = 10_000
    rng_seed: int = 0
    utility: UtilitySpec = field(default_factory=UtilitySpec)

    def __post_init__(self):
        if self.omega < 1:
            raise ValueError("omega must be >= 1")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.estimator!r}")


@dataclass(frozen=True)
class TraceBundle:
    """Realized capacity traces plus the channel configs they came from
    (needed by the average estimator)."""

    cpu: tuple[Trace, ...]
    bw: tuple[Trace, ...]
    cpu_channels: tuple[Optional[ChannelConfig], ...] = ()
    bw_channels: tuple[Optional[ChannelConfig], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "cpu", tuple(self.cpu))
        object.__setattr__(self, "bw", tuple(self.bw))
        if not self.cpu_channels:
            object.__setattr__(self, "cpu_channels", (None,) * len(self.cpu))
        if not self.bw_channels:
            object.__setattr__(self, "bw_channels", (None,) * len(self.bw))
        lengths = {len(tr) for tr in self.cpu} | {len(tr) for tr in self.bw}
        if len(lengths) != 1:
            raise ValueError("all traces must share the same horizon")

    @property
    def n_devices(self) -> int:
        return len(self.cpu)

    @property
    def horizon(self) -> int:
        return len(self.cpu[0])

    def caps_at(self, t: int) -> tuple[np.ndarray, np.ndarray]:
        cpu = np.array([tr.values[t] for tr in self.cpu])
        bw = np.array([tr.values[t] for tr in self.bw])
        return cpu, bw


def estimate(
    kind: str,
    trace: Trace,
    channel_meta: Optional[ChannelConfig],
    t: int,
    omega_eff: int,
) -> np.ndarray:
    """Forecast one device's capacity over slots t..t+omega_eff-1."""
    if t + omega_eff > len(trace):
        raise ValueError("window extends past the end of the trace")
    if kind == ORACLE:
        return trace.values[t : t + omega_eff].copy()
    if kind == HOLD_LAST:
        return np.full(omega_eff, trace.values[t])
    if kind == AVERAGE:
        if channel_meta is None:
            raise ValueError("average estimator needs the channel config")
        return np.full(omega_eff, channel_meta.mean_capacity())
    raise ValueError(f"unknown estimator {kind!r}")


def build_estimates(
    kind: str,
    traces: TraceBundle,
    t: int,
    omega_eff: int,
    own_device: Optional[int] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Capacity windows (cpu, bw), each (omega_eff, N).

    With ``own_device`` set, only that device's window uses ``kind``; every
    other device is held at its slot-t observation (the information pattern of
    the distributed variant).
    """
    N = traces.n_devices
    cpu = np.zeros((omega_eff, N))
    bw = np.zeros((omega_eff, N))
    for i in range(N):
        k = kind if own_device is None or i == own_device else HOLD_LAST
        cpu[:, i] = estimate(k, traces.cpu[i], traces.cpu_channels[i], t, omega_eff)
        bw[:, i] = estimate(k, traces.bw[i], traces.bw_channels[i], t, omega_eff)
    return cpu, bw


def clamp_decision(
    E0: np.ndarray,
    H0: np.ndarray,
    specs: SystemSpec,
    cpu_caps: np.ndarray,
    bw_caps: np.ndarray,
) -> AllocationDecision:
    """Scale each device's row by the largest factor in [0, 1] that fits the
    true capacities, then recompute aggregates and usages."""
    E = np.array(E0, dtype=np.float64)
    a_c, a_w = specs.cpu_reqs, specs.bw_reqs
    for i in range(specs.n_devices):
        fac = 1.0
        bw_dem = float(E[i] @ a_w)
        cpu_dem = float(E[i] @ a_c)
        if bw_dem > bw_caps[i]:
            fac = min(fac, bw_caps[i] / bw_dem)
        if cpu_dem > cpu_caps[i]:
            fac = min(fac, cpu_caps[i] / cpu_dem)
        if fac < 1.0:
            E[i] *= max(fac, 0.0)
    H = np.minimum(np.maximum(H0, 0.0), E.sum(axis=0))
    return AllocationDecision(
        eta_ij=E, eta_j=H, w_used=E @ a_w, c_used=E @ a_c
    )


def _solve_step(
    state: SlotState,
    traces: TraceBundle,
    specs: SystemSpec,
    config: ControllerConfig,
    estimates: tuple[np.ndarray, np.ndarray],
    warm: Optional[tuple[np.ndarray, np.ndarray]] = None,
) -> tuple[AllocationDecision, Solution, tuple[np.ndarray, np.ndarray]]:
    problem = build_window_problem(
        state, estimates, config.omega, specs, config.utility, config.eps
    )
    sol = solve(problem, tol=config.tol, max_iters=config.max_iters, warm_eh=warm)
    E, H, _, _, _ = problem.unpack(sol.x)
    cpu_caps, bw_caps = traces.caps_at(state.t)
    decision = clamp_decision(E[0], H[0], specs, cpu_caps, bw_caps)
    warm_next = (E[1:].copy(), H[1:].copy())
    return decision, sol, warm_next


def effective_window(omega: int, t: int, horizon: int) -> int:
    """Window length shrinks near the end of the horizon."""
    if t >= horizon:
        raise ValueError("slot index past the horizon")
    return min(omega, horizon - t)


def aact_step(
    state: SlotState,
    traces: TraceBundle,
    specs: SystemSpec,
    config: ControllerConfig,
    warm: Optional[tuple[np.ndarray, np.ndarray]] = None,
) -> AllocationDecision:
    """One centralized step: estimate, solve the window, apply the first slot."""
    decision, _, _ = aact_step_full(state, traces, specs, config, warm)
    return decision


def aact_step_full(
    state: SlotState,
    traces: TraceBundle,
    specs: SystemSpec,
    config: ControllerConfig,
    warm: Optional[tuple[np.ndarray, np.ndarray]] = None,
):
    omega_eff = effective_window(config.omega, state.t, traces.horizon)
    est = build_estimates(config.estimator, traces, state.t, omega_eff)
    return _solve_step(state, traces, specs, config, est, warm)


def aact_distributed_step(
    state: SlotState,
    traces: TraceBundle,
    specs: SystemSpec,
    config: ControllerConfig,
    rng: np.random.Generator,
    warm: Optional[tuple[np.ndarray, np.ndarray]] = None,
) -> tuple[int, AllocationDecision]:
    """One distributed step: a uniformly elected decision maker uses its own
    capacity window but holds every other device at its slot-t observation."""
    maker, decision, _, _ = aact_distributed_step_full(state, traces, specs, config, rng, warm)
    return maker, decision


def aact_distributed_step_full(
    state: SlotState,
    traces: TraceBundle,
    specs: SystemSpec,
    config: ControllerConfig,
    rng: np.random.Generator,
    warm: Optional[tuple[np.ndarray, np.ndarray]] = None,
):
    maker = int(rng.integers(specs.n_devices))
    omega_eff = effective_window(config.omega, state.t, traces.horizon)
    est = build_estimates(config.estimator, traces, state.t, omega_eff, own_device=maker)
    decision, sol, warm_next = _solve_step(state, traces, specs, config, est, warm)
    return maker, decision, sol, warm_next
