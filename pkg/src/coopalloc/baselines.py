"""Comparison policies: every device for itself, and one application at a time.

Both reuse the window solver so the comparison against the cooperative policy
isolates the allocation strategy, not the solver.
"""
from __future__ import annotations

from typing import Optional

import numpy as np

from .controller import ControllerConfig, TraceBundle, _solve_step, build_estimates, effective_window
from .model import AllocationDecision, SlotState, SystemSpec

_DONE = 1e-12

CopyState = dict[tuple[int, int], float]


def initial_copies(specs: SystemSpec) -> CopyState:
    """Per-(device, app) private progress counters for the no-cooperation
    policy: each interested device runs its own copy."""
    return {
        (i, app.id): float(app.size)
        for app in specs.apps
        for i in app.interested_devices
    }


def no_cooperation_step(
    state: SlotState,
    traces: TraceBundle,
    specs: SystemSpec,
    config: ControllerConfig,
    copies: CopyState,
    warms: Optional[dict] = None,
) -> tuple[AllocationDecision, CopyState]:
    """Each device privately optimizes the applications it cares about.

    Cross-device aggregation is disabled: the emitted aggregate time per app is
    the drop in the slowest copy's remaining work, so completion tracks the
    last interested device to finish.
    """
    N, A = specs.n_devices, specs.n_apps
    app_index = {app.id: k for k, app in enumerate(specs.apps)}
    eta = np.zeros((N, A))
    omega_eff = effective_window(config.omega, state.t, traces.horizon)

    for i, dev in enumerate(specs.devices):
        mine = [app for app in specs.apps if i in app.interested_devices]
        if not mine:
            continue
        sub_specs = SystemSpec(devices=(dev,), apps=tuple(mine), energy=specs.energy)
        sub_traces = TraceBundle(
            cpu=(traces.cpu[i],),
            bw=(traces.bw[i],),
            cpu_channels=(traces.cpu_channels[i],),
            bw_channels=(traces.bw_channels[i],),
        )
        sub_state = SlotState(
            t=state.t,
            battery=np.array([state.battery[i]]),
            remaining_work=np.array([copies[(i, app.id)] for app in mine]),
        )
        est = build_estimates(config.estimator, sub_traces, state.t, omega_eff)
        warm = warms.get(i) if warms is not None else None
        decision, _, warm_next = _solve_step(sub_state, sub_traces, sub_specs, config, est, warm)
        if warms is not None:
            warms[i] = warm_next
        for k, app in enumerate(mine):
            eta[i, app_index[app.id]] = decision.eta_ij[0, k]

    new_copies = dict(copies)
    for (i, app_id), left in copies.items():
        new_copies[(i, app_id)] = max(0.0, left - eta[i, app_index[app_id]])

    eta_j = np.zeros(A)
    for k, app in enumerate(specs.apps):
        owners = sorted(app.interested_devices)
        before = max(copies[(i, app.id)] for i in owners)
        after = max(new_copies[(i, app.id)] for i in owners)
        eta_j[k] = max(0.0, before - after)

    decision = AllocationDecision(
        eta_ij=eta,
        eta_j=eta_j,
        w_used=eta @ specs.bw_reqs,
        c_used=eta @ specs.cpu_reqs,
    )
    return decision, new_copies


def sequential_cooperation_step(
    state: SlotState,
    traces: TraceBundle,
    specs: SystemSpec,
    config: ControllerConfig,
    app_order: tuple[int, ...],
    warm: Optional[np.ndarray] = None,
) -> AllocationDecision:
    """All devices cooperate on the earliest unfinished application in
    ``app_order``; every other application gets nothing this slot."""
    N, A = specs.n_devices, specs.n_apps
    app_index = {app.id: k for k, app in enumerate(specs.apps)}
    active = None
    for app_id in app_order:
        if state.remaining_work[app_index[app_id]] > _DONE:
            active = app_index[app_id]
            break
    if active is None:
        zeros = np.zeros(A)
        return AllocationDecision(np.zeros((N, A)), zeros, np.zeros(N), np.zeros(N))

    sub_specs = SystemSpec(
        devices=specs.devices, apps=(specs.apps[active],), energy=specs.energy
    )
    sub_state = SlotState(
        t=state.t,
        battery=state.battery,
        remaining_work=np.array([state.remaining_work[active]]),
    )
    omega_eff = effective_window(config.omega, state.t, traces.horizon)
    est = build_estimates(config.estimator, traces, state.t, omega_eff)
    decision, _, _ = _solve_step(sub_state, traces, sub_specs, config, est, warm)

    eta = np.zeros((N, A))
    eta[:, active] = decision.eta_ij[:, 0]
    eta_j = np.zeros(A)
    eta_j[active] = decision.eta_j[0]
    return AllocationDecision(
        eta_ij=eta,
        eta_j=eta_j,
        w_used=eta @ specs.bw_reqs,
        c_used=eta @ specs.cpu_reqs,
    )


def draw_app_order(specs: SystemSpec, rng: np.random.Generator) -> tuple[int, ...]:
    """Uniform random processing order, drawn once per run."""
    ids = [app.id for app in specs.apps]
    return tuple(int(x) for x in rng.permutation(ids))
