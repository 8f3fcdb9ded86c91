import numpy as np
import pytest

from coopalloc import (
    AppSpec,
    ChannelConfig,
    ControllerConfig,
    DeviceSpec,
    EnergyModel,
    SlotState,
    SystemSpec,
    TraceBundle,
    UtilitySpec,
    aact_step,
    initial_copies,
    no_cooperation_step,
    sequential_cooperation_step,
    validate_allocation,
)
from coopalloc.baselines import draw_app_order
from coopalloc.channel import constant_trace
from coopalloc.engine import make_policy, run_simulation


def _bundle(T, cpu_levels, bw_levels):
    return TraceBundle(
        cpu=tuple(constant_trace(c, T) for c in cpu_levels),
        bw=tuple(constant_trace(w, T) for w in bw_levels),
        cpu_channels=tuple(ChannelConfig("constant", c) for c in cpu_levels),
        bw_channels=tuple(ChannelConfig("constant", w) for w in bw_levels),
    )


def _config(kind="linear"):
    return ControllerConfig(omega=10, utility=UtilitySpec(kind, slot_discount=0.9))


def test_no_coop_bandwidth_bound(paper_specs):
    # device 0 runs the bandwidth app alone at 0.25 Mbps: at most 0.25 per slot
    traces = _bundle(60, (1.0, 0.5), (0.25, 0.5))
    state = SlotState(0, paper_specs.battery_init, paper_specs.sizes)
    copies = initial_copies(paper_specs)
    decision, _ = no_cooperation_step(state, traces, paper_specs, _config(), copies)
    assert decision.eta_ij[0, 0] <= 0.25 + 1e-9
    assert decision.eta_ij[0, 0] == pytest.approx(0.25, abs=1e-6)


def test_no_coop_zero_off_interest(paper_specs):
    traces = _bundle(60, (1.0, 0.5), (0.25, 0.5))
    state = SlotState(0, paper_specs.battery_init, paper_specs.sizes)
    decision, _ = no_cooperation_step(
        state, traces, paper_specs, _config(), initial_copies(paper_specs)
    )
    assert decision.eta_ij[0, 1] == 0.0  # device 0 not interested in app 1
    assert decision.eta_ij[1, 0] == 0.0


def test_no_coop_device_without_apps():
    specs = SystemSpec(
        (DeviceSpec(0, 100.0), DeviceSpec(1, 100.0)),
        (AppSpec(0, 0.5, 1.0, 2.0, interested_devices={0}),),
        EnergyModel(1.0, 1.0),
    )
    traces = _bundle(10, (1.0, 0.5), (0.25, 0.5))
    state = SlotState(0, specs.battery_init, specs.sizes)
    decision, _ = no_cooperation_step(state, traces, specs, _config(), initial_copies(specs))
    assert np.all(decision.eta_ij[1] == 0.0)
    assert decision.w_used[1] == 0.0 and decision.c_used[1] == 0.0


def test_no_coop_single_device_matches_aact():
    specs = SystemSpec(
        (DeviceSpec(0, 100.0),),
        (
            AppSpec(0, 0.5, 1.0, 2.0, interested_devices={0}),
            AppSpec(1, 1.5, 0.0, 5.0, interested_devices={0}),
        ),
        EnergyModel(1.0, 1.0),
    )
    traces = _bundle(20, (1.0,), (0.25,))
    state = SlotState(0, specs.battery_init, specs.sizes)
    cfg = _config()
    nc, _ = no_cooperation_step(state, traces, specs, cfg, initial_copies(specs))
    coop = aact_step(state, traces, specs, cfg)
    assert np.allclose(nc.eta_ij, coop.eta_ij, atol=1e-9)
    assert np.allclose(nc.eta_j, coop.eta_j, atol=1e-9)


def test_no_coop_multi_interest_tracks_slowest_copy():
    # both devices care about the same app; completion follows the slower one
    specs = SystemSpec(
        (DeviceSpec(0, 100.0), DeviceSpec(1, 100.0)),
        (AppSpec(0, 0.5, 1.0, 1.0, interested_devices={0, 1}),),
        EnergyModel(1.0, 1.0),
    )
    traces = _bundle(20, (1.0, 1.0), (0.5, 0.25))  # device 1 is slower
    state = SlotState(0, specs.battery_init, specs.sizes)
    copies = initial_copies(specs)
    cfg = _config()
    remaining = specs.sizes.copy()
    seen_slots = 0
    for t in range(20):
        decision, copies = no_cooperation_step(
            SlotState(t, specs.battery_init, remaining), traces, specs, cfg, copies
        )
        remaining = np.maximum(0.0, remaining - decision.eta_j)
        seen_slots = t + 1
        if remaining[0] <= 1e-12:
            break
    # device 1 at 0.25/slot is the straggler: four slots, not two
    assert seen_slots == 4


def test_sequential_one_app_at_a_time(paper_specs):
    traces = _bundle(60, (1.0, 0.5), (0.25, 0.5))
    cfg = _config()
    remaining = paper_specs.sizes.copy()
    battery = paper_specs.battery_init.copy()
    order = (0, 1)
    active_history = []
    for t in range(30):
        state = SlotState(t, battery, remaining)
        decision = sequential_cooperation_step(state, traces, paper_specs, cfg, order)
        nonzero = np.nonzero(decision.eta_j > 1e-9)[0]
        assert len(nonzero) <= 1
        if len(nonzero):
            active_history.append(int(nonzero[0]))
        remaining = np.maximum(0.0, remaining - decision.eta_j)
        if np.all(remaining == 0):
            break
    # app 0 strictly precedes app 1
    switch = active_history.index(1)
    assert all(a == 0 for a in active_history[:switch])
    assert all(a == 1 for a in active_history[switch:])


def test_sequential_all_done_is_zero(paper_specs):
    traces = _bundle(10, (1.0, 0.5), (0.25, 0.5))
    state = SlotState(0, paper_specs.battery_init, np.zeros(2))
    decision = sequential_cooperation_step(state, traces, paper_specs, _config(), (0, 1))
    assert np.all(decision.eta_ij == 0.0)
    assert np.all(decision.eta_j == 0.0)


def test_baseline_decisions_validate(paper_specs):
    traces = _bundle(30, (1.0, 0.5), (0.25, 0.5))
    cfg = _config()
    state = SlotState(0, paper_specs.battery_init, paper_specs.sizes)
    seq = sequential_cooperation_step(state, traces, paper_specs, cfg, (0, 1))
    nc, _ = no_cooperation_step(state, traces, paper_specs, cfg, initial_copies(paper_specs))
    cpu_caps, bw_caps = traces.caps_at(0)
    for d in (seq, nc):
        assert validate_allocation(state, cpu_caps, bw_caps, paper_specs, d, tol=1e-6) == []


def test_draw_app_order_is_permutation(paper_specs):
    order = draw_app_order(paper_specs, np.random.default_rng(5))
    assert sorted(order) == [0, 1]


def _run(specs, traces, name, cfg, T, order=None):
    policy = make_policy(name, specs, traces, cfg, app_order=order)
    return run_simulation(specs, traces, policy, T, utility=cfg.utility)


def test_aact_utility_dominates_baselines_linear(paper_specs):
    # baselines are feasible points of the same per-window programs; with
    # linear utility the realized totals inherit the window-by-window ordering
    T = 40
    traces = _bundle(T, (1.0, 0.5), (0.25, 0.5))
    cfg = ControllerConfig(omega=10, utility=UtilitySpec("linear", slot_discount=0.9))
    aact = _run(paper_specs, traces, "aact", cfg, T)
    seq = _run(paper_specs, traces, "sequential", cfg, T, order=(0, 1))
    nc = _run(paper_specs, traces, "no-coop", cfg, T)
    assert aact.total_utility >= seq.total_utility - 1e-6
    assert aact.total_utility >= nc.total_utility - 1e-6


@pytest.mark.xfail(
    strict=True,
    reason="window-local dominance does not compose across the horizon for "
    "strictly concave utility: finishing work early lowers later per-slot "
    "utility, so a slower baseline can realize a larger concave sum",
)
def test_aact_utility_dominates_baselines_log1p(paper_specs):
    T = 40
    traces = _bundle(T, (1.0, 0.5), (0.25, 0.5))
    cfg = ControllerConfig(omega=10, utility=UtilitySpec("log1p", slot_discount=0.9))
    aact = _run(paper_specs, traces, "aact", cfg, T)
    nc = _run(paper_specs, traces, "no-coop", cfg, T)
    assert aact.total_utility >= nc.total_utility - 1e-6
