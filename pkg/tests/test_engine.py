import numpy as np
import pytest

from coopalloc import (
    AppSpec,
    ChannelConfig,
    ControllerConfig,
    DeviceSpec,
    EnergyModel,
    SystemSpec,
    TraceBundle,
    UtilitySpec,
    metrics,
    run_simulation,
    update_completion,
)
from coopalloc.channel import constant_trace, realize_trace
from coopalloc.engine import EngineError, make_policy


def _bundle(T, cpu_levels, bw_levels):
    return TraceBundle(
        cpu=tuple(constant_trace(c, T) for c in cpu_levels),
        bw=tuple(constant_trace(w, T) for w in bw_levels),
        cpu_channels=tuple(ChannelConfig("constant", c) for c in cpu_levels),
        bw_channels=tuple(ChannelConfig("constant", w) for w in bw_levels),
    )


def _cfg(kind="linear", omega=10, estimator="oracle", seed=0):
    return ControllerConfig(
        omega=omega, estimator=estimator, rng_seed=seed,
        utility=UtilitySpec(kind, slot_discount=0.9),
    )


def test_update_completion_examples():
    assert update_completion(np.array([2.0, 5.0]), np.array([1.5, 0.0])).tolist() == [0.5, 5.0]
    assert update_completion(np.array([0.3, 1.0]), np.array([1.0, 1.0])).tolist() == [0.0, 0.0]
    assert update_completion(np.array([2.0, 5.0]), np.array([0.0, 0.0])).tolist() == [2.0, 5.0]


def test_full_throttle_single_app_completes_in_size_slots():
    specs = SystemSpec(
        (DeviceSpec(0, 1000.0),),
        (AppSpec(0, 0.5, 0.0, 5.0, interested_devices={0}),),
        EnergyModel(1.0, 1.0),
    )
    traces = _bundle(20, (1.0,), (1.0,))
    policy = make_policy("aact", specs, traces, _cfg())
    result = run_simulation(specs, traces, policy, 20, utility=_cfg().utility)
    assert result.completion_time == [5]
    assert result.slots_run == 5  # early stop


def test_zero_capacity_never_completes():
    specs = SystemSpec(
        (DeviceSpec(0, 1000.0),),
        (AppSpec(0, 0.5, 0.5, 2.0, interested_devices={0}),),
        EnergyModel(1.0, 1.0),
    )
    traces = _bundle(10, (0.0,), (0.0,))
    policy = make_policy("aact", specs, traces, _cfg())
    result = run_simulation(specs, traces, policy, 10, utility=_cfg().utility)
    assert result.completion_time == [None]
    assert result.slots_run == 10


def test_battery_identity_alpha_one(paper_specs):
    T = 30
    traces = _bundle(T, (1.0, 0.5), (0.25, 0.5))
    policy = make_policy("aact", paper_specs, traces, _cfg())
    result = run_simulation(paper_specs, traces, policy, T, utility=_cfg().utility)
    drains = np.zeros(2)
    prev_battery = paper_specs.battery_init.copy()
    prev_remaining = paper_specs.sizes.copy()
    for rec in result.per_slot:
        drains += rec.decision.c_used + rec.decision.w_used  # gamma = 1
        # trajectories only ever move one way
        assert np.all(rec.battery <= prev_battery + 1e-12)
        assert np.all(rec.remaining_work <= prev_remaining + 1e-12)
        prev_battery = rec.battery
        prev_remaining = rec.remaining_work
    expected = paper_specs.battery_init - drains
    assert np.allclose(result.final_battery, expected, atol=1e-9)
    assert np.allclose(result.energy_consumed, drains, atol=1e-9)


def test_remaining_work_conservation(paper_specs):
    T = 30
    traces = _bundle(T, (1.0, 0.5), (0.25, 0.5))
    policy = make_policy("aact", paper_specs, traces, _cfg())
    result = run_simulation(paper_specs, traces, policy, T, utility=_cfg().utility)
    done = np.zeros(2)
    for rec in result.per_slot:
        prev = done.copy()
        done += rec.decision.eta_j
        effective = np.minimum(done, paper_specs.sizes)
        assert np.allclose(
            paper_specs.sizes - effective, rec.remaining_work, atol=1e-6
        )


def test_completion_is_one_indexed():
    specs = SystemSpec(
        (DeviceSpec(0, 1000.0),),
        (AppSpec(0, 0.5, 0.0, 1.0, interested_devices={0}),),
        EnergyModel(1.0, 1.0),
    )
    traces = _bundle(10, (1.0,), (0.0,))
    policy = make_policy("aact", specs, traces, _cfg())
    result = run_simulation(specs, traces, policy, 10, utility=_cfg().utility)
    assert result.completion_time == [1]  # full slot of work in slot index 0


def test_adding_device_never_slower():
    apps = (
        AppSpec(0, 0.5, 1.0, 2.0, interested_devices={0}),
        AppSpec(1, 1.5, 0.0, 5.0, interested_devices={0}),
    )
    cpu_levels = (1.0, 0.5, 1.0, 0.5)
    bw_levels = (0.25, 0.5, 0.25, 0.5)
    prev_max = None
    for n in (1, 2, 3, 4):
        specs = SystemSpec(
            tuple(DeviceSpec(i, 1000.0) for i in range(n)), apps, EnergyModel(1.0, 1.0)
        )
        traces = _bundle(60, cpu_levels[:n], bw_levels[:n])
        policy = make_policy("aact", specs, traces, _cfg())
        result = run_simulation(specs, traces, policy, 60, utility=_cfg().utility)
        worst = max(result.completion_time)
        if prev_max is not None:
            assert worst <= prev_max
        prev_max = worst


def test_simulation_deterministic(paper_specs):
    cpu_ch = tuple(ChannelConfig("constant", lvl) for lvl in (1.0, 0.5))
    bw_ch = tuple(ChannelConfig("bernoulli", lvl, p_on=0.6) for lvl in (0.5, 0.25))
    T = 40
    traces = TraceBundle(
        cpu=tuple(realize_trace(ch, T, 5, i, "cpu") for i, ch in enumerate(cpu_ch)),
        bw=tuple(realize_trace(ch, T, 5, i, "bw") for i, ch in enumerate(bw_ch)),
        cpu_channels=cpu_ch,
        bw_channels=bw_ch,
    )
    runs = []
    for _ in range(2):
        policy = make_policy("aact-distributed", paper_specs, traces, _cfg(seed=11))
        runs.append(run_simulation(paper_specs, traces, policy, T, utility=_cfg().utility))
    a, b = runs
    assert a.completion_time == b.completion_time
    assert np.array_equal(a.final_battery, b.final_battery)
    assert a.decision_makers == b.decision_makers
    for ra, rb in zip(a.per_slot, b.per_slot):
        assert np.array_equal(ra.decision.eta_ij, rb.decision.eta_ij)


def test_metrics_summary(paper_specs):
    T = 30
    traces = _bundle(T, (1.0, 0.5), (0.25, 0.5))
    policy = make_policy("aact", paper_specs, traces, _cfg())
    result = run_simulation(paper_specs, traces, policy, T, utility=_cfg().utility)
    summary = metrics(result)
    assert summary.completion_times == tuple(result.completion_time)
    assert summary.slots_run == result.slots_run
    # energy replay: per-device battery drop must equal reported consumption
    assert np.allclose(
        np.array(summary.energy_consumed),
        paper_specs.battery_init - np.array(summary.final_battery),
        atol=1e-9,
    )
    for j, tj in enumerate(summary.completion_times):
        rec = result.per_slot[tj - 1]
        assert summary.battery_at_completion[j] == pytest.approx(float(rec.battery.mean()))


def test_metrics_empty_run():
    specs = SystemSpec(
        (DeviceSpec(0, 10.0),),
        (AppSpec(0, 0.5, 0.5, 2.0, interested_devices={0}),),
        EnergyModel(1.0, 1.0),
    )
    traces = _bundle(5, (0.0,), (0.0,))
    policy = make_policy("aact", specs, traces, _cfg())
    result = run_simulation(specs, traces, policy, 5, utility=_cfg().utility)
    summary = metrics(result)
    assert summary.energy_consumed == (0.0,)
    assert summary.total_utility == 0.0
    assert summary.battery_at_completion == (None,)


def test_engine_propagates_policy_error_with_slot(paper_specs):
    traces = _bundle(5, (1.0, 0.5), (0.25, 0.5))

    class Boom:
        name = "boom"
        stats = []
        config = _cfg()

        def step(self, state):
            raise RuntimeError("kaput")

    with pytest.raises(EngineError, match="slot 0"):
        run_simulation(paper_specs, traces, Boom(), 5)


def test_engine_rejects_bad_T(paper_specs):
    traces = _bundle(5, (1.0, 0.5), (0.25, 0.5))
    policy = make_policy("aact", paper_specs, traces, _cfg())
    with pytest.raises(ValueError):
        run_simulation(paper_specs, traces, policy, 0)
    with pytest.raises(ValueError):
        run_simulation(paper_specs, traces, policy, 6)
