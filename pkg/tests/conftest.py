import numpy as np
import pytest

from coopalloc import (
    AppSpec,
    DeviceSpec,
    EnergyModel,
    SlotState,
    SystemSpec,
    UtilitySpec,
    build_window_problem,
)


@pytest.fixture
def paper_specs():
    """The two-device, two-application setup used throughout the evaluation:
    app 0 is bandwidth-hungry (0.5 GHz, 1 Mbps), app 1 is compute-only
    (1.5 GHz)."""
    return SystemSpec(
        devices=(
            DeviceSpec(0, battery_init=100.0),
            DeviceSpec(1, battery_init=100.0),
        ),
        apps=(
            AppSpec(0, cpu_req=0.5, bw_req=1.0, size=2.0, interested_devices={0}),
            AppSpec(1, cpu_req=1.5, bw_req=0.0, size=5.0, interested_devices={1}),
        ),
        energy=EnergyModel(1.0, 1.0),
    )


@pytest.fixture
def small_problem(paper_specs):
    state = SlotState(0, paper_specs.battery_init, paper_specs.sizes)
    est = (
        np.array([[1.0, 0.5], [1.0, 0.5]]),
        np.array([[0.25, 0.5], [0.25, 0.5]]),
    )
    return build_window_problem(state, est, 2, paper_specs, UtilitySpec("log1p"), eps=1e-4)


def random_instance(rng, force_small_oracle=False):
    """A random window problem spanning utility kinds, battery regimes, and
    window lengths; sized so grid enumeration stays cheap."""
    N = int(rng.integers(1, 3))
    A = int(rng.integers(1, 3))
    omega = int(rng.integers(1, 3))
    kind = ["log1p", "linear"][int(rng.integers(2))]
    disc = float(rng.choice([1.0, 0.9, 0.8]))
    a_c = rng.uniform(0.1, 1.5, A)
    a_w = np.where(rng.random(A) < 0.3, 0.0, rng.uniform(0.1, 1.2, A))
    a_c = np.where((a_w == 0) & (a_c == 0), 0.5, a_c)
    apps = tuple(
        AppSpec(
            j,
            float(a_c[j]),
            float(a_w[j]),
            float(rng.uniform(0.3, 6)),
            float(rng.uniform(0.5, 2)),
            frozenset({0}),
        )
        for j in range(A)
    )
    tight_battery = rng.random() < 0.5
    batt = rng.uniform(0.05, 0.8, N) if tight_battery else rng.uniform(5, 50, N)
    devs = tuple(
        DeviceSpec(i, float(batt[i]), float(rng.choice([1.0, 0.95, 0.9]))) for i in range(N)
    )
    specs = SystemSpec(
        devs, apps, EnergyModel(float(rng.uniform(0.1, 1.5)), float(rng.uniform(0.1, 1.5)))
    )
    state = SlotState(0, specs.battery_init, specs.sizes * rng.uniform(0.1, 1.0, A))
    cap_hi = 0.7 if force_small_oracle else 0.9
    est_c = rng.uniform(0, cap_hi, (omega, N))
    est_w = rng.uniform(0, cap_hi, (omega, N))
    util = UtilitySpec(kind=kind, slot_discount=disc)
    return build_window_problem(state, (est_c, est_w), omega, specs, util, eps=1e-4)
