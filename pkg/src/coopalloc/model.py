"""Domain types and slot-level arithmetic: device/application specs, battery
dynamics, and allocation-decision validation.

All types are immutable value objects; the operations are pure functions, so
everything here is safe to share across threads.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class Trace:
    """Per-slot realized capacity for one device and one resource (GHz or Mbps)."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if self.values.ndim != 1:
            raise ValueError("trace values must be one-dimensional")
        if np.any(self.values < 0):
            raise ValueError("trace values must be non-negative")

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class EnergyModel:
    """Battery cost per unit compute usage (gamma_c) and bandwidth usage (gamma_w)."""

    gamma_c: float = 1.0
    gamma_w: float = 1.0

    def __post_init__(self):
        if self.gamma_c < 0 or self.gamma_w < 0:
            raise ValueError("energy coefficients must be non-negative")


@dataclass(frozen=True)
class DeviceSpec:
    """Static per-device parameters.

    ``alpha`` is the per-slot background battery retention factor; a scalar is
    the common case, a sequence gives a per-slot schedule.
    """

    id: int
    battery_init: float
    alpha: float | Sequence[float] = 1.0
    cpu_channel: Optional[object] = None  # channel.ChannelConfig
    bw_channel: Optional[object] = None

    def __post_init__(self):
        if self.battery_init < 0:
            raise ValueError(f"device {self.id}: battery_init must be >= 0")
        a = np.atleast_1d(np.asarray(self.alpha, dtype=np.float64))
        if np.any(a < 0) or np.any(a > 1):
            raise ValueError(f"device {self.id}: alpha must lie in [0, 1]")

    def alpha_at(self, t: int) -> float:
        if np.ndim(self.alpha) == 0:
            return float(self.alpha)
        seq = np.asarray(self.alpha, dtype=np.float64)
        return float(seq[min(t, len(seq) - 1)])


@dataclass(frozen=True)
class AppSpec:
    """Per-application resource requirements and total work.

    ``cpu_req``/``bw_req`` are the consumption when the application holds a full
    time slot; ``size`` is total work in accumulated time-fraction units.
    """

    id: int
    cpu_req: float
    bw_req: float
    size: float
    utility_weight: float = 1.0
    interested_devices: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "interested_devices", frozenset(self.interested_devices))
        if self.cpu_req < 0 or self.bw_req < 0:
            raise ValueError(f"app {self.id}: requirements must be >= 0")
        if self.cpu_req == 0 and self.bw_req == 0:
            raise ValueError(f"app {self.id}: cpu_req and bw_req cannot both be zero")
        if self.size <= 0:
            raise ValueError(f"app {self.id}: size must be > 0")
        if self.utility_weight <= 0:
            raise ValueError(f"app {self.id}: utility_weight must be > 0")
        if not self.interested_devices:
            raise ValueError(f"app {self.id}: interested_devices cannot be empty")


@dataclass(frozen=True)
class SystemSpec:
    """Bundle of all static specs for one scenario."""

    devices: tuple[DeviceSpec, ...]
    apps: tuple[AppSpec, ...]
    energy: EnergyModel

    def __post_init__(self):
        object.__setattr__(self, "devices", tuple(self.devices))
        object.__setattr__(self, "apps", tuple(self.apps))

    @property
    def n_devices(self) -> int:
        return len(self.devices)

    @property
    def n_apps(self) -> int:
        return len(self.apps)

    @property
    def cpu_reqs(self) -> np.ndarray:
        return np.array([a.cpu_req for a in self.apps])

    @property
    def bw_reqs(self) -> np.ndarray:
        return np.array([a.bw_req for a in self.apps])

    @property
    def weights(self) -> np.ndarray:
        return np.array([a.utility_weight for a in self.apps])

    @property
    def sizes(self) -> np.ndarray:
        return np.array([a.size for a in self.apps])

    @property
    def battery_init(self) -> np.ndarray:
        return np.array([d.battery_init for d in self.devices])

    def alpha_window(self, t: int, omega_eff: int) -> np.ndarray:
        """Retention factors for slots t..t+omega_eff-1, shape (omega_eff, N)."""
        return np.array(
            [[d.alpha_at(t + k) for d in self.devices] for k in range(omega_eff)]
        )


@dataclass(frozen=True)
class SlotState:
    """Dynamic state at the start of slot ``t``."""

    t: int
    battery: np.ndarray
    remaining_work: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "battery", np.asarray(self.battery, dtype=np.float64))
        object.__setattr__(
            self, "remaining_work", np.asarray(self.remaining_work, dtype=np.float64)
        )
        if np.any(self.battery < 0):
            raise ValueError("battery entries must be >= 0")
        if np.any(self.remaining_work < 0):
            raise ValueError("remaining_work entries must be >= 0")


@dataclass(frozen=True)
class AllocationDecision:
    """One slot's allocation: per-device time fractions, aggregate application
    time, and resource usages."""

    eta_ij: np.ndarray  # (N, A)
    eta_j: np.ndarray  # (A,)
    w_used: np.ndarray  # (N,)
    c_used: np.ndarray  # (N,)

    def __post_init__(self):
        for name in ("eta_ij", "eta_j", "w_used", "c_used"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        if self.eta_ij.ndim != 2:
            raise ValueError("eta_ij must be an (N, A) matrix")


@dataclass(frozen=True)
class Violation:
    """One violated constraint: which one, where, and by how much."""

    constraint: str
    device: Optional[int]
    app: Optional[int]
    excess: float

    def __str__(self) -> str:
        where = []
        if self.device is not None:
            where.append(f"device {self.device}")
        if self.app is not None:
            where.append(f"app {self.app}")
        loc = ", ".join(where) or "global"
        return f"{self.constraint} [{loc}]: excess {self.excess:.3e}"


def battery_step(
    b: float, alpha: float, energy: EnergyModel, c_used: float, w_used: float
) -> float:
    """Battery level after one slot: alpha*b - gamma_c*c - gamma_w*w.

    Returns the raw value, which may be negative; nonnegativity is the caller's
    constraint to enforce, so infeasibility stays detectable.
    """
    return alpha * b - energy.gamma_c * c_used - energy.gamma_w * w_used


def resource_demand(
    eta_row: np.ndarray, apps: Sequence[AppSpec]
) -> tuple[float, float]:
    """Compute and bandwidth demand of one device's time-fraction row."""
    eta_row = np.asarray(eta_row, dtype=np.float64)
    if eta_row.shape[0] != len(apps):
        raise ValueError(
            f"eta_row has {eta_row.shape[0]} entries for {len(apps)} applications"
        )
    cpu = float(sum(e * a.cpu_req for e, a in zip(eta_row, apps)))
    bw = float(sum(e * a.bw_req for e, a in zip(eta_row, apps)))
    return cpu, bw


def validate_allocation(
    state: SlotState,
    cpu_caps: np.ndarray,
    bw_caps: np.ndarray,
    specs: SystemSpec,
    decision: AllocationDecision,
    tol: float = 1e-6,
) -> list[Violation]:
    """Check every slot constraint; returns an empty list iff all hold within tol.

    Violations are data, not failures: each names the constraint, the
    device/app index, and the amount of slack exceeded.
    """
    out: list[Violation] = []
    N, A = specs.n_devices, specs.n_apps
    eta = decision.eta_ij
    if eta.shape != (N, A):
        return [Violation("shape", None, None, float("nan"))]
    cpu_caps = np.asarray(cpu_caps, dtype=np.float64)
    bw_caps = np.asarray(bw_caps, dtype=np.float64)

    for i in range(N):
        for j in range(A):
            if eta[i, j] < -tol:
                out.append(Violation("eta_ij-nonneg", i, j, -eta[i, j]))
    for j in range(A):
        if decision.eta_j[j] < -tol:
            out.append(Violation("eta_j-nonneg", None, j, -decision.eta_j[j]))

    a_c, a_w = specs.cpu_reqs, specs.bw_reqs
    for i in range(N):
        row_sum = float(eta[i].sum())
        if row_sum > 1 + tol:
            out.append(Violation("time-budget", i, None, row_sum - 1))
        cpu_dem = float(eta[i] @ a_c)
        bw_dem = float(eta[i] @ a_w)
        if bw_dem > decision.w_used[i] + tol:
            out.append(Violation("bandwidth-demand", i, None, bw_dem - decision.w_used[i]))
        if decision.w_used[i] > bw_caps[i] + tol:
            out.append(Violation("bandwidth-cap", i, None, decision.w_used[i] - bw_caps[i]))
        if cpu_dem > decision.c_used[i] + tol:
            out.append(Violation("compute-demand", i, None, cpu_dem - decision.c_used[i]))
        if decision.c_used[i] > cpu_caps[i] + tol:
            out.append(Violation("compute-cap", i, None, decision.c_used[i] - cpu_caps[i]))
        if decision.w_used[i] < -tol:
            out.append(Violation("w-nonneg", i, None, -decision.w_used[i]))
        if decision.c_used[i] < -tol:
            out.append(Violation("c-nonneg", i, None, -decision.c_used[i]))

    for j in range(A):
        agg = float(eta[:, j].sum())
        if decision.eta_j[j] > agg + tol:
            out.append(Violation("aggregate-time", None, j, decision.eta_j[j] - agg))

    for i, dev in enumerate(specs.devices):
        b_next = battery_step(
            float(state.battery[i]),
            dev.alpha_at(state.t),
            specs.energy,
            float(decision.c_used[i]),
            float(decision.w_used[i]),
        )
        if b_next < -tol:
            out.append(Violation("battery-nonneg", i, None, -b_next))
    return out
