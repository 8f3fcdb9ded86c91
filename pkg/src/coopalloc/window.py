"""Concave maximization over a window of slots, flattened to one decision
vector with linear constraints.

Variable layout is slot-major; within a slot the blocks are, in order,
eta_ij (device-major), eta_j, w, c, b. Problems are immutable after
construction and every function here is pure.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import SlotState, SystemSpec

LOG1P = "log1p"
LINEAR = "linear"


@dataclass(frozen=True)
class UtilitySpec:
    """Per-application utility U_j applied to aggregate time fractions.

    ``slot_discount`` weights slot tau by discount**tau inside a window; 1.0
    recovers the plain per-slot sum. Values below 1 break the temporal
    degeneracy of linear utilities (any placement of the same total time is
    otherwise equivalent, which lets work drift toward late slots).
    """

    kind: str = LOG1P
    weights: tuple[float, ...] = ()
    slot_discount: float = 1.0

    def __post_init__(self):
        if self.kind not in (LOG1P, LINEAR):
            raise ValueError(f"unknown utility kind {self.kind!r}")
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if any(w <= 0 for w in self.weights):
            raise ValueError("utility weights must be > 0")
        if not 0 < self.slot_discount <= 1:
            raise ValueError("slot_discount must lie in (0, 1]")

    def weight_array(self, n_apps: int) -> np.ndarray:
        if len(self.weights) == 0:
            return np.ones(n_apps)
        if len(self.weights) != n_apps:
            raise ValueError("utility weights do not match number of applications")
        return np.array(self.weights)

    def value(self, eta: np.ndarray, weights: np.ndarray) -> np.ndarray:
        if self.kind == LOG1P:
            return weights * np.log1p(eta)
        return weights * eta

    def derivative(self, eta: np.ndarray, weights: np.ndarray) -> np.ndarray:
        if self.kind == LOG1P:
            return weights / (1.0 + eta)
        return np.broadcast_to(weights, eta.shape).copy()


@dataclass(frozen=True)
class Layout:
    """Bijection between (variable role, indices, relative slot) and flat positions."""

    n_devices: int
    n_apps: int
    window_len: int

    @property
    def slot_size(self) -> int:
        N, A = self.n_devices, self.n_apps
        return N * A + A + 3 * N

    @property
    def dim(self) -> int:
        return self.window_len * self.slot_size

    def eta_ij(self, tau: int, i: int, j: int) -> int:
        return tau * self.slot_size + i * self.n_apps + j

    def eta_j(self, tau: int, j: int) -> int:
        return tau * self.slot_size + self.n_devices * self.n_apps + j

    def w(self, tau: int, i: int) -> int:
        return tau * self.slot_size + self.n_devices * self.n_apps + self.n_apps + i

    def c(self, tau: int, i: int) -> int:
        return self.w(tau, i) + self.n_devices

    def b(self, tau: int, i: int) -> int:
        return self.c(tau, i) + self.n_devices


@dataclass(frozen=True)
class WindowProblem:
    """All data of one window's concave program."""

    n_devices: int
    n_apps: int
    window_len: int
    cpu_reqs: np.ndarray  # (A,)
    bw_reqs: np.ndarray  # (A,)
    caps_c: np.ndarray  # (omega, N) estimated compute capacities
    caps_w: np.ndarray  # (omega, N) estimated bandwidth capacities
    initial_battery: np.ndarray  # (N,)
    gamma_c: float
    gamma_w: float
    alpha: np.ndarray  # (omega, N)
    utility: UtilitySpec
    remaining_work: np.ndarray  # (A,)
    eps: float

    @property
    def layout(self) -> Layout:
        return Layout(self.n_devices, self.n_apps, self.window_len)

    @property
    def dim(self) -> int:
        return self.layout.dim

    @property
    def weights(self) -> np.ndarray:
        return self.utility.weight_array(self.n_apps)

    @property
    def discounts(self) -> np.ndarray:
        return self.utility.slot_discount ** np.arange(self.window_len)

    @property
    def energy_per_eta(self) -> np.ndarray:
        """Battery cost of one full time-fraction unit of each application."""
        return self.gamma_c * self.cpu_reqs + self.gamma_w * self.bw_reqs

    def unpack(self, x: np.ndarray) -> tuple[np.ndarray, ...]:
        """Split a flat vector into (E, H, W, C, B) views.

        E is (omega, N, A); H is (omega, A); W, C, B are (omega, N).
        """
        if x.shape != (self.dim,):
            raise ValueError(f"expected vector of dimension {self.dim}, got {x.shape}")
        N, A, w = self.n_devices, self.n_apps, self.window_len
        slots = x.reshape(w, self.layout.slot_size)
        E = slots[:, : N * A].reshape(w, N, A)
        H = slots[:, N * A : N * A + A]
        W = slots[:, N * A + A : N * A + A + N]
        C = slots[:, N * A + A + N : N * A + A + 2 * N]
        B = slots[:, N * A + A + 2 * N :]
        return E, H, W, C, B

    def pack(self, E, H, W, C, B) -> np.ndarray:
        w = self.window_len
        slots = np.concatenate(
            [E.reshape(w, -1), H, W, C, B], axis=1
        )
        return np.ascontiguousarray(slots.reshape(-1))


def build_window_problem(
    state: SlotState,
    estimates: tuple[np.ndarray, np.ndarray],
    omega: int,
    specs: SystemSpec,
    utility: UtilitySpec,
    eps: float = 1e-4,
) -> WindowProblem:
    """Assemble the window program from the state and capacity estimates.

    ``estimates`` is a (cpu, bw) pair of (omega_eff, N) arrays; omega_eff may
    be shorter than ``omega`` near the end of the horizon.
    """
    caps_c = np.asarray(estimates[0], dtype=np.float64)
    caps_w = np.asarray(estimates[1], dtype=np.float64)
    if caps_c.ndim != 2 or caps_w.shape != caps_c.shape:
        raise ValueError("estimates must be a pair of (omega_eff, N) arrays")
    omega_eff = caps_c.shape[0]
    if omega_eff == 0:
        raise ValueError("empty window")
    if omega_eff > omega:
        raise ValueError("estimates longer than requested window")
    if caps_c.shape[1] != specs.n_devices:
        raise ValueError("estimates do not cover every device")
    if np.any(caps_c < 0) or np.any(caps_w < 0):
        raise ValueError("negative capacities in estimates")
    if utility.weights:
        weights = utility.weight_array(specs.n_apps)
    else:
        weights = specs.weights
    return WindowProblem(
        n_devices=specs.n_devices,
        n_apps=specs.n_apps,
        window_len=omega_eff,
        cpu_reqs=specs.cpu_reqs,
        bw_reqs=specs.bw_reqs,
        caps_c=caps_c,
        caps_w=caps_w,
        initial_battery=np.asarray(state.battery, dtype=np.float64).copy(),
        gamma_c=specs.energy.gamma_c,
        gamma_w=specs.energy.gamma_w,
        alpha=specs.alpha_window(state.t, omega_eff),
        utility=UtilitySpec(utility.kind, tuple(weights), utility.slot_discount),
        remaining_work=np.asarray(state.remaining_work, dtype=np.float64).copy(),
        eps=float(eps),
    )


def objective(problem: WindowProblem, x: np.ndarray) -> float:
    """Discount-weighted utility of aggregate time minus the usage tie-break."""
    _, H, W, C, _ = problem.unpack(np.asarray(x, dtype=np.float64))
    util = problem.utility.value(H, problem.weights).sum(axis=1) @ problem.discounts
    energy = problem.gamma_c * C.sum() + problem.gamma_w * W.sum()
    return float(util - problem.eps * energy)


def gradient(problem: WindowProblem, x: np.ndarray) -> np.ndarray:
    """Exact analytic gradient of :func:`objective`."""
    x = np.asarray(x, dtype=np.float64)
    E, H, W, C, B = problem.unpack(x)
    gE = np.zeros_like(E)
    gH = problem.utility.derivative(H, problem.weights) * problem.discounts[:, None]
    gW = np.full_like(W, -problem.eps * problem.gamma_w)
    gC = np.full_like(C, -problem.eps * problem.gamma_c)
    gB = np.zeros_like(B)
    return problem.pack(gE, gH, gW, gC, gB)


@dataclass(frozen=True)
class WindowViolation:
    constraint: str
    slot: int
    device: Optional[int]
    app: Optional[int]
    excess: float

    def __str__(self) -> str:
        parts = [f"slot {self.slot}"]
        if self.device is not None:
            parts.append(f"device {self.device}")
        if self.app is not None:
            parts.append(f"app {self.app}")
        return f"{self.constraint} [{', '.join(parts)}]: excess {self.excess:.3e}"


def is_feasible(problem: WindowProblem, x: np.ndarray, tol: float = 1e-6) -> list[WindowViolation]:
    """Empty list iff every window constraint holds within tol."""
    x = np.asarray(x, dtype=np.float64)
    E, H, W, C, B = problem.unpack(x)
    out: list[WindowViolation] = []
    N, A, w = problem.n_devices, problem.n_apps, problem.window_len
    a_c, a_w = problem.cpu_reqs, problem.bw_reqs

    if x.min() < -tol:
        idx = int(np.argmin(x))
        out.append(WindowViolation("nonneg", idx // problem.layout.slot_size, None, None, -float(x.min())))

    for tau in range(w):
        for i in range(N):
            row = E[tau, i]
            s = float(row.sum())
            if s > 1 + tol:
                out.append(WindowViolation("time-budget", tau, i, None, s - 1))
            bw_dem = float(row @ a_w)
            cpu_dem = float(row @ a_c)
            if bw_dem > W[tau, i] + tol:
                out.append(WindowViolation("bandwidth-demand", tau, i, None, bw_dem - W[tau, i]))
            if W[tau, i] > problem.caps_w[tau, i] + tol:
                out.append(WindowViolation("bandwidth-cap", tau, i, None, float(W[tau, i] - problem.caps_w[tau, i])))
            if cpu_dem > C[tau, i] + tol:
                out.append(WindowViolation("compute-demand", tau, i, None, cpu_dem - C[tau, i]))
            if C[tau, i] > problem.caps_c[tau, i] + tol:
                out.append(WindowViolation("compute-cap", tau, i, None, float(C[tau, i] - problem.caps_c[tau, i])))
        for j in range(A):
            agg = float(E[tau, :, j].sum())
            if H[tau, j] > agg + tol:
                out.append(WindowViolation("aggregate-time", tau, None, j, float(H[tau, j] - agg)))

    b_prev = problem.initial_battery
    for tau in range(w):
        expected = problem.alpha[tau] * b_prev - problem.gamma_c * C[tau] - problem.gamma_w * W[tau]
        err = np.abs(B[tau] - expected)
        for i in range(N):
            if err[i] > tol:
                out.append(WindowViolation("battery-chain", tau, i, None, float(err[i])))
            if B[tau, i] < -tol:
                out.append(WindowViolation("battery-nonneg", tau, i, None, -float(B[tau, i])))
        b_prev = B[tau]

    for j in range(A):
        total = float(H[:, j].sum())
        if total > problem.remaining_work[j] + tol:
            out.append(WindowViolation("work-cap", -1, None, j, total - problem.remaining_work[j]))
    return out


def zero_point(problem: WindowProblem) -> np.ndarray:
    """The always-feasible point: no allocation, battery following pure decay."""
    w, N, A = problem.window_len, problem.n_devices, problem.n_apps
    E = np.zeros((w, N, A))
    H = np.zeros((w, A))
    W = np.zeros((w, N))
    C = np.zeros((w, N))
    B = np.zeros((w, N))
    b_prev = problem.initial_battery
    for tau in range(w):
        B[tau] = problem.alpha[tau] * b_prev
        b_prev = B[tau]
    return problem.pack(E, H, W, C, B)


def expand_reduced(problem: WindowProblem, E: np.ndarray, H: np.ndarray) -> np.ndarray:
    """Lift reduced variables to the full layout: usage at exact demand,
    battery following the chain."""
    W = E @ problem.bw_reqs
    C = E @ problem.cpu_reqs
    B = np.zeros_like(W)
    b_prev = problem.initial_battery
    for tau in range(problem.window_len):
        B[tau] = problem.alpha[tau] * b_prev - problem.gamma_c * C[tau] - problem.gamma_w * W[tau]
        b_prev = B[tau]
    return problem.pack(E, H, W, C, B)
