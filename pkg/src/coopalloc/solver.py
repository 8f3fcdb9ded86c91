"""Window solver: projected gradient ascent on the reduced problem, plus an
independent grid-enumeration oracle for testing.

The solver eliminates usage and battery variables analytically (usage at
exact demand, battery following the chain) and iterates only on time
fractions; returned solutions are re-expanded to the full variable layout.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .window import LINEAR, WindowProblem, expand_reduced, is_feasible, objective

CONVERGED = "converged"
MAX_ITERS = "max_iters"
INFEASIBLE = "infeasible"

_FEAS_EPS = 1e-12


class InstanceTooLarge(ValueError):
    """Raised when the oracle's grid enumeration would exceed its point budget."""


@dataclass(frozen=True)
class Solution:
    x: np.ndarray
    objective: float
    iterations: int
    status: str
    objective_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _battery_terms(problem: WindowProblem):
    """Prefix-constraint coefficients, right-hand sides, and a can-bind mask."""
    w, N = problem.window_len, problem.n_devices
    e = problem.energy_per_eta
    alpha = problem.alpha
    P = np.zeros((N, w, w))
    rhs = np.zeros((N, w))
    for i in range(N):
        decay = 1.0
        for tp in range(w):
            decay *= alpha[tp, i]
            rhs[i, tp] = decay * problem.initial_battery[i]
            P[i, tp, tp] = 1.0
            for s in range(tp - 1, -1, -1):
                P[i, tp, s] = P[i, tp, s + 1] * alpha[s + 1, i]
    ne2 = float(e @ e)
    gn2 = (P**2).sum(axis=2) * ne2

    # a device whose battery survives even worst-case drain never binds
    mask = np.zeros(N, dtype=np.bool_)
    if ne2 > 0:
        e_max = float(e.max())
        for i in range(N):
            b = problem.initial_battery[i]
            for tau in range(w):
                drain_ub = min(
                    e_max,
                    problem.gamma_c * problem.caps_c[tau, i]
                    + problem.gamma_w * problem.caps_w[tau, i],
                )
                b = alpha[tau, i] * b - drain_ub
                if b < 0:
                    mask[i] = True
                    break
    return P, rhs, mask, gn2


def _kernel_args(problem: WindowProblem):
    P, rhs, mask, gn2 = _battery_terms(problem)
    a_c = np.ascontiguousarray(problem.cpu_reqs)
    a_w = np.ascontiguousarray(problem.bw_reqs)
    return dict(
        a_c=a_c,
        a_w=a_w,
        cbar=np.ascontiguousarray(problem.caps_c),
        wbar=np.ascontiguousarray(problem.caps_w),
        R=np.ascontiguousarray(problem.remaining_work),
        batt_P=P,
        batt_rhs=rhs,
        batt_mask=mask,
        batt_gn2=gn2,
        e=np.ascontiguousarray(problem.energy_per_eta),
        na_w2=float(a_w @ a_w),
        na_c2=float(a_c @ a_c),
    )


def waterfill(
    s: np.ndarray, cap: float, weight: float, disc: np.ndarray, kind: str
) -> np.ndarray:
    """Optimal aggregate times for one application given per-slot ceilings
    ``s`` and a total-work cap.

    Linear utilities fill the earliest slots first (optimal for any discount,
    uniquely so below one); concave utilities use the exact KKT water level
    found by a descending breakpoint scan.
    """
    s = np.maximum(np.asarray(s, dtype=np.float64), 0.0)
    n = s.shape[0]
    if cap <= 0:
        return np.zeros(n)
    total = float(s.sum())
    if total <= cap:
        return s.copy()

    if kind == LINEAR:
        h = np.zeros(n)
        left = cap
        for tau in range(n):
            take = min(float(s[tau]), left)
            h[tau] = take
            left -= take
            if left <= 0:
                break
        return h

    # log1p: h_tau = clip(g_tau / lam - 1, 0, s_tau) with sum(h) = cap
    g = weight * disc[:n]
    events: list[tuple[float, float, int, float]] = []
    for tau in range(n):
        if s[tau] <= 0:
            continue
        events.append((float(g[tau]), float(g[tau]), 1, 0.0))  # enters interior
        events.append((float(g[tau] / (1.0 + s[tau])), -float(g[tau]), -1, float(s[tau])))
    events.sort(key=lambda ev: -ev[0])

    sum_g, count, sat = 0.0, 0, 0.0
    lam_star = events[-1][0]
    for lam_ev, dg, dc, ds in events:
        # filled volume just above this breakpoint, with the current active set
        level = sat + (sum_g / lam_ev - count if count > 0 else 0.0)
        if level >= cap - 1e-15:
            denom = cap - sat + count
            lam_star = sum_g / denom if (count > 0 and denom > 0) else lam_ev
            break
        sum_g += dg
        count += dc
        sat += ds
    h = np.clip(g / lam_star - 1.0, 0.0, s)
    return h


def _repair(problem: WindowProblem, E: np.ndarray, H: np.ndarray):
    """Exact feasibility restoration.

    Any residual constraint dust from the projection is removed by scaling the
    offending coordinates down (never up), then aggregates are recomputed by
    water-filling, so only resource-consuming coordinates pay for a violated
    resource cap.
    """
    w, N = problem.window_len, problem.n_devices
    a_c, a_w = problem.cpu_reqs, problem.bw_reqs
    e = problem.energy_per_eta
    E = np.clip(E, 0.0, 1.0)
    E[E < _FEAS_EPS] = 0.0  # degenerate-split dust would survive into CSVs

    row_sum = E.sum(axis=2)
    over = row_sum > 1.0
    if over.any():
        fac = np.where(over, 1.0 / np.maximum(row_sum, _FEAS_EPS), 1.0)
        E *= fac[:, :, None]

    uses_w = a_w > 0
    if uses_w.any():
        bw_dem = E @ a_w
        over = bw_dem > problem.caps_w
        if over.any():
            fac = np.where(over, problem.caps_w / np.maximum(bw_dem, _FEAS_EPS), 1.0)
            E[:, :, uses_w] *= fac[:, :, None]

    uses_c = a_c > 0
    if uses_c.any():
        cpu_dem = E @ a_c
        over = cpu_dem > problem.caps_c
        if over.any():
            fac = np.where(over, problem.caps_c / np.maximum(cpu_dem, _FEAS_EPS), 1.0)
            E[:, :, uses_c] *= fac[:, :, None]

    for i in range(N):
        b = problem.initial_battery[i]
        for tau in range(w):
            allowed = problem.alpha[tau, i] * b
            drain = float(E[tau, i] @ e)
            if drain > allowed:
                scale = max(allowed, 0.0) / drain
                E[tau, i] *= scale
                drain = float(E[tau, i] @ e)
            b = allowed - drain

    s = E.sum(axis=1)  # (w, A)
    disc = problem.discounts
    weights = problem.weights
    Hout = np.zeros_like(H)
    for j in range(problem.n_apps):
        Hout[:, j] = waterfill(
            s[:, j], float(problem.remaining_work[j]), float(weights[j]), disc,
            problem.utility.kind,
        )
    return E, Hout


def solve(
    problem: WindowProblem,
    tol: float = 1e-8,
    max_iters: int = 10_000,
    x0: Optional[np.ndarray] = None,
    warm_eh: Optional[tuple[np.ndarray, np.ndarray]] = None,
    dykstra_iters: int = 100,
) -> Solution:
    """Solve the window program to the given tolerance.

    Deterministic: identical inputs produce bitwise-identical solutions. Warm
    starts (a full ``x0`` or a reduced ``warm_eh`` pair from a neighboring
    window) only change the iteration path, not the feasibility guarantees of
    the result.
    """
    w, N, A = problem.window_len, problem.n_devices, problem.n_apps
    E = np.zeros((w, N, A))
    H = np.zeros((w, A))
    if x0 is not None:
        E0, H0, _, _, _ = problem.unpack(np.asarray(x0, dtype=np.float64))
        E[:] = E0
        H[:] = H0
    elif warm_eh is not None:
        E0, H0 = warm_eh
        rows = min(w, E0.shape[0])
        if E0.shape[1:] == (N, A):
            E[:rows] = E0[:rows]
            H[:rows] = H0[:rows]

    ka = _kernel_args(problem)
    # proposals should overreach the feasible set by a bounded factor;
    # beyond ~N per slot and the work caps there is nothing to gain
    weights = problem.weights
    disc = problem.discounts
    g_min = float(weights.min()) * float(disc.min())
    if problem.utility.kind != LINEAR:
        g_min /= 1.0 + N
    diam = w * (N + 1.0) + float(np.minimum(problem.remaining_work, w * N).sum())
    t_max = 8.0 * diam / max(g_min, 1e-12)

    iters, status_code, trace, nt = _kernels.solve_reduced(
        E, H, ka["a_c"], ka["a_w"],
        np.ascontiguousarray(weights),
        np.ascontiguousarray(disc),
        ka["e"], ka["cbar"], ka["wbar"], ka["R"],
        ka["batt_P"], ka["batt_rhs"], ka["batt_mask"], ka["batt_gn2"],
        ka["na_w2"], ka["na_c2"],
        float(problem.eps), problem.utility.kind == LINEAR,
        float(tol), int(max_iters), int(dykstra_iters), float(t_max),
        np.ascontiguousarray(problem.alpha),
        np.ascontiguousarray(problem.initial_battery),
    )

    E, H = _repair(problem, E, H)
    x = expand_reduced(problem, E, H)
    status = CONVERGED if status_code == 0 else MAX_ITERS
    violations = is_feasible(problem, x, tol=1e-6)
    if violations:
        status = INFEASIBLE
    return Solution(
        x=x,
        objective=objective(problem, x),
        iterations=int(iters),
        status=status,
        objective_trace=trace[:nt].copy(),
    )


def project_feasible(problem: WindowProblem, x: np.ndarray) -> np.ndarray:
    """Return a feasible point near ``x``; feasible inputs come back unchanged
    up to tolerance.

    The battery chain is re-satisfied exactly by recomputing levels from the
    usages, then usages (and the time fractions driving them) are scaled down
    wherever a level would go negative.
    """
    x = np.asarray(x, dtype=np.float64)
    E, H, W, C, _ = problem.unpack(x)
    E = np.ascontiguousarray(E).copy()
    H = np.ascontiguousarray(H).copy()
    W = W.copy()
    C = C.copy()

    ka = _kernel_args(problem)
    _kernels.project_reduced(
        E, H, ka["a_c"], ka["a_w"], ka["cbar"], ka["wbar"], ka["R"],
        ka["batt_P"], ka["batt_rhs"], ka["batt_mask"], ka["batt_gn2"],
        ka["e"], ka["na_w2"], ka["na_c2"], 200,
    )
    E, H_fill = _repair(problem, E, H)

    w, N = problem.window_len, problem.n_devices
    bw_dem = E @ problem.bw_reqs
    cpu_dem = E @ problem.cpu_reqs
    W = np.minimum(np.maximum(W, bw_dem), np.maximum(problem.caps_w, bw_dem))
    C = np.minimum(np.maximum(C, cpu_dem), np.maximum(problem.caps_c, cpu_dem))

    for i in range(N):
        b = problem.initial_battery[i]
        for tau in range(w):
            allowed = problem.alpha[tau, i] * b
            drain = problem.gamma_c * C[tau, i] + problem.gamma_w * W[tau, i]
            if drain > allowed:
                scale = max(allowed, 0.0) / drain
                E[tau, i] *= scale
                W[tau, i] *= scale
                C[tau, i] *= scale
                drain *= scale
            b = allowed - drain

    s = E.sum(axis=1)
    H = np.minimum(np.maximum(H, 0.0), s)
    for j in range(problem.n_apps):
        total = float(H[:, j].sum())
        capj = float(problem.remaining_work[j])
        if total > capj:
            H[:, j] *= (capj / total) if total > 0 else 0.0

    B = np.zeros((w, N))
    b_prev = problem.initial_battery
    for tau in range(w):
        B[tau] = problem.alpha[tau] * b_prev - problem.gamma_c * C[tau] - problem.gamma_w * W[tau]
        b_prev = B[tau]
    return problem.pack(E, H, W, C, B)


def _grid_cell_points(problem: WindowProblem, tau: int, i: int, step: float) -> np.ndarray:
    """All grid points of one device-slot cell that satisfy its constraints."""
    A = problem.n_apps
    axes = [np.arange(0.0, 1.0 + step / 2, step) for _ in range(A)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    keep = pts.sum(axis=1) <= 1.0 + _FEAS_EPS
    keep &= pts @ problem.bw_reqs <= problem.caps_w[tau, i] + _FEAS_EPS
    keep &= pts @ problem.cpu_reqs <= problem.caps_c[tau, i] + _FEAS_EPS
    return pts[keep]


def _oracle_utility(s: np.ndarray, cap: float, g: np.ndarray, linear: bool) -> np.ndarray:
    """Vectorized best utility per candidate given slot ceilings s (K, w).

    Self-contained on purpose: the oracle must not share the solver's
    water-filling code path.
    """
    K, w = s.shape
    if cap <= 0:
        return np.zeros(K)
    if linear:
        prev = np.concatenate([np.zeros((K, 1)), np.cumsum(s, axis=1)[:, :-1]], axis=1)
        h = np.clip(cap - prev, 0.0, s)
        return h @ g
    total = s.sum(axis=1)
    h = s.copy()
    tight = total > cap
    if tight.any():
        st = s[tight]
        lam_lo = np.full(st.shape[0], float(np.min(g)) / (2.0 + float(st.max())))
        lam_hi = np.full(st.shape[0], float(np.max(g)) * (1.0 + 1e-12))
        for _ in range(100):
            lam = 0.5 * (lam_lo + lam_hi)
            ht = np.clip(g[None, :] / lam[:, None] - 1.0, 0.0, st)
            too_big = ht.sum(axis=1) > cap
            lam_lo = np.where(too_big, lam, lam_lo)
            lam_hi = np.where(too_big, lam_hi, lam)
        h[tight] = np.clip(g[None, :] / lam_hi[:, None] - 1.0, 0.0, st)
    return np.log1p(h) @ g


def brute_force_oracle(
    problem: WindowProblem, grid_step: float, max_points: float = 1e8
) -> Solution:
    """Exhaustive search over a grid of time fractions.

    Dependent variables (aggregate times, usages, battery) take their
    tie-broken optimal values at each grid point; the best grid-feasible point
    wins. Independent of the gradient solver by construction.
    """
    w, N, A = problem.window_len, problem.n_devices, problem.n_apps
    cells = [[_grid_cell_points(problem, tau, i, grid_step) for i in range(N)] for tau in range(w)]

    total_points = 1.0
    for tau in range(w):
        for i in range(N):
            total_points *= max(len(cells[tau][i]), 1)
    if total_points > max_points:
        raise InstanceTooLarge(
            f"grid enumeration needs {total_points:.3g} points (> {max_points:.3g})"
        )

    e = problem.energy_per_eta
    # per-slot combos: aggregate s (K_tau, A) and per-device drain (K_tau, N)
    slot_s, slot_drain, slot_sizes = [], [], []
    for tau in range(w):
        s = np.zeros((1, A))
        drain = np.zeros((1, 0))
        for i in range(N):
            pts = cells[tau][i]
            if len(pts) == 0:
                pts = np.zeros((1, A))
            n_old, n_new = s.shape[0], pts.shape[0]
            s = (s[:, None, :] + pts[None, :, :]).reshape(-1, A)
            drain = np.concatenate(
                [
                    np.repeat(drain, n_new, axis=0),
                    np.tile(pts @ e, n_old)[:, None],
                ],
                axis=1,
            )
        slot_s.append(s)
        slot_drain.append(drain)
        slot_sizes.append(s.shape[0])

    weights = problem.weights
    disc = problem.discounts
    linear = problem.utility.kind == LINEAR

    K = int(np.prod(slot_sizes))
    best_obj = -np.inf
    best_flat = -1
    chunk = 200_000
    for start in range(0, K, chunk):
        idx_flat = np.arange(start, min(start + chunk, K))
        rem = idx_flat.copy()
        tau_idx = [np.zeros(0, dtype=int)] * w
        for tau in range(w - 1, -1, -1):
            tau_idx[tau] = rem % slot_sizes[tau]
            rem = rem // slot_sizes[tau]

        s = np.stack([slot_s[tau][tau_idx[tau]] for tau in range(w)], axis=1)  # (K, w, A)
        dr = np.stack([slot_drain[tau][tau_idx[tau]] for tau in range(w)], axis=1)  # (K, w, N)

        feas = np.ones(len(idx_flat), dtype=bool)
        b = np.broadcast_to(problem.initial_battery, (len(idx_flat), N)).copy()
        for tau in range(w):
            b = problem.alpha[tau][None, :] * b - dr[:, tau, :]
            feas &= (b >= -1e-9).all(axis=1)

        util = np.zeros(len(idx_flat))
        for j in range(A):
            util += _oracle_utility(
                s[:, :, j], float(problem.remaining_work[j]),
                weights[j] * disc, linear,
            )
        energy = (s * e[None, None, :]).sum(axis=(1, 2))
        obj = util - problem.eps * energy
        obj[~feas] = -np.inf

        k = int(np.argmax(obj))
        if obj[k] > best_obj:
            best_obj = float(obj[k])
            best_flat = int(idx_flat[k])

    if best_flat < 0:
        raise RuntimeError("no feasible grid point (zero point should always qualify)")

    # decode the winning combination back into time fractions
    E = np.zeros((w, N, A))
    rem = best_flat
    taus = [0] * w
    for tau in range(w - 1, -1, -1):
        taus[tau] = rem % slot_sizes[tau]
        rem //= slot_sizes[tau]
    for tau in range(w):
        combo = taus[tau]
        for i in range(N - 1, -1, -1):
            n_i = max(len(cells[tau][i]), 1)
            pt_idx = combo % n_i
            combo //= n_i
            if len(cells[tau][i]):
                E[tau, i] = cells[tau][i][pt_idx]

    s = E.sum(axis=1)
    H = np.zeros((w, A))
    for j in range(A):
        H[:, j] = waterfill(
            s[:, j], float(problem.remaining_work[j]), float(weights[j]), disc,
            problem.utility.kind,
        )
    x = expand_reduced(problem, E, H)
    return Solution(
        x=x, objective=objective(problem, x), iterations=K, status=CONVERGED
    )
