"""JIT-compiled inner loops of the window solver.

The reduced problem keeps only the per-device time fractions E (omega, N, A)
and the aggregate times H (omega, A); usage and battery variables are implied.

Projection onto the feasible set runs Dykstra's alternating method over a
small number of product sets. Each device-slot cell (box + time budget +
two resource caps) is projected exactly in closed form when A <= 2, which
sidesteps the slow linear tail alternating projections suffer when a
requirement vector is nearly parallel to the simplex facet. Every projection
output is passed through an exact scale-down repair, so the ascent loop only
ever evaluates objectives at feasible points.

Everything here is deterministic: fixed iteration schedules, no RNG.
"""
import numpy as np
from numba import njit

_EPS = 1e-12


@njit(cache=True, nogil=True)
def _objective(E, H, u, disc, e, eps, linear):
    w, N, A = E.shape
    util = 0.0
    for tau in range(w):
        for j in range(A):
            if linear:
                util += disc[tau] * u[j] * H[tau, j]
            else:
                util += disc[tau] * u[j] * np.log1p(H[tau, j])
    energy = 0.0
    for tau in range(w):
        for i in range(N):
            for j in range(A):
                energy += e[j] * E[tau, i, j]
    return util - eps * energy


@njit(cache=True, nogil=True)
def _cell_feasible(v0, v1, aw0, aw1, ac0, ac1, W, C):
    if v0 < -_EPS or v1 < -_EPS:
        return False
    if v0 + v1 > 1.0 + _EPS:
        return False
    if aw0 * v0 + aw1 * v1 > W + _EPS:
        return False
    if ac0 * v0 + ac1 * v1 > C + _EPS:
        return False
    return True


@njit(cache=True, nogil=True)
def _project_cell_2d(p0, p1, aw0, aw1, ac0, ac1, W, C, out):
    """Exact Euclidean projection onto one 2-application cell polygon.

    The projection is either the point itself, the foot on one edge line, or
    a vertex; all are enumerable in closed form.
    """
    if _cell_feasible(p0, p1, aw0, aw1, ac0, ac1, W, C):
        out[0] = p0
        out[1] = p1
        return

    # halfspaces n.v <= b
    n0 = np.empty(5)
    n1 = np.empty(5)
    bb = np.empty(5)
    n0[0] = -1.0; n1[0] = 0.0; bb[0] = 0.0
    n0[1] = 0.0; n1[1] = -1.0; bb[1] = 0.0
    n0[2] = 1.0; n1[2] = 1.0; bb[2] = 1.0
    n0[3] = aw0; n1[3] = aw1; bb[3] = W
    n0[4] = ac0; n1[4] = ac1; bb[4] = C

    best_d = 1e300
    q0 = 0.0
    q1 = 0.0
    found = False

    # feet of the perpendicular on each edge line
    for k in range(5):
        nn = n0[k] * n0[k] + n1[k] * n1[k]
        if nn <= _EPS:
            continue
        viol = (n0[k] * p0 + n1[k] * p1 - bb[k]) / nn
        if viol <= 0.0:
            continue
        c0 = p0 - viol * n0[k]
        c1 = p1 - viol * n1[k]
        if _cell_feasible(c0, c1, aw0, aw1, ac0, ac1, W, C):
            d = (c0 - p0) ** 2 + (c1 - p1) ** 2
            if d < best_d:
                best_d = d
                q0 = c0
                q1 = c1
                found = True

    # vertices: intersections of constraint-line pairs
    for k in range(5):
        for l in range(k + 1, 5):
            det = n0[k] * n1[l] - n0[l] * n1[k]
            if abs(det) <= _EPS:
                continue
            c0 = (bb[k] * n1[l] - bb[l] * n1[k]) / det
            c1 = (n0[k] * bb[l] - n0[l] * bb[k]) / det
            if _cell_feasible(c0, c1, aw0, aw1, ac0, ac1, W, C):
                d = (c0 - p0) ** 2 + (c1 - p1) ** 2
                if d < best_d:
                    best_d = d
                    q0 = c0
                    q1 = c1
                    found = True

    if not found:
        q0 = 0.0
        q1 = 0.0
    out[0] = q0
    out[1] = q1


@njit(cache=True, nogil=True)
def _project_cells(E, pC, a_c, a_w, cbar, wbar):
    """Dykstra step for the product of all device-slot cells (exact, A <= 2)."""
    w, N, A = E.shape
    tmp = np.empty(2)
    for tau in range(w):
        for i in range(N):
            if A == 1:
                y = E[tau, i, 0] + pC[tau, i, 0]
                hi = 1.0
                if a_w[0] > 0.0:
                    m = wbar[tau, i] / a_w[0]
                    if m < hi:
                        hi = m
                if a_c[0] > 0.0:
                    m = cbar[tau, i] / a_c[0]
                    if m < hi:
                        hi = m
                v = y
                if v < 0.0:
                    v = 0.0
                elif v > hi:
                    v = hi
                pC[tau, i, 0] = y - v
                E[tau, i, 0] = v
            else:
                y0 = E[tau, i, 0] + pC[tau, i, 0]
                y1 = E[tau, i, 1] + pC[tau, i, 1]
                _project_cell_2d(
                    y0, y1, a_w[0], a_w[1], a_c[0], a_c[1],
                    wbar[tau, i], cbar[tau, i], tmp,
                )
                pC[tau, i, 0] = y0 - tmp[0]
                pC[tau, i, 1] = y1 - tmp[1]
                E[tau, i, 0] = tmp[0]
                E[tau, i, 1] = tmp[1]


@njit(cache=True, nogil=True)
def _project_cells_iterative(E, pC, lt, lw, lc, a_c, a_w, cbar, wbar, na_w2, na_c2):
    """Fallback cell handling for A > 2: box and the three halfspaces as
    separate Dykstra sets."""
    w, N, A = E.shape
    for tau in range(w):
        for i in range(N):
            for j in range(A):
                y = E[tau, i, j] + pC[tau, i, j]
                v = y
                if v < 0.0:
                    v = 0.0
                elif v > 1.0:
                    v = 1.0
                pC[tau, i, j] = y - v
                E[tau, i, j] = v
    for tau in range(w):
        for i in range(N):
            s = 0.0
            lam0 = lt[tau, i]
            for j in range(A):
                E[tau, i, j] += lam0
                s += E[tau, i, j]
            lam = (s - 1.0) / A
            if lam < 0.0:
                lam = 0.0
            for j in range(A):
                E[tau, i, j] -= lam
            lt[tau, i] = lam
    if na_w2 > 0.0:
        for tau in range(w):
            for i in range(N):
                lam0 = lw[tau, i]
                dot = 0.0
                for j in range(A):
                    y = E[tau, i, j] + lam0 * a_w[j]
                    E[tau, i, j] = y
                    dot += a_w[j] * y
                lam = (dot - wbar[tau, i]) / na_w2
                if lam < 0.0:
                    lam = 0.0
                for j in range(A):
                    E[tau, i, j] -= lam * a_w[j]
                lw[tau, i] = lam
    if na_c2 > 0.0:
        for tau in range(w):
            for i in range(N):
                lam0 = lc[tau, i]
                dot = 0.0
                for j in range(A):
                    y = E[tau, i, j] + lam0 * a_c[j]
                    E[tau, i, j] = y
                    dot += a_c[j] * y
                lam = (dot - cbar[tau, i]) / na_c2
                if lam < 0.0:
                    lam = 0.0
                for j in range(A):
                    E[tau, i, j] -= lam * a_c[j]
                lc[tau, i] = lam


@njit(cache=True, nogil=True)
def _dykstra(E, H, a_c, a_w, cbar, wbar, R, batt_P, batt_rhs, batt_mask,
             batt_gn2, e, na_w2, na_c2, dyk_max):
    """Project (E, H) in place onto (a close approximation of) the feasible
    set; returns cycles used. Corrections restart at zero, per Dykstra."""
    w, N, A = E.shape
    pC = np.zeros((w, N, A))
    pH = np.zeros((w, A))
    lt = np.zeros((w, N))
    lw = np.zeros((w, N))
    lc = np.zeros((w, N))
    lcp = np.zeros((w, A))
    lwk = np.zeros(A)
    lb = np.zeros((N, w))
    snapE = np.empty((w, N, A))
    snapH = np.empty((w, A))

    cycles = 0
    for _cycle in range(dyk_max):
        cycles += 1
        moved = 0.0
        lam_moved = 0.0
        for tau in range(w):
            for i in range(N):
                for j in range(A):
                    snapE[tau, i, j] = E[tau, i, j]
            for j in range(A):
                snapH[tau, j] = H[tau, j]

        # cells (exact for A <= 2)
        if A <= 2:
            _project_cells(E, pC, a_c, a_w, cbar, wbar)
        else:
            lt_old = 0.0
            for tau in range(w):
                for i in range(N):
                    d = lt[tau, i] + lw[tau, i] + lc[tau, i]
                    if d > lt_old:
                        lt_old = d
            _project_cells_iterative(E, pC, lt, lw, lc, a_c, a_w, cbar, wbar, na_w2, na_c2)
            lt_new = 0.0
            for tau in range(w):
                for i in range(N):
                    d = lt[tau, i] + lw[tau, i] + lc[tau, i]
                    if d > lt_new:
                        lt_new = d
            d = abs(lt_new - lt_old)
            if d > lam_moved:
                lam_moved = d

        # H >= 0 box
        for tau in range(w):
            for j in range(A):
                y = H[tau, j] + pH[tau, j]
                v = y if y > 0.0 else 0.0
                pH[tau, j] = y - v
                H[tau, j] = v

        # coupling: H[tau, j] <= sum_i E[tau, i, j]
        for tau in range(w):
            for j in range(A):
                lam0 = lcp[tau, j]
                yh = H[tau, j] + lam0
                viol = yh
                for i in range(N):
                    y = E[tau, i, j] - lam0
                    E[tau, i, j] = y
                    viol -= y
                lam = viol / (1.0 + N)
                if lam < 0.0:
                    lam = 0.0
                H[tau, j] = yh - lam
                for i in range(N):
                    E[tau, i, j] += lam
                d = abs(lam - lam0)
                if d > lam_moved:
                    lam_moved = d
                lcp[tau, j] = lam

        # work cap: sum_tau H[:, j] <= R[j]
        for j in range(A):
            lam0 = lwk[j]
            s = 0.0
            for tau in range(w):
                y = H[tau, j] + lam0
                H[tau, j] = y
                s += y
            lam = (s - R[j]) / w
            if lam < 0.0:
                lam = 0.0
            for tau in range(w):
                H[tau, j] -= lam
            d = abs(lam - lam0)
            if d > lam_moved:
                lam_moved = d
            lwk[j] = lam

        # battery prefixes
        for i in range(N):
            if not batt_mask[i]:
                continue
            for tp in range(w):
                gn2 = batt_gn2[i, tp]
                if gn2 <= 0.0:
                    continue
                lam0 = lb[i, tp]
                dot = 0.0
                for s in range(tp + 1):
                    coeff = batt_P[i, tp, s]
                    for j in range(A):
                        y = E[s, i, j] + lam0 * coeff * e[j]
                        E[s, i, j] = y
                        dot += coeff * e[j] * y
                lam = (dot - batt_rhs[i, tp]) / gn2
                if lam < 0.0:
                    lam = 0.0
                for s in range(tp + 1):
                    coeff = batt_P[i, tp, s]
                    for j in range(A):
                        E[s, i, j] -= lam * coeff * e[j]
                d = abs(lam - lam0)
                if d > lam_moved:
                    lam_moved = d
                lb[i, tp] = lam

        for tau in range(w):
            for i in range(N):
                for j in range(A):
                    d = abs(E[tau, i, j] - snapE[tau, i, j])
                    if d > moved:
                        moved = d
            for j in range(A):
                d = abs(H[tau, j] - snapH[tau, j])
                if d > moved:
                    moved = d
        if moved < 1e-13 and lam_moved < 1e-13:
            break
    return cycles


@njit(cache=True, nogil=True)
def _repair(E, H, a_c, a_w, e, cbar, wbar, R, alpha, b0):
    """Exact feasibility by scaling down: resource caps touch only the
    coordinates that consume the resource, battery walks forward in time,
    aggregates are clipped to column sums and work caps."""
    w, N, A = E.shape
    for tau in range(w):
        for i in range(N):
            s = 0.0
            for j in range(A):
                v = E[tau, i, j]
                if v < 0.0:
                    v = 0.0
                elif v > 1.0:
                    v = 1.0
                E[tau, i, j] = v
                s += v
            if s > 1.0:
                fac = 1.0 / s
                for j in range(A):
                    E[tau, i, j] *= fac
            dem = 0.0
            for j in range(A):
                dem += a_w[j] * E[tau, i, j]
            if dem > wbar[tau, i] and dem > 0.0:
                fac = wbar[tau, i] / dem
                for j in range(A):
                    if a_w[j] > 0.0:
                        E[tau, i, j] *= fac
            dem = 0.0
            for j in range(A):
                dem += a_c[j] * E[tau, i, j]
            if dem > cbar[tau, i] and dem > 0.0:
                fac = cbar[tau, i] / dem
                for j in range(A):
                    if a_c[j] > 0.0:
                        E[tau, i, j] *= fac

    for i in range(N):
        b = b0[i]
        for tau in range(w):
            allowed = alpha[tau, i] * b
            drain = 0.0
            for j in range(A):
                drain += e[j] * E[tau, i, j]
            if drain > allowed:
                fac = 0.0
                if drain > 0.0:
                    fac = allowed / drain
                    if fac < 0.0:
                        fac = 0.0
                drain = 0.0
                for j in range(A):
                    E[tau, i, j] *= fac
                    drain += e[j] * E[tau, i, j]
            b = allowed - drain

    for j in range(A):
        tot = 0.0
        for tau in range(w):
            s = 0.0
            for i in range(N):
                s += E[tau, i, j]
            v = H[tau, j]
            if v < 0.0:
                v = 0.0
            if v > s:
                v = s
            H[tau, j] = v
            tot += v
        if tot > R[j]:
            fac = 0.0
            if tot > 0.0:
                fac = R[j] / tot
                if fac < 0.0:
                    fac = 0.0
            for tau in range(w):
                H[tau, j] *= fac


@njit(cache=True, nogil=True)
def solve_reduced(E, H, a_c, a_w, u, disc, e, cbar, wbar, R, batt_P, batt_rhs,
                  batt_mask, batt_gn2, na_w2, na_c2, eps, linear, tol,
                  max_iters, dyk_max, t_max, alpha, b0):
    """Projected gradient ascent with Armijo backtracking on the reduced
    problem; mutates (E, H) to the final iterate.

    Iterates are always exactly feasible: each projected proposal is repaired
    before its objective is compared. Before declaring convergence the loop
    probes once with the largest allowed step, which guards against stalls at
    a step size that shrank too far.

    Returns (iterations, status, objective trace, trace length); status 0 means
    converged, 1 means the iteration cap was hit.
    """
    w, N, A = E.shape

    _dykstra(E, H, a_c, a_w, cbar, wbar, R, batt_P, batt_rhs,
             batt_mask, batt_gn2, e, na_w2, na_c2, dyk_max)
    _repair(E, H, a_c, a_w, e, cbar, wbar, R, alpha, b0)
    f = _objective(E, H, u, disc, e, eps, linear)
    trace = np.empty(max_iters + 1)
    trace[0] = f
    nt = 1

    Ey = np.empty((w, N, A))
    Hy = np.empty((w, A))
    Et = np.empty((w, N, A))
    Ht = np.empty((w, A))

    t = 1.0 if 1.0 < t_max else t_max
    consec = 0
    stalls = 0
    probes_left = 3
    status = 1
    iters = 0

    for _k in range(max_iters):
        iters += 1

        for tau in range(w):
            for i in range(N):
                for j in range(A):
                    Ey[tau, i, j] = E[tau, i, j] - t * eps * e[j]
            for j in range(A):
                if linear:
                    g = disc[tau] * u[j]
                else:
                    g = disc[tau] * u[j] / (1.0 + H[tau, j])
                Hy[tau, j] = H[tau, j] + t * g
        _dykstra(Ey, Hy, a_c, a_w, cbar, wbar, R, batt_P, batt_rhs,
                 batt_mask, batt_gn2, e, na_w2, na_c2, dyk_max)
        _repair(Ey, Hy, a_c, a_w, e, cbar, wbar, R, alpha, b0)

        dirderiv = 0.0
        dn = 0.0
        for tau in range(w):
            for i in range(N):
                for j in range(A):
                    d = Ey[tau, i, j] - E[tau, i, j]
                    dirderiv += (-eps * e[j]) * d
                    ad = abs(d)
                    if ad > dn:
                        dn = ad
            for j in range(A):
                d = Hy[tau, j] - H[tau, j]
                if linear:
                    g = disc[tau] * u[j]
                else:
                    g = disc[tau] * u[j] / (1.0 + H[tau, j])
                dirderiv += g * d
                ad = abs(d)
                if ad > dn:
                    dn = ad

        improved = False
        if dn >= 1e-15 and dirderiv > 0.0:
            step = 1.0
            for _m in range(60):
                for tau in range(w):
                    for i in range(N):
                        for j in range(A):
                            Et[tau, i, j] = E[tau, i, j] + step * (Ey[tau, i, j] - E[tau, i, j])
                    for j in range(A):
                        Ht[tau, j] = H[tau, j] + step * (Hy[tau, j] - H[tau, j])
                f_try = _objective(Et, Ht, u, disc, e, eps, linear)
                if f_try >= f + 1e-4 * step * dirderiv:
                    improved = True
                    break
                step *= 0.5

            if improved:
                for tau in range(w):
                    for i in range(N):
                        for j in range(A):
                            E[tau, i, j] = Et[tau, i, j]
                    for j in range(A):
                        H[tau, j] = Ht[tau, j]
                relchg = (f_try - f) / (1.0 + abs(f_try))
                f = f_try
                trace[nt] = f
                nt += 1
                stalls = 0
                if relchg < tol:
                    consec += 1
                else:
                    consec = 0
                if step == 1.0:
                    t = t * 1.8
                    if t > t_max:
                        t = t_max
                elif step <= 0.25:
                    t = t * 0.5
                    if t < 1e-10:
                        t = 1e-10

        if not improved:
            stalls += 1
            t = t * 0.25
            if t < 1e-10:
                t = 1e-10

        if consec >= 5 or stalls >= 5:
            # small steps can stall below the optimum; retry with a boosted
            # step a bounded number of times before trusting the trigger
            if probes_left > 0 and t < t_max:
                probes_left -= 1
                t = t * 64.0
                if t > t_max:
                    t = t_max
                consec = 0
                stalls = 0
                continue
            status = 0
            break

    return iters, status, trace, nt


@njit(cache=True, nogil=True)
def project_reduced(E, H, a_c, a_w, cbar, wbar, R, batt_P, batt_rhs, batt_mask,
                    batt_gn2, e, na_w2, na_c2, dyk_max):
    return _dykstra(E, H, a_c, a_w, cbar, wbar, R, batt_P, batt_rhs, batt_mask,
                    batt_gn2, e, na_w2, na_c2, dyk_max)
