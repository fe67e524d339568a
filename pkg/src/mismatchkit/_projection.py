"""Grouped I-projection machinery shared by the LM and max-min solvers.

Both inner problems minimize D(Q || P x P_Y) over couplings Q whose row
marginal is P and whose mass on each "group" of cells is prescribed. Every
cell (x, y) belongs to at most one group and every group holds each row at
most once, so a problem is a bipartite rows-by-groups structure: a log-kernel
matrix logk[x, g] (-inf for edges that may not carry mass) and per-group
targets c[g]. For fixed row potentials a(x) the best coupling is

    Q[x, g] = c[g] * exp(logk[x, g] + a[x]) / sum_x' exp(logk[x', g] + a[x'])

and the concave dual in a is  a . p - sum_g c[g] * logsumexp_x(logk[:, g] + a).
"""

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components


MAX_LOG_STEP = 4.0


def logsumexp(z, axis=0):
    """Column-wise log-sum-exp that tolerates all -inf columns."""
    m = np.max(z, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(z - m), axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis)


def dual_in_potentials(logk, targets, p, a):
    z = logk + a[:, None]
    return float(a @ p - targets @ logsumexp(z, axis=0))


def coupling(logk, targets, a):
    z = logk + a[:, None]
    lse = logsumexp(z, axis=0)
    return np.exp(z - lse) * targets


def fit_row_potentials(logk, targets, p, a0=None, tol=1e-12, max_iter=200):
    """Newton ascent on the potentials until the row marginal of Q matches p.

    Returns (a, Q, residual, iterations) with residual = ||p - Q 1||_1.
    Requires an interior solution: every finite edge must be able to carry
    positive mass (see :func:`essential_edges`).
    """
    a = np.zeros(len(p)) if a0 is None else np.array(a0, dtype=float)
    free = _free_rows(np.isfinite(logk))
    value = dual_in_potentials(logk, targets, p, a)
    residual = best = np.inf
    stalled = 0
    it = 0
    for it in range(1, max_iter + 1):
        z = logk + a[:, None]
        r = np.exp(z - logsumexp(z, axis=0))
        q = r * targets
        grad = p - q.sum(axis=1)
        residual = float(np.abs(grad).sum())
        if residual <= tol:
            break
        if residual < 0.5 * best:
            best, stalled = residual, 0
        else:
            stalled += 1
            if stalled > 8 and residual < 1e3 * tol:
                break
        hess = np.diag(q.sum(axis=1)) - q @ r.T
        step = np.zeros_like(a)
        step[free] = np.linalg.lstsq(hess[np.ix_(free, free)], grad[free], rcond=None)[0]
        # trust region in log space: far from the optimum the curvature vanishes
        biggest = np.max(np.abs(step))
        if biggest > MAX_LOG_STEP:
            step *= MAX_LOG_STEP / biggest
        slope = grad @ step
        if 0 < slope < 1e-12 * (1.0 + abs(value)):
            # predicted gain is below rounding: judge the full step by its residual
            cand = a + step
            z = logk + cand[:, None]
            rc = np.exp(z - logsumexp(z, axis=0))
            if np.abs(p - (rc * targets).sum(axis=1)).sum() < residual:
                a, value = cand, dual_in_potentials(logk, targets, p, cand)
                continue
            # rows whose mass has vanished get no Newton step (their Hessian
            # rows underflow); the row-scaling step below still moves them
            slope = 0.0
        t = 1.0
        accepted = False
        while slope > 0 and t > 1e-10:
            cand = a + t * step
            cand_value = dual_in_potentials(logk, targets, p, cand)
            if cand_value >= value + 1e-4 * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            # row-scaling (Sinkhorn) step never decreases the dual
            with np.errstate(divide="ignore"):
                cand = a + np.log(p) - np.log(q.sum(axis=1))
            cand_value = dual_in_potentials(logk, targets, p, cand)
            if not cand_value > value:
                break
        a, value = cand, cand_value
    q = coupling(logk, targets, a)
    residual = float(np.abs(p - q.sum(axis=1)).sum())
    return a, q, residual, it


def tilt_slope(logk, targets, a, values):
    """d/ds of E_Q[values] along the tilt logk + s * values, with the
    potentials re-fitted to keep the row marginal fixed."""
    z = logk + a[:, None]
    r = np.exp(z - logsumexp(z, axis=0))
    q = r * targets
    mean = np.sum(r * values, axis=0)
    centered = np.where(q > 0, values - mean, 0.0)
    spread = float(np.sum(q * centered * values))
    jac = np.sum(q * centered, axis=1)
    hess = np.diag(q.sum(axis=1)) - q @ r.T
    free = _free_rows(np.isfinite(logk))
    sol = np.linalg.lstsq(hess[np.ix_(free, free)], jac[free], rcond=None)[0]
    return spread - float(jac[free] @ sol)


def _free_rows(allowed):
    """Rows left free after pinning one reference row per connected component.

    Adding a constant to the potentials of a whole component leaves Q
    unchanged, so pinning removes the null space of the Hessian.
    """
    nx, ng = allowed.shape
    if nx * ng <= 4096:
        labels = _row_components(allowed)
    else:
        r, c = np.nonzero(allowed)
        graph = csr_matrix((np.ones(len(r)), (r, nx + c)), shape=(nx + ng, nx + ng))
        labels = connected_components(graph, directed=False)[1][:nx]
    free = np.ones(nx, dtype=bool)
    seen = set()
    for x in range(nx):
        if labels[x] not in seen:
            seen.add(labels[x])
            free[x] = False
    return free


def _row_components(allowed):
    """Component label per row, rows being linked through shared columns."""
    parent = list(range(allowed.shape[0]))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for col in allowed.T:
        rows = np.flatnonzero(col)
        for other in rows[1:]:
            parent[find(other)] = find(rows[0])
    return [find(i) for i in range(len(parent))]


def essential_edges(allowed, flow):
    """Edges that carry positive mass in at least one feasible coupling.

    `flow` must be a feasible coupling supported on `allowed`. An edge with
    zero flow can be made positive iff it closes a cycle in the residual
    graph (rows -> groups along allowed edges, groups -> rows along edges with
    positive flow), i.e. iff its endpoints share a strongly connected
    component.
    """
    nx, ng = allowed.shape
    fwd_r, fwd_c = np.nonzero(allowed)
    back_r, back_c = np.nonzero(flow > 0)
    src = np.concatenate([fwd_r, nx + back_c])
    dst = np.concatenate([nx + fwd_c, back_r])
    graph = csr_matrix((np.ones(len(src)), (src, dst)), shape=(nx + ng, nx + ng))
    _, labels = connected_components(graph, directed=True, connection="strong")
    same = labels[:nx, None] == labels[None, nx:]
    return allowed & (same | (flow > 0))


def optimal_face_edges(allowed, flow, values, tol):
    """Edges of the face of couplings maximizing sum Q * values, given that
    `flow` is itself a maximizer; None when `flow` is not optimal.

    Runs Bellman-Ford on the residual graph with forward cost -value and
    backward cost +value, keeps edges with zero reduced cost, then prunes to
    the essential support of that restricted polytope.
    """
    nx, ng = allowed.shape
    edges = []
    for x, g in zip(*np.nonzero(allowed)):
        edges.append((x, nx + g, -values[x, g]))
        if flow[x, g] > 0:
            edges.append((nx + g, x, values[x, g]))
    dist = np.zeros(nx + ng)
    for _ in range(nx + ng):
        changed = False
        for u, v, c in edges:
            if dist[u] + c < dist[v] - tol:
                dist[v] = dist[u] + c
                changed = True
        if not changed:
            break
    else:
        return None
    for u, v, c in edges:
        if dist[u] + c < dist[v] - tol:
            return None
    reduced = -values + dist[:nx, None] - dist[None, nx:]
    tight = allowed & (reduced <= 10 * tol)
    return essential_edges(tight, np.where(tight, flow, 0.0))
