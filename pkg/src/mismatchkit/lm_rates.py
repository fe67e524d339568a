"""LM rate, its k-letter product-space version and the delta-margin rate.

The inner problem at a fixed input distribution P is

    min I(P, V)  over V  with  P V = P_Y  and  E_{P V} q >= E_{P W} q - delta.

It is solved through its Lagrangian dual

    g(s, a) = s * Gamma + a . P - sum_y P_Y(y) log sum_x P(x) exp(s q(x,y) + a(x)),

with Gamma = E_{P W} q - delta: for each s the potentials a are fitted by
Newton's method (which also produces the tilted coupling), and s is moved to
the root of dg/ds = Gamma - E_Q q. The tilted coupling is the primal witness.
"""

import itertools
from dataclasses import dataclass, field, replace
from math import comb
from typing import Optional

import numpy as np

from . import _projection as proj
from ._validation import as_probability_vector, check_consistent
from .channel_core import Dmc, Metric, product_channel, product_metric
from .errors import NoConvergence, ValidationError
from .information import mutual_information

DEFAULT_TOL = 1e-9
FEASIBILITY_TOL = 1e-8
FIT_RESIDUAL_LIMIT = 1e-9


@dataclass(frozen=True)
class PrimalProblem:
    px: np.ndarray
    w: Dmc
    q: Metric
    margin_delta: float = 0.0

    def __post_init__(self):
        check_consistent(self.w, self.q)
        self.q.validate_against(self.w)
        object.__setattr__(self, "px", as_probability_vector(self.px, self.w.input_size))
        if not self.margin_delta >= 0:
            raise ValidationError("margin delta must be nonnegative")

    @property
    def output_distribution(self):
        return self.px @ self.w.w

    @property
    def metric_target(self):
        """Right-hand side of the expectation constraint."""
        return float(_expected_metric(self.px, self.w.w, self.q.q)) - self.margin_delta


@dataclass(frozen=True)
class RateCertificate:
    """A rate with a feasible primal witness and a dual lower bound.

    `value` is the primal objective at `primal_v` and `dual_value` a
    certified lower bound on the optimum; both are per channel use (already
    divided by the number of letters for product instances).
    """

    value: float
    primal_v: np.ndarray
    dual_value: float
    gap: float
    iterations: int
    px: Optional[np.ndarray] = None
    s: float = float("nan")
    letters: int = 1


@dataclass(frozen=True)
class OuterSearchConfig:
    """Deterministic search over input distributions.

    A simplex grid with step 1/resolution (coarsened automatically if it would
    contain more than max_grid_points points), plus any explicit seeds, then
    pairwise mass-transfer coordinate ascent with halving step sizes.
    """

    resolution: int = 64
    max_grid_points: int = 5000
    max_inputs: int = 4
    refine: bool = True
    min_step: float = 1e-6
    max_refine_evals: int = 4000
    seeds: tuple = ()
    tol: float = DEFAULT_TOL

    def with_seeds(self, *more):
        return replace(self, seeds=tuple(self.seeds) + tuple(np.asarray(m, dtype=float) for m in more))


def _expected_metric(px, w, q):
    mass = px[:, None] * w
    return np.sum(np.where(mass > 0, mass * np.where(np.isfinite(q), q, 0.0), 0.0))


def _full_witness(problem, rows, cols, joint):
    """Expand a coupling on the supported block into a full channel matrix."""
    v = problem.w.w.copy()
    block = joint / joint.sum(axis=1, keepdims=True)
    sub = np.zeros((rows.sum(), problem.w.output_size))
    sub[:, cols] = block
    v[rows] = sub
    return v


def witness_violation(problem, v):
    """Largest violation of the two constraint families by channel v."""
    py = problem.output_distribution
    marg = float(np.max(np.abs(problem.px @ v - py)))
    deficit = problem.metric_target - _expected_metric(problem.px, v, problem.q.q)
    return max(marg, float(deficit), 0.0)


def inner_min(problem, tol=DEFAULT_TOL, max_iter=200):
    """Minimum of I(P, V) over the LM feasible set, with a duality certificate."""
    px, q = problem.px, problem.q.q
    rows = px > 0
    p = px[rows]
    py_full = p @ problem.w.w[rows]
    cols = py_full > 0
    w = problem.w.w[rows][:, cols]
    py = py_full[cols]
    qm = q[rows][:, cols]
    flow = p[:, None] * w
    gamma = problem.metric_target
    allowed = proj.essential_edges(np.isfinite(qm), flow)
    qz = np.where(allowed, qm, 0.0)
    logp = np.log(p)[:, None]
    spread = float(np.ptp(qz[allowed])) if allowed.any() else 0.0
    iterations = 0
    state = {"a": None}

    def solve(s, mask=allowed):
        nonlocal iterations
        logk = np.where(mask, logp + s * qz, -np.inf)
        a, joint, residual, it = proj.fit_row_potentials(logk, py, p, state["a"])
        iterations += it
        if mask is allowed:
            state["a"] = a
        dual = s * gamma + proj.dual_in_potentials(logk, py, p, a)
        slack = float(np.sum(joint * qz)) - gamma
        return joint, slack, dual, residual

    def certify(joint, dual, s):
        v = _full_witness(problem, rows, cols, joint)
        value = mutual_information(px, v)
        return RateCertificate(value, v, dual, value - dual, iterations, px=px, s=s)

    joint, slack, dual, _ = solve(0.0)
    if slack >= 0 or spread == 0:
        return certify(joint, dual, 0.0)

    if problem.margin_delta == 0:
        face = proj.optimal_face_edges(allowed, flow, qz, tol=1e-12 * (1 + spread))
        if face is not None:
            return _constraint_at_maximum(solve, certify, face, spread, tol, max_iter)

    # safeguarded Newton on the tilt, aiming just inside the feasible side
    lo, hi, h_hi = 0.0, None, None
    s, h_s = 0.0, slack
    for _ in range(max_iter):
        target = 0.125 * tol / max(s, 1.0 / spread)
        slope = proj.tilt_slope(np.where(allowed, logp + s * qz, -np.inf), py, state["a"], qz)
        step = (target - h_s) / slope if slope > 0 else np.inf
        cand = s + step
        upper = hi if hi is not None else 2.0 * max(s, 1.0 / spread)
        if not lo < cand < upper:
            cand = 0.5 * (lo + hi) if hi is not None else upper
        s = cand
        joint_s, h_s, dual_s, residual = solve(s)
        if residual > FIT_RESIDUAL_LIMIT:
            # the sign of the slack is meaningless if the marginals are off
            raise NoConvergence(tol, iterations, f"potential fit residual {residual:.3g} at s = {s:.6g}")
        if h_s >= 0:
            hi, h_hi, joint, dual = s, h_s, joint_s, dual_s
            if hi * h_hi <= 0.25 * tol:
                break
        else:
            lo = s
        if hi is not None and hi - lo <= 4e-16 * hi:
            break
    if hi is None:
        raise NoConvergence(tol, iterations, "could not bracket the tilt parameter")
    cert = certify(joint, dual, hi)
    if cert.gap > tol:
        raise NoConvergence(tol, iterations, f"duality gap {cert.gap:.3g}")
    return cert


def _constraint_at_maximum(solve, certify, face, spread, tol, max_iter):
    """The expectation constraint can only be met by couplings maximizing E q.

    The feasible set is then the optimal face of that linear program; the
    witness is the I-projection onto the face, and the dual bound comes from
    letting the tilt s grow until the gap closes.
    """
    joint, _, _, _ = solve(0.0, mask=face)
    s = 1.0 / spread
    cert = None
    for _ in range(max_iter):
        _, _, dual, _ = solve(s)
        cert = certify(joint, dual, s)
        if cert.gap <= tol:
            return cert
        s *= 2.0
    raise NoConvergence(tol, max_iter, f"duality gap {cert.gap:.3g} at the LP face")


def simplex_grid(size, resolution):
    """All distributions with entries in (1/resolution) Z, in lexicographic order."""
    for cut in itertools.combinations(range(resolution + size - 1), size - 1):
        parts = np.diff((-1,) + cut + (resolution + size - 1,)) - 1
        yield parts / resolution


def _grid_resolution(size, config):
    r = config.resolution
    while r > 1 and comb(r + size - 1, size - 1) > config.max_grid_points:
        r -= 1
    return r


def maximize_over_inputs(evaluate, size, config):
    """Maximize evaluate(px).value over the simplex; returns the best certificate."""
    if size > config.max_inputs:
        raise ValidationError(
            f"grid search supports at most {config.max_inputs} inputs, got {size}"
        )
    best = None
    candidates = list(simplex_grid(size, _grid_resolution(size, config)))
    candidates += [as_probability_vector(s, size, "seed") for s in config.seeds]
    for px in candidates:
        cert = evaluate(px)
        if best is None or cert.value > best.value:
            best = cert
    if not config.refine or size == 1:
        return best
    step, evals = 1.0 / config.resolution, 0
    while step >= config.min_step and evals < config.max_refine_evals:
        improved = False
        for i, j in itertools.permutations(range(size), 2):
            amount = min(step, best.px[j])
            if amount <= 0:
                continue
            cand = best.px.copy()
            cand[i] += amount
            cand[j] -= amount
            cand = np.clip(cand, 0.0, 1.0)
            cand /= cand.sum()
            cert = evaluate(cand)
            evals += 1
            if cert.value > best.value + 1e-13:
                best, improved = cert, True
        if not improved:
            step *= 0.5
    return best


def lm_rate(w, q, delta=0.0, search=None):
    """C_q^(1)(W) (delta = 0) or the delta-margin rate, maximized over inputs."""
    search = search or OuterSearchConfig()
    check_consistent(w, q)
    q.validate_against(w)

    def evaluate(px):
        return inner_min(PrimalProblem(px, w, q, delta), tol=search.tol)

    return maximize_over_inputs(evaluate, w.input_size, search)


def product_rate(w, q, k, search=None, seed_from_single_letter=True):
    """Per-letter LM rate of the k-fold product channel with the k-letter metric.

    With `seed_from_single_letter` the outer search also starts from the
    k-fold product of the single-letter optimizer, which makes the result at
    least the k = 1 value up to solver tolerance.
    """
    search = search or OuterSearchConfig(resolution=8)
    if k == 1:
        return lm_rate(w, q, 0.0, search)
    wk, qk = product_channel(w, k), product_metric(q, k)
    if seed_from_single_letter:
        single = lm_rate(w, q, 0.0, replace(search, seeds=()))
        seed = single.px
        for _ in range(k - 1):
            seed = np.kron(seed, single.px)
        search = search.with_seeds(seed)
    cert = lm_rate(wk, qk, 0.0, search)
    return replace(
        cert,
        value=cert.value / k,
        dual_value=cert.dual_value / k,
        gap=cert.gap / k,
        letters=k,
    )


def margin_rate_curve(w, q, deltas, search=None):
    """[(delta, certificate)] of the delta-margin rate for ascending deltas.

    Points are solved from the largest delta down, each search seeded with
    all optimizers found so far, so the curve is nonincreasing up to the
    inner solver tolerance.
    """
    deltas = [float(d) for d in deltas]
    if any(d < 0 for d in deltas) or deltas != sorted(deltas):
        raise ValidationError("deltas must be nonnegative and sorted ascending")
    search = search or OuterSearchConfig()
    results = {}
    seeds = []
    for d in reversed(deltas):
        cert = lm_rate(w, q, d, search.with_seeds(*seeds))
        seeds.append(cert.px)
        results[d] = cert
    return [(d, results[d]) for d in deltas]
