"""Max-min upper bound at block length one and the minimum metric gap eta_n."""

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from . import _projection as proj
from ._validation import check_consistent
from .errors import CapExceeded, DegenerateLevels, NoConvergence, NotRational, ValidationError
from .information import mutual_information
from .lm_rates import DEFAULT_TOL, OuterSearchConfig, RateCertificate, lm_rate, maximize_over_inputs

GROUP_TOL = 1e-9
DEFAULT_ETA_CAP = 2**24
MAX_MAXMIN_ALPHABET = 6


@dataclass(frozen=True)
class MetricLevelSet:
    """Distinct finite metric values and the level index of every cell (-1 for -inf)."""

    levels: tuple
    membership: np.ndarray

    @classmethod
    def from_metric(cls, q, group_tol=GROUP_TOL):
        finite = q.finite_mask
        if q.is_rational:
            keys = q.numerators[finite]
            distinct = np.unique(keys)
            levels = tuple(Fraction(int(k), q.denominator) for k in distinct)
            index = np.searchsorted(distinct, keys)
        else:
            vals = np.sort(np.unique(q.q[finite]))
            clusters = [[vals[0]]]
            for v in vals[1:]:
                if v - clusters[-1][-1] <= group_tol:
                    clusters[-1].append(v)
                else:
                    clusters.append([v])
            for c in clusters:
                if c[-1] - c[0] > group_tol:
                    raise DegenerateLevels(f"values {c[0]!r}..{c[-1]!r} chain across group_tol")
            reps = [float(np.mean(c)) for c in clusters]
            for lo, hi in zip(clusters, clusters[1:]):
                if hi[0] - lo[-1] <= 10 * group_tol:
                    raise DegenerateLevels(
                        f"levels {lo[-1]!r} and {hi[0]!r} are within 10*group_tol but not merged"
                    )
            levels = tuple(reps)
            uppers = np.array([c[-1] for c in clusters])
            index = np.searchsorted(uppers, q.q[finite] - group_tol / 2)
        member = np.full(q.q.shape, -1, dtype=np.int64)
        member[finite] = index
        member.setflags(write=False)
        return cls(levels, member)


def _maxmin_inner(px, w, q, levels, tol):
    rows = px > 0
    p = px[rows]
    wm = w.w[rows]
    member = levels.membership[rows]
    nlev = len(levels.levels)
    ny = w.output_size
    # group g = y * nlev + level
    flow = np.zeros((len(p), ny * nlev))
    allowed = np.zeros_like(flow, dtype=bool)
    xs, ys = np.nonzero(member >= 0)
    groups = ys * nlev + member[xs, ys]
    allowed[xs, groups] = True
    flow[xs, groups] = p[xs] * wm[xs, ys]
    targets = flow.sum(axis=0)
    live = targets > 0
    allowed, flow, targets = allowed[:, live], flow[:, live], targets[live]
    group_y = (np.flatnonzero(live) // nlev)
    allowed = proj.essential_edges(allowed, flow)
    logk = np.where(allowed, np.log(p)[:, None], -np.inf)
    a, joint, residual, it = proj.fit_row_potentials(logk, targets, p)
    py = w.w[rows].T @ p
    const = float(np.sum(targets * np.log(targets / py[group_y])))
    dual = proj.dual_in_potentials(logk, targets, p, a) + const
    v = w.w.copy()
    sub = np.zeros((len(p), ny))
    np.add.at(sub.T, group_y, joint.T)
    v[rows] = sub / p[:, None]
    value = mutual_information(px, v)
    cert = RateCertificate(value, v, dual, value - dual, it, px=px)
    if cert.gap > tol:
        raise NoConvergence(tol, it, f"max-min inner gap {cert.gap:.3g}, residual {residual:.3g}")
    return cert


def maxmin_upper_bound(w, q, search=None, tol=DEFAULT_TOL, group_tol=GROUP_TOL):
    """Block-length-one value of the max-min bound.

    The inner minimum keeps, for every output y and metric level v, the mass
    sum_x P(x) V(y|x) 1{q(x,y) = v} equal to its value under W. The outer
    search is seeded with the LM optimizer, so the result dominates lm_rate.
    """
    check_consistent(w, q)
    q.validate_against(w)
    if max(w.input_size, w.output_size) > MAX_MAXMIN_ALPHABET:
        raise ValidationError(f"max-min bound supports alphabets up to {MAX_MAXMIN_ALPHABET}")
    search = search or OuterSearchConfig()
    levels = MetricLevelSet.from_metric(q, group_tol)
    seed = lm_rate(w, q, 0.0, search).px
    return maximize_over_inputs(
        lambda px: _maxmin_inner(px, w, q, levels, tol), w.input_size, search.with_seeds(seed)
    )


# -- eta_n ----------------------------------------------------------------------

def rational_eta_lower_bound(q, n):
    if not q.is_rational:
        raise NotRational("metric has no rational form")
    _check_n(n)
    return Fraction(1, n * q.denominator)


def _check_n(n):
    if int(n) != n or n < 1:
        raise ValidationError("n must be a positive integer")


def _pair_differences(values):
    return {a - b for a in values for b in values}


def _eta_dp(q, n):
    cols = [{int(k) for k, f in zip(q.numerators[:, y], q.finite_mask[:, y]) if f}
            for y in range(q.output_size)]
    # the union over outputs commutes with the Minkowski sum over positions
    steps = set().union(*(_pair_differences(c) for c in cols if c))
    reach = {0}
    for _ in range(n):
        reach = {r + d for r in reach for d in steps}
    positive = [r for r in reach if r > 0]
    if positive:
        return Fraction(min(positive), n * q.denominator)
    return _infinite_or_none(q)


def _infinite_or_none(q):
    mixed = np.any(q.finite_mask.any(axis=0) & (~q.finite_mask).any(axis=0))
    return float("inf") if mixed else None


def _eta_brute(q, n, cap):
    nx, ny = q.input_size, q.output_size
    size = nx ** (2 * n) * ny**n
    if size > cap:
        raise CapExceeded(size, cap, "eta_n enumeration")
    exact = [[q.exact_value(x, y) for y in range(ny)] for x in range(nx)]
    best = None
    infinite = False
    for yseq in itertools.product(range(ny), repeat=n):
        vals = set()
        dead = False
        for xseq in itertools.product(range(nx), repeat=n):
            terms = [exact[x][y] for x, y in zip(xseq, yseq)]
            if any(t is None for t in terms):
                dead = True
            else:
                vals.add(sum(terms) / n)
        if dead and vals:
            infinite = True
        ordered = sorted(vals)
        for lo, hi in zip(ordered, ordered[1:]):
            if best is None or hi - lo < best:
                best = hi - lo
    if best is not None:
        return best if q.is_rational else float(best)
    return float("inf") if infinite else None


def eta_n(q, n, method="auto", cap=DEFAULT_ETA_CAP):
    """Smallest nonzero |q_n(x~, y) - q_n(x, y)| over all sequence triples.

    Returns a Fraction for rational metrics, a float otherwise, inf when the
    only differing values involve -inf and None when all values coincide.
    method: "auto" (dynamic programming when rational, else enumeration),
    "dp" or "brute".
    """
    _check_n(n)
    if method == "auto":
        method = "dp" if q.is_rational else "brute"
    if method == "dp":
        if not q.is_rational:
            raise NotRational("the dynamic program needs a rational metric")
        return _eta_dp(q, n)
    if method == "brute":
        return _eta_brute(q, n, cap)
    raise ValidationError(f"unknown eta method {method!r}")


@dataclass(frozen=True)
class SoftConverseVerdict:
    pe: float
    eta: Optional[Fraction]
    ratio: float
    below: bool


def soft_converse_threshold(q, n, pe, threshold=1.0):
    """Diagnostic ratio pe / eta_n and whether it falls below threshold."""
    if not 0 <= pe <= 1:
        raise ValidationError("pe must be a probability")
    eta = eta_n(q, n)
    if eta is None:
        raise ValidationError("eta_n is undefined: every metric value coincides")
    ratio = 0.0 if pe == 0 else float(pe / eta) if eta != float("inf") else 0.0
    return SoftConverseVerdict(pe, eta, ratio, ratio < threshold)
