"""The dual (Lagrangian) rate expression and its a = 0 restriction, the GMI.

For an input distribution P on a (possibly k-letter) alphabet the objective is

    (1/k) E log[ exp(s q(X,Y) + a(X)) / sum_x' P(x') exp(s q(x',Y) + a(x')) ]

with (X, Y) ~ P x W and (s, a) >= 0. It is concave in (s, a) and invariant
under a -> a + c, which the solver uses to pin the potentials.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._projection import logsumexp
from ._validation import as_probability_vector, check_consistent
from .errors import HypothesisViolated, InfeasibleMetric, NoConvergence, ValidationError

GMI_S_CAP = 1e8


@dataclass(frozen=True)
class DualVars:
    s: float
    a: np.ndarray

    def __post_init__(self):
        a = np.array(self.a, dtype=float)
        if not self.s >= 0 or (a < 0).any():
            raise ValidationError("dual variables must be nonnegative")
        a.setflags(write=False)
        object.__setattr__(self, "s", float(self.s))
        object.__setattr__(self, "a", a)

    @classmethod
    def zero(cls, size, s=0.0):
        return cls(s, np.zeros(size))


class _Instance:
    """Supported block of (P, W, q) with cached per-output quantities."""

    def __init__(self, pn, w, q):
        check_consistent(w, q)
        p = as_probability_vector(pn, w.input_size, "P")
        self.rows = p > 0
        self.p = p[self.rows]
        wm = w.w[self.rows]
        self.joint = self.p[:, None] * wm
        self.py = self.joint.sum(axis=0)
        cols = self.py > 0
        self.joint, self.py = self.joint[:, cols], self.py[cols]
        self.q = q.q[self.rows][:, cols]
        self.finite = np.isfinite(self.q)
        if (~self.finite & (self.joint > 0)).any():
            raise InfeasibleMetric("metric is -inf on a pair with P(x) W(y|x) > 0")
        self.qz = np.where(self.finite, self.q, 0.0)
        self.logp = np.log(self.p)[:, None]
        self.eq = float(np.sum(self.joint * self.qz))
        self.letters = q.letters
        self.size = w.input_size

    def _logits(self, s, a):
        z = self.logp + s * self.qz + a[:, None]
        if s > 0:
            z = np.where(self.finite, z, -np.inf)
        return z

    def value(self, s, a):
        z = self._logits(s, a)
        total = s * self.eq + a @ self.p - self.py @ logsumexp(z, axis=0)
        return float(total) / self.letters

    def posterior(self, s, a):
        z = self._logits(s, a)
        return np.exp(z - logsumexp(z, axis=0))

    def gradient(self, s, a):
        r = self.posterior(s, a)
        mass = r * self.py
        gs = self.eq - float(np.sum(mass * self.qz))
        ga = self.p - mass.sum(axis=1)
        return gs / self.letters, ga / self.letters, r

    def hessian(self, s, a, r=None):
        """Hessian in (s, a) as a dense matrix (negative semidefinite)."""
        if r is None:
            r = self.posterior(s, a)
        nx = len(self.p)
        feats = np.concatenate([self.qz[None], np.eye(nx)[:, :, None].repeat(r.shape[1], 2)])
        mean = np.einsum("fxy,xy->fy", feats, r)
        second = np.einsum("fxy,gxy,xy->fgy", feats, feats, r)
        cov = second - mean[:, None] * mean[None, :]
        return -np.einsum("fgy,y->fg", cov, self.py) / self.letters

    def expand(self, a_sub):
        full = np.zeros(self.size)
        full[self.rows] = a_sub
        return full


def dual_objective(pn, w, q, v):
    """The dual objective at (s, a), normalized by the letter count of q.

    Uses the convention 0 * (-inf) = 0, so s = 0 gives ratio 1 pointwise.
    """
    inst = _Instance(pn, w, q)
    a = np.asarray(v.a, dtype=float)
    if a.shape != (w.input_size,):
        raise ValidationError(f"a has shape {a.shape}, expected ({w.input_size},)")
    return inst.value(v.s, a[inst.rows])


def _maximize_s(f, grad, tol):
    """Maximize a concave f on s >= 0: (argmax, value)."""
    if grad(0.0) <= 0:
        return 0.0, f(0.0)
    lo, hi = 0.0, 1.0
    while grad(hi) > 0:
        if hi * grad(hi) <= tol or hi >= GMI_S_CAP:
            # increasing all the way out: the remaining gain is negligible
            return hi, f(hi)
        lo, hi = hi, 2.0 * hi
    invphi = (math.sqrt(5) - 1) / 2
    c, d = hi - invphi * (hi - lo), lo + invphi * (hi - lo)
    fc, fd = f(c), f(d)
    while hi - lo > 1e-12 * (1.0 + hi):
        if fc >= fd:
            hi, d, fd = d, c, fc
            c = hi - invphi * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + invphi * (hi - lo)
            fd = f(d)
    s = c if fc >= fd else d
    return s, max(fc, fd)


def gmi_optimizer(pn, w, q, tol=1e-9):
    """(DualVars with a = 0, value) maximizing the objective over s alone."""
    inst = _Instance(pn, w, q)
    zero = np.zeros(len(inst.p))
    s, value = _maximize_s(
        lambda s: inst.value(s, zero),
        lambda s: inst.gradient(s, zero)[0],
        tol,
    )
    return DualVars.zero(w.input_size, s), value


def gmi(pn, w, q, tol=1e-9):
    """Generalized mutual information at input P (never below 0)."""
    return gmi_optimizer(pn, w, q, tol)[1]


def dual_ascent(pn, w, q, tol=1e-9, max_iter=500):
    """Maximize the dual objective over (s, a) >= 0.

    Projected Newton-type ascent, falling back to the gradient, with
    backtracking from a unit step (factor 0.5, Armijo constant 1e-4). The
    potentials are kept normalized to min a = 0, which is free by shift
    invariance, so only s >= 0 can be active. Starts at the GMI optimizer.
    Stops when the projected gradient norm and the Newton decrement are both
    at most tol.
    """
    inst = _Instance(pn, w, q)
    start, _ = gmi_optimizer(pn, w, q, tol)
    s, a = start.s, np.zeros(len(inst.p))
    value = inst.value(s, a)
    for it in range(1, max_iter + 1):
        gs, ga, r = inst.gradient(s, a)
        s_active = s <= 0 and gs <= 0
        pg = np.concatenate([[0.0 if s_active else gs], ga])
        ref = int(np.argmin(a))
        free = np.ones(len(pg), dtype=bool)
        free[1 + ref] = False
        if s_active:
            free[0] = False
        step = np.zeros_like(pg)
        hess = inst.hessian(s, a, r)
        sub = -hess[np.ix_(free, free)]
        try:
            step[free] = np.linalg.solve(sub, pg[free])
        except np.linalg.LinAlgError:
            step[free] = np.linalg.lstsq(sub, pg[free], rcond=None)[0]
        decrement = float(pg @ step)
        if not decrement > 0 or not np.isfinite(decrement):
            step, decrement = pg.copy(), float(pg @ pg)
        if np.linalg.norm(pg) <= tol and decrement <= tol:
            return _result(inst, s, a, value)
        if decrement < 1e-12 * (1.0 + abs(value)):
            # predicted gain is below rounding: judge the full step by the gradient
            cand_s = max(0.0, s + step[0])
            cand_a = a + step[1:]
            cand_a = cand_a - cand_a.min()
            cgs, cga, _ = inst.gradient(cand_s, cand_a)
            cpg = np.concatenate([[0.0 if cand_s <= 0 and cgs <= 0 else cgs], cga])
            if np.linalg.norm(cpg) < np.linalg.norm(pg):
                s, a, value = cand_s, cand_a, inst.value(cand_s, cand_a)
                continue
            if np.linalg.norm(pg) <= math.sqrt(tol):
                return _result(inst, s, a, value)
            raise NoConvergence(tol, it, f"stalled, gradient {np.linalg.norm(pg):.3g}")
        t = 1.0
        while True:
            cand_s = max(0.0, s + t * step[0])
            cand_a = a + t * step[1:]
            cand_a = cand_a - cand_a.min()
            cand = inst.value(cand_s, cand_a)
            moved = np.concatenate([[cand_s - s], cand_a - a])
            if cand >= value + 1e-4 * (pg @ moved) and cand >= value:
                break
            t *= 0.5
            if t < 1e-16:
                # no ascent possible along either direction at double precision
                if np.linalg.norm(pg) <= math.sqrt(tol):
                    return _result(inst, s, a, value)
                raise NoConvergence(tol, it, f"line search failed, gradient {np.linalg.norm(pg):.3g}")
        s, a, value = cand_s, cand_a, cand
    raise NoConvergence(tol, max_iter, "dual ascent iteration limit")


def _result(inst, s, a, value):
    return DualVars(s, inst.expand(a)), value


@dataclass(frozen=True)
class DualPoint:
    value: float
    px: np.ndarray
    variables: DualVars


def dual_rate(w, q, search=None, restrict_a=False, tol=1e-9):
    """Dual objective maximized over inputs too; with restrict_a, the GMI rate."""
    from .lm_rates import OuterSearchConfig, maximize_over_inputs

    search = search or OuterSearchConfig()

    def evaluate(px):
        solver = gmi_optimizer if restrict_a else dual_ascent
        v, value = solver(px, w, q, tol)
        return DualPoint(value, px, v)

    return maximize_over_inputs(evaluate, w.input_size, search)


# -- exact right-hand side of the lower bound at a = 0 ---------------------

def lemma1_rhs(cn, w, q, s, event_mask):
    """Exact value of the lower bound on the a = 0 objective for codebook cn.

    With R = (1/n) log M and A = {(m, y): event_mask(m, y)} this is

        -Pr{A} s 2B / n + Pr{A^c} E[min{R, (s/n) min_{j != m} (q_n(x_m, y) - q_n(x_j, y))} | A^c]
        - (1/n) log 2

    enumerated over all messages and outputs. Codewords must be distinct and
    the metric must satisfy q <= B everywhere.
    """
    from .decoder_lab import enumerate_outputs, score_matrix

    if s < 0:
        raise ValidationError("s must be nonnegative")
    check_consistent(w, q)
    words = np.asarray(cn.words)
    if len({tuple(x) for x in words}) != len(words):
        raise ValidationError("codewords must be distinct")
    finite = np.isfinite(q.q)
    if np.max(q.q[finite]) > q.bound_b:
        raise HypothesisViolated("metric exceeds its bound B on some pair")
    n, m = cn.n, cn.m
    rate = math.log(m) / n
    prob_a = 0.0
    acc = 0.0
    for ys, probs in enumerate_outputs(cn, w):
        scores = score_matrix(cn, q, ys, exact=False)  # (m, chunk), q_n values
        for i in range(m):
            in_a = np.fromiter((bool(event_mask(i, y)) for y in ys), bool, len(ys))
            weight = probs[i] / m
            prob_a += float(weight[in_a].sum())
            if m == 1:
                term = np.full(len(ys), rate)
            else:
                others = np.delete(scores, i, axis=0)
                with np.errstate(invalid="ignore"):
                    gap = np.min(scores[i] - others, axis=0)
                term = np.minimum(rate, s / n * gap) if s > 0 else np.full(len(ys), min(rate, 0.0))
            keep = ~in_a & (weight > 0)
            acc += float(np.sum(weight[keep] * term[keep]))
    return -prob_a * s * 2 * q.bound_b / n + acc - math.log(2) / n


def margin_error_event(cn, q, delta):
    """Predicate for the delta-margin decoder failing on (m, y)."""
    from .decoder_lab import DecoderSpec, decode

    spec = DecoderSpec.margin(delta)
    return lambda m, y: decode(cn, q, spec, y) != m


def mismatch_error_event(cn, q):
    """Predicate for the mismatched (maximum metric) decoder failing on (m, y)."""
    from .decoder_lab import DecoderSpec, decode

    spec = DecoderSpec.mismatch()
    return lambda m, y: decode(cn, q, spec, y) != m
