"""Codebooks, the three metric decoders, error probabilities and exact checks.

Messages are 0-based and a failed decision is reported as ERROR (-1).
Decisions compare exact integer numerator sums when the metric carries a
rational form and raw floats otherwise; ties are always errors.
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy.stats import norm

from ._validation import as_probability_vector, check_consistent
from .channel_core import Composition, nearest_composition
from .errors import CapExceeded, HypothesisViolated, LengthMismatch, ValidationError

ERROR = -1
DEFAULT_ENUM_CAP = 2**24
CHUNK = 1 << 15
THREADS_ENV = "MISMATCHKIT_THREADS"
# well below any reachable finite numerator sum, and safe to subtract from one
_NEG_INF_KEY = -(2**62)


class DecoderKind(Enum):
    MISMATCH = "mismatch"
    MARGIN = "margin"
    THRESHOLD = "threshold"


@dataclass(frozen=True)
class DecoderSpec:
    kind: DecoderKind
    delta: Optional[float] = None
    tau: Optional[float] = None

    def __post_init__(self):
        kind = DecoderKind(self.kind) if not isinstance(self.kind, DecoderKind) else self.kind
        object.__setattr__(self, "kind", kind)
        if kind is DecoderKind.MARGIN and not (self.delta is not None and self.delta > 0):
            raise ValidationError("margin decoder needs delta > 0")
        if kind is DecoderKind.THRESHOLD and not (self.tau is not None and math.isfinite(self.tau)):
            raise ValidationError("threshold decoder needs a finite tau")

    @classmethod
    def mismatch(cls):
        return cls(DecoderKind.MISMATCH)

    @classmethod
    def margin(cls, delta):
        return cls(DecoderKind.MARGIN, delta=float(delta))

    @classmethod
    def threshold(cls, tau):
        return cls(DecoderKind.THRESHOLD, tau=float(tau))


@dataclass(frozen=True)
class Codebook:
    """M codewords of length n over an input alphabet of size input_size."""

    words: np.ndarray
    input_size: Optional[int] = None
    composition: Optional[Composition] = None

    def __post_init__(self):
        words = np.array(self.words, dtype=np.int64)
        if words.ndim != 2 or words.shape[0] < 1 or words.shape[1] < 1:
            raise ValidationError("codebook needs at least one nonempty codeword")
        size = int(words.max()) + 1 if self.input_size is None else int(self.input_size)
        if words.min() < 0 or words.max() >= size:
            raise ValidationError(f"codeword symbols must lie in 0..{size - 1}")
        if self.composition is not None:
            want = np.array(self.composition.counts)
            for word in words:
                if not np.array_equal(np.bincount(word, minlength=len(want)), want):
                    raise ValidationError("codeword does not have the declared composition")
        words.setflags(write=False)
        object.__setattr__(self, "words", words)
        object.__setattr__(self, "input_size", size)

    @property
    def n(self):
        return self.words.shape[1]

    @property
    def m(self):
        return self.words.shape[0]

    @property
    def rate(self):
        return math.log(self.m) / self.n


class EstimateMethod(Enum):
    EXACT = "exact"
    MONTE_CARLO = "monte_carlo"


@dataclass(frozen=True)
class ErrorEstimate:
    value: float
    method: EstimateMethod
    trials: int
    stderr: float = 0.0
    seed: Optional[int] = None


def sample_constant_composition_codebook(comp, m, seed):
    """m words drawn independently and uniformly from the type class of comp."""
    if m < 1:
        raise ValidationError("need at least one codeword")
    rng = np.random.default_rng(seed)
    base = comp.multiset()
    words = np.stack([rng.permutation(base) for _ in range(m)])
    return Codebook(words, input_size=len(comp.counts), composition=comp)


# -- scoring ----------------------------------------------------------------

def _check_pair(cb, q):
    if cb.input_size > q.input_size:
        raise ValidationError(
            f"codebook uses {cb.input_size} input symbols but the metric has {q.input_size}"
        )


def score_matrix(cb, q, ys, exact=True):
    """Metric of every codeword against every row of ys, shape (M, len(ys)).

    With exact=True and a rational metric the result holds integer numerator
    sums n * D * q_n (a fixed sentinel for -inf); otherwise q_n as floats.
    """
    ys = np.atleast_2d(ys)
    idx = (cb.words[:, None, :], ys[None, :, :])
    if exact and q.is_rational:
        keys = q.numerators[idx].sum(axis=2)
        dead = (~q.finite_mask[idx]).any(axis=2)
        return np.where(dead, _NEG_INF_KEY, keys)
    total = q.q[idx].sum(axis=2)
    return total / cb.n


def _cut_points(spec, q, n, exact):
    """Margin and threshold constants on the scale of score_matrix."""
    if not (exact and q.is_rational):
        return spec.delta, spec.tau
    scale = n * q.denominator
    gap = math.ceil(Fraction(spec.delta) * scale) if spec.delta is not None else None
    cut = math.ceil(Fraction(spec.tau) * scale) if spec.tau is not None else None
    return gap, cut


def decide(scores, spec, q, n, exact=True):
    """Decoded message per column of a score matrix (ERROR where none)."""
    m = scores.shape[0]
    winner = np.argmax(scores, axis=0)
    best = scores[winner, np.arange(scores.shape[1])]
    if m == 1:
        second = None
    else:
        second = np.partition(scores, m - 2, axis=0)[m - 2]
    gap, cut = _cut_points(spec, q, n, exact)
    kind = spec.kind
    if kind is DecoderKind.MISMATCH:
        ok = np.ones_like(best, dtype=bool) if second is None else best > second
    elif kind is DecoderKind.MARGIN:
        if second is None:
            ok = np.ones_like(best, dtype=bool)
        else:
            with np.errstate(invalid="ignore"):
                ok = best - second >= gap
    else:
        ok = best >= cut
        if second is not None:
            ok &= second < cut
    return np.where(ok, winner, ERROR)


def decode(cb, q, spec, yseq):
    ys = np.asarray(yseq, dtype=np.int64)
    if ys.shape != (cb.n,):
        raise LengthMismatch(f"output has shape {ys.shape}, expected ({cb.n},)")
    if ys.min() < 0 or ys.max() >= q.output_size:
        raise ValidationError("output symbol out of range")
    _check_pair(cb, q)
    return int(decide(score_matrix(cb, q, ys[None]), spec, q, cb.n)[0])


def output_block(size, n, start, stop):
    """Rows start..stop-1 of the big-endian enumeration of range(size)**n."""
    idx = np.arange(start, stop, dtype=np.int64)
    powers = size ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return (idx[:, None] // powers[None, :]) % size


def enumerate_outputs(cb, w, cap=DEFAULT_ENUM_CAP, chunk=CHUNK):
    """Yield (ys, probs) over all outputs, probs[m, j] = W^n(ys[j] | x(m))."""
    total = w.output_size**cb.n
    if total > cap:
        raise CapExceeded(total, cap, "output sequences")
    if cb.input_size > w.input_size:
        raise ValidationError("codebook alphabet is larger than the channel input alphabet")
    for start in range(0, total, chunk):
        ys = output_block(w.output_size, cb.n, start, min(total, start + chunk))
        probs = w.w[cb.words[:, None, :], ys[None, :, :]].prod(axis=2)
        yield ys, probs


def _exact_error(cb, w, q, spec, cap):
    check_consistent(w, q)
    _check_pair(cb, q)
    err = 0.0
    for ys, probs in enumerate_outputs(cb, w, cap):
        dec = decide(score_matrix(cb, q, ys), spec, q, cb.n)
        wrong = dec[None, :] != np.arange(cb.m)[:, None]
        err += float(probs[wrong].sum())
    return min(1.0, err / cb.m)


def exact_error_probability(cb, w, q, spec, cap=DEFAULT_ENUM_CAP):
    value = _exact_error(cb, w, q, spec, cap)
    trials = cb.m * w.output_size**cb.n
    return ErrorEstimate(value, EstimateMethod.EXACT, trials)


def worker_count(workers=None):
    """Explicit worker count, else the MISMATCHKIT_THREADS cap, else 1."""
    if workers is None:
        workers = int(os.environ.get(THREADS_ENV, "1") or 1)
    cap = os.environ.get(THREADS_ENV)
    if cap:
        workers = min(workers, int(cap))
    return max(1, int(workers))


def _sampling_tables(w):
    cdf = np.cumsum(w.w, axis=1)
    for x in range(w.input_size):
        last = np.flatnonzero(w.w[x] > 0)[-1]
        cdf[x, last:] = 2.0  # never crossed, so rounding cannot pick a zero cell
    return cdf


def _mc_failures(cb, q, spec, cdf, trials, seed_seq):
    rng = np.random.default_rng(seed_seq)
    failures = 0
    done = 0
    while done < trials:
        batch = min(CHUNK, trials - done)
        msgs = rng.integers(cb.m, size=batch)
        u = rng.random((batch, cb.n))
        x = cb.words[msgs]
        ys = (cdf[x] <= u[..., None]).sum(axis=2)
        dec = decide(score_matrix(cb, q, ys), spec, q, cb.n)
        failures += int(np.count_nonzero(dec != msgs))
        done += batch
    return failures


def mc_error_probability(cb, w, q, spec, trials, seed, workers=None):
    """Monte-Carlo error estimate; worker t draws from SeedSequence([seed, t])."""
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    check_consistent(w, q)
    _check_pair(cb, q)
    workers = worker_count(workers)
    cdf = _sampling_tables(w)
    base, extra = divmod(trials, workers)
    shares = [base + (t < extra) for t in range(workers)]
    seqs = [np.random.SeedSequence([int(seed), t]) for t in range(workers)]
    if workers == 1:
        counts = [_mc_failures(cb, q, spec, cdf, shares[0], seqs[0])]
    else:
        with ThreadPoolExecutor(workers) as pool:
            counts = list(pool.map(lambda t: _mc_failures(cb, q, spec, cdf, shares[t], seqs[t]),
                                   range(workers)))
    p = sum(counts) / trials
    return ErrorEstimate(p, EstimateMethod.MONTE_CARLO, trials, math.sqrt(p * (1 - p) / trials), int(seed))


# -- exact checkers -----------------------------------------------------------

@dataclass(frozen=True)
class PhiCheck:
    lhs: float
    rhs: float
    equal: bool


def phi_identity_check(cb, w, q, cap=DEFAULT_ENUM_CAP):
    """Error probability of maximum-metric decoding against Pr{Phi > 1/M}.

    Phi is the probability, over an independent uniform codeword, of scoring
    at least as high as the transmitted one; it is count / M with an integer
    count, so the event is evaluated exactly.
    """
    lhs = _exact_error(cb, w, q, DecoderSpec.mismatch(), cap)
    rhs = 0.0
    for ys, probs in enumerate_outputs(cb, w, cap):
        scores = score_matrix(cb, q, ys)
        for i in range(cb.m):
            count = np.count_nonzero(scores >= scores[i], axis=0)
            # Phi = count / M > 1 / M
            rhs += float(probs[i][count > 1].sum())
    rhs = min(1.0, rhs / cb.m)
    return PhiCheck(lhs, rhs, abs(lhs - rhs) <= 1e-12)


@dataclass(frozen=True)
class Claim2Check:
    p_margin: float
    p_thresh: float
    tail: float
    holds: bool


def claim2_check(cb, w, q, tau, eps, cap=DEFAULT_ENUM_CAP):
    """P_margin(eps) <= P_thresh(tau) + Pr{q_n(X, Y) <= tau + eps}, enumerated."""
    if not eps > 0:
        raise ValidationError("eps must be positive")
    p_margin = _exact_error(cb, w, q, DecoderSpec.margin(eps), cap)
    p_thresh = _exact_error(cb, w, q, DecoderSpec.threshold(tau), cap)
    if q.is_rational:
        limit = math.floor((Fraction(tau) + Fraction(eps)) * cb.n * q.denominator)
    else:
        limit = tau + eps
    tail = 0.0
    for ys, probs in enumerate_outputs(cb, w, cap):
        scores = score_matrix(cb, q, ys)
        for i in range(cb.m):
            tail += float(probs[i][scores[i] <= limit].sum())
    tail = min(1.0, tail / cb.m)
    return Claim2Check(p_margin, p_thresh, tail, p_margin <= p_thresh + tail + 1e-12)


# -- finite-sample proxy for the CLT floor ------------------------------------

@dataclass(frozen=True)
class CltPoint:
    n: int
    estimate: float
    stderr: float
    trials: int
    gaussian_floor: float


@dataclass(frozen=True)
class CltReport:
    points: list = field(default_factory=list)
    floor_prob: float = 0.005
    holds: bool = False

    def as_pairs(self):
        return [(pt.n, pt.estimate) for pt in self.points]


def required_trials(floor_prob):
    """Smallest trial count with sqrt(1/4 / T) < floor_prob / 3."""
    return int(math.floor(2.25 / floor_prob**2)) + 1


def clt_margin_check(p, w, q, k, ns, m_per_n, trials, seed, floor_prob=0.005):
    """Estimate Pr{q_n < E_{P_n x W} q - k / sqrt(n)} for each block length.

    For a constant composition codebook the law of q_n(X^n, Y^n) depends
    only on the composition: given the codeword, the outputs at the n_x
    positions holding x are i.i.d. W(.|x), so only their per-symbol counts
    (multinomial) are sampled after drawing the codebook and the message.
    Trials are raised to at least required_trials(floor_prob).
    """
    check_consistent(w, q)
    p = as_probability_vector(p, w.input_size, "p")
    if (p <= 0).any():
        raise HypothesisViolated("input distribution must be strictly positive")
    qz = np.where(np.isfinite(q.q), q.q, 0.0)
    mean_x = np.sum(w.w * qz, axis=1)
    var_x = np.sum(w.w * (qz - mean_x[:, None]) ** 2, axis=1)
    varying = var_x > 1e-14 * (1.0 + np.max(np.abs(qz)) ** 2)
    if not varying.any():
        raise HypothesisViolated("no input symbol has a nondegenerate metric distribution")
    trials = max(int(trials), required_trials(floor_prob))
    points = []
    for idx, n in enumerate(ns):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), idx]))
        comp = nearest_composition(p, n)
        cb = sample_constant_composition_codebook(comp, m_per_n, rng)
        word = cb.words[rng.integers(cb.m)]
        counts = np.bincount(word, minlength=w.input_size)
        count_hits = _clt_count_below(counts, w, q, qz, k, trials, rng)
        est = count_hits / trials
        phat = counts / n
        floor = float(np.prod([norm.cdf(-k * math.sqrt(phat[x]) / math.sqrt(var_x[x]))
                               for x in range(w.input_size) if varying[x]]))
        points.append(CltPoint(n, est, math.sqrt(est * (1 - est) / trials), trials, floor))
    holds = bool(points) and min(pt.estimate for pt in points) >= floor_prob
    return CltReport(points, floor_prob, holds)


def _clt_count_below(counts, w, q, qz, k, trials, rng):
    n = int(counts.sum())
    rational = q.is_rational
    values = q.numerators if rational else qz
    total = np.zeros(trials, dtype=np.int64 if rational else float)
    for x, nx in enumerate(counts):
        if nx:
            draws = rng.multinomial(nx, w.w[x], size=trials)
            total += draws @ values[x]
    if rational:
        # n D E_{P_n x W} q, exactly from the binary values of W
        target = sum(int(nx) * sum(Fraction(float(w.w[x, y])) * int(q.numerators[x, y])
                                   for y in range(w.output_size) if w.w[x, y] > 0)
                     for x, nx in enumerate(counts))
        if k == 0:
            return int(np.count_nonzero(total <= math.ceil(target) - 1))
        bound = float(target) - k * q.denominator * math.sqrt(n)
        return int(np.count_nonzero(total < bound))
    mean = float(np.sum(counts[:, None] * w.w * qz)) / n
    return int(np.count_nonzero(total / n < mean - k / math.sqrt(n)))


def margin_schedule_error(cb, w, q, delta_fn, method="exact", trials=100_000, seed=0,
                          cap=DEFAULT_ENUM_CAP):
    """Margin decoding at delta = delta_fn(n) for this codebook's length."""
    delta = float(delta_fn(cb.n))
    if not delta > 0:
        raise ValidationError(f"schedule gave delta = {delta} at n = {cb.n}")
    spec = DecoderSpec.margin(delta)
    if EstimateMethod(method) is EstimateMethod.EXACT:
        return exact_error_probability(cb, w, q, spec, cap)
    return mc_error_probability(cb, w, q, spec, trials, seed)


# -- file format ---------------------------------------------------------------

def read_codebook(path):
    with open(path) as fh:
        lines = [ln.split() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines or lines[0][0] != "codebook" or len(lines[0]) != 4:
        raise ValidationError("codebook file must start with 'codebook n M |X|'")
    n, m, size = (int(t) for t in lines[0][1:])
    rows = lines[1:]
    if len(rows) != m:
        raise ValidationError(f"expected {m} codewords, found {len(rows)}")
    if any(len(r) != n for r in rows):
        raise LengthMismatch(f"every codeword must have {n} symbols")
    return Codebook([[int(t) for t in r] for r in rows], input_size=size)


def write_codebook(cb, path):
    with open(path, "w", newline="\n") as fh:
        fh.write(f"codebook {cb.n} {cb.m} {cb.input_size}\n")
        for word in cb.words:
            fh.write(" ".join(str(int(s)) for s in word) + "\n")
