"""Channels, additive metrics, distributions, types and k-fold products.

Product alphabets are indexed big-endian by position: the sequence
(u_1, ..., u_k) over an alphabet of size A maps to sum_i u_i * A**(k-i).
"""

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from math import lcm
from typing import Optional

import numpy as np

from ._validation import (
    ROW_SUM_TOL,
    check_array,
    check_probability_vector,
    check_stochastic_matrix,
)
from .errors import (
    CapExceeded,
    DimensionMismatch,
    InfeasibleMetric,
    LengthMismatch,
    ValidationError,
)

DEFAULT_PRODUCT_CAP = 4096


class Boundedness(Enum):
    TWO_SIDED = "two_sided"
    ONE_SIDED = "one_sided"

    @classmethod
    def parse(cls, token):
        if isinstance(token, cls):
            return token
        try:
            return cls(str(token).lower())
        except ValueError:
            raise ValidationError(f"unknown boundedness mode {token!r}") from None


@dataclass(frozen=True)
class Dmc:
    """Discrete memoryless channel with transition matrix w[x, y] = W(y|x).

    `letters` records how many single-letter uses the matrix represents
    (greater than one only for outputs of :func:`product_channel`).
    """

    w: np.ndarray
    letters: int = 1

    def __post_init__(self):
        tol = ROW_SUM_TOL * max(1, self.letters)
        object.__setattr__(self, "w", check_stochastic_matrix(self.w, "channel", tol))
        if self.letters < 1:
            raise ValidationError("letters must be >= 1")

    @property
    def input_size(self):
        return self.w.shape[0]

    @property
    def output_size(self):
        return self.w.shape[1]

    @classmethod
    def bsc(cls, p):
        return cls(np.array([[1 - p, p], [p, 1 - p]]))

    def output_distribution(self, px):
        return np.asarray(px) @ self.w

    @staticmethod
    def renormalized(w):
        """Explicitly rescale rows of a nonnegative matrix to sum to one."""
        arr = np.array(w, dtype=float)
        if (arr < 0).any():
            raise ValidationError("cannot renormalize a matrix with negative entries")
        return Dmc(arr / arr.sum(axis=1, keepdims=True))


@dataclass(frozen=True)
class Metric:
    """Additive single-letter decoding metric q[x, y].

    Entries may be -inf (a pair the decoder rules out). `bound_b` is the B of
    the boundedness assumption; it defaults to the largest finite |q|.
    When `numerators` and `denominator` are supplied, every finite entry is
    exactly numerators[x, y] / denominator and comparisons downstream are done
    on the integers.
    """

    q: np.ndarray
    bound_b: Optional[float] = None
    mode: Boundedness = Boundedness.TWO_SIDED
    numerators: Optional[np.ndarray] = None
    denominator: Optional[int] = None
    letters: int = 1

    def __post_init__(self):
        q = check_array(self.q, 2, "metric", allow_neg_inf=True)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "mode", Boundedness.parse(self.mode))
        finite = np.isfinite(q)
        if not finite.any():
            raise ValidationError("metric has no finite entries")
        if self.bound_b is None:
            object.__setattr__(self, "bound_b", float(np.max(np.abs(q[finite]))))
        if self.bound_b < 0:
            raise ValidationError("bound_b must be nonnegative")
        if self.mode is Boundedness.ONE_SIDED and np.max(q[finite]) > self.bound_b:
            raise ValidationError("ONE_SIDED metric must satisfy q <= B everywhere")
        if (self.numerators is None) != (self.denominator is None):
            raise ValidationError("numerators and denominator must be given together")
        if self.numerators is not None:
            self._check_rational(finite)

    def _check_rational(self, finite):
        num = np.array(self.numerators, dtype=np.int64)
        d = int(self.denominator)
        if num.shape != self.q.shape or d < 1:
            raise ValidationError("rational form must match q's shape with D >= 1")
        ratio = np.where(finite, num / d, 0.0)
        target = np.where(finite, self.q, 0.0)
        if (np.abs(ratio - target) > 1e-12 * np.maximum(1.0, np.abs(target))).any():
            raise ValidationError("finite entries of q must equal numerators / D")
        num = np.where(finite, num, 0)
        num.setflags(write=False)
        object.__setattr__(self, "numerators", num)
        object.__setattr__(self, "denominator", d)

    @property
    def input_size(self):
        return self.q.shape[0]

    @property
    def output_size(self):
        return self.q.shape[1]

    @property
    def is_rational(self):
        return self.numerators is not None

    @property
    def finite_mask(self):
        return np.isfinite(self.q)

    @classmethod
    def from_fractions(cls, values, bound_b=None, mode=Boundedness.TWO_SIDED, denominator=None):
        """Build an exact rational metric from Fractions, ints, strings or '-inf'."""
        rows = [[_parse_extended(v) for v in row] for row in values]
        finite = [v for row in rows for v in row if v is not None]
        d = lcm(*(f.denominator for f in finite)) if finite else 1
        if denominator is not None:
            if denominator % d:
                raise ValidationError(f"entries are not multiples of 1/{denominator}")
            d = denominator
        q = np.array([[-np.inf if v is None else float(v) for v in row] for row in rows])
        num = np.array([[0 if v is None else int(v * d) for v in row] for row in rows], dtype=np.int64)
        if bound_b is None and finite:
            bound_b = float(max(abs(v) for v in finite))
        return cls(q, bound_b=bound_b, mode=mode, numerators=num, denominator=d)

    @classmethod
    def matched(cls, w):
        """The matched metric log W(y|x), -inf where W(y|x) = 0."""
        with np.errstate(divide="ignore"):
            q = np.log(w.w)
        b = float(np.max(np.abs(q[np.isfinite(q)])))
        return cls(q, bound_b=b, mode=Boundedness.ONE_SIDED)

    @classmethod
    def indicator(cls, size):
        """q(x, y) = 1{x = y} on a square alphabet, as an exact rational metric."""
        return cls.from_fractions(np.eye(size, dtype=int).tolist())

    def exact_value(self, x, y):
        """Entry (x, y) as a Fraction, or None for -inf."""
        if not np.isfinite(self.q[x, y]):
            return None
        if self.is_rational:
            return Fraction(int(self.numerators[x, y]), self.denominator)
        return Fraction(float(self.q[x, y]))

    def validate_against(self, w):
        """Check dimensions and the boundedness assumption relative to channel w."""
        if (w.input_size, w.output_size) != self.q.shape:
            raise DimensionMismatch(
                f"channel is {w.input_size}x{w.output_size} but metric is "
                f"{self.input_size}x{self.output_size}"
            )
        support = w.w > 0
        if (~self.finite_mask & support).any():
            raise InfeasibleMetric("metric is -inf on a pair with W(y|x) > 0")
        on_support = self.q[support]
        if self.mode is Boundedness.TWO_SIDED:
            if np.max(np.abs(on_support)) > self.bound_b:
                raise ValidationError("TWO_SIDED bound |q| <= B violated where W > 0")
        elif np.min(on_support) < -self.bound_b:
            raise ValidationError("ONE_SIDED bound q >= -B violated where W > 0")
        return self


def _parse_extended(v):
    if isinstance(v, str) and v.strip().lower() in ("-inf", "-infinity"):
        return None
    if isinstance(v, float) and v == -np.inf:
        return None
    return Fraction(v) if not isinstance(v, str) else Fraction(v.strip())


@dataclass(frozen=True)
class SimplexDist:
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", check_probability_vector(self.p))

    @classmethod
    def uniform(cls, size):
        return cls(np.full(size, 1.0 / size))

    def __len__(self):
        return self.p.shape[0]


@dataclass(frozen=True)
class CondDist:
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "v", check_stochastic_matrix(self.v, "conditional distribution"))


@dataclass(frozen=True)
class Composition:
    n: int
    counts: tuple = field(default_factory=tuple)

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if any(c < 0 for c in counts) or sum(counts) != self.n:
            raise ValidationError(f"counts {counts} do not form a composition of {self.n}")
        object.__setattr__(self, "counts", counts)

    @property
    def distribution(self):
        return np.array(self.counts, dtype=float) / self.n

    def multiset(self):
        """The sorted word of this type, e.g. (2, 1) -> [0, 0, 1]."""
        return np.repeat(np.arange(len(self.counts)), self.counts)


def _check_cap(size, cap, what):
    if size > cap:
        raise CapExceeded(size, cap, what)


def product_indices(size, k):
    """All length-k sequences over range(size), big-endian, shape (size**k, k)."""
    grids = np.indices((size,) * k).reshape(k, -1)
    return grids.T.copy()


def product_channel(w, k, cap=DEFAULT_PRODUCT_CAP):
    """The k-fold memoryless extension W^k(y^k | x^k) = prod_i W(y_i | x_i)."""
    if k < 1:
        raise ValidationError("k must be >= 1")
    _check_cap(w.input_size**k, cap, "product input alphabet")
    _check_cap(w.output_size**k, cap, "product output alphabet")
    if k == 1:
        return w
    m = w.w
    for _ in range(k - 1):
        m = np.kron(m, w.w)
    return Dmc(m, letters=w.letters * k)


def product_metric(q, k, cap=DEFAULT_PRODUCT_CAP):
    """The k-letter additive metric (1/k) sum_i q(x_i, y_i) on X^k x Y^k."""
    if k < 1:
        raise ValidationError("k must be >= 1")
    _check_cap(q.input_size**k, cap, "product input alphabet")
    _check_cap(q.output_size**k, cap, "product output alphabet")
    if k == 1:
        return q
    total = q.q
    num = q.numerators
    for _ in range(k - 1):
        total = np.add.outer(total, q.q).transpose(0, 2, 1, 3).reshape(
            total.shape[0] * q.input_size, total.shape[1] * q.output_size
        )
        if num is not None:
            num = np.add.outer(num, q.numerators).transpose(0, 2, 1, 3).reshape(total.shape)
    if num is None:
        return Metric(total / k, bound_b=q.bound_b, mode=q.mode, letters=q.letters * k)
    d = k * q.denominator
    values = np.where(np.isfinite(total), num / d, -np.inf)
    return Metric(values, bound_b=q.bound_b, mode=q.mode, numerators=num, denominator=d,
                  letters=q.letters * k)


def metric_value(q, xseq, yseq):
    """Normalized additive metric (1/n) sum_i q(x_i, y_i); -inf if any term is."""
    xs = np.asarray(xseq, dtype=int)
    ys = np.asarray(yseq, dtype=int)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise LengthMismatch(f"sequence lengths differ: {xs.shape} vs {ys.shape}")
    if xs.size == 0:
        raise LengthMismatch("sequences must be nonempty")
    terms = q.q[xs, ys]
    if np.isneginf(terms).any():
        return -np.inf
    return float(terms.sum() / xs.size)


def nearest_composition(p, n):
    """Largest-remainder rounding of n * p to an integer composition of n.

    The L1 distance between counts / n and p is at most |X| / n.
    """
    vec = getattr(p, "p", p)
    vec = check_probability_vector(vec)
    if n < vec.shape[0]:
        raise ValidationError(f"block length {n} is smaller than the alphabet size")
    scaled = vec * n
    counts = np.floor(scaled).astype(int)
    short = n - counts.sum()
    # ties broken toward the lower symbol index
    order = sorted(range(len(vec)), key=lambda i: (-(scaled[i] - counts[i]), i))
    for i in order[:short]:
        counts[i] += 1
    return Composition(n, tuple(counts))


# -- plain-text file formats ---------------------------------------------------

def _read_table(path, magic):
    with open(path) as fh:
        lines = [ln.split() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines or lines[0][0] != magic:
        raise ValidationError(f"{path}: expected a '{magic}' header line")
    return lines[0][1:], lines[1:]


def _check_shape(rows, nx, ny, path):
    if len(rows) != nx or any(len(r) != ny for r in rows):
        raise DimensionMismatch(f"{path}: header promises a {nx}x{ny} table")


def read_channel(path):
    """Parse a `dmc |X| |Y|` file."""
    head, rows = _read_table(path, "dmc")
    if len(head) != 2:
        raise ValidationError(f"{path}: header must be 'dmc |X| |Y|'")
    nx, ny = int(head[0]), int(head[1])
    _check_shape(rows, nx, ny, path)
    return Dmc(np.array([[float(t) for t in r] for r in rows]))


def read_metric(path):
    """Parse a `metric |X| |Y| B mode [D]` file; with D the metric is exact."""
    head, rows = _read_table(path, "metric")
    if len(head) not in (4, 5):
        raise ValidationError(f"{path}: header must be 'metric |X| |Y| B mode [D]'")
    nx, ny = int(head[0]), int(head[1])
    bound, mode = float(head[2]), Boundedness.parse(head[3])
    _check_shape(rows, nx, ny, path)
    if len(head) == 5:
        return Metric.from_fractions(rows, bound_b=bound, mode=mode, denominator=int(head[4]))
    values = [[-np.inf if _parse_extended(t) is None else float(t) for t in r] for r in rows]
    return Metric(np.array(values), bound_b=bound, mode=mode)


def write_channel(w, path):
    with open(path, "w", newline="\n") as fh:
        fh.write(f"dmc {w.input_size} {w.output_size}\n")
        for row in w.w:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def write_metric(q, path):
    head = f"metric {q.input_size} {q.output_size} {q.bound_b!r} {q.mode.value}"
    with open(path, "w", newline="\n") as fh:
        if q.is_rational:
            fh.write(f"{head} {q.denominator}\n")
            for x in range(q.input_size):
                vals = [q.exact_value(x, y) for y in range(q.output_size)]
                fh.write(" ".join("-inf" if v is None else str(v) for v in vals) + "\n")
        else:
            fh.write(head + "\n")
            for row in q.q:
                fh.write(" ".join("-inf" if v == -np.inf else repr(float(v)) for v in row) + "\n")
