"""Input validation helpers, in the spirit of sklearn.utils.validation."""

import numpy as np

from .errors import DimensionMismatch, ValidationError

ROW_SUM_TOL = 1e-12


def check_array(values, ndim, name="array", allow_neg_inf=False):
    """Return a read-only float64 copy of `values` with the given ndim."""
    arr = np.array(values, dtype=float)
    if arr.ndim != ndim:
        raise DimensionMismatch(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise ValidationError(f"{name} is empty")
    bad = np.isnan(arr) | np.isposinf(arr)
    if not allow_neg_inf:
        bad |= np.isneginf(arr)
    if bad.any():
        raise ValidationError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


def check_probability_vector(values, name="distribution", tol=ROW_SUM_TOL):
    p = check_array(values, 1, name)
    if (p < 0).any() or (p > 1).any():
        raise ValidationError(f"{name} has entries outside [0, 1]")
    if abs(p.sum() - 1.0) > tol:
        raise ValidationError(f"{name} sums to {p.sum()!r}, not 1")
    return p


def check_stochastic_matrix(values, name="matrix", tol=ROW_SUM_TOL):
    m = check_array(values, 2, name)
    if (m < 0).any() or (m > 1).any():
        raise ValidationError(f"{name} has entries outside [0, 1]")
    sums = m.sum(axis=1)
    worst = np.max(np.abs(sums - 1.0))
    if worst > tol:
        raise ValidationError(f"{name} rows must sum to 1 (worst deviation {worst:.3g})")
    return m


def check_consistent(w, q):
    """Raise unless channel `w` and metric `q` share both alphabets."""
    if (w.input_size, w.output_size) != (q.input_size, q.output_size):
        raise DimensionMismatch(
            f"channel is {w.input_size}x{w.output_size} but metric is "
            f"{q.input_size}x{q.output_size}"
        )


def as_probability_vector(p, size=None, name="px"):
    """Accept a SimplexDist or array-like and return a validated vector."""
    vec = getattr(p, "p", p)
    vec = check_probability_vector(vec, name)
    if size is not None and vec.shape[0] != size:
        raise DimensionMismatch(f"{name} has length {vec.shape[0]}, expected {size}")
    return vec
