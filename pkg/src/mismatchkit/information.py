"""Mutual information and the matched channel capacity (Blahut-Arimoto)."""

import numpy as np

from ._validation import as_probability_vector


def mutual_information(px, v):
    """I(X; Y) in nats for input px and channel matrix v[x, y]."""
    px = np.asarray(px, dtype=float)
    v = np.asarray(v, dtype=float)
    joint = px[:, None] * v
    py = joint.sum(axis=0)
    mask = joint > 0
    ratio = v[mask] / np.broadcast_to(py, v.shape)[mask]
    return float(np.sum(joint[mask] * np.log(ratio)))


def blahut_arimoto(w, tol=1e-12, max_iter=100_000):
    """Capacity of the DMC `w` in nats and a capacity-achieving input.

    Stops when the standard upper and lower capacity bounds agree within tol.
    """
    mat = getattr(w, "w", w)
    nx = mat.shape[0]
    r = np.full(nx, 1.0 / nx)
    with np.errstate(divide="ignore", invalid="ignore"):
        logw = np.where(mat > 0, np.log(mat), 0.0)
    lower = upper = 0.0
    for _ in range(max_iter):
        py = r @ mat
        with np.errstate(divide="ignore"):
            logpy = np.where(py > 0, np.log(py), 0.0)
        # D(W(.|x) || py) for each input
        div = np.sum(np.where(mat > 0, mat * (logw - logpy), 0.0), axis=1)
        lower = float(r @ div)
        upper = float(np.max(div))
        if upper - lower < tol:
            break
        r = r * np.exp(div - upper)
        r /= r.sum()
    return lower, as_probability_vector(r)
