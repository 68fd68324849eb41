"""Natural cubic spline basis for flexible covariate effects.

The basis is the classic truncated-power construction: with knots
xi_1 < ... < xi_K, let

    d_j(x) = ((x - xi_j)_+^3 - (x - xi_K)_+^3) / (xi_K - xi_j),

then {1, x, d_1 - d_{K-1}, ..., d_{K-2} - d_{K-1}} spans the space of
cubic splines on the knots that are linear beyond the boundary knots
xi_1 and xi_K. The span has dimension K, counting the constant.
"""

from __future__ import annotations

import numpy as np


def equiquantile_knots(x, n_knots):
    """Knot locations at the empirical j/(n_knots+1) quantiles of x.

    Parameters
    ----------
    x : array_like
        Covariate sample, at least n_knots distinct values.
    n_knots : int
        Number of knots, at least 2.

    Returns
    -------
    numpy.ndarray
        Strictly increasing knot vector of length n_knots.
    """
    x = np.asarray(x, dtype=float)
    if n_knots < 2:
        raise ValueError("n_knots must be at least 2")
    if x.ndim != 1 or x.size < n_knots:
        raise ValueError("x must be a 1-d sample with at least n_knots values")
    probs = np.arange(1, n_knots + 1) / (n_knots + 1)
    knots = np.quantile(x, probs)
    if np.any(np.diff(knots) <= 0.0):
        raise ValueError(
            "degenerate covariate: equiquantile knots collide, "
            "too few distinct values for a spline basis"
        )
    return knots


def spline_basis(x, n_knots):
    """Natural cubic spline basis evaluated at x.

    Knots sit at the empirical equiquantile points of x (see
    :func:`equiquantile_knots`). The returned matrix has n_knots
    columns spanning the full natural-spline space on those knots:
    column 0 is the constant, column 1 the identity, and the remaining
    columns the curvature terms. Callers that already carry an
    intercept should drop column 0.

    Every column is twice continuously differentiable and linear
    outside [knots[0], knots[-1]].

    Parameters
    ----------
    x : array_like
        Points to evaluate at (1-d).
    n_knots : int
        Number of knots, at least 2.

    Returns
    -------
    basis : numpy.ndarray, shape (len(x), n_knots)
    knots : numpy.ndarray, shape (n_knots,)
    """
    x = np.asarray(x, dtype=float)
    knots = equiquantile_knots(x, n_knots)
    return evaluate_basis(x, knots), knots


def evaluate_basis(x, knots):
    """Evaluate the natural spline basis for the given knots at x."""
    x = np.asarray(x, dtype=float)
    knots = np.asarray(knots, dtype=float)
    kk = knots.size
    cols = np.empty((x.size, kk))
    cols[:, 0] = 1.0
    cols[:, 1] = x
    if kk == 2:
        return cols

    def d(j):
        num = np.clip(x - knots[j], 0.0, None) ** 3
        num -= np.clip(x - knots[-1], 0.0, None) ** 3
        return num / (knots[-1] - knots[j])

    d_last = d(kk - 2)
    for j in range(kk - 2):
        cols[:, 2 + j] = d(j) - d_last
    return cols
