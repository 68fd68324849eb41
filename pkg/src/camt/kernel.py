"""Closed-form kernel of the covariate-adaptive testing procedure.

Everything here is a small, stateless formula shared by the estimation,
thresholding and simulation layers: the one-parameter beta surrogate for
the alternative p-value density, the weight function that prices a
rejection at a given threshold, the equivalent p-value cutoff, and the
psi transform that turns a p-value into the statistic the mirror
estimator operates on.

All functions broadcast over numpy arrays and accept plain floats.
"""

from __future__ import annotations

import numpy as np

# Hard clamp applied to p-values before any p**(-k) or log(p) evaluation.
P_CLAMP = 1e-15

# Winsorization bounds for the fitted null probabilities.
EPS1_DEFAULT = 0.1
EPS2_DEFAULT = 1e-5


def clamp_pvalues(pvals):
    """Clamp p-values into [P_CLAMP, 1 - P_CLAMP].

    Exact zeros and ones are legal inputs (discrete tests produce them)
    but break the power and log evaluations downstream, so every entry
    is pulled into the open unit interval first.

    Parameters
    ----------
    pvals : array_like
        P-values in [0, 1]. Anything outside [0, 1] or non-finite is a
        corrupt input and raises ValueError.

    Returns
    -------
    numpy.ndarray
        Clamped copy, dtype float64.
    """
    p = np.asarray(pvals, dtype=float)
    if p.size and (not np.all(np.isfinite(p)) or p.min() < 0.0 or p.max() > 1.0):
        raise ValueError("p-values must be finite and lie in [0, 1]")
    return np.clip(p, P_CLAMP, 1.0 - P_CLAMP)


def surrogate_density(p, k):
    """Beta surrogate density (1 - k) * p**(-k) at p.

    This is the Beta(1 - k, 1) density, used as a surrogate for the
    p-value density under the alternative. For k in (0, 1) it is
    decreasing in p and integrates to one on (0, 1].

    Parameters
    ----------
    p : array_like
        Evaluation points in (0, 1]. Use :func:`clamp_pvalues` first if
        exact zeros may be present.
    k : array_like
        Shape parameter in the open interval (0, 1). Larger k puts more
        mass near zero (a stronger alternative).

    Returns
    -------
    numpy.ndarray or float
        Density values, broadcast over the inputs.
    """
    p = np.asarray(p, dtype=float)
    k = np.asarray(k, dtype=float)
    if p.size and (p.min() <= 0.0 or p.max() > 1.0):
        raise ValueError("p must lie in (0, 1]")
    if k.size and (k.min() <= 0.0 or k.max() >= 1.0):
        raise ValueError("k must lie in the open interval (0, 1)")
    return (1.0 - k) * p ** (-k)


def weight(t, pi):
    """Rejection weight w(t) = (1 - t) * pi / (t * (1 - pi)).

    A hypothesis with null probability pi is rejected at threshold t
    exactly when its surrogate likelihood ratio reaches this weight.
    Decreasing in t: a looser threshold prices rejections more cheaply.

    Parameters
    ----------
    t : array_like
        Threshold in (0, 1).
    pi : array_like
        Prior null probability in (0, 1).
    """
    t = np.asarray(t, dtype=float)
    pi = np.asarray(pi, dtype=float)
    if t.size and (t.min() <= 0.0 or t.max() >= 1.0):
        raise ValueError("t must lie in the open interval (0, 1)")
    if pi.size and (pi.min() <= 0.0 or pi.max() >= 1.0):
        raise ValueError("pi must lie in the open interval (0, 1)")
    return (1.0 - t) * pi / (t * (1.0 - pi))


def cutoff(t, pi, k):
    """P-value cutoff equivalent to the weight-form rejection rule.

    Solving surrogate_density(p, k) >= weight(t, pi) for p gives

        c(t, pi, k) = min(1, (t (1-k) (1-pi) / ((1-t) pi)) ** (1/k)),

    so the rule "likelihood ratio at least w(t)" coincides with the rule
    "p below c(t, pi, k)". The min handles thresholds loose enough that
    every p-value qualifies.
    """
    t = np.asarray(t, dtype=float)
    pi = np.asarray(pi, dtype=float)
    k = np.asarray(k, dtype=float)
    if t.size and (t.min() <= 0.0 or t.max() >= 1.0):
        raise ValueError("t must lie in the open interval (0, 1)")
    if pi.size and (pi.min() <= 0.0 or pi.max() >= 1.0):
        raise ValueError("pi must lie in the open interval (0, 1)")
    if k.size and (k.min() <= 0.0 or k.max() >= 1.0):
        raise ValueError("k must lie in the open interval (0, 1)")
    inner = t * (1.0 - k) * (1.0 - pi) / ((1.0 - t) * pi)
    with np.errstate(over="ignore"):
        c = inner ** (1.0 / k)
    return np.minimum(1.0, c)


def psi(p, pi, k):
    """Monotone statistic psi(p) = pi / (pi + (1 - pi) h(p)).

    h is the beta surrogate density. psi is strictly increasing in p
    (h is decreasing), so small p-values map to small psi values, and
    rejecting when the likelihood ratio h(p) clears weight(t, pi) is the
    same as rejecting when psi(p) <= t. One minus psi at the observed
    p-value is the posterior probability of the alternative.
    """
    h = surrogate_density(p, k)
    pi = np.asarray(pi, dtype=float)
    if pi.size and (pi.min() <= 0.0 or pi.max() >= 1.0):
        raise ValueError("pi must lie in the open interval (0, 1)")
    return pi / (pi + (1.0 - pi) * h)


def winsorize(x, eps1=EPS1_DEFAULT, eps2=EPS2_DEFAULT):
    """Clamp x into the closed interval [eps1, 1 - eps2].

    Applied to fitted null probabilities so that no hypothesis is ever
    declared a near-certain signal (lower bound) and weights stay finite
    (upper bound). The bounds are asymmetric on purpose: the lower one
    is the conservative guard, the upper one only a numerical guard.
    """
    if not 0.0 < eps1 < 1.0 - eps2 < 1.0:
        raise ValueError("winsorization bounds must satisfy 0 < eps1 < 1 - eps2 < 1")
    return np.clip(x, eps1, 1.0 - eps2)
