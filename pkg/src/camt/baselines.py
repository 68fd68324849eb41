"""Reference procedures: BH, Storey's adaptive BH, and the oracle LFDR rule.

The first two operate on p-values alone. The oracle rule sees the true
generating mechanism (per-hypothesis null probabilities and the exact
null and alternative p-value densities) and provides the power ceiling
simulations are judged against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, ndtri
from scipy.stats import norm


def bh(pvals, alpha):
    """Step-up procedure at level alpha; returns a boolean mask.

    Rejects the k smallest p-values where k is the largest index with
    p_(k) <= k * alpha / m.
    """
    p = np.asarray(pvals, dtype=float)
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    m = p.size
    mask = np.zeros(m, dtype=bool)
    if m == 0:
        return mask
    order = np.argsort(p, kind="stable")
    ok = p[order] <= alpha * np.arange(1, m + 1) / m
    if ok.any():
        kstar = int(np.nonzero(ok)[0].max())
        mask[order[: kstar + 1]] = True
    return mask


def storey(pvals, alpha, lam=0.5):
    """Adaptive step-up: BH run at level alpha / pi0_hat.

    pi0_hat = min(1, #{p > lam} / ((1 - lam) m)) estimates the null
    fraction from the flat upper tail. When every p-value sits at or
    below lam the estimate degenerates to zero and the limit of the
    rule (reject everything) is returned.
    """
    p = np.asarray(pvals, dtype=float)
    if not 0.0 < lam < 1.0:
        raise ValueError("lam must lie in (0, 1)")
    m = p.size
    if m == 0:
        return np.zeros(0, dtype=bool)
    pi0 = min(1.0, np.count_nonzero(p > lam) / ((1.0 - lam) * m))
    if pi0 == 0.0:
        return np.ones(m, dtype=bool)
    return bh(p, alpha / pi0)


@dataclass
class OracleTruth:
    """True generating mechanism of a simulated dataset.

    pi0 : per-hypothesis null probabilities
    effect : per-hypothesis alternative z-score mean
    family : "normal" (z ~ N(effect, 1) under the alternative) or
        "noncentral-gamma" (shape-2 gamma mixture matched to mean
        `effect` and unit variance)
    null_mean : mean of the null z-score, zero except in the
        shifted-null setups
    """

    pi0: np.ndarray
    effect: np.ndarray
    family: str = "normal"
    null_mean: float = 0.0

    def __post_init__(self):
        self.pi0 = np.asarray(self.pi0, dtype=float)
        self.effect = np.asarray(self.effect, dtype=float)
        if self.family not in ("normal", "noncentral-gamma"):
            raise ValueError(f"unknown family {self.family!r}")
        if self.pi0.shape != self.effect.shape:
            raise ValueError("pi0 and effect must have identical shapes")


def noncentral_gamma_params(mean, var=1.0, shape=2.0):
    """Scale and non-centrality of a shape-2 non-central gamma.

    The law is the Poisson(delta) mixture of Gamma(shape + N, scale)
    with moments mean = scale (shape + delta) and
    var = scale^2 (shape + 2 delta). For shape 2 and unit variance the
    non-centrality solves delta^2 + (4 - 2 mean^2) delta
    + (4 - 2 mean^2) = 0, which has a positive root exactly when
    mean > sqrt(2).
    """
    mean = np.asarray(mean, dtype=float)
    if shape != 2.0 or var != 1.0:
        raise ValueError("only shape 2 with unit variance is supported")
    if np.any(mean <= np.sqrt(2.0)):
        raise ValueError("mean must exceed sqrt(2) for a valid non-centrality")
    b = 2.0 * mean**2 - 4.0
    delta = 0.5 * (b + np.sqrt(b * (b + 4.0)))
    scale = mean / (2.0 + delta)
    return scale, delta


def _noncentral_gamma_pdf(x, scale, delta):
    """Density of the Poisson-mixed shape-2 gamma, vectorized over x."""
    x = np.asarray(x, dtype=float)
    scale = np.broadcast_to(np.asarray(scale, dtype=float), x.shape)
    delta = np.broadcast_to(np.asarray(delta, dtype=float), x.shape)
    out = np.zeros(x.shape)
    pos = x > 0.0
    if not pos.any():
        return out
    xs, sc, dl = x[pos], scale[pos], delta[pos]
    n_max = int(np.ceil(dl.max() + 12.0 * np.sqrt(dl.max()) + 20.0))
    log_x_over_s = np.log(xs / sc)
    acc = np.zeros(xs.shape)
    for n in range(n_max + 1):
        a = 2.0 + n
        log_w = n * np.log(dl) - dl - gammaln(n + 1.0)
        log_pdf = (a - 1.0) * log_x_over_s - xs / sc - gammaln(a) - np.log(sc)
        acc += np.exp(log_w + log_pdf)
    out[pos] = acc
    return out


def lfdr_values(pvals, truth):
    """True local false discovery rate of each p-value.

    The z-score behind p is recovered as z = Phi^{-1}(1 - p); densities
    of p under the null and the alternative are the corresponding
    z-densities divided by the standard normal density at z.
    """
    p = np.asarray(pvals, dtype=float)
    z = -ndtri(p)  # Phi^{-1}(1 - p), computed in the precise tail
    # density ratios against the standard normal carrier
    f0 = np.exp(truth.null_mean * z - 0.5 * truth.null_mean**2)
    if truth.family == "normal":
        f1 = np.exp(truth.effect * z - 0.5 * truth.effect**2)
    else:
        scale, delta = noncentral_gamma_params(truth.effect)
        f1 = _noncentral_gamma_pdf(z, scale, delta) / norm.pdf(z)
    null_part = truth.pi0 * f0
    alt_part = (1.0 - truth.pi0) * f1
    return null_part / (null_part + alt_part)


def oracle_lfdr(pvals, truth, alpha):
    """Reject the largest LFDR-ascending prefix with running mean <= alpha.

    The running mean of sorted LFDR values estimates the FDR of
    rejecting exactly that prefix; it is nondecreasing, so the optimal
    prefix is the last admissible one. Ties at the boundary are broken
    by input order (stable sort).
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    values = lfdr_values(pvals, truth)
    m = values.size
    mask = np.zeros(m, dtype=bool)
    if m == 0:
        return mask
    order = np.argsort(values, kind="stable")
    running_mean = np.cumsum(values[order]) / np.arange(1, m + 1)
    kstar = int(np.searchsorted(running_mean, alpha, side="right"))
    mask[order[:kstar]] = True
    return mask
