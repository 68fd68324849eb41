"""Mirror FDP estimation and threshold selection.

For each hypothesis the psi transform is applied twice, to the p-value
itself, s_i = psi(p_i), and to its reflection, r_i = psi(1 - p_i).
Rejecting whenever s_i <= t makes the r_i that fall below t a stand-in
for the unobservable count of false rejections (a null p-value and its
reflection are exchangeable), which gives the estimate

    fdp_up(t) = (offset + #{r_i < t}) / max(1, #{s_i <= t}).

The selector returns the largest threshold whose estimate stays at or
below the target. The s-side uses <= and the r-side strict <, so a
p-value of exactly one half (where s_i == r_i) counts as a rejection
but not against it at the boundary; no special casing is needed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernel import clamp_pvalues, psi


@dataclass
class MirrorStatistics:
    """Per-hypothesis psi statistics and the search cap.

    s : psi at the p-value (the rejection statistic)
    r : psi at one minus the p-value (the mirror statistic)
    t_up : the largest threshold the mirror argument supports,
        min_i psi_i(0.5); above it a rejection region would cross the
        midpoint of the null distribution.
    """

    s: np.ndarray
    r: np.ndarray
    t_up: float

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=float)
        self.r = np.asarray(self.r, dtype=float)
        if self.s.shape != self.r.shape or self.s.ndim != 1:
            raise ValueError("s and r must be 1-d arrays of equal length")
        for name, arr in (("s", self.s), ("r", self.r)):
            if arr.size and (not np.all(np.isfinite(arr)) or arr.min() <= 0.0 or arr.max() >= 1.0):
                raise ValueError(f"{name} must lie strictly inside (0, 1)")
        if not 0.0 < self.t_up <= 1.0:
            raise ValueError("t_up must lie in (0, 1]")


@dataclass
class RejectionResult:
    t_hat: float
    rejected: np.ndarray
    n_rejections: int
    fdp_hat: float


def mirror_statistics(pvals, fitted):
    """Build :class:`MirrorStatistics` from p-values and fitted parameters."""
    p = clamp_pvalues(pvals)
    s = psi(p, fitted.pi_hat, fitted.k_hat)
    r = psi(1.0 - p, fitted.pi_hat, fitted.k_hat)
    t_up = float(np.min(psi(0.5, fitted.pi_hat, fitted.k_hat)))
    return MirrorStatistics(s=s, r=r, t_up=t_up)


def fdp_up(t, stats, offset=1.0):
    """Upward-biased FDP estimate at threshold t (in [0, 1])."""
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    num = int(np.count_nonzero(stats.r < t))
    den = int(np.count_nonzero(stats.s <= t))
    return (offset + num) / max(1, den)


def select_threshold(stats, alpha, cap_at_tup=True, offset=1.0, mixed_fitted=None):
    """Largest candidate threshold with an admissible FDP estimate.

    Candidates are the observed s-values (capped at t_up unless
    cap_at_tup is False) plus zero; the estimate only changes at those
    points, so nothing larger is ever needed. Returns 0.0 when no
    candidate is admissible (then nothing is rejected).

    With mixed_fitted set (a FittedHypotheses), the numerator
    offset + count is replaced by the mixed estimate of the number of
    false rejections, see :func:`mixed_false_rejection_estimate`.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    candidates, num, den = _candidate_counts(stats, cap_at_tup)
    if candidates.size == 0:
        return 0.0
    if mixed_fitted is None:
        estimates = offset + num
    else:
        estimates = np.maximum(_expected_false_rejections(candidates, mixed_fitted), num)
    # same floating-point expression as fdp_up, so grid evaluation agrees
    admissible = estimates / np.maximum(1, den) <= alpha
    if not admissible.any():
        return 0.0
    return float(candidates[admissible].max())


def reject(stats, t_hat, offset=1.0, mixed_fitted=None):
    """Rejection set at threshold t_hat: every i with s_i <= t_hat."""
    if not 0.0 <= t_hat <= 1.0:
        raise ValueError("t_hat must lie in [0, 1]")
    rejected = stats.s <= t_hat
    if mixed_fitted is None or t_hat <= 0.0:
        fdp_hat = fdp_up(t_hat, stats, offset)
    else:
        est = mixed_false_rejection_estimate(t_hat, stats, mixed_fitted)
        fdp_hat = est / max(1, int(np.count_nonzero(rejected)))
    return RejectionResult(
        t_hat=float(t_hat),
        rejected=rejected,
        n_rejections=int(np.count_nonzero(rejected)),
        fdp_hat=float(fdp_hat),
    )


def mixed_false_rejection_estimate(t, stats, fitted):
    """Conservative mixed estimate of the number of false rejections.

    The larger of two estimates: the expected count of null p-values
    below their cutoffs, sum_i pi_i c(t, pi_i, k_i), which is sharp for
    small t, and the mirror count #{r_i < t}, which takes over once
    rejections reach into moderate p-values.
    """
    if not 0.0 < t < 1.0:
        raise ValueError("t must lie in the open interval (0, 1)")
    expected = float(_expected_false_rejections(np.asarray([t]), fitted)[0])
    return max(expected, float(np.count_nonzero(stats.r < t)))


def _candidate_counts(stats, cap_at_tup):
    """Sorted candidate thresholds with mirror and rejection counts."""
    s_sorted = np.sort(stats.s)
    r_sorted = np.sort(stats.r)
    if cap_at_tup:
        candidates = s_sorted[s_sorted <= stats.t_up]
    else:
        candidates = s_sorted
    den = np.searchsorted(s_sorted, candidates, side="right")
    num = np.searchsorted(r_sorted, candidates, side="left")
    return candidates, num, den


def _expected_false_rejections(ts, fitted):
    """sum_i pi_i * cutoff(t, pi_i, k_i) for every t in ts, chunked.

    Written on the log scale: the cutoff is exp(min(0, (logit t +
    log((1-k)(1-pi)/pi)) / k)), so the min against one costs nothing.
    """
    pi = fitted.pi_hat
    k = fitted.k_hat
    ts = np.asarray(ts, dtype=float)
    log_pref = np.log1p(-k) + np.log1p(-pi) - np.log(pi)
    inv_k = 1.0 / k
    logit_t = np.log(ts) - np.log1p(-ts)
    out = np.empty(ts.size)
    chunk = max(1, int(4_000_000 // max(1, pi.size)))
    for lo in range(0, ts.size, chunk):
        block = logit_t[lo : lo + chunk, None]
        logc = (block + log_pref[None, :]) * inv_k[None, :]
        np.minimum(logc, 0.0, out=logc)
        out[lo : lo + chunk] = np.exp(logc) @ pi
    return out
