"""Null-calibration diagnostics.

The mirror estimator trusts p-values above one half to behave like the
flat part of a uniform distribution. The genomic inflation factor (gif)
checks exactly that region: p-values in [0.5, 1] are mapped to 1-df
chi-square quantiles and their median is compared against the value a
uniform sample would give. Values above one flag an excess of
moderately small p-values among the supposed nulls, the signature of a
miscalibrated (decreasing) null density that breaks FDR control.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

GIF_WARN_THRESHOLD = 1.05
MIN_TAIL_PVALUES = 20


@dataclass
class GifReport:
    gif: float
    n_pvalues_used: int
    warn: bool
    threshold: float


def gif(pvals, threshold=GIF_WARN_THRESHOLD):
    """Genomic inflation factor of the p-values in [0.5, 1].

    gif = median(q_i) / F^{-1}(0.25) with q_i the upper chi-square(1)
    quantile at p_i. Exactly 1 in expectation for uniform nulls, above
    1 when the upper half of the p-value distribution piles up near
    0.5. P-values below 0.5 never enter.

    Raises ValueError when fewer than 20 p-values lie in [0.5, 1];
    a median of less than that is noise, not a diagnostic.
    """
    p = np.asarray(pvals, dtype=float)
    if p.size and (not np.all(np.isfinite(p)) or p.min() < 0.0 or p.max() > 1.0):
        raise ValueError("p-values must be finite and lie in [0, 1]")
    retained = p[p >= 0.5]
    if retained.size < MIN_TAIL_PVALUES:
        raise ValueError(
            f"insufficient data: {retained.size} p-values in [0.5, 1], "
            f"need at least {MIN_TAIL_PVALUES}"
        )
    q = chi2.isf(retained, df=1)
    reference = chi2.isf(0.75, df=1)
    value = float(np.median(q) / reference)
    return GifReport(
        gif=value,
        n_pvalues_used=int(retained.size),
        warn=value > threshold,
        threshold=float(threshold),
    )


def null_histogram_summary(pvals, n_bins=20):
    """Exact counts of p-values over n_bins equal bins of [0, 1].

    The last bin is closed on the right, so the counts always sum to
    the number of p-values.
    """
    p = np.asarray(pvals, dtype=float)
    if int(n_bins) < 1:
        raise ValueError("n_bins must be positive")
    if p.size and (not np.all(np.isfinite(p)) or p.min() < 0.0 or p.max() > 1.0):
        raise ValueError("p-values must be finite and lie in [0, 1]")
    counts, _ = np.histogram(p, bins=int(n_bins), range=(0.0, 1.0))
    return counts
