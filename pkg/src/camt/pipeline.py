"""End-to-end procedure: fit the mixture, pick a threshold, reject.

Split in two so that sweeps over several target levels pay for the EM
fit once: :func:`fit_camt` does all the estimation, the returned
:class:`CamtFit` answers any number of `select` calls cheaply.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .em import CoefVector, EmConfig, EmTrace, FittedHypotheses, build_design, fit
from .kernel import clamp_pvalues
from .threshold import MirrorStatistics, RejectionResult, mirror_statistics, reject, select_threshold


@dataclass
class CamtFit:
    """Fitted state, sufficient for threshold selection at any level."""

    pvals: np.ndarray
    fitted: FittedHypotheses
    coef: CoefVector
    trace: EmTrace
    stats: MirrorStatistics

    def select(self, alpha, mixed=False, cap_at_tup=True, offset=1.0):
        """Threshold search plus rejection at target level alpha."""
        mixed_fitted = self.fitted if mixed else None
        t_hat = select_threshold(
            self.stats, alpha, cap_at_tup=cap_at_tup, offset=offset, mixed_fitted=mixed_fitted
        )
        return reject(self.stats, t_hat, offset=offset, mixed_fitted=mixed_fitted)


@dataclass
class CamtResult:
    """Everything the CLI reports for one analysis."""

    alpha: float
    t_hat: float
    rejected: np.ndarray
    n_rejections: int
    fdp_hat: float
    pi_hat: np.ndarray
    k_hat: np.ndarray
    psi_stat: np.ndarray
    t_up: float
    coef: CoefVector
    trace: EmTrace


def fit_camt(pvals, covariates=None, spline_knots=0, em_config=None):
    """Estimate the mixture for the given p-values and covariates.

    Parameters
    ----------
    pvals : array_like
        P-values in [0, 1].
    covariates : array_like or None
        (m, q) covariate matrix; None fits an intercept-only model,
        which still adapts to the overall signal fraction and strength.
    spline_knots : int
        0 for linear covariate effects, else knots per covariate.
    em_config : EmConfig, optional
    """
    p = clamp_pvalues(pvals)
    if covariates is None:
        covariates = np.empty((p.size, 0))
    design = build_design(covariates, spline_knots=spline_knots)
    result = fit(design, p, config=em_config)
    stats = mirror_statistics(p, result.fitted)
    return CamtFit(
        pvals=p,
        fitted=result.fitted,
        coef=result.coef,
        trace=result.trace,
        stats=stats,
    )


def run_camt(
    pvals,
    covariates=None,
    alpha=0.05,
    spline_knots=0,
    mixed=False,
    cap_at_tup=True,
    offset=1.0,
    em_config=None,
):
    """One-call version of fit + select. Returns a :class:`CamtResult`."""
    state = fit_camt(pvals, covariates, spline_knots=spline_knots, em_config=em_config)
    sel: RejectionResult = state.select(
        alpha, mixed=mixed, cap_at_tup=cap_at_tup, offset=offset
    )
    return CamtResult(
        alpha=float(alpha),
        t_hat=sel.t_hat,
        rejected=sel.rejected,
        n_rejections=sel.n_rejections,
        fdp_hat=sel.fdp_hat,
        pi_hat=state.fitted.pi_hat,
        k_hat=state.fitted.k_hat,
        psi_stat=state.stats.s,
        t_up=state.stats.t_up,
        coef=state.coef,
        trace=state.trace,
    )
