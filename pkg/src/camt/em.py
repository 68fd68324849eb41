"""EM estimation of per-hypothesis null probabilities and beta shapes.

The marginal model for a p-value p_i with covariate row x_i is the
two-group mixture

    pi_i + (1 - pi_i) * (1 - k_i) * p_i ** (-k_i),

where both mixture ingredients are tied to the covariates through
logistic links: logit(pi_i) = theta' x_i and logit(k_i) = beta' x_i,
with x_i including an intercept. The log-likelihood is maximized by EM:
the E-step computes the posterior probability gamma_i that hypothesis i
is a signal, the M-step solves one weighted logistic regression for
theta and one damped Newton ascent for beta. Every M-step move is
accepted only if it does not decrease its objective, which makes the
observed-data log-likelihood monotone along the iteration.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logit

from .kernel import EPS1_DEFAULT, EPS2_DEFAULT, clamp_pvalues, winsorize
from .splines import spline_basis

# Fitted k values are pulled off the exact endpoints so that downstream
# formulas with 1/k and log(1-k) stay finite.
K_CLIP = 1e-12


@dataclass
class EmConfig:
    """Tuning knobs for :func:`fit`.

    The defaults are the ones every result in this package is produced
    with; change them only for experiments.
    """

    max_iter: int = 200
    rel_tol: float = 1e-6
    init_pi: float = 0.9
    coef_bound: float = 15.0
    inner_max_iter: int = 25
    max_halvings: int = 20
    eps1: float = EPS1_DEFAULT
    eps2: float = EPS2_DEFAULT


@dataclass
class CoefVector:
    """Link-scale coefficients, theta for pi and beta for k."""

    theta: np.ndarray
    beta: np.ndarray


@dataclass
class EmTrace:
    """Per-iteration diagnostics of one EM run."""

    loglik: np.ndarray
    param_change: np.ndarray
    n_iter: int
    converged: bool


@dataclass
class FittedHypotheses:
    """Per-hypothesis estimates: winsorized pi_hat and k_hat."""

    pi_hat: np.ndarray
    k_hat: np.ndarray

    def __post_init__(self):
        self.pi_hat = np.asarray(self.pi_hat, dtype=float)
        self.k_hat = np.asarray(self.k_hat, dtype=float)
        if self.pi_hat.shape != self.k_hat.shape:
            raise ValueError("pi_hat and k_hat must have identical shapes")
        for name, arr in (("pi_hat", self.pi_hat), ("k_hat", self.k_hat)):
            if arr.size and (not np.all(np.isfinite(arr)) or arr.min() <= 0.0 or arr.max() >= 1.0):
                raise ValueError(f"{name} must lie strictly inside (0, 1)")


@dataclass
class FitResult:
    coef: CoefVector
    fitted: FittedHypotheses
    trace: EmTrace


def build_design(covariates, spline_knots=0):
    """Intercept-plus-covariates design matrix for the logistic links.

    Covariate columns are standardized (centered, unit variance) so the
    coefficient box constraint acts on a comparable scale for every
    column; the logistic links absorb the affine recoding, fitted values
    do not change. A constant column standardizes to zeros and is then
    harmless. With spline_knots >= 2 each covariate is expanded into a
    natural cubic spline basis (the basis constant is dropped, the
    design keeps a single global intercept).

    Parameters
    ----------
    covariates : array_like or None
        Shape (m, q) or (m,). None or q == 0 gives an intercept-only
        design; m must then be passed via a (m, 0) array.
    spline_knots : int
        0 for raw covariate columns, otherwise the number of knots per
        covariate, between 2 and 20.
    """
    x = np.asarray(covariates, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ValueError("covariates must be a 1-d or 2-d array")
    if x.size and not np.all(np.isfinite(x)):
        raise ValueError("covariates must be finite")
    if spline_knots != 0 and not 2 <= spline_knots <= 20:
        raise ValueError("spline_knots must be 0 or between 2 and 20")
    m, q = x.shape
    blocks = [np.ones((m, 1))]
    for j in range(q):
        col = _standardize(x[:, j])
        if spline_knots == 0:
            blocks.append(col[:, None])
        else:
            basis, _ = spline_basis(col, spline_knots)
            expanded = basis[:, 1:]  # drop the basis constant, intercept is global
            blocks.append(np.column_stack([_standardize(b) for b in expanded.T]))
    return np.hstack(blocks)


def _standardize(col):
    mu = col.mean()
    sd = col.std()
    if sd == 0.0 or not np.isfinite(sd):
        sd = 1.0
    return (col - mu) / sd


def loglik(params, design, pvals):
    """Observed-data log-likelihood of the surrogate mixture."""
    X, logp = _prepare(design, pvals)
    return _loglik(params.theta, params.beta, X, logp)


def loglik_grad(params, design, pvals):
    """Analytic gradient of :func:`loglik` in (theta, beta).

    Returns
    -------
    (numpy.ndarray, numpy.ndarray)
        Gradients with respect to theta and beta.
    """
    X, logp = _prepare(design, pvals)
    pi, one_m_pi, k, one_m_k, h, denom = _pieces(params.theta, params.beta, X, logp)
    grad_theta = X.T @ ((1.0 - h) * pi * one_m_pi / denom)
    dh_dk = -np.exp(-k * logp) * (1.0 + one_m_k * logp)
    grad_beta = X.T @ (one_m_pi * dh_dk * k * one_m_k / denom)
    return grad_theta, grad_beta


def e_step(params, design, pvals):
    """Posterior signal probabilities gamma_i at the current parameters."""
    X, logp = _prepare(design, pvals)
    return _e_step(params.theta, params.beta, X, logp)


def m_step(gamma, params, design, pvals, config=None):
    """One M-step: update theta, then beta, holding gamma fixed.

    Neither update is run to full convergence; each is a damped Newton
    ascent that never decreases its share of the complete-data
    objective, which is all the EM argument needs.
    """
    config = config or EmConfig()
    X, logp = _prepare(design, pvals)
    gamma = np.asarray(gamma, dtype=float)
    theta, _ = _update_theta(params.theta.copy(), 1.0 - gamma, X, config)
    beta, _ = _update_beta(params.beta.copy(), gamma, X, logp, config)
    return CoefVector(theta=theta, beta=beta)


def fit(design, pvals, config=None):
    """Fit the mixture by EM and return coefficients, fits and a trace.

    Parameters
    ----------
    design : numpy.ndarray
        Output of :func:`build_design` (or any matrix whose first
        column is an all-ones intercept).
    pvals : array_like
        P-values in [0, 1]; exact endpoints are clamped.
    config : EmConfig, optional

    Returns
    -------
    FitResult
        coef (link-scale), fitted (pi_hat winsorized into
        [eps1, 1 - eps2], k_hat inside (0, 1)) and the iteration trace.
        Non-convergence within max_iter is reported in the trace and as
        a RuntimeWarning, never silently.
    """
    config = config or EmConfig()
    X, logp = _prepare(design, pvals)
    m, d = X.shape
    if m < 10 * d:
        warnings.warn(
            f"only {m} hypotheses for {d} design columns; "
            "estimates will be unstable",
            UserWarning,
            stacklevel=2,
        )

    theta = np.zeros(d)
    theta[0] = logit(config.init_pi)
    beta = np.zeros(d)

    ll = _loglik(theta, beta, X, logp)
    trace_ll = [ll]
    trace_change = []
    converged = False
    n_iter = 0
    for _ in range(config.max_iter):
        n_iter += 1
        gamma = _e_step(theta, beta, X, logp)
        theta_new, _ = _update_theta(theta.copy(), 1.0 - gamma, X, config)
        beta_new, _ = _update_beta(beta.copy(), gamma, X, logp, config)
        ll_new = _loglik(theta_new, beta_new, X, logp)
        change = max(
            np.max(np.abs(theta_new - theta)), np.max(np.abs(beta_new - beta))
        )
        trace_ll.append(ll_new)
        trace_change.append(change)
        theta, beta = theta_new, beta_new
        if abs(ll_new - ll) < config.rel_tol * max(1.0, abs(ll)):
            converged = True
            break
        ll = ll_new

    if not converged:
        warnings.warn(
            f"EM did not converge within {config.max_iter} iterations",
            RuntimeWarning,
            stacklevel=2,
        )

    pi_hat = winsorize(expit(X @ theta), config.eps1, config.eps2)
    k_hat = np.clip(expit(X @ beta), K_CLIP, 1.0 - K_CLIP)
    return FitResult(
        coef=CoefVector(theta=theta, beta=beta),
        fitted=FittedHypotheses(pi_hat=pi_hat, k_hat=k_hat),
        trace=EmTrace(
            loglik=np.asarray(trace_ll),
            param_change=np.asarray(trace_change),
            n_iter=n_iter,
            converged=converged,
        ),
    )


# ----------------------------------------------------------------------
# internals, operating on a validated design and precomputed log(p)


def _prepare(design, pvals):
    X = np.asarray(design, dtype=float)
    if X.ndim != 2:
        raise ValueError("design must be 2-d")
    if not np.all(np.isfinite(X)):
        raise ValueError("design must be finite")
    if X.size and not np.all(X[:, 0] == 1.0):
        raise ValueError("design must carry an all-ones intercept in column 0")
    p = clamp_pvalues(pvals)
    if p.ndim != 1 or p.size != X.shape[0]:
        raise ValueError("pvals must be 1-d with one entry per design row")
    return X, np.log(p)


def _pieces(theta, beta, X, logp):
    u_pi = X @ theta
    u_k = X @ beta
    pi = expit(u_pi)
    one_m_pi = expit(-u_pi)
    k = expit(u_k)
    one_m_k = expit(-u_k)
    h = one_m_k * np.exp(-k * logp)
    denom = pi + one_m_pi * h
    return pi, one_m_pi, k, one_m_k, h, denom


def _loglik(theta, beta, X, logp):
    denom = _pieces(theta, beta, X, logp)[5]
    with np.errstate(divide="ignore"):
        return float(np.log(denom).sum())


def _e_step(theta, beta, X, logp):
    _, one_m_pi, _, _, h, denom = _pieces(theta, beta, X, logp)
    return one_m_pi * h / denom


def _solve_ascent_direction(neg_hess, grad):
    """pinv(-H) @ grad when -H is PSD, else None.

    Eigendecomposition instead of a Cholesky solve so that collinear
    designs (duplicated columns) degrade to the minimum-norm Newton
    step instead of failing.
    """
    if not np.all(np.isfinite(neg_hess)):
        return None
    evals, evecs = np.linalg.eigh(neg_hess)
    top = evals[-1]
    if top <= 0.0:
        return None
    if evals[0] < -1e-8 * top:
        return None  # indefinite: caller falls back to gradient ascent
    inv = np.where(evals > 1e-12 * top, 1.0 / np.maximum(evals, 1e-300), 0.0)
    return evecs @ (inv * (evecs.T @ grad))


def _ascend(coef, direction, objective, value, config):
    """Backtracking line search; accepts only non-decreasing moves."""
    step = 1.0
    for _ in range(config.max_halvings + 1):
        cand = np.clip(coef + step * direction, -config.coef_bound, config.coef_bound)
        val = objective(cand)
        if np.isfinite(val) and val >= value:
            return cand, val, True
        step *= 0.5
    return coef, value, False


def _update_theta(theta, y, X, config):
    """Damped Newton / IRLS for the pi link with soft null labels y."""

    def obj(th):
        u = X @ th
        return -float(y @ np.logaddexp(0.0, -u) + (1.0 - y) @ np.logaddexp(0.0, u))

    value = obj(theta)
    grad_tol = 1e-8 * X.shape[0]
    for _ in range(config.inner_max_iter):
        u = X @ theta
        piv = expit(u)
        grad = X.T @ (y - piv)
        if np.max(np.abs(grad)) <= grad_tol:
            break
        w = piv * expit(-u)
        neg_hess = X.T @ (X * w[:, None])
        direction = _solve_ascent_direction(neg_hess, grad)
        if direction is None:
            gmax = np.max(np.abs(grad))
            direction = grad / gmax
        theta_new, value, accepted = _ascend(theta, direction, obj, value, config)
        moved = np.max(np.abs(theta_new - theta))
        theta = theta_new
        if not accepted or moved < 1e-10:
            break
    return theta, value


def _update_beta(beta, gamma, X, logp, config):
    """Damped Newton for the k link; the Hessian here is not always
    negative definite, in which case a normalized gradient step with
    backtracking is used instead."""

    def obj(b):
        u = X @ b
        return -float(gamma @ (np.logaddexp(0.0, u) + expit(u) * logp))

    value = obj(beta)
    grad_tol = 1e-8 * X.shape[0]
    for _ in range(config.inner_max_iter):
        u = X @ beta
        k = expit(u)
        one_m_k = expit(-u)
        grad_u = -gamma * k * (1.0 + one_m_k * logp)
        grad = X.T @ grad_u
        if np.max(np.abs(grad)) <= grad_tol:
            break
        curv = gamma * k * one_m_k * (1.0 + (1.0 - 2.0 * k) * logp)
        neg_hess = X.T @ (X * curv[:, None])
        direction = _solve_ascent_direction(neg_hess, grad)
        if direction is None:
            gmax = np.max(np.abs(grad))
            direction = grad / gmax
        beta_new, value, accepted = _ascend(beta, direction, obj, value, config)
        moved = np.max(np.abs(beta_new - beta))
        beta = beta_new
        if not accepted or moved < 1e-10:
            break
    return beta, value
