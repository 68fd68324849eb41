"""Tests for the BH, Storey and oracle LFDR reference procedures."""

import itertools

import numpy as np
import pytest
import scipy.integrate

from camt.baselines import (
    OracleTruth,
    _noncentral_gamma_pdf,
    bh,
    lfdr_values,
    noncentral_gamma_params,
    oracle_lfdr,
    storey,
)


def _bh_scan(pvals, alpha):
    """Literal step-up definition: scan every k, keep the largest."""
    p = np.asarray(pvals, dtype=float)
    m = p.size
    ps = np.sort(p)
    kstar = 0
    for k in range(1, m + 1):
        if ps[k - 1] <= alpha * k / m:
            kstar = k
    if kstar == 0:
        return np.zeros(m, dtype=bool)
    return p <= ps[kstar - 1]


def _random_pvalues(rng, m):
    signal = rng.random(m) < 0.4
    return np.where(signal, rng.uniform(0, 0.03, m), rng.random(m))


# ----------------------------------------------------------------------
# BH


def test_bh_rejects_only_the_clear_signal():
    p = np.array([0.001, 0.8, 0.9, 0.95])
    assert bh(p, 0.05).tolist() == [True, False, False, False]


def test_bh_all_ones_rejects_nothing():
    assert not bh(np.ones(5), 0.05).any()


def test_bh_alpha_one_rejects_everything():
    rng = np.random.default_rng(3)
    p = rng.random(20)
    assert bh(p, 1.0).all()


@pytest.mark.parametrize("alpha", [0.1, 1.0])
def test_bh_matches_definition_scan(alpha):
    rng = np.random.default_rng(42)
    for _ in range(30):
        m = int(rng.integers(1, 41))
        p = _random_pvalues(rng, m)
        assert np.array_equal(bh(p, alpha), _bh_scan(p, alpha))


def test_bh_tied_boundary_rejects_all_tied():
    # both copies of the boundary p-value go together
    p = np.array([0.02, 0.02, 0.9])
    mask = bh(p, 0.15)  # thresholds 0.05, 0.10, 0.15
    assert mask.tolist() == [True, True, False]


def test_bh_alpha_domain():
    for alpha in (0.0, -0.1, 1.2):
        with pytest.raises(ValueError):
            bh(np.array([0.5]), alpha)


def test_bh_empty_input():
    assert bh(np.zeros(0), 0.05).size == 0


# ----------------------------------------------------------------------
# Storey


def test_storey_with_flat_tail_reduces_to_bh():
    # 6 of 10 p-values above lam = 0.5 pushes pi0_hat to the cap of 1
    p = np.array([0.01, 0.02, 0.03, 0.04, 0.55, 0.6, 0.7, 0.8, 0.9, 0.95])
    assert np.array_equal(storey(p, 0.1), bh(p, 0.1))


def test_storey_halved_null_fraction_doubles_the_level():
    # exactly 2 of 8 p-values exceed 0.5, so pi0_hat = 2 / 4 = 0.5 and
    # alpha / pi0_hat = 2 alpha without rounding
    p = np.array([1e-9, 1e-9, 1e-9, 1e-9, 0.6, 0.7, 0.3, 0.4])
    got = storey(p, 0.05)
    assert np.array_equal(got, bh(p, 0.1))
    assert got.tolist() == [True, True, True, True, False, False, False, False]


def test_storey_degenerate_estimate_rejects_everything():
    p = np.full(5, 0.2)  # nothing above lam
    assert storey(p, 0.05).all()


def test_storey_contains_bh():
    rng = np.random.default_rng(7)
    for _ in range(20):
        m = int(rng.integers(5, 200))
        p = _random_pvalues(rng, m)
        bh_mask = bh(p, 0.1)
        st_mask = storey(p, 0.1)
        assert np.all(st_mask[bh_mask])


def test_storey_lam_domain():
    for lam in (0.0, 1.0, -0.5):
        with pytest.raises(ValueError):
            storey(np.array([0.5]), 0.05, lam=lam)


# ----------------------------------------------------------------------
# oracle LFDR values


def test_lfdr_is_pi0_when_alternative_matches_null():
    # zero effect makes both density ratios one, so the posterior equals
    # the prior; dyadic priors keep the arithmetic exact
    pi0 = np.array([0.5, 0.25, 0.75, 0.125])
    truth = OracleTruth(pi0=pi0, effect=np.zeros(4))
    p = np.array([0.02, 0.3, 0.77, 0.5])
    assert lfdr_values(p, truth).tolist() == pi0.tolist()


def test_lfdr_increases_with_p_for_positive_effect():
    p = np.linspace(0.001, 0.999, 500)
    truth = OracleTruth(pi0=np.full(500, 0.8), effect=np.full(500, 2.0))
    values = lfdr_values(p, truth)
    assert np.all(np.diff(values) > 0)
    assert np.all((values > 0) & (values < 1))


def test_lfdr_shifted_null_raises_small_p_lfdr():
    # a null mean of -0.15 makes small p-values less null-like than the
    # centered null claims, and large ones more so
    p = np.array([0.001, 0.999])
    base = OracleTruth(pi0=np.full(2, 0.9), effect=np.full(2, 2.0))
    shifted = OracleTruth(
        pi0=np.full(2, 0.9), effect=np.full(2, 2.0), null_mean=-0.15
    )
    lo = lfdr_values(p, base)
    hi = lfdr_values(p, shifted)
    assert hi[0] < lo[0]
    assert hi[1] > lo[1]


def test_oracle_all_null_rejects_nothing():
    truth = OracleTruth(pi0=np.ones(10), effect=np.full(10, 2.0))
    p = np.linspace(0.01, 0.95, 10)
    assert not oracle_lfdr(p, truth, 0.05).any()


@pytest.mark.parametrize("alpha", [0.05, 0.2, 0.5, 0.9])
def test_oracle_matches_subset_enumeration(alpha):
    # the rule must reject as many hypotheses as the best admissible
    # subset of any size, and pick the smallest LFDR values to do it
    rng = np.random.default_rng(101)
    m = 6
    truth = OracleTruth(
        pi0=rng.uniform(0.3, 0.95, m), effect=np.full(m, 2.5)
    )
    p = _random_pvalues(rng, m)
    values = lfdr_values(p, truth)
    best_size = 0
    for size in range(1, m + 1):
        for subset in itertools.combinations(range(m), size):
            if values[list(subset)].mean() <= alpha:
                best_size = max(best_size, size)
    mask = oracle_lfdr(p, truth, alpha)
    assert mask.sum() == best_size
    if best_size:
        expected = np.zeros(m, dtype=bool)
        expected[np.argsort(values)[:best_size]] = True
        assert np.array_equal(mask, expected)
        assert values[mask].mean() <= alpha


def test_oracle_alpha_domain():
    truth = OracleTruth(pi0=np.array([0.5]), effect=np.array([2.0]))
    with pytest.raises(ValueError):
        oracle_lfdr(np.array([0.5]), truth, 0.0)


# ----------------------------------------------------------------------
# non-central gamma alternative


def test_noncentral_gamma_moment_identities():
    for mean in (1.5, 2.0, 3.0, 5.0):
        scale, delta = noncentral_gamma_params(mean)
        assert scale * (2.0 + delta) == pytest.approx(mean, rel=1e-12)
        assert scale**2 * (2.0 + 2.0 * delta) == pytest.approx(1.0, rel=1e-12)


def test_noncentral_gamma_params_vectorized():
    means = np.array([2.0, 3.0])
    scale, delta = noncentral_gamma_params(means)
    assert scale.shape == (2,)
    assert np.allclose(scale * (2.0 + delta), means, rtol=1e-12)


def test_noncentral_gamma_mean_domain():
    for mean in (np.sqrt(2.0), 1.2, 0.0):
        with pytest.raises(ValueError):
            noncentral_gamma_params(mean)


def test_noncentral_gamma_pdf_moments_by_quadrature():
    mean = 3.0
    scale, delta = noncentral_gamma_params(mean)
    f = lambda x: _noncentral_gamma_pdf(np.array([x]), scale, delta)[0]
    total, _ = scipy.integrate.quad(f, 0.0, 60.0, limit=200)
    first, _ = scipy.integrate.quad(lambda x: x * f(x), 0.0, 60.0, limit=200)
    second, _ = scipy.integrate.quad(lambda x: x * x * f(x), 0.0, 60.0, limit=200)
    assert total == pytest.approx(1.0, abs=1e-9)
    assert first == pytest.approx(mean, abs=1e-8)
    assert second - first**2 == pytest.approx(1.0, abs=1e-7)


# ----------------------------------------------------------------------
# truth container and shared invariants


def test_oracle_truth_validation():
    with pytest.raises(ValueError):
        OracleTruth(pi0=np.array([0.5]), effect=np.array([2.0]), family="cauchy")
    with pytest.raises(ValueError):
        OracleTruth(pi0=np.array([0.5, 0.6]), effect=np.array([2.0]))
    # a fully null truth is legitimate
    OracleTruth(pi0=np.ones(3), effect=np.zeros(3))


def test_procedures_are_permutation_equivariant():
    rng = np.random.default_rng(11)
    m = 60
    p = _random_pvalues(rng, m)
    truth = OracleTruth(pi0=rng.uniform(0.4, 0.95, m), effect=np.full(m, 2.2))
    perm = rng.permutation(m)
    truth_perm = OracleTruth(pi0=truth.pi0[perm], effect=truth.effect[perm])
    assert np.array_equal(bh(p[perm], 0.1), bh(p, 0.1)[perm])
    assert np.array_equal(storey(p[perm], 0.1), storey(p, 0.1)[perm])
    assert np.array_equal(
        oracle_lfdr(p[perm], truth_perm, 0.1), oracle_lfdr(p, truth, 0.1)[perm]
    )
