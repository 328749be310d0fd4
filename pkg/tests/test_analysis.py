import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from cogsense.analysis import (ConvergenceSpec, binomial_pmf, bound_rates, bound_trajectory,
                               expected_q_bound, sample_ks, simulate_expected_q,
                               su_bound_rates, su_q_limit_matrix)
from cogsense.detection import (average_detection_probability, local_pfa_for_global,
                                threshold_for_pfa)


def test_binomial_pmf_edges():
    assert binomial_pmf(0, 12, 0.0) == 1.0
    assert binomial_pmf(12, 12, 1.0) == 1.0
    assert binomial_pmf(3, 12, 0.0) == 0.0
    t = np.arange(101)
    assert binomial_pmf(t, 100, 0.3).sum() == pytest.approx(1.0, abs=1e-10)
    with pytest.raises(ValueError):
        binomial_pmf(5, 4, 0.3)


@given(st.integers(0, 400), st.floats(0.001, 0.999))
def test_binomial_pmf_against_scipy(k, p):
    t = np.arange(k + 1)
    assert np.allclose(binomial_pmf(t, k, p), stats.binom.pmf(t, k, p), rtol=1e-8, atol=1e-300)


def test_rates():
    lo, hi = bound_rates(0.1, 1, 10)
    assert lo == pytest.approx(0.01) and hi == pytest.approx(0.91)
    assert su_bound_rates(0.1, 1, 10) == pytest.approx((0.001, 0.901))
    assert su_bound_rates(0.0, 1, 10) == (0.0, 1.0)
    assert su_bound_rates(0.3, 1, 1) == pytest.approx((0.3, 1.0))


def test_bound_at_zero_and_limit():
    spec = ConvergenceSpec(horizon=20000)
    for which in ("lower", "upper"):
        assert np.all(expected_q_bound(spec, 0, which) == 0)
        assert expected_q_bound(spec, 20000, which) == pytest.approx(spec.mu, rel=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 1.0), st.floats(0.0, 1.0), st.integers(0, 600))
def test_bound_matches_closed_form(alpha, eps, k):
    # E[1 - (1-a)^T] for T ~ Bin(k, p) equals 1 - (1 - a p)^k
    spec = ConvergenceSpec(alpha=alpha, epsilon=eps, horizon=600)
    for which, p in zip(("lower", "upper"), bound_rates(eps, 1, 5)):
        want = spec.mu * (1 - (1 - alpha * p) ** k)
        assert expected_q_bound(spec, k, which) == pytest.approx(want, rel=1e-9, abs=1e-12)


def test_bounds_monotone_and_ordered():
    spec = ConvergenceSpec(horizon=1500)
    ks = sample_ks(1500, 100)
    lo, up = bound_trajectory(spec, ks, "lower"), bound_trajectory(spec, ks, "upper")
    assert np.all(np.diff(lo, axis=0) >= -1e-10 * spec.mu)
    assert np.all(np.diff(up, axis=0) >= -1e-10 * spec.mu)
    assert np.all(lo <= up + 1e-12)


def test_equal_means_symmetric(rng):
    spec = ConvergenceSpec(mu=(2.0,) * 5, horizon=400)
    tr = simulate_expected_q(spec, 1500, rng)
    k = sample_ks(400, 40)
    m, se = tr.mean[k], tr.stderr[k]
    gap = m.max(axis=1) - m.min(axis=1)
    assert np.all(gap <= 3 * np.sqrt(2) * se.max(axis=1) + 1e-12)


def test_simulated_mean_between_bounds(rng):
    spec = ConvergenceSpec(horizon=600)
    tr = simulate_expected_q(spec, 1500, rng)
    ks = sample_ks(600, 60)
    lo, up = bound_trajectory(spec, ks, "lower"), bound_trajectory(spec, ks, "upper")
    m, se = tr.mean[ks], tr.stderr[ks]
    assert np.all(m >= lo - 3 * se - 1e-12)
    assert np.all(m <= up + 3 * se + 1e-12)


def test_spec_validation():
    with pytest.raises(ValueError):
        ConvergenceSpec(mu=(1.0, 2.0))
    with pytest.raises(ValueError):
        ConvergenceSpec(alpha=0.0)


def test_su_q_limit_matrix_oracle():
    snr = np.array([[5.0, -3.0], [12.0, 0.0], [1.0, 8.0]])
    lim = su_q_limit_matrix(snr, [0.5, 0.3], 2, 0.01, 50)
    pf_s = local_pfa_for_global(0.01, 2)
    thr = threshold_for_pfa(pf_s, 50)
    pd = average_detection_probability(snr, 50, thr)
    pf_fc = 1 - (1 - pf_s) ** 2
    # SU 0 on band 0 pairs with SU 1 or SU 2 equally often
    p1 = 0.5
    pd_fc = np.mean([1 - (1 - pd[0, 0]) * (1 - pd[j, 0]) for j in (1, 2)])
    want = (p1 * pd[0, 0] + (1 - p1) * pf_s) / (p1 * pd_fc + (1 - p1) * pf_fc)
    assert lim[0, 0] == pytest.approx(want, rel=1e-12)
    assert np.all((lim > 0) & (lim <= 1.0 + 1e-9))
