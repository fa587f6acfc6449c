import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sreqmc.estimators import (SpectralData, fit_snr_scaling, gaussian_consistency, histogram, jackknife,
                               ks_critical, min_projector_length, snr_exp_work, snr_work, work_stats)
from sreqmc.noneq import PathResult, Schedule, WorkEnsemble


def test_constant_sample_is_degenerate():
    s = work_stats([1.5] * 10)
    assert s.degenerate and s.variance == 0.0 and s.mean == 1.5
    assert math.isnan(s.ks_statistic)


def test_too_few_paths():
    with pytest.raises(ValueError):
        work_stats([1.0])
    with pytest.raises(ValueError):
        work_stats([1.0, math.inf])


def test_abandoned_fraction_from_sample_and_ensemble():
    assert work_stats([1.0, 2.0, 3.0, math.inf]).abandoned_fraction == 0.25
    res = [PathResult(float(w), False, 2, 0) for w in (1, 2, 3)] + [PathResult(math.inf, True, 1, 0)]
    s = work_stats(WorkEnsemble(res, Schedule()))
    assert s.count == 3 and s.abandoned_fraction == 0.25


def test_gaussian_ks_below_critical_value():
    rng = np.random.default_rng(0)
    reps, n = 100, 10000
    crit = ks_critical(n, 0.01)
    # the fitted-parameter KS distance is smaller than the simple-hypothesis one, so this is conservative
    hits = sum(work_stats(rng.normal(2.0, 0.7, n)).ks_statistic < crit for _ in range(reps))
    assert hits >= 95


def test_ks_detects_non_gaussian():
    rng = np.random.default_rng(1)
    n = 10000
    assert work_stats(rng.exponential(1.0, n)).ks_statistic > ks_critical(n, 0.01)


@given(p=st.floats(0.05, 0.95), a=st.floats(-3, 3), d=st.floats(0.5, 4))
@settings(max_examples=30, deadline=None)
def test_two_point_skewness(p, a, d):
    n = 1000
    k = int(round(p * n))
    if k in (0, n):
        return
    q = k / n
    w = np.r_[np.full(k, a + d), np.full(n - k, a)]
    expected = (1 - 2 * q) / math.sqrt(q * (1 - q))
    assert work_stats(w).skewness == pytest.approx(expected, rel=1e-6, abs=1e-9)


def test_gaussian_consistency_synthetic():
    rng = np.random.default_rng(2)
    w = rng.normal(2.0, math.sqrt(0.5), 100000)
    rep = gaussian_consistency(work_stats(w), w)
    assert rep["mu_deviation"] < 0.05 and rep["tau2_deviation"] < 0.05
    assert not rep["deviation_flag"]
    assert rep["mu_gaussian"] == pytest.approx(math.exp(-w.mean() + w.var(ddof=1) / 2))


def test_gaussian_consistency_zero_variance():
    w = np.full(10, 2.0)
    rep = gaussian_consistency(work_stats(w), w)
    assert rep["mu"] == rep["mu_gaussian"] == pytest.approx(math.exp(-2.0))
    assert rep["tau2"] == rep["tau2_gaussian"] == 0.0
    assert not rep["deviation_flag"]


def test_gaussian_consistency_flags_heavy_tail():
    rng = np.random.default_rng(3)
    # a left tail of low work dominates exp(-W) far beyond the Gaussian prediction
    w = 2.0 - rng.standard_t(2, 20000)
    assert gaussian_consistency(work_stats(w), w)["deviation_flag"]


def test_histogram_bins():
    counts, edges = histogram(np.arange(100.0), bins=25)
    assert counts.sum() == 100 and len(edges) == 26
    with pytest.raises(ValueError):
        histogram(np.arange(10.0), bins=10)


@given(alpha=st.floats(0.2, 3.0), alpha_c=st.floats(0.05, 20.0))
@settings(max_examples=30, deadline=None)
def test_snr_fit_exact(alpha, alpha_c):
    sizes = np.array([8, 16, 24, 32, 48])
    fit = fit_snr_scaling(sizes, sizes ** (-alpha) / alpha_c)
    assert fit.alpha == pytest.approx(alpha, abs=1e-6)
    assert fit.alpha_c == pytest.approx(alpha_c, rel=1e-6)
    assert np.allclose(fit.residuals, 0, atol=1e-9)
    assert np.allclose(fit.predict(sizes), sizes ** (-alpha) / alpha_c)


def test_snr_fit_reference_regime():
    sizes = np.array([8, 12, 16, 20])
    fit = fit_snr_scaling(sizes, 2.0 * sizes ** -1.2, work_snrs=sizes ** 0.25)
    assert fit.alpha == pytest.approx(1.2, abs=1e-6)
    assert fit.gamma == pytest.approx(0.5, abs=1e-6)


@pytest.mark.parametrize("sizes,snrs", [([8, 16], [1.0, 0.5]), ([8, 16, 24], [1.0, 0.0, 0.5]),
                                        ([0, 16, 24], [1.0, 0.5, 0.3]), ([8, 16, 24], [1.0, 0.5])])
def test_snr_fit_rejects_bad_input(sizes, snrs):
    with pytest.raises(ValueError):
        fit_snr_scaling(sizes, snrs)


def test_snr_helpers_shift_invariant():
    rng = np.random.default_rng(4)
    w = rng.normal(0.0, 0.3, 500)
    assert snr_exp_work(w) == pytest.approx(snr_exp_work(w + 500.0))
    assert snr_work(w + 5.0) == pytest.approx(abs((w + 5).mean()) / (w + 5).std(ddof=1))
    with pytest.raises(ValueError):
        snr_exp_work([1.0, 1.0])


def test_projector_bound_worked_example():
    assert min_projector_length(SpectralData(-20.0, 1.0, 1.0), 2, 0.01, 1.0) == 60
    assert math.ceil(10 * math.log(400)) == 60


def test_projector_bound_halves_with_gap():
    spec = SpectralData(-20.0, 1.0)
    for delta_r in (0.01, 0.03):
        m1 = min_projector_length(spec, 2, delta_r, 1.0)
        m2 = min_projector_length(SpectralData(-20.0, 2.0), 2, delta_r, 1.0)
        assert abs(m2 - m1 / 2) <= 1


def test_projector_bound_errors_and_warning():
    with pytest.raises(ValueError):
        min_projector_length(SpectralData(-20.0, 0.0), 2, 0.01, 1.0)
    with pytest.raises(ValueError):
        min_projector_length(SpectralData(-20.0, 1.0), 1, 0.01, 1.0)
    with pytest.warns(RuntimeWarning):
        min_projector_length(SpectralData(-20.0, 1.0), 2, 0.5, 1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        min_projector_length(SpectralData(-20.0, 1.0), 2, 0.01, 1.0)


def test_jackknife_mean_matches_standard_error():
    rng = np.random.default_rng(5)
    x = rng.normal(size=200)
    est, err = jackknife(x, np.mean)
    assert est == pytest.approx(x.mean())
    assert err == pytest.approx(x.std(ddof=1) / math.sqrt(x.size))


def test_jackknife_error_scaling():
    rng = np.random.default_rng(6)
    sizes = np.array([100, 200, 400, 800, 1600])
    errs = []
    for n in sizes:
        f = lambda x: -np.log(np.mean(np.exp(-x)))
        errs.append(np.mean([jackknife(rng.normal(1.0, 0.5, n), f)[1] for _ in range(20)]))
    slope = np.polyfit(np.log(sizes), np.log(errs), 1)[0]
    assert slope == pytest.approx(-0.5, abs=0.05)
