import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chi2

from rgccl.fairness import (
    QdaParams,
    kappa_sweep,
    qda_error_closed_form,
    qda_error_monte_carlo,
    sigmas_for_ratio,
)


def test_equal_variance_equal_means_is_rejected():
    with pytest.raises(ValueError, match="monte_carlo"):
        qda_error_closed_form(1.0, 1.0)


def test_equal_variance_distinct_means_is_linear_rule():
    rep = qda_error_closed_form(1.0, 1.0, 1.0, -1.0)
    assert rep.p1 == rep.p2 and rep.kappa == 1.0
    assert rep.p1 == pytest.approx(0.15865525393145707, abs=1e-15)


def test_near_equal_variances_with_distinct_means_is_nearly_fair():
    assert qda_error_closed_form(1.001, 1.0, 1.0, -1.0).kappa < 1.05


def test_near_equal_variances_with_equal_means_keeps_a_chi_square_gap():
    # threshold/variance -> 1, so the errors tend to P(chi2_1 > 1) and P(chi2_1 < 1)
    rep = qda_error_closed_form(1.0, 1.0 + 1e-6)
    assert rep.p1 == pytest.approx(chi2.sf(1, 1), abs=1e-5)
    assert rep.p2 == pytest.approx(chi2.cdf(1, 1), abs=1e-5)


def test_closed_form_at_unit_means_matches_zero_mean_threshold_expression():
    # at mu = (+1, -1) the class-1 threshold reduces to (s1^2 + s2^2)^2/(s2^2 - s1^2) - (s2^2 - s1^2)
    # + 2 s1^2 s2^2 log(s2/s1) for Y with mean 2 s1^2/sqrt(s2^2 - s1^2) and variance (s2^2 - s1^2) s1^2
    from scipy.stats import ncx2

    s1, s2 = 1.0, 2.0
    d = s2**2 - s1**2
    t = (s1**2 + s2**2) ** 2 / d - d + 2 * s1**2 * s2**2 * np.log(s2 / s1)
    mean, var = 2 * s1**2 / np.sqrt(d), d * s1**2
    expected = ncx2.sf(t / var, 1, mean**2 / var)
    assert qda_error_closed_form(s1, s2, 1.0, -1.0).p1 == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("s1,s2", [(1.0, 2.0), (0.5, 1.5), (0.8, 1.2), (2.0, 1.0)])
def test_closed_form_matches_monte_carlo(s1, s2):
    cf = qda_error_closed_form(s1, s2)
    mc = qda_error_monte_carlo(QdaParams(s1, s2), 400_000, seed=3)
    assert abs(cf.p1 - mc.p1) < 3 * mc.se1 + 1e-4
    assert abs(cf.p2 - mc.p2) < 3 * mc.se2 + 1e-4


def test_grid_agreement_within_three_standard_errors():
    misses = 0
    grid = [(a, b) for a in (0.6, 1.0, 1.7) for b in (0.9, 1.4, 2.2)] + [(1.3, 0.5)]
    for i, (s1, s2) in enumerate(grid):
        cf = qda_error_closed_form(s1, s2)
        mc = qda_error_monte_carlo(QdaParams(s1, s2), 200_000, seed=i)
        misses += abs(cf.p1 - mc.p1) > 3 * mc.se1 or abs(cf.p2 - mc.p2) > 3 * mc.se2
    assert misses <= 1


def test_far_separated_classes_have_no_errors():
    rep = qda_error_monte_carlo(QdaParams(1.0, 1.0, -10.0, 10.0), 50_000)
    assert rep.p1 == 0.0 and rep.p2 == 0.0


def test_identical_classes_split_errors_evenly():
    rep = qda_error_monte_carlo(QdaParams(1.0, 1.0), 200_000)
    assert abs(rep.p1 - 0.5) < 0.01 and abs(rep.p2 - 0.5) < 0.01


def test_monte_carlo_independent_of_thread_count(monkeypatch):
    p = QdaParams(1.0, 2.0)
    monkeypatch.setenv("RGCCL_THREADS", "1")
    a = qda_error_monte_carlo(p, 50_000, seed=5)
    monkeypatch.setenv("RGCCL_THREADS", "4")
    b = qda_error_monte_carlo(p, 50_000, seed=5)
    assert (a.p1, a.p2) == (b.p1, b.p2)


def test_monte_carlo_needs_samples():
    with pytest.raises(ValueError):
        qda_error_monte_carlo(QdaParams(1.0, 2.0), 0)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.1, 5.0), st.floats(0.1, 5.0), st.floats(-2, 2), st.floats(-2, 2))
def test_kappa_symmetric_and_at_least_one(s1, s2, m1, m2):
    if s1 == s2:
        return
    a = qda_error_closed_form(s1, s2, m1, m2)
    b = qda_error_closed_form(s2, s1, m2, m1)
    assert a.kappa >= 1.0
    assert a.kappa == pytest.approx(b.kappa, rel=1e-9)
    assert 0 <= a.p1 <= 1 and 0 <= a.p2 <= 1


def test_kappa_increases_with_variance_ratio():
    kap = [row["kappa"] for row in kappa_sweep([1.5, 2.0, 4.0], sum_sq=2.0)]
    assert kap[0] < kap[1] < kap[2]


def test_sigmas_for_ratio():
    s1, s2 = sigmas_for_ratio(3.0, 2.0)
    assert s1 / s2 == pytest.approx(3.0) and s1**2 + s2**2 == pytest.approx(2.0)
