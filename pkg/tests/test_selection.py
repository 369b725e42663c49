import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rivw.errors import DomainError
from rivw.gauss import norm_cdf, norm_pdf
from rivw.selection import (
    DEFAULT_ETA,
    LAMBDA_GWS,
    LAMBDA_RIVW,
    SelectionConfig,
    conditional_weight,
    rao_blackwellize,
    rb_arrays,
    rb_variance_quadrature,
    sample_selected,
    select_randomized,
    select_randomized_mask,
    unconditional_weight,
)

CFG = SelectionConfig()
LAM = LAMBDA_RIVW


def rng(seed=0):
    return np.random.default_rng(seed)


def test_default_config():
    assert CFG.lam == pytest.approx(4.06, abs=0.005)
    assert CFG.eta == DEFAULT_ETA == 0.5
    assert LAMBDA_GWS == pytest.approx(5.45, abs=0.005)


@pytest.mark.parametrize("kwargs", [dict(lam=0.0), dict(lam=-1.0), dict(eta=0.0), dict(lam=math.inf), dict(seed=-1)])
def test_config_validation(kwargs):
    with pytest.raises(DomainError):
        SelectionConfig(**kwargs)


def test_select_examples():
    out = select_randomized(6.0, SelectionConfig(lam=5.45), -0.3)
    assert out.selected and out.score == pytest.approx(0.25)
    assert out.pseudo_noise == -0.3
    out = select_randomized(0.0, CFG, 0.0)
    assert not out.selected
    with pytest.raises(DomainError):
        select_randomized(float("nan"), CFG, 0.0)


def test_zero_noise_is_hard_threshold():
    z = np.linspace(-8, 8, 1601)
    np.testing.assert_array_equal(select_randomized_mask(z, LAM, 0.0), np.abs(z) > LAM)
    for zi in z[::37]:
        assert select_randomized(float(zi), CFG, 0.0).selected == (abs(zi) > LAM)


def test_selection_frequency_at_cutoff():
    n = 200_000
    noise = CFG.eta * rng(1).standard_normal(n)
    freq = select_randomized_mask(np.full(n, LAM), LAM, noise).mean()
    expected = 1 - norm_cdf(0.0) + norm_cdf(-2 * LAM / CFG.eta)
    assert abs(freq - expected) < 3 * math.sqrt(expected * (1 - expected) / n)


def test_rb_zero_effect():
    r = rao_blackwellize(0.0, 1.0, CFG)
    assert r.gamma_rb == 0.0
    # oracle: symmetric bounds collapse the variance to a single Mills ratio
    mpmath.mp.dps = 40
    c = mpmath.mpf(LAM) / CFG.eta
    mills = mpmath.npdf(c) / mpmath.ncdf(-c)
    expected = float(1 - mpmath.mpf(LAM) / CFG.eta**3 * mills)
    assert r.sigma2_rb == pytest.approx(expected, rel=1e-10)
    assert r.sigma2_rb == pytest.approx(-266, abs=1.0)
    assert r.weight_cond == pytest.approx(2 * float(mpmath.ncdf(-c)), rel=1e-12)


def test_rb_zero_effect_any_tuning():
    for lam, eta in [(1.0, 0.3), (5.45, 1.0), (3.0, 2.0)]:
        assert rao_blackwellize(0.0, 1.0, SelectionConfig(lam, eta)).gamma_rb == 0.0


def test_rb_strong_instrument():
    sigma = 0.01
    r = rao_blackwellize(4 * LAM * sigma, sigma, CFG)
    assert abs(r.gamma_rb - 4 * LAM * sigma) < 1e-8 * sigma
    assert r.sigma2_rb == pytest.approx(sigma**2, rel=1e-8)


def test_rb_bounds_relation():
    r = rao_blackwellize(0.37, 0.1, CFG)
    assert r.a_plus == pytest.approx(-3.7 / CFG.eta + LAM / CFG.eta, rel=1e-14)
    assert r.a_minus == pytest.approx(r.a_plus - 2 * LAM / CFG.eta, rel=1e-14)
    assert r.a_plus > r.a_minus


def test_rb_naive_formula_agreement():
    # direct transcription of the closed form; only trustworthy while the
    # selection mass is not tiny
    for z in (-6.0, -3.5, -2.0, 2.5, 3.9, 4.6, 7.0):
        sigma = 0.02
        ap = (LAM - z) / CFG.eta
        am = ap - 2 * LAM / CFG.eta
        d = 1 - norm_cdf(ap) + norm_cdf(am)
        assert d >= 1e-6
        m1 = (norm_pdf(ap) - norm_pdf(am)) / d
        m2 = (ap * norm_pdf(ap) - am * norm_pdf(am)) / d
        r = rao_blackwellize(z * sigma, sigma, CFG)
        assert r.gamma_rb == pytest.approx(z * sigma - sigma / CFG.eta * m1, rel=1e-10)
        v = sigma**2 * (1 - m2 / CFG.eta**2 + m1**2 / CFG.eta**2)
        assert r.sigma2_rb == pytest.approx(v, rel=1e-9, abs=1e-14)
        assert r.weight_cond == pytest.approx(d, rel=1e-12)


@pytest.mark.parametrize("z", [-6.0, -1.0, -0.01, 0.3, 1.2, 2.0, 4.06, 9.0])
def test_rb_matches_extended_precision(z):
    mpmath.mp.dps = 40
    lam, eta, sigma = mpmath.mpf(LAM), mpmath.mpf(CFG.eta), 0.02
    ap, am = (lam - z) / eta, (-lam - z) / eta
    d = mpmath.ncdf(-ap) + mpmath.ncdf(am)
    m1 = (mpmath.npdf(ap) - mpmath.npdf(am)) / d
    m2 = (ap * mpmath.npdf(ap) - am * mpmath.npdf(am)) / d
    r = rao_blackwellize(z * sigma, sigma, CFG)
    assert r.gamma_rb == pytest.approx(float(z * sigma - sigma / eta * m1), rel=1e-11, abs=1e-15)
    assert r.sigma2_rb == pytest.approx(float(sigma**2 * (1 - m2 / eta**2 + m1**2 / eta**2)), rel=1e-10)
    assert r.weight_cond == pytest.approx(float(d), rel=1e-11)


def test_rb_extreme_scores_finite():
    r = rb_arrays(np.array([-60.0, -25.0, 0.0, 1e-3, 25.0, 60.0]), 1.0, LAM, 0.1)
    assert np.all(np.isfinite(r.gamma_rb))
    assert np.all(np.isfinite(r.sigma2_rb))


def test_rb_rejects_bad_sigma():
    with pytest.raises(DomainError):
        rao_blackwellize(0.1, 0.0, CFG)
    with pytest.raises(DomainError):
        rao_blackwellize(0.1, -1.0, CFG)


@settings(max_examples=300, deadline=None)
@given(
    g=st.floats(-0.5, 0.5, allow_nan=False),
    sigma=st.floats(1e-4, 1.0),
    lam=st.floats(0.5, 8.0),
    eta=st.floats(0.1, 2.0),
)
def test_rb_odd_in_effect(g, sigma, lam, eta):
    cfg = SelectionConfig(lam, eta)
    pos = rao_blackwellize(g, sigma, cfg)
    neg = rao_blackwellize(-g, sigma, cfg)
    assert neg.gamma_rb == -pos.gamma_rb
    assert neg.sigma2_rb == pos.sigma2_rb
    assert neg.weight_cond == pos.weight_cond


@settings(max_examples=300, deadline=None)
@given(
    z=st.floats(-12.0, 12.0, allow_nan=False),
    sigma=st.floats(1e-3, 1.0),
    c=st.floats(1e-3, 1e3),
)
def test_rb_scale_equivariant(z, sigma, c):
    base = rao_blackwellize(z * sigma, sigma, CFG)
    scaled = rao_blackwellize(c * z * sigma, c * sigma, CFG)
    # the z-score c*g / (c*sigma) can differ from g/sigma in the last bit
    assert scaled.gamma_rb == pytest.approx(c * base.gamma_rb, rel=1e-9, abs=1e-9 * c * sigma)
    assert scaled.sigma2_rb == pytest.approx(c * c * base.sigma2_rb, rel=1e-8, abs=1e-9 * (c * sigma) ** 2)


def test_conditional_weight_examples():
    assert conditional_weight(LAM, 1.0, CFG) == pytest.approx(0.5 + norm_cdf(-2 * LAM / CFG.eta), rel=1e-14)
    assert conditional_weight(0.0, 1.0, SelectionConfig(lam=4.06)) == pytest.approx(4.6e-16, rel=0.03)
    strong = conditional_weight(4 * LAM, 1.0, CFG)
    assert abs(strong - (1 - norm_cdf(-3 * LAM / CFG.eta) + norm_cdf(-5 * LAM / CFG.eta))) < 1e-12
    assert strong == pytest.approx(1.0, abs=1e-12)


def test_conditional_weight_monotone_in_abs_z():
    z = np.linspace(0, 8, 801)
    w = conditional_weight(z, 1.0, CFG)
    assert np.all((w > 0) & (w <= 1))
    inner = w < 1
    assert np.all(np.diff(w[inner]) > 0)
    np.testing.assert_array_equal(conditional_weight(-z, 1.0, CFG), w)


def test_unconditional_weight_examples():
    w0 = unconditional_weight(0.0, SelectionConfig(lam=4.06))
    assert w0 == pytest.approx(2 * norm_cdf(-4.06 / math.sqrt(1.25)), rel=1e-14)
    assert w0 == pytest.approx(2.82e-4, rel=0.01)
    assert abs(unconditional_weight(10 * LAM, CFG) - 1.0) <= 1e-12


def test_unconditional_weight_matches_simulation():
    n = 1_000_000
    r = rng(2)
    for g in (0.5 * LAM, LAM, 1.3 * LAM):
        z = g + r.standard_normal(n)
        noise = CFG.eta * r.standard_normal(n)
        freq = select_randomized_mask(z, LAM, noise).mean()
        w = unconditional_weight(g, CFG)
        assert abs(freq - w) < 3 * math.sqrt(w * (1 - w) / n)


def test_quadrature_strong_limit_and_symmetry():
    sigma = 0.003
    assert rb_variance_quadrature(4 * LAM * sigma, sigma, CFG) == pytest.approx(sigma**2, rel=1e-4)
    for g in (0.2, 1.0, 2.5):
        assert rb_variance_quadrature(g * sigma, sigma, CFG) == pytest.approx(
            rb_variance_quadrature(-g * sigma, sigma, CFG), rel=1e-10
        )


def test_quadrature_scales_with_sigma_squared():
    v1 = rb_variance_quadrature(0.4 * 0.01, 0.01, CFG)
    v2 = rb_variance_quadrature(0.4 * 0.02, 0.02, CFG)
    assert v2 == pytest.approx(4 * v1, rel=1e-9)


def test_quadrature_rejects_vanishing_selection():
    with pytest.raises(DomainError):
        rb_variance_quadrature(0.0, 1.0, SelectionConfig(lam=45.0))
    with pytest.raises(DomainError):
        rb_variance_quadrature(0.1, 0.0, CFG)


def test_samplers_agree():
    g = 0.6 * LAM
    zc, nc = sample_selected(g, CFG, 100_000, rng(3))
    zr, nr = sample_selected(g, CFG, 100_000, rng(4), method="rejection")
    assert np.all(np.abs(zc + nc) > LAM)
    assert np.all(np.abs(zr + nr) > LAM)
    se = math.sqrt(np.var(zc) / zc.size + np.var(zr) / zr.size)
    assert abs(zc.mean() - zr.mean()) < 4 * se
    se2 = math.sqrt(np.var(zc**2) / zc.size + np.var(zr**2) / zr.size)
    assert abs(np.mean(zc**2) - np.mean(zr**2)) < 4 * se2
    with pytest.raises(DomainError):
        sample_selected(g, CFG, 10, rng(), method="gibbs")


@pytest.mark.parametrize("ratio", [0.1, 1.0, 4.0])
def test_rb_unbiased_and_variance_consistent(ratio):
    sigma = 0.01
    gamma = ratio * LAM * sigma
    z, _ = sample_selected(ratio * LAM, CFG, 200_000, rng(10))
    rb = rb_arrays(sigma * z, sigma, LAM, CFG.eta)
    se = rb.gamma_rb.std(ddof=1) / math.sqrt(z.size)
    assert abs(rb.gamma_rb.mean() - gamma) < 3 * se
    quad = rb_variance_quadrature(gamma, sigma, CFG)
    sq = (rb.gamma_rb - gamma) ** 2
    assert abs(sq.mean() - quad) < 3 * sq.std(ddof=1) / math.sqrt(z.size) + 1e-12 * quad
    v = rb.sigma2_rb
    assert abs(v.mean() - quad) < 3 * v.std(ddof=1) / math.sqrt(z.size) + 1e-12 * quad


def test_raw_selected_effect_biased_when_weak():
    z, _ = sample_selected(0.1 * LAM, CFG, 100_000, rng(11))
    se = z.std(ddof=1) / math.sqrt(z.size)
    assert (z.mean() - 0.1 * LAM) / se > 5
