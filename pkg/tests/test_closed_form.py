import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from volwealth import closed_form as cf
from volwealth.econ_core import (
    CustomUtility,
    DivergenceError,
    DomainError,
    EconomyParams,
    Log,
    PowerNeg,
    PowerPos,
    critical_sigma,
    denominator,
)

P = EconomyParams


# -- examples -----------------------------------------------------------------

def test_power_neg_deterministic_value():
    r = cf.value_power_neg(P(0.02, 0.0, 0.02, 0.05, k0=50.0), 1.0)
    assert r.report.value == pytest.approx(-20.0, rel=1e-15)


def test_power_neg_nu_star_example():
    r = cf.value_power_neg(P(0.05, 0.1, 0.02, 0.03), 1.0)
    assert r.nu_star == pytest.approx(0.035, rel=1e-14)


def test_power_neg_dV_dt_threshold():
    assert cf.dV_dt_threshold_sigma2(P(0.05, 0.1, 0.02, 0.03), PowerNeg(1)) == pytest.approx(0.03)


def test_power_pos_value_example():
    r = cf.value_power_pos(P(0.04, 0.1, 0.03, 0.05), 0.5)
    assert denominator(P(0.04, 0.1, 0.03, 0.05), PowerPos(0.5)) == pytest.approx(0.04625)
    assert r.report.value == pytest.approx(math.sqrt(0.03) / 0.04625, rel=1e-14)
    assert r.report.value == pytest.approx(3.744974719067843, rel=1e-14)


def test_power_pos_nu_star_example():
    assert cf.nu_star_closed(P(0.04, 0.2, 0.03, 0.05), PowerPos(0.5)) == pytest.approx(0.07)


def test_log_value_zero():
    sigma = 0.2
    r = cf.value_log(P(0.02 + sigma ** 2 / 2, sigma, 0.02, 0.05, k0=50.0))
    assert r.report.value == pytest.approx(0.0, abs=1e-12)


def test_log_value_example():
    assert cf.value_log(P(0.06, 0.2, 0.02, 0.05, k0=50.0)).report.value == pytest.approx(8.0, rel=1e-13)


def test_log_price_example():
    assert cf.value_log(P(0.06, 0.2, 0.02, 0.1, k0=10.0)).report.accounting_price == pytest.approx(1.0)


@pytest.mark.parametrize("u", [PowerNeg(1.0), PowerPos(0.5), Log()], ids=repr)
def test_dV_dsigma_zero_at_zero_vol(u):
    assert cf.dV_dsigma_closed(u, P(0.04, 0.0, 0.02, 0.05)) == 0.0


# -- errors -------------------------------------------------------------------

def test_power_neg_divergence_names_sigma_c():
    p = P(0.05, 0.25, 0.02, 0.03)
    with pytest.raises(DivergenceError, match=r"sigma_c=0\.24494897"):
        cf.value_power_neg(p, 1.0)


def test_power_pos_divergence():
    with pytest.raises(DivergenceError, match="diverges to \\+inf"):
        cf.value_power_pos(P(0.2, 0.0, 0.02, 0.05), 0.5)


def test_custom_utility_rejected():
    u = CustomUtility(math.log, lambda c: 1 / c, lambda c: -1 / c ** 2, lambda c: 2 / c ** 3)
    with pytest.raises(DomainError):
        cf.evaluate(P(0.04, 0.1, 0.02, 0.05), u)


# -- finite-difference consistency --------------------------------------------

def _conv_params(draw_mu, s, nu, d, u):
    p = P(draw_mu, s, nu, d)
    dd = denominator(p, u)
    return p if dd is None or dd > 0.01 else None


families = st.sampled_from([PowerNeg(0.5), PowerNeg(1.0), PowerNeg(2.0),
                            PowerPos(0.25), PowerPos(0.5), PowerPos(0.75), Log()])


@given(u=families, mu=st.floats(0.0, 0.08), s=st.floats(0.05, 0.3),
       nu=st.floats(0.01, 0.08), d=st.floats(0.02, 0.1), k0=st.floats(0.5, 5))
def test_closed_form_derivatives_match_finite_differences(u, mu, s, nu, d, k0):
    p = P(mu, s, nu, d, k0)
    dd = denominator(p, u)
    if dd is not None and dd < 0.01:
        return
    r = cf.evaluate(p, u).report
    hk = 1e-5 * k0
    vk = [cf.value(p.with_(k0=k0 + j * hk), u) for j in (-1, 0, 1)]
    assert (vk[2] - vk[0]) / (2 * hk) == pytest.approx(r.accounting_price, rel=1e-6)
    assert (vk[2] - 2 * vk[1] + vk[0]) / hk ** 2 == pytest.approx(r.second_derivative, rel=1e-3)
    hs = 1e-5
    fd = (cf.value(p.with_(sigma=s + hs), u) - cf.value(p.with_(sigma=s - hs), u)) / (2 * hs)
    assert fd == pytest.approx(r.dV_dsigma, rel=1e-6)
    hn = 1e-6 * nu
    fd = (cf.value(p.with_(nu=nu + hn), u) - cf.value(p.with_(nu=nu - hn), u)) / (2 * hn)
    assert fd == pytest.approx(cf.dV_dnu_closed(p, u), rel=1e-5, abs=1e-6 * abs(r.value) + 1e-9)


@given(u=families, s=st.floats(0.01, 0.3))
def test_dV_dsigma_negative(u, s):
    p = P(0.04, s, 0.02, 0.05)
    if denominator(p, u) is not None and denominator(p, u) <= 0:
        return
    assert cf.dV_dsigma_closed(u, p) < 0


# -- comparative statics --------------------------------------------------------

def _dp_dsigma(p, u, h=1e-5):
    return (cf.accounting_price(p.with_(sigma=p.sigma + h), u)
            - cf.accounting_price(p.with_(sigma=p.sigma - h), u)) / (2 * h)


@pytest.mark.parametrize("s", [0.05, 0.1, 0.2])
def test_price_slope_signs(s):
    p = P(0.04, s, 0.02, 0.05)
    assert _dp_dsigma(p, PowerNeg(1.0)) > 0
    assert _dp_dsigma(p, PowerPos(0.5)) < 0
    assert _dp_dsigma(p, Log()) == 0.0


@given(mu=st.floats(0.021, 0.1), s=st.floats(0.01, 0.4), u=families)
def test_price_term_overestimates(mu, s, u):
    p = P(mu, s, 0.02, 0.05)
    dd = denominator(p, u)
    if dd is not None and dd <= 0:
        return
    r = cf.evaluate(p, u).report
    assert r.price_term > r.dV_dt


def test_price_term_equals_dV_dt_at_zero_vol():
    for u in (PowerNeg(1.0), PowerPos(0.5), Log()):
        r = cf.evaluate(P(0.04, 0.0, 0.02, 0.05), u).report
        assert r.price_term == r.dV_dt


@pytest.mark.parametrize("u", [PowerNeg(0.5), PowerNeg(2.0), PowerPos(0.25), PowerPos(0.75), Log()],
                         ids=repr)
def test_dV_dt_sign_threshold(u):
    p = P(0.05, 0.0, 0.02, 0.05)
    s2 = cf.dV_dt_threshold_sigma2(p, u)
    for f, sign in ((0.98, 1), (1.02, -1)):
        q = p.with_(sigma=math.sqrt(f * s2))
        if denominator(q, u) is not None and denominator(q, u) <= 0:
            continue
        assert math.copysign(1, cf.evaluate(q, u).report.dV_dt) == sign


def test_nu_star_comparative_statics():
    ss = [0.0, 0.05, 0.1, 0.15]
    neg = [cf.nu_star_closed(P(0.05, s, 0.02, 0.03), PowerNeg(1)) for s in ss]
    pos = [cf.nu_star_closed(P(0.04, s, 0.02, 0.05), PowerPos(0.5)) for s in ss]
    log = [cf.nu_star_closed(P(0.04, s, 0.02, 0.05), Log()) for s in ss]
    assert all(a > b for a, b in zip(neg, neg[1:]))
    assert all(a < b for a, b in zip(pos, pos[1:]))
    assert len(set(log)) == 1


@pytest.mark.parametrize("g", [0.5, 1.0, 2.0])
def test_nu_star_vanishes_at_sigma_c_of_optimum(g):
    # sigma_c evaluated at nu = nu*: D(nu*) = nu*, so nu* -> 0 exactly there
    mu, d = 0.05, 0.03
    s = math.sqrt(2 * (d + g * mu) / (g * (1 + g)))
    assert cf.nu_star_closed(P(mu, s, 0.02, d), PowerNeg(g)) == pytest.approx(0.0, abs=1e-15)
    below = P(mu, 0.999 * s, 0.02, d)
    nu = cf.nu_star_closed(below, PowerNeg(g))
    assert 0 < nu < 1e-3
    assert critical_sigma(below.with_(nu=nu), g) == pytest.approx(s, rel=1e-2)


@given(u=st.sampled_from([PowerNeg(0.5), PowerNeg(2.0), PowerPos(0.25), PowerPos(0.75)]),
       s=st.floats(0.0, 0.2))
def test_denominator_at_optimum_equals_rate(u, s):
    p = P(0.04, s, 0.02, 0.05)
    nu = cf.nu_star_closed(p, u)
    if nu <= 0:
        return
    assert denominator(p.with_(nu=nu), u) == pytest.approx(nu, rel=1e-12)
    assert cf.dV_dnu_closed(p.with_(nu=nu), u) == pytest.approx(0, abs=1e-9 * abs(cf.value(p.with_(nu=nu), u)))


def test_scaled_utility_matches_rescaled_capital():
    from volwealth.econ_core import apply_depreciation
    p = P(0.04, 0.1, 0.02, 0.05)
    for u in (PowerNeg(2.0), PowerPos(0.5), Log()):
        p2, u2 = apply_depreciation(p, u, 0.01)
        a = cf.evaluate(p2, u2).report
        b = cf.evaluate(p2.with_(k0=1.5), u).report
        assert a.value == pytest.approx(b.value, rel=1e-14)
        assert a.accounting_price == pytest.approx(1.5 * b.accounting_price, rel=1e-14)
