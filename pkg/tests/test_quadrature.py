import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from volwealth import closed_form as cf
from volwealth import quadrature as q
from volwealth.econ_core import (
    CustomUtility,
    EconomyParams,
    Log,
    PowerNeg,
    PowerPos,
    apply_depreciation,
    critical_sigma,
    denominator,
)

from conftest import FAMILIES

P = EconomyParams

INVERSE = CustomUtility(lambda c: -1 / c, lambda c: c ** -2.0, lambda c: -2 * c ** -3.0,
                        lambda c: 6 * c ** -4.0, name="inverse")
SQRT = CustomUtility(np.sqrt, lambda c: 0.5 * c ** -0.5, lambda c: -0.25 * c ** -1.5,
                     lambda c: 0.375 * c ** -2.5, name="sqrt")
# Exponential utility: no power law, so the Hermite nodes stay centred.
CARA = CustomUtility(lambda c: -np.exp(-c), lambda c: np.exp(-c), lambda c: -np.exp(-c),
                     lambda c: np.exp(-c), name="cara")


def _grid_point(u, s_frac=0.5, delta=0.05):
    p = P(0.04, 0.0, 0.02, delta)
    if isinstance(u, PowerNeg):
        top = critical_sigma(p, u.gamma)
    else:
        top = 0.5 / 0.9
    return p.with_(sigma=s_frac * 0.9 * top)


# -- examples -----------------------------------------------------------------

def test_log_value_zero():
    s = 0.3
    assert q.value(P(0.02 + s * s / 2, s, 0.02, 0.05, k0=50.0), Log()) == pytest.approx(0, abs=1e-10)


def test_power_pos_value_example():
    assert q.value(P(0.04, 0.1, 0.03, 0.05), PowerPos(0.5)) == pytest.approx(3.744974719067843, rel=1e-6)


def test_power_neg_deterministic_value():
    assert q.value(P(0.02, 0.0, 0.02, 0.05, k0=50.0), PowerNeg(1)) == pytest.approx(-20.0, rel=1e-10)


def test_dV_dsigma_zero_at_zero_vol(family):
    assert q.dV_dsigma(P(0.04, 0.0, 0.02, 0.05), family) == 0.0
    assert q.ito_term(P(0.04, 0.0, 0.02, 0.05), family) == 0.0


def test_log_examples():
    p = P(0.06, 0.2, 0.02, 0.05, k0=3.0)
    assert q.dV_dsigma(p, Log()) == pytest.approx(-0.2 / 0.05 ** 2, rel=1e-10)
    assert q.accounting_price(p, Log()) == pytest.approx(1 / (0.05 * 3.0), rel=1e-12)
    assert q.ito_term(p, Log()) == pytest.approx(-0.04 / (2 * 0.05), rel=1e-10)
    assert q.dV_dt(p, Log()) == pytest.approx((0.04 - 0.02) / 0.05, rel=1e-10)
    assert q.dV_dnu(p, Log()) == pytest.approx(1 / (0.05 * 0.02) - 1 / 0.05 ** 2, rel=1e-10)
    assert q.dV_dnu(p.with_(nu=0.05), Log()) == pytest.approx(0, abs=1e-9)


def test_dV_dt_zero_without_drift_or_noise(family):
    assert q.dV_dt(P(0.02, 0.0, 0.02, 0.05), family) == 0.0


def test_power_neg_examples():
    p = P(0.05, 0.1, 0.02, 0.03, k0=2.0)
    u = PowerNeg(1.0)
    v = q.value(p, u)
    assert q.accounting_price(p, u) == pytest.approx(-v / 2.0, rel=1e-6)
    assert q.dV_dsigma(p, u) == pytest.approx(cf.dV_dsigma_closed(u, p), rel=1e-6)
    ito = q.ito_term(p, u)
    assert ito == pytest.approx(0.5 * 0.01 * 2 * v, rel=1e-6) and ito <= 0
    assert q.dV_dt(p, u) == pytest.approx(cf.evaluate(p, u).report.dV_dt, rel=1e-6)
    star = p.with_(nu=cf.nu_star_closed(p, u))
    assert abs(q.dV_dnu(star, u)) <= 1e-8 * abs(q.value(star, u))


def test_power_pos_price():
    p = P(0.04, 0.2, 0.03, 0.05, k0=0.7)
    u = PowerPos(0.5)
    assert q.accounting_price(p, u) == pytest.approx(0.5 * q.value(p, u) / 0.7, rel=1e-6)


def test_ito_expansion_examples():
    assert q.ito_expansion(1.5, 2.0, -3.0, 0.0, 0.0) == 1.5
    assert q.ito_expansion(1.5, 2.0, -3.0, 0.4, 0.0) == pytest.approx(1.5 + 0.8)
    p = P(0.06, 0.2, 0.02, 0.05, k0=3.0)
    r = cf.value_log(p).report
    got = q.ito_expansion(0.0, r.accounting_price, r.second_derivative,
                          (p.mu - p.nu) * p.k0, p.sigma * p.k0)
    assert got == pytest.approx(p.log_drift / p.delta, rel=1e-13)


# -- agreement with closed forms ------------------------------------------------

@pytest.mark.parametrize("delta", [0.02, 0.05, 0.1])
@pytest.mark.parametrize("frac", [0.0, 0.3, 0.7, 1.0])
def test_matches_closed_form(family, delta, frac):
    p = _grid_point(family, frac, delta)
    a, b = q.report(p, family), cf.evaluate(p, family).report
    for x, y in zip(a.as_dict().values(), b.as_dict().values()):
        assert x == pytest.approx(y, rel=1e-6, abs=1e-12)


@pytest.mark.parametrize("u", [PowerNeg(2.0), PowerPos(0.5), Log()], ids=repr)
def test_depreciation_wrapper_matches_closed_form(u):
    p2, u2 = apply_depreciation(P(0.04, 0.15, 0.02, 0.05), u, 0.01)
    assert q.value(p2, u2) == pytest.approx(cf.value(p2, u2), rel=1e-8)
    assert q.accounting_price(p2, u2) == pytest.approx(cf.accounting_price(p2, u2), rel=1e-8)


@pytest.mark.parametrize("u, ref", [(INVERSE, PowerNeg(1.0)), (SQRT, PowerPos(0.5))], ids=["inv", "sqrt"])
@pytest.mark.parametrize("s", [0.0, 0.1, 0.2])
def test_custom_utility_matches_family(u, ref, s):
    p = P(0.05, s, 0.02, 0.03)
    assert q.value(p, u) == pytest.approx(cf.value(p, ref), rel=1e-8)
    assert q.accounting_price(p, u) == pytest.approx(cf.accounting_price(p, ref), rel=1e-8)


MIXED = CustomUtility(lambda c: np.log(c) - 1 / c, lambda c: 1 / c + c ** -2.0,
                      lambda c: -c ** -2.0 - 2 * c ** -3.0, lambda c: 2 * c ** -3.0 + 6 * c ** -4.0,
                      name="log_minus_inverse")


@pytest.mark.parametrize("s", [0.05, 0.15, 0.25])
def test_custom_mixture_is_additive(s):
    p = P(0.04, s, 0.02, 0.1, k0=3.0)
    want = cf.evaluate(p, Log()).report.as_dict()
    other = cf.evaluate(p, PowerNeg(1.0)).report.as_dict()
    got = q.report(p, MIXED).as_dict()
    for key in want:
        assert got[key] == pytest.approx(want[key] + other[key], rel=1e-8, abs=1e-12)


def test_tolerance_not_met_is_reported():
    # exp(-C) at small capital and high volatility defeats the fixed rule
    with pytest.raises(q.ToleranceNotMet, match="adaptive"):
        q.value(P(0.04, 0.36, 0.02, 0.02), CARA)
    lax = q.QuadratureConfig(adaptive_check=False)
    assert math.isfinite(q.value(P(0.04, 0.36, 0.02, 0.02), CARA, lax))


# -- derivative consistency -----------------------------------------------------

@pytest.mark.parametrize("u", FAMILIES + [CARA], ids=repr)
def test_derivatives_match_finite_differences(u):
    p = _grid_point(u, 0.6) if u is not CARA else P(0.04, 0.2, 0.02, 0.05, k0=40.0)
    k0, s, nu = p.k0, p.sigma, p.nu
    hk = 1e-5 * k0
    vm, v0, vp = (q.value(p.with_(k0=k0 + j * hk), u) for j in (-1, 0, 1))
    assert (vp - vm) / (2 * hk) == pytest.approx(q.accounting_price(p, u), rel=1e-4)
    hk2 = 1e-3 * k0
    vm, vp = (q.value(p.with_(k0=k0 + j * hk2), u) for j in (-1, 1))
    assert (vp - 2 * v0 + vm) / hk2 ** 2 == pytest.approx(q.second_derivative(p, u), rel=1e-4)
    hs = 1e-5
    fd = (q.value(p.with_(sigma=s + hs), u) - q.value(p.with_(sigma=s - hs), u)) / (2 * hs)
    assert fd == pytest.approx(q.dV_dsigma(p, u), rel=1e-4)
    hn = 1e-5 * nu
    fd = (q.value(p.with_(nu=nu + hn), u) - q.value(p.with_(nu=nu - hn), u)) / (2 * hn)
    assert fd == pytest.approx(q.dV_dnu(p, u), rel=1e-4)


@pytest.mark.parametrize("u", FAMILIES + [CARA], ids=repr)
def test_price_slope_sign_matches_curvature_integral(u):
    p = _grid_point(u, 0.6) if u is not CARA else P(0.04, 0.2, 0.02, 0.05, k0=40.0)
    h = 1e-4
    fd = (q.accounting_price(p.with_(sigma=p.sigma + h), u)
          - q.accounting_price(p.with_(sigma=p.sigma - h), u)) / (2 * h)
    integral = q.price_curvature_integral(p, u)
    if isinstance(u, Log):
        assert abs(fd) < 1e-10 and integral == 0.0
    else:
        assert np.sign(fd) == np.sign(integral)
        assert fd == pytest.approx(q.dp_dsigma(p, u), rel=1e-4)


# -- sign properties ------------------------------------------------------------

@given(u=st.sampled_from(FAMILIES + [CARA]), frac=st.floats(0.05, 1.0),
       delta=st.sampled_from([0.02, 0.05, 0.1]))
def test_sign_properties(u, frac, delta):
    p = _grid_point(u, frac, delta) if u is not CARA else P(0.04, frac * 0.2, 0.02, delta, k0=40.0)
    r = q.report(p, u)
    assert r.dV_dsigma < 0
    assert r.ito_term < 0
    assert r.dV_dt < r.price_term
    assert q.dV_dt(p, u) == pytest.approx(r.price_term + r.ito_term, rel=1e-8, abs=1e-14)


@pytest.mark.parametrize("u", FAMILIES + [INVERSE], ids=repr)
@pytest.mark.parametrize("tau", [0.5, 5.0, 20.0])
def test_integration_by_parts_identity(u, tau):
    lhs, rhs = q.ibp_slice(P(0.04, 0.15, 0.02, 0.05), u, tau)
    assert lhs == pytest.approx(rhs, rel=1e-8)


# -- divergence -----------------------------------------------------------------

def test_power_neg_beyond_sigma_c_raises():
    p = P(0.05, 0.0, 0.02, 0.03)
    sc = critical_sigma(p, 1.0)
    for s in (sc, 1.2 * sc):
        with pytest.raises(q.DivergenceDetected, match="sigma_c"):
            q.value(p.with_(sigma=s), PowerNeg(1.0))


def test_power_pos_divergence_raises():
    with pytest.raises(q.DivergenceDetected):
        q.value(P(0.2, 0.0, 0.02, 0.05), PowerPos(0.5))


@pytest.mark.parametrize("u, p", [
    (INVERSE, P(0.05, 0.3, 0.02, 0.03)),
    (SQRT, P(0.2, 0.0, 0.02, 0.05)),
], ids=["inverse", "sqrt"])
def test_custom_divergence_detected_numerically(u, p):
    with pytest.raises(q.DivergenceDetected):
        q.value(p, u)


def test_config_validation():
    with pytest.raises(ValueError):
        q.QuadratureConfig(n_hermite=4)
    with pytest.raises(ValueError):
        q.QuadratureConfig(rel_tol=0.1)


def test_fixed_point_ratio_is_nu_at_optimum():
    p = P(0.05, 0.1, 0.02, 0.03)
    star = p.with_(nu=cf.nu_star_closed(p, PowerNeg(1)))
    assert q.fixed_point_ratio(star, PowerNeg(1)) == pytest.approx(star.nu, rel=1e-10)
