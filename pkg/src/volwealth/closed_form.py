"""Analytic value, prices and policy for the three CRRA families.

All formulas follow from the lognormal law of consumption
``C = nu k0 exp((mu - nu - sigma^2/2) tau + sigma sqrt(tau) z)``: for the
power families ``E[C^a]`` is an exponential in ``tau`` and the time integral
collapses to ``1 / D`` with ``D`` the family's effective discount rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .econ_core import (
    DivergenceError,
    DomainError,
    EconomyParams,
    Log,
    PowerNeg,
    PowerPos,
    Utility,
    ValueReport,
    base_family,
    critical_sigma,
    denominator,
    require_convergent,
    total_scale,
)


@dataclass(frozen=True)
class ClosedFormResult:
    report: ValueReport
    sigma_c: float | None  # negative power family only
    nu_star: float | None  # None when there is no interior optimum


def _family(u: Utility) -> Utility:
    base = base_family(u)
    if not isinstance(base, (PowerNeg, PowerPos, Log)):
        raise DomainError("closed forms exist only for PowerNeg, PowerPos and Log utilities")
    return base


def _interior(nu_star: float) -> float | None:
    return nu_star if nu_star > 0 else None


def value_power_neg(params: EconomyParams, gamma: float) -> ClosedFormResult:
    u = PowerNeg(gamma)
    require_convergent(params, u)
    d = denominator(params, u)
    g, k0, s = gamma, params.k0, params.sigma
    scale = (params.nu * k0) ** (-g)
    value = -scale / d
    price = -g * value / k0
    second = g * (g + 1) * value / k0 ** 2
    dv_ds = -scale * g * (1 + g) * s / d ** 2
    report = ValueReport.from_parts(params, value, price, second, dv_ds)
    return ClosedFormResult(report, critical_sigma(params, g), _interior(nu_star_closed(params, u)))


def value_power_pos(params: EconomyParams, beta: float) -> ClosedFormResult:
    u = PowerPos(beta)
    require_convergent(params, u)
    d = denominator(params, u)
    b, k0, s = beta, params.k0, params.sigma
    scale = (params.nu * k0) ** b
    value = scale / d
    price = b * value / k0
    second = b * (b - 1) * value / k0 ** 2
    dv_ds = -scale * b * (1 - b) * s / d ** 2
    report = ValueReport.from_parts(params, value, price, second, dv_ds)
    return ClosedFormResult(report, None, _interior(nu_star_closed(params, u)))


def value_log(params: EconomyParams) -> ClosedFormResult:
    delta, k0 = params.delta, params.k0
    value = math.log(params.nu * k0) / delta + params.log_drift / delta ** 2
    price = 1.0 / (delta * k0)
    second = -1.0 / (delta * k0 ** 2)
    dv_ds = -params.sigma / delta ** 2
    report = ValueReport.from_parts(params, value, price, second, dv_ds)
    return ClosedFormResult(report, None, delta)


def evaluate(params: EconomyParams, u: Utility) -> ClosedFormResult:
    """Dispatch on the utility family, handling scaled (depreciation) wrappers.

    ``base(s x)`` evaluated at capital ``k0`` equals ``base`` at ``s k0``, so a
    scaled utility reuses the family formula with rescaled capital.
    """
    base = _family(u)
    scale = total_scale(u)
    scaled = params.with_(k0=params.k0 * scale) if scale != 1.0 else params
    if isinstance(base, PowerNeg):
        res = value_power_neg(scaled, base.gamma)
    elif isinstance(base, PowerPos):
        res = value_power_pos(scaled, base.beta)
    else:
        res = value_log(scaled)
    if scale == 1.0:
        return res
    r = res.report
    report = ValueReport.from_parts(params, r.value, r.accounting_price * scale,
                                    r.second_derivative * scale ** 2, r.dV_dsigma)
    return ClosedFormResult(report, res.sigma_c, res.nu_star)


def value(params: EconomyParams, u: Utility) -> float:
    return evaluate(params, u).report.value


def accounting_price(params: EconomyParams, u: Utility) -> float:
    return evaluate(params, u).report.accounting_price


def dV_dsigma_closed(u: Utility, params: EconomyParams) -> float:
    """Analytic sigma-derivative of the closed-form value (zero at sigma=0)."""
    return evaluate(params, u).report.dV_dsigma


def dV_dnu_closed(params: EconomyParams, u: Utility) -> float:
    """Analytic nu-derivative of the closed-form value."""
    base = _family(u)
    nu, delta = params.nu, params.delta
    if isinstance(base, Log):
        return 1.0 / (delta * nu) - 1.0 / delta ** 2
    v = value(params, u)
    d = denominator(params, u)
    if isinstance(base, PowerNeg):
        g = base.gamma
        return v * (-g / nu + g / d)
    b = base.beta
    return v * (b / nu - b / d)


def nu_star_closed(params: EconomyParams, u: Utility) -> float:
    """Optimal consumption rate from the family formula; may be <= 0."""
    base = _family(u)
    mu, delta, s2 = params.mu, params.delta, params.sigma ** 2
    if isinstance(base, PowerNeg):
        g = base.gamma
        return (delta + g * mu) / (1 + g) - g * s2 / 2
    if isinstance(base, PowerPos):
        b = base.beta
        return (delta - b * mu) / (1 - b) + b * s2 / 2
    return delta


def dnu_star_dsigma_closed(params: EconomyParams, u: Utility) -> float:
    base = _family(u)
    if isinstance(base, PowerNeg):
        return -base.gamma * params.sigma + 0.0
    if isinstance(base, PowerPos):
        return base.beta * params.sigma
    return 0.0


def dV_dt_threshold_sigma2(params: EconomyParams, u: Utility) -> float:
    """Squared volatility above which the expected wealth change turns negative."""
    base = _family(u)
    dmu = params.mu - params.nu
    if isinstance(base, PowerNeg):
        return 2 * dmu / (1 + base.gamma)
    if isinstance(base, PowerPos):
        return 2 * dmu / (1 - base.beta)
    return 2 * dmu


__all__ = [
    "ClosedFormResult",
    "DivergenceError",
    "accounting_price",
    "dV_dnu_closed",
    "dV_dsigma_closed",
    "dV_dt_threshold_sigma2",
    "dnu_star_dsigma_closed",
    "evaluate",
    "nu_star_closed",
    "value",
    "value_log",
    "value_power_neg",
    "value_power_pos",
]
