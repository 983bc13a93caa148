"""Optimal consumption rate and the volatility response of value under it.

The first-order condition ``dV/dnu = 0`` reads ``nu = R(nu)`` with

    R(nu) = int e^{-delta tau} E[u'(C) C] / int tau e^{-delta tau} E[u'(C) C],

and since the accounting price is proportional to the numerator integral,
``R`` also equals ``-1 / (d ln p / d delta)`` at fixed ``nu``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq

from . import closed_form, quadrature
from .econ_core import (
    DivergenceError,
    DomainError,
    EconomyParams,
    Log,
    PowerNeg,
    PowerPos,
    Utility,
    base_family,
)

DAMPING = 0.5
MAX_ITER = 200
NEUTRAL_BAND = 1e-10
NU_FLOOR = 1e-6

_BACKENDS = {"closed": "closed_form", "closed_form": "closed_form",
             "quad": "quadrature", "quadrature": "quadrature"}


class PolicyError(ArithmeticError):
    pass


class NoInteriorOptimum(PolicyError):
    """The value is maximized at the edge of the admissible consumption rates."""


class NonConvergence(PolicyError):
    """Neither the fixed-point iteration nor the bracketing fallback converged."""


class Mitigation(enum.Enum):
    MITIGATES = "Mitigates"
    ACCENTUATES = "Accentuates"
    NEUTRAL = "Neutral"

    @classmethod
    def classify(cls, dnu_dsigma: float) -> "Mitigation":
        if abs(dnu_dsigma) < NEUTRAL_BAND:
            return cls.NEUTRAL
        return cls.MITIGATES if dnu_dsigma < 0 else cls.ACCENTUATES


@dataclass(frozen=True)
class PolicyResult:
    nu_star: float
    dnu_dsigma: float
    dV_dsigma_total: float
    mitigation: Mitigation


class SigmaResponse(NamedTuple):
    partial: float
    policy_term: float
    total: float


def backend_name(backend: str) -> str:
    try:
        return _BACKENDS[backend]
    except KeyError:
        raise DomainError(f"unknown policy backend {backend!r}; use closed_form or quadrature") from None


def _is_family(u: Utility) -> bool:
    return isinstance(base_family(u), (PowerNeg, PowerPos, Log))


def _no_optimum(params: EconomyParams, u: Utility, detail: str) -> NoInteriorOptimum:
    base = base_family(u)
    msg = f"no interior optimal consumption rate: {detail}"
    if isinstance(base, PowerNeg):
        g, num = base.gamma, params.delta + base.gamma * params.mu
        if num > 0:
            msg += (f"; nu* reaches 0 at sigma = {math.sqrt(2 * num / (g * (1 + g))):.10g}, "
                    f"the critical volatility of a vanishing consumption rate")
    return NoInteriorOptimum(msg)


def _dV_dnu(params: EconomyParams, u: Utility, backend: str,
            config: quadrature.QuadratureConfig) -> float:
    if backend == "closed_form":
        return closed_form.dV_dnu_closed(params, u)
    return quadrature.dV_dnu(params, u, config)


def _solve_closed(params: EconomyParams, u: Utility) -> float:
    nu = closed_form.nu_star_closed(params, u)
    if nu <= 0:
        raise _no_optimum(params, u, f"family formula gives nu* = {nu:.10g} <= 0")
    return nu


def _solve_fixed_point(params: EconomyParams, u: Utility,
                       config: quadrature.QuadratureConfig, tol: float) -> float | None:
    """Damped iteration of ``nu -> R(nu)``; None if it leaves the domain or stalls."""
    nu = params.delta if params.delta > 0 else 0.05
    for _ in range(MAX_ITER):
        try:
            ratio = quadrature.fixed_point_ratio(params.with_(nu=nu), u, config)
        except (DivergenceError, DomainError, quadrature.ToleranceNotMet):
            return None
        if not math.isfinite(ratio):
            return None
        new = (1 - DAMPING) * nu + DAMPING * ratio
        if new <= 0:
            return None
        if abs(new - nu) <= tol * new:
            return new
        nu = new
    return None


def _solve_bracket(params: EconomyParams, u: Utility, backend: str,
                   config: quadrature.QuadratureConfig, tol: float) -> float:
    """Locate the sign change of ``dV/dnu`` on ``(NU_FLOOR, mu + delta)`` and refine it."""
    upper = params.mu + params.delta
    if upper <= NU_FLOOR:
        raise _no_optimum(params, u, f"mu + delta = {upper:.6g} leaves no admissible rates")
    grid = np.geomspace(NU_FLOOR, upper, 64)
    signs = []
    for nu in grid:
        try:
            signs.append(np.sign(_dV_dnu(params.with_(nu=float(nu)), u, backend, config)))
        except (DivergenceError, DomainError, quadrature.ToleranceNotMet):
            signs.append(np.nan)
    for i in range(len(grid) - 1):
        if signs[i] > 0 and signs[i + 1] < 0:
            f = lambda nu: _dV_dnu(params.with_(nu=nu), u, backend, config)
            return brentq(f, float(grid[i]), float(grid[i + 1]), xtol=1e-15, rtol=tol)
    finite = [s for s in signs if not math.isnan(s)]
    if not finite:
        raise _no_optimum(params, u, "the value integral diverges for every rate in the search range")
    if all(s < 0 for s in finite):
        raise _no_optimum(params, u, "dV/dnu < 0 for every admissible rate (optimum at nu -> 0)")
    if all(s > 0 for s in finite):
        raise _no_optimum(params, u, f"dV/dnu > 0 up to nu = mu + delta = {upper:.6g}")
    raise NonConvergence("no bracketing sign change of dV/dnu in the search range")


def solve_nu_star(params: EconomyParams, u: Utility, backend: str = "quadrature",
                  config: quadrature.QuadratureConfig = quadrature.DEFAULT_CONFIG,
                  tol: float = 1e-12) -> float:
    """Optimal consumption rate; ``params.nu`` is ignored."""
    backend = backend_name(backend)
    if backend == "closed_form":
        return _solve_closed(params, u)
    # Iterates skip the adaptive cross-check; the solution is checked once at the end.
    fast = replace(config, adaptive_check=False)
    nu = _solve_fixed_point(params, u, fast, tol)
    if nu is None:
        nu = _solve_bracket(params, u, backend, fast, tol)
    quadrature.moments(params.with_(nu=nu), u, config)
    return nu


def _nu_star_at_sigma(params, u, backend, config, sigma):
    # The model depends on sigma only through sigma^2, so nu*(-s) = nu*(s).
    return solve_nu_star(params.with_(sigma=abs(sigma)), u, backend, config)


def dnu_star_dsigma(params: EconomyParams, u: Utility, backend: str = "quadrature",
                    config: quadrature.QuadratureConfig = quadrature.DEFAULT_CONFIG,
                    numeric: bool = False) -> float:
    """``d nu* / d sigma``: analytic for the known families unless ``numeric``.

    The numeric route is a central difference of the solver with step
    ``max(1e-4, 1e-3 sigma)``.
    """
    backend = backend_name(backend)
    if _is_family(u) and not numeric:
        return closed_form.dnu_star_dsigma_closed(params, u)
    h = max(1e-4, 1e-3 * params.sigma)
    up = _nu_star_at_sigma(params, u, backend, config, params.sigma + h)
    down = _nu_star_at_sigma(params, u, backend, config, params.sigma - h)
    return (up - down) / (2 * h)


def total_dV_dsigma(params: EconomyParams, u: Utility, backend: str = "quadrature",
                    config: quadrature.QuadratureConfig = quadrature.DEFAULT_CONFIG,
                    nu_star: float | None = None,
                    dnu_dsigma: float | None = None) -> SigmaResponse:
    """Partial, policy and total sigma-derivatives of ``V`` at ``nu = nu*``.

    The policy term is ``dV/dnu * dnu*/dsigma``; it vanishes at an interior
    optimum, so ``total`` equals ``partial`` up to solver accuracy.
    """
    backend = backend_name(backend)
    if nu_star is None:
        nu_star = solve_nu_star(params, u, backend, config)
    if dnu_dsigma is None:
        dnu_dsigma = dnu_star_dsigma(params, u, backend, config)
    at = params.with_(nu=nu_star)
    if backend == "closed_form":
        partial = closed_form.dV_dsigma_closed(u, at)
    else:
        partial = quadrature.dV_dsigma(at, u, config)
    policy = _dV_dnu(at, u, backend, config) * dnu_dsigma
    return SigmaResponse(partial, policy, partial + policy)


def optimal_nu(params: EconomyParams, u: Utility, backend: str = "quadrature",
               config: quadrature.QuadratureConfig = quadrature.DEFAULT_CONFIG) -> PolicyResult:
    """Solve for ``nu*`` and classify how the policy reacts to volatility."""
    backend = backend_name(backend)
    nu = solve_nu_star(params, u, backend, config)
    dnu = dnu_star_dsigma(params, u, backend, config)
    resp = total_dV_dsigma(params, u, backend, config, nu_star=nu, dnu_dsigma=dnu)
    return PolicyResult(nu, dnu, resp.total, Mitigation.classify(dnu))


def log_price_delta_slope(params: EconomyParams, u: Utility, backend: str = "quadrature",
                          config: quadrature.QuadratureConfig = quadrature.DEFAULT_CONFIG,
                          h: float | None = None) -> float:
    """Central difference of ``ln p`` in ``delta`` at fixed ``nu``."""
    backend = backend_name(backend)
    if h is None:
        h = 1e-3 * min(params.delta, params.nu)
    price = closed_form.accounting_price if backend == "closed_form" else (
        lambda p, uu: quadrature.accounting_price(p, uu, config))
    up = price(params.with_(delta=params.delta + h), u)
    down = price(params.with_(delta=params.delta - h), u)
    return (math.log(abs(up)) - math.log(abs(down))) / (2 * h)


def nu_star_price_identity(params: EconomyParams, u: Utility, backend: str = "quadrature",
                           config: quadrature.QuadratureConfig = quadrature.DEFAULT_CONFIG
                           ) -> float:
    """``|nu* + 1 / (d ln p / d delta)|`` with the slope taken at ``nu = nu*``."""
    nu = solve_nu_star(params, u, backend, config)
    slope = log_price_delta_slope(params.with_(nu=nu), u, backend, config)
    return abs(nu + 1.0 / slope)


__all__ = [
    "Mitigation",
    "NoInteriorOptimum",
    "NonConvergence",
    "PolicyError",
    "PolicyResult",
    "SigmaResponse",
    "dnu_star_dsigma",
    "log_price_delta_slope",
    "nu_star_price_identity",
    "optimal_nu",
    "solve_nu_star",
    "total_dV_dsigma",
]
