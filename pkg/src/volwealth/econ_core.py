"""Domain types shared by every backend.

The economy is a single capital stock ``k`` growing as geometric Brownian
motion, ``dk = (mu - nu) k dt + sigma k dW``, of which a fraction ``nu`` is
consumed per unit time.  Utility families expose their value and first three
derivatives so the quadrature and Monte Carlo backends can evaluate any of
the integrals that define value, prices and their sensitivities.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

BOUNDARY_BAND = 1e-10


class DomainError(ValueError):
    """Parameter or argument outside the model's domain."""


class DivergenceError(ArithmeticError):
    """The value integral does not converge for these parameters.

    Carries the convergence class and, for the negative power family, the
    critical volatility at which divergence sets in.
    """

    def __init__(self, message: str, convergence: "ConvergenceClass | None" = None,
                 sigma_c: float | None = None):
        super().__init__(message)
        self.convergence = convergence
        self.sigma_c = sigma_c


class ConvergenceClass(enum.Enum):
    CONVERGENT = "convergent"
    DIVERGENT_NEGATIVE = "divergent_negative"  # V -> -inf, paths pile up near k = 0
    DIVERGENT_POSITIVE = "divergent_positive"  # V -> +inf, growth outruns discounting


@dataclass(frozen=True)
class EconomyParams:
    """Production drift ``mu``, volatility ``sigma``, consumption rate ``nu``,
    discount rate ``delta`` and initial capital ``k0``."""

    mu: float
    sigma: float
    nu: float
    delta: float
    k0: float = 1.0

    def __post_init__(self):
        for name in ("mu", "sigma", "nu", "delta", "k0"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise DomainError(f"{name} must be a finite number, got {value!r}")
        if self.sigma < 0:
            raise DomainError(f"sigma must be >= 0, got {self.sigma}")
        for name in ("nu", "delta", "k0"):
            if getattr(self, name) <= 0:
                raise DomainError(f"{name} must be > 0, got {getattr(self, name)}")

    @property
    def log_drift(self) -> float:
        """Drift of ``ln k``: ``mu - nu - sigma**2 / 2``."""
        return self.mu - self.nu - 0.5 * self.sigma ** 2

    def with_(self, **changes) -> "EconomyParams":
        return replace(self, **changes)


class Utility:
    """Base class for concave utilities of consumption ``c > 0``.

    Subclasses implement ``value``, ``d1``, ``d2`` and ``d3``; all accept
    scalars or numpy arrays.
    """

    family: str | None = None
    exponent: float | None = None  # a with u'(c) c proportional to c**a, when it exists

    def value(self, c):
        raise NotImplementedError

    def d1(self, c):
        raise NotImplementedError

    def d2(self, c):
        raise NotImplementedError

    def d3(self, c):
        raise NotImplementedError

    def derivatives(self, c):
        return self.value(c), self.d1(c), self.d2(c), self.d3(c)

    # Scaled derivatives c^k u^(k)(c).  Families override these with direct
    # power expressions that stay finite where the naive product is 0 * inf.
    def u1c(self, c):
        return self.d1(c) * c

    def u2c2(self, c):
        return self.d2(c) * c * c

    def u3c3(self, c):
        return self.d3(c) * c * c * c

    def scaled_from_log(self, logc):
        """``(u, u'C, u''C^2)`` evaluated at ``C = exp(logc)``."""
        c = np.exp(logc)
        return self.value(c), self.u1c(c), self.u2c2(c)

    def scaled_basis(self, logc):
        """Arrays ``B`` and a ``(3, len(B))`` matrix ``M`` with
        ``(u, u'C, u''C^2) = M @ B`` at ``C = exp(logc)``.

        Lets callers reduce fewer arrays when the three share a shape.
        """
        return list(self.scaled_from_log(logc)), np.eye(3)

    def weighted_parts(self, logc, logw):
        """``w * (u, u'C, u''C^2, C^2 (2u'' + C u'''))`` with ``C = exp(logc)``
        and ``w = exp(logw)``.

        Power families add the exponents before exponentiating, so a huge
        consumption times a tiny weight stays finite.
        """
        c = np.exp(logc)
        w = np.exp(logw)
        u2c2 = self.u2c2(c)
        return (w * self.value(c), w * self.u1c(c), w * u2c2,
                w * (2 * u2c2 + self.u3c3(c)))


@dataclass(frozen=True)
class PowerNeg(Utility):
    """``u(c) = -c**(-gamma)`` with ``gamma > 0``."""

    gamma: float
    family = "power_neg"

    def __post_init__(self):
        if not (math.isfinite(self.gamma) and self.gamma > 0):
            raise DomainError(f"PowerNeg requires gamma > 0, got {self.gamma}")

    def value(self, c):
        return -np.power(c, -self.gamma)

    def d1(self, c):
        g = self.gamma
        return g * np.power(c, -g - 1)

    def d2(self, c):
        g = self.gamma
        return -g * (g + 1) * np.power(c, -g - 2)

    def d3(self, c):
        g = self.gamma
        return g * (g + 1) * (g + 2) * np.power(c, -g - 3)

    def u1c(self, c):
        return self.gamma * np.power(c, -self.gamma)

    def u2c2(self, c):
        g = self.gamma
        return -g * (g + 1) * np.power(c, -g)

    def u3c3(self, c):
        g = self.gamma
        return g * (g + 1) * (g + 2) * np.power(c, -g)

    def scaled_from_log(self, logc):
        g = self.gamma
        p = np.exp(-g * logc)
        return -p, g * p, -g * (g + 1) * p

    @property
    def exponent(self):
        return -self.gamma

    def scaled_basis(self, logc):
        g = self.gamma
        return [np.exp(-g * logc)], np.array([[-1.0], [g], [-g * (g + 1)]])

    def weighted_parts(self, logc, logw):
        g = self.gamma
        p = np.exp(logw - g * logc)
        return -p, g * p, -g * (g + 1) * p, g * g * (g + 1) * p


@dataclass(frozen=True)
class PowerPos(Utility):
    """``u(c) = c**beta`` with ``0 < beta < 1``."""

    beta: float
    family = "power_pos"

    def __post_init__(self):
        if not (math.isfinite(self.beta) and 0 < self.beta < 1):
            raise DomainError(
                f"PowerPos requires 0 < beta < 1 for strict concavity, got beta={self.beta}")

    def value(self, c):
        return np.power(c, self.beta)

    def d1(self, c):
        b = self.beta
        return b * np.power(c, b - 1)

    def d2(self, c):
        b = self.beta
        return b * (b - 1) * np.power(c, b - 2)

    def d3(self, c):
        b = self.beta
        return b * (b - 1) * (b - 2) * np.power(c, b - 3)

    def u1c(self, c):
        return self.beta * np.power(c, self.beta)

    def u2c2(self, c):
        b = self.beta
        return b * (b - 1) * np.power(c, b)

    def u3c3(self, c):
        b = self.beta
        return b * (b - 1) * (b - 2) * np.power(c, b)

    def scaled_from_log(self, logc):
        b = self.beta
        p = np.exp(b * logc)
        return p, b * p, b * (b - 1) * p

    @property
    def exponent(self):
        return self.beta

    def scaled_basis(self, logc):
        b = self.beta
        return [np.exp(b * logc)], np.array([[1.0], [b], [b * (b - 1)]])

    def weighted_parts(self, logc, logw):
        b = self.beta
        p = np.exp(logw + b * logc)
        return p, b * p, b * (b - 1) * p, b * b * (b - 1) * p


@dataclass(frozen=True)
class Log(Utility):
    """``u(c) = ln c``."""

    family = "log"

    def value(self, c):
        return np.log(c)

    def d1(self, c):
        return 1.0 / np.asarray(c, dtype=float)

    def d2(self, c):
        return -1.0 / np.square(c)

    def d3(self, c):
        return 2.0 / np.power(c, 3)

    def u1c(self, c):
        return np.ones_like(np.asarray(c, dtype=float))

    def u2c2(self, c):
        return -np.ones_like(np.asarray(c, dtype=float))

    def u3c3(self, c):
        return np.full_like(np.asarray(c, dtype=float), 2.0)

    def scaled_from_log(self, logc):
        return logc, 1.0, -1.0

    exponent = 0.0

    def scaled_basis(self, logc):
        return [logc, np.ones_like(logc)], np.array([[1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])

    def weighted_parts(self, logc, logw):
        w = np.exp(logw) * np.ones_like(logc)
        return logc * w, w, -w, 0.0 * w


@dataclass(frozen=True, eq=False, repr=False)
class CustomUtility(Utility):
    """A user-supplied concave utility given by its value and three derivatives.

    Accepted by the quadrature and Monte Carlo backends; the closed-form
    backend rejects it.
    """

    fn: Callable
    fn_d1: Callable
    fn_d2: Callable
    fn_d3: Callable
    name: str = "custom"

    def __repr__(self):
        return f"CustomUtility({self.name!r})"

    def value(self, c):
        return self.fn(c)

    def d1(self, c):
        return self.fn_d1(c)

    def d2(self, c):
        return self.fn_d2(c)

    def d3(self, c):
        return self.fn_d3(c)


@dataclass(frozen=True)
class ScaledUtility(Utility):
    """``u_eff(x) = base(scale * x)``, derivatives by the chain rule."""

    base: Utility
    scale: float

    def __post_init__(self):
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise DomainError(f"scale must be > 0, got {self.scale}")

    @property
    def family(self):
        return self.base.family

    def value(self, c):
        return self.base.value(self.scale * np.asarray(c, dtype=float))

    def d1(self, c):
        return self.scale * self.base.d1(self.scale * np.asarray(c, dtype=float))

    def d2(self, c):
        return self.scale ** 2 * self.base.d2(self.scale * np.asarray(c, dtype=float))

    def d3(self, c):
        return self.scale ** 3 * self.base.d3(self.scale * np.asarray(c, dtype=float))

    # x^k d^k/dx^k u(s x) = (s x)^k u^(k)(s x)
    def u1c(self, c):
        return self.base.u1c(self.scale * np.asarray(c, dtype=float))

    def u2c2(self, c):
        return self.base.u2c2(self.scale * np.asarray(c, dtype=float))

    def u3c3(self, c):
        return self.base.u3c3(self.scale * np.asarray(c, dtype=float))

    @property
    def exponent(self):
        return self.base.exponent

    def scaled_from_log(self, logc):
        return self.base.scaled_from_log(logc + math.log(self.scale))

    def scaled_basis(self, logc):
        return self.base.scaled_basis(logc + math.log(self.scale))

    def weighted_parts(self, logc, logw):
        return self.base.weighted_parts(logc + math.log(self.scale), logw)


def base_family(u: Utility) -> Utility:
    """Strip any ``ScaledUtility`` wrappers; scaling never changes convergence."""
    while isinstance(u, ScaledUtility):
        u = u.base
    return u


def total_scale(u: Utility) -> float:
    scale = 1.0
    while isinstance(u, ScaledUtility):
        scale *= u.scale
        u = u.base
    return scale


def utility_derivatives(u: Utility, c: float) -> tuple[float, float, float, float]:
    """Return ``(u, u', u'', u''')`` at consumption ``c > 0``."""
    if not (math.isfinite(c) and c > 0):
        raise DomainError(f"consumption must be > 0, got {c}")
    return tuple(float(x) for x in u.derivatives(float(c)))


def denominator(params: EconomyParams, u: Utility) -> float | None:
    """Effective discount rate of the closed-form value, or None if the family
    has no divergence condition (log, custom)."""
    base = base_family(u)
    dmu = params.mu - params.nu
    s2 = params.sigma ** 2
    if isinstance(base, PowerNeg):
        g = base.gamma
        return params.delta + g * dmu - g * (1 + g) * s2 / 2
    if isinstance(base, PowerPos):
        b = base.beta
        return params.delta - b * dmu + b * (1 - b) * s2 / 2
    return None


def critical_sigma(params: EconomyParams, gamma: float) -> float | None:
    """Volatility at which the negative power value diverges; None when it
    diverges already at zero volatility."""
    num = params.delta + gamma * (params.mu - params.nu)
    if num <= 0:
        return None
    return math.sqrt(2 * num / (gamma * (1 + gamma)))


def _denominator_roundoff(params: EconomyParams, base: Utility) -> float:
    a = abs(base.exponent)
    terms = params.delta + a * (abs(params.mu) + params.nu) + a * (1 + a) * params.sigma ** 2 / 2
    return 8 * np.finfo(float).eps * terms


def validate(params: EconomyParams, u: Utility) -> ConvergenceClass | None:
    """Classify convergence of the value integral.

    Returns None for custom utilities, whose convergence is only detected
    numerically by the quadrature guard.
    """
    if not isinstance(params, EconomyParams):
        raise DomainError("params must be EconomyParams")
    base = base_family(u)
    if isinstance(base, Log):
        return ConvergenceClass.CONVERGENT
    d = denominator(params, u)
    if d is None:
        return None
    # a denominator within rounding of its terms has no determinable sign
    if d > _denominator_roundoff(params, base):
        return ConvergenceClass.CONVERGENT
    if isinstance(base, PowerNeg):
        return ConvergenceClass.DIVERGENT_NEGATIVE
    return ConvergenceClass.DIVERGENT_POSITIVE


def near_boundary(params: EconomyParams, u: Utility) -> bool:
    """True when the closed-form denominator is within the warning band of 0."""
    d = denominator(params, u)
    if d is None:
        return False
    return abs(d) < BOUNDARY_BAND * (params.delta + abs(params.mu) + params.nu)


def divergence_error(params: EconomyParams, u: Utility,
                     cls: type[DivergenceError] = DivergenceError) -> DivergenceError:
    """Build a descriptive divergence error for a divergent known family."""
    conv = validate(params, u)
    base = base_family(u)
    d = denominator(params, u)
    sigma_c = None
    if isinstance(base, PowerNeg):
        sigma_c = critical_sigma(params, base.gamma)
        if sigma_c is None:
            msg = (f"value diverges to -inf for every sigma: delta + gamma*(mu - nu) = "
                   f"{params.delta + base.gamma * (params.mu - params.nu):.6g} <= 0")
        else:
            msg = (f"value diverges to -inf: sigma={params.sigma:.6g} >= sigma_c={sigma_c:.10g} "
                   f"(denominator {d:.6g})")
    else:
        msg = (f"value diverges to +inf: denominator delta - beta*(mu - nu) + "
               f"beta*(1 - beta)*sigma^2/2 = {d:.6g} <= 0")
    return cls(msg, convergence=conv, sigma_c=sigma_c)


def require_convergent(params: EconomyParams, u: Utility,
                       cls: type[DivergenceError] = DivergenceError) -> None:
    conv = validate(params, u)
    if conv is not None and conv is not ConvergenceClass.CONVERGENT:
        raise divergence_error(params, u, cls)


def apply_depreciation(params: EconomyParams, u: Utility,
                       gamma_dep: float) -> tuple[EconomyParams, Utility]:
    """Fold capital depreciation at rate ``gamma_dep`` into consumption.

    Returns params with ``nu -> nu + gamma_dep`` and the utility
    ``x -> u((1 + gamma_dep / nu) * x)`` where ``nu`` is the original rate.
    """
    if not (math.isfinite(gamma_dep) and gamma_dep >= 0):
        raise DomainError(f"depreciation rate must be >= 0, got {gamma_dep}")
    if gamma_dep == 0:
        return params, u
    scale = 1.0 + gamma_dep / params.nu
    return params.with_(nu=params.nu + gamma_dep), ScaledUtility(u, scale)


@dataclass(frozen=True)
class ValueReport:
    """Value, accounting price and the two pieces of the expected wealth change."""

    value: float
    accounting_price: float
    second_derivative: float
    ito_term: float
    price_term: float
    dV_dt: float
    dV_dsigma: float

    @classmethod
    def from_parts(cls, params: EconomyParams, value: float, price: float,
                   second: float, dV_dsigma: float) -> "ValueReport":
        ito = 0.5 * params.sigma ** 2 * params.k0 ** 2 * second
        price_term = (params.mu - params.nu) * params.k0 * price
        return cls(value=value, accounting_price=price, second_derivative=second,
                   ito_term=ito, price_term=price_term, dV_dt=price_term + ito,
                   dV_dsigma=dV_dsigma)

    def as_dict(self) -> dict:
        return {
            "V": self.value,
            "p": self.accounting_price,
            "d2V_dk2": self.second_derivative,
            "ito_term": self.ito_term,
            "price_term": self.price_term,
            "dV_dt": self.dV_dt,
            "dV_dsigma": self.dV_dsigma,
        }
