"""Gaussian double-integral evaluation of value, prices and sensitivities.

Every quantity is an integral of the form

    int_0^inf dtau e^{-delta tau} int dz phi(z) g(tau, C(tau, z))

with ``C = nu k0 exp((mu - nu - sigma^2/2) tau + sigma sqrt(tau) z)`` and
``phi`` the standard normal density.  The ``z`` integral uses Gauss-Hermite
nodes for the weight ``exp(-z^2/2)``; the ``tau`` integral uses Gauss-Laguerre
nodes after the substitution ``tau = s / delta``.  All sigma- and
nu-derivatives are taken under the integral sign.

For utilities with ``u'(C) C ~ C^a`` the Gaussian factor ``exp(a sigma sqrt(tau) z)``
peaks at ``z0 = a sigma sqrt(tau)``, far outside the fixed nodes once
``tau`` is large.  Each tau slice therefore recenters the Hermite nodes at
``z0`` and carries the change of measure ``exp(-z0 z - z0^2/2)`` in the weight.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.laguerre import laggauss
from scipy.integrate import quad_vec

from .econ_core import (
    DivergenceError,
    EconomyParams,
    Utility,
    ValueReport,
    require_convergent,
)


class DivergenceDetected(DivergenceError):
    """The integrand does not decay in tau, or the parameters are known to diverge."""


class ToleranceNotMet(ArithmeticError):
    """The adaptive check disagrees with the fixed Gauss rule beyond ``rel_tol``."""


@dataclass(frozen=True)
class QuadratureConfig:
    n_hermite: int = 64
    n_laguerre: int = 128
    rel_tol: float = 1e-8
    adaptive_check: bool = True
    guard_nodes: int = 10  # trailing tau nodes inspected by the divergence guard

    def __post_init__(self):
        if self.n_hermite < 8 or self.n_laguerre < 8:
            raise ValueError("node counts must be >= 8")
        if not (0 < self.rel_tol <= 1e-2):
            raise ValueError("rel_tol must lie in (0, 1e-2]")
        if not (2 <= self.guard_nodes <= self.n_laguerre):
            raise ValueError("guard_nodes must lie in [2, n_laguerre]")


DEFAULT_CONFIG = QuadratureConfig()
NEGLIGIBLE = 1e-18

# Gaussian expectations computed per tau slice, in this order.
_SLICE_NAMES = ("u", "u1C", "u2C2", "pcurv", "absu", "absu1C", "absu2C2", "abspcurv")


@functools.lru_cache(maxsize=None)
def _hermite(n: int) -> tuple[np.ndarray, np.ndarray]:
    z, w = hermegauss(n)
    return z, w / math.sqrt(2 * math.pi)


@functools.lru_cache(maxsize=None)
def _laguerre(n: int) -> tuple[np.ndarray, np.ndarray]:
    return laggauss(n)


def consumption(params: EconomyParams, tau, z):
    """``C(tau, z)``, broadcasting ``tau`` against ``z``."""
    tau = np.asarray(tau, dtype=float)
    return params.nu * params.k0 * np.exp(
        params.log_drift * tau + params.sigma * np.sqrt(tau) * z)


def _slice_expectations(params: EconomyParams, u: Utility, tau: np.ndarray,
                        n_hermite: int, log_scale=0.0) -> np.ndarray:
    """Gaussian expectations over z for each tau, times ``exp(log_scale)``.

    Shape ``(len(_SLICE_NAMES), m)``.  ``log_scale`` (per tau) lets callers
    fold quadrature weights in before exponentiation.
    """
    z, wz = _hermite(n_hermite)
    tau = np.asarray(tau, dtype=float)
    spread = params.sigma * np.sqrt(tau)
    a = u.exponent or 0.0
    z0 = (a * spread)[:, None]
    zs = z[None, :] + z0
    logc = (math.log(params.nu * params.k0) + params.log_drift * tau)[:, None] + spread[:, None] * zs
    logw = np.asarray(log_scale, dtype=float).reshape(-1, 1) - z0 * z[None, :] - 0.5 * z0 ** 2
    stack = np.stack([np.broadcast_to(x, logc.shape) for x in u.weighted_parts(logc, logw)])
    return np.concatenate([stack @ wz, np.abs(stack) @ wz])


@dataclass(frozen=True)
class Moments:
    """Discounted double integrals with kernels ``1`` and ``tau``.

    ``I_*`` use the kernel ``e^{-delta tau}``, ``T_*`` use ``tau e^{-delta tau}``;
    ``L_*`` are the matching integrals of absolute values (error scales).
    """

    I_u: float
    I_u1C: float
    I_u2C2: float
    T_u1C: float
    T_u2C2: float
    T_pcurv: float
    I_dvdt: float
    L_u: float
    L_u1C: float
    L_u2C2: float


def _truncation_index(contrib_abs: np.ndarray, finite: np.ndarray, run: int = 3) -> int:
    """Number of leading tau nodes to keep.

    Nodes are kept until every component's contribution has been negligible
    relative to its running total for ``run`` consecutive nodes.  Raises
    DivergenceDetected if a non-finite value appears before that point.
    """
    n = contrib_abs.shape[1]
    safe = np.where(finite, contrib_abs, np.inf)
    cum = np.cumsum(safe, axis=1)
    with np.errstate(invalid="ignore"):
        tiny = np.all(safe <= NEGLIGIBLE * cum, axis=0)
    streak = 0
    for i in range(n):
        if not finite[:, i].all():
            raise DivergenceDetected(
                "non-finite integrand before the tau integral converged: the value integral diverges")
        streak = streak + 1 if tiny[i] else 0
        if streak >= run:
            return i + 1
    return n


def _guard(contrib: np.ndarray, n_tail: int, label: str) -> None:
    tail = np.abs(contrib[-n_tail:])
    if len(tail) == n_tail and tail[-1] > 0 and np.all(np.diff(tail) > 0):
        raise DivergenceDetected(
            f"{label} integrand grows over the last {n_tail} tau nodes: the value integral diverges")


@functools.lru_cache(maxsize=4096)
def moments(params: EconomyParams, u: Utility,
            config: QuadratureConfig = DEFAULT_CONFIG) -> Moments:
    require_convergent(params, u, DivergenceDetected)
    s, ws = _laguerre(config.n_laguerre)
    tau = s / params.delta
    with np.errstate(all="ignore"):
        # per-node contributions: Laguerre weight / delta times the slice expectation
        e = _slice_expectations(params, u, tau, config.n_hermite,
                                np.log(ws) - math.log(params.delta))
        keep = _truncation_index(e[4:], np.isfinite(e[4:]) & np.isfinite(e[:4]))
    truncated = keep < len(tau)
    tau, e = tau[:keep], e[:, :keep]
    eu, eu1c, eu2c2, epc, au, au1c, au2c2, _ = e
    dvdt = (params.mu - params.nu) * eu1c + 0.5 * params.sigma ** 2 * eu2c2
    if not truncated:
        for label, f in (("u", eu), ("u'C", eu1c), ("u''C^2", eu2c2)):
            _guard(f, config.guard_nodes, label)
    m = Moments(
        I_u=float(eu.sum()), I_u1C=float(eu1c.sum()), I_u2C2=float(eu2c2.sum()),
        T_u1C=float(tau @ eu1c), T_u2C2=float(tau @ eu2c2),
        T_pcurv=float(tau @ epc), I_dvdt=float(dvdt.sum()),
        L_u=float(au.sum()), L_u1C=float(au1c.sum()), L_u2C2=float(au2c2.sum()),
    )
    if config.adaptive_check:
        _adaptive_check(params, u, config, m, float(tau[-1]))
    return m


def _adaptive_check(params: EconomyParams, u: Utility, config: QuadratureConfig,
                    m: Moments, tau_max: float) -> None:
    """Recompute the three base integrals with adaptive Gauss-Kronrod in tau.

    The range beyond ``tau_max`` is closed with an exponential tail fitted to
    the last two unit-spaced samples of the integrand.
    """
    delta = params.delta

    def integrand(t):
        with np.errstate(all="ignore"):
            return _slice_expectations(params, u, np.array([t]), config.n_hermite,
                                       -delta * t)[:3, 0]

    ref, err = quad_vec(integrand, 0.0, tau_max, epsrel=config.rel_tol / 10,
                        epsabs=0.0, limit=4000)
    step = 1.0 / delta
    f1, f0 = integrand(tau_max - step), integrand(tau_max)
    with np.errstate(all="ignore"):
        rate = np.log(np.abs(f1) / np.abs(f0)) / step
        tail = np.where((rate > 0) & np.isfinite(rate), f0 / rate, 0.0)
    ref = ref + tail
    fixed = np.array([m.I_u, m.I_u1C, m.I_u2C2])
    scale = np.array([m.L_u, m.L_u1C, m.L_u2C2])
    tol = config.rel_tol * scale + 2 * err
    bad = ~(np.abs(fixed - ref) <= tol)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise ToleranceNotMet(
            f"adaptive tau integration disagrees with Gauss-Laguerre for "
            f"{('u', 'u1C', 'u2C2')[i]}: {float(fixed[i])!r} vs {float(ref[i])!r}")


def value(params, u, config=DEFAULT_CONFIG) -> float:
    return moments(params, u, config).I_u


def accounting_price(params, u, config=DEFAULT_CONFIG) -> float:
    return moments(params, u, config).I_u1C / params.k0


def second_derivative(params, u, config=DEFAULT_CONFIG) -> float:
    """``d^2 V / d k0^2``."""
    return moments(params, u, config).I_u2C2 / params.k0 ** 2


def dV_dsigma(params, u, config=DEFAULT_CONFIG) -> float:
    return params.sigma * moments(params, u, config).T_u2C2


def ito_term(params, u, config=DEFAULT_CONFIG) -> float:
    return 0.5 * params.sigma ** 2 * moments(params, u, config).I_u2C2


def price_term(params, u, config=DEFAULT_CONFIG) -> float:
    return (params.mu - params.nu) * moments(params, u, config).I_u1C


def dV_dt(params, u, config=DEFAULT_CONFIG) -> float:
    """Expected wealth change, integrated directly from its own integrand."""
    return moments(params, u, config).I_dvdt


def dV_dnu(params, u, config=DEFAULT_CONFIG) -> float:
    m = moments(params, u, config)
    return m.I_u1C / params.nu - m.T_u1C


def dp_dsigma(params, u, config=DEFAULT_CONFIG) -> float:
    """``dp/dsigma = (sigma / k0) int tau e^{-delta tau} C^2 (2u'' + C u''')``."""
    return params.sigma * moments(params, u, config).T_pcurv / params.k0


def price_curvature_integral(params, u, config=DEFAULT_CONFIG) -> float:
    """The sign-determining integral of ``tau C^2 (2u'' + C u''')``."""
    return moments(params, u, config).T_pcurv


def fixed_point_ratio(params, u, config=DEFAULT_CONFIG) -> float:
    """``int u'C / int tau u'C``; equals ``nu`` exactly at the optimal rate."""
    m = moments(params, u, config)
    return m.I_u1C / m.T_u1C


def report(params: EconomyParams, u: Utility, config=DEFAULT_CONFIG) -> ValueReport:
    m = moments(params, u, config)
    r = ValueReport.from_parts(params, m.I_u, m.I_u1C / params.k0,
                               m.I_u2C2 / params.k0 ** 2, params.sigma * m.T_u2C2)
    return r


def ibp_slice(params: EconomyParams, u: Utility, tau: float,
              n_hermite: int = 64) -> tuple[float, float]:
    """Both sides of the integration-by-parts identity at one ``tau``.

    Returns ``(E[sqrt(tau) z u'(C) C], sigma tau E[(u''(C) C + u'(C)) C])``.
    """
    z, wz = _hermite(n_hermite)
    c = consumption(params, tau, z)
    u1c = u.u1c(c)  # moderate tau only: nodes are not recentered here
    lhs = float((math.sqrt(tau) * z * u1c) @ wz)
    rhs = float((params.sigma * tau * (u.u2c2(c) + u1c)) @ wz)
    return lhs, rhs


def ito_expansion(dVdt_partial: float, dVdk: float, d2Vdk2: float,
                  a: float, b: float) -> float:
    """Expected rate of change of ``V`` under ``dk = a dt + b dW``."""
    return dVdt_partial + a * dVdk + 0.5 * b * b * d2Vdk2
