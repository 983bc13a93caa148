"""Value, accounting price and expected change of wealth for a consumer of a
capital stock that grows as geometric Brownian motion.

Three independent backends evaluate the same quantities: closed forms for the
CRRA families, Gaussian quadrature for any smooth concave utility, and a
Monte Carlo oracle on exact lognormal paths.
"""

from .econ_core import (
    ConvergenceClass,
    CustomUtility,
    DivergenceError,
    DomainError,
    EconomyParams,
    Log,
    PowerNeg,
    PowerPos,
    ScaledUtility,
    Utility,
    ValueReport,
    apply_depreciation,
    critical_sigma,
    validate,
)

__version__ = "0.1.0"

__all__ = [
    "ConvergenceClass",
    "CustomUtility",
    "DivergenceError",
    "DomainError",
    "EconomyParams",
    "Log",
    "PowerNeg",
    "PowerPos",
    "ScaledUtility",
    "Utility",
    "ValueReport",
    "apply_depreciation",
    "critical_sigma",
    "validate",
]
