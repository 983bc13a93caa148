"""Monte Carlo oracle: exact lognormal paths and pathwise estimators.

Paths are sampled from the exact solution ``k(t) = k0 exp(v t + sigma W(t))``
on a fixed grid, so the only discretization is the time integral along each
path.  That integral uses composite Simpson weights; since the grid is fixed,
the estimator's bias equals the Simpson error of the smooth mean integrand.
Simpson at twice the step on the same samples bounds that error.

Random numbers come from independent Philox substreams, one per block of
paths, keyed by ``(seed, block index)``.  Serial and threaded runs therefore
produce bit-identical results.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .econ_core import (
    ConvergenceClass,
    DivergenceError,
    EconomyParams,
    Log,
    PowerNeg,
    PowerPos,
    Utility,
    ValueReport,
    base_family,
    denominator,
    divergence_error,
    total_scale,
    validate,
)

THREADS_ENV = "VOLWEALTH_THREADS"


class DivergenceSuspected(DivergenceError):
    """Batch means keep growing with the sample size."""


@dataclass(frozen=True)
class McConfig:
    n_paths: int = 100_000
    horizon: float = 40.0  # T_max in units of 1/delta
    n_steps: int = 2048
    seed: int = 12345
    antithetic: bool = True
    grid: str = "geometric"  # or "uniform"
    n_segments: int = 8  # geometric grid: step doubles from one segment to the next
    block_paths: int = 512
    workers: int | None = None  # None: VOLWEALTH_THREADS, else all cores
    diagnostic: bool = False  # run divergent parameters through the batch-mean test

    def __post_init__(self):
        if self.n_paths < 100:
            raise ValueError("n_paths must be >= 100")
        if self.horizon < 10:
            raise ValueError("horizon must be >= 10 (units of 1/delta)")
        if self.n_steps < 64:
            raise ValueError("n_steps must be >= 64")
        if self.grid not in ("geometric", "uniform"):
            raise ValueError("grid must be 'geometric' or 'uniform'")
        segs = self.n_segments if self.grid == "geometric" else 1
        if segs < 1 or self.n_steps % (4 * segs):
            raise ValueError("n_steps must be a multiple of 4 per grid segment")
        if self.block_paths < 2 or self.block_paths % 2:
            raise ValueError("block_paths must be an even number >= 2")
        if not (0 <= self.seed < 2 ** 64):
            raise ValueError("seed must be an unsigned 64-bit integer")


@dataclass(frozen=True)
class EstimateWithError:
    mean: float
    std_error: float
    n_paths: int
    tail_bound: float | None = None  # truncation beyond the horizon
    grid_error: float = 0.0  # |Simpson(h) - Simpson(2h)| on the same paths

    def tolerance(self, k: float = 3.0) -> float:
        return k * self.std_error + (self.tail_bound or 0.0) + self.grid_error

    def agrees_with(self, exact: float, k: float = 3.0) -> bool:
        return abs(self.mean - exact) <= self.tolerance(k)


@dataclass(frozen=True)
class McResult:
    value: EstimateWithError
    accounting_price: EstimateWithError
    second_derivative: EstimateWithError
    price_term: EstimateWithError
    ito_term: EstimateWithError
    dV_dt: EstimateWithError
    dV_dsigma: EstimateWithError
    dV_dnu: EstimateWithError

    def report(self) -> ValueReport:
        return ValueReport(
            value=self.value.mean,
            accounting_price=self.accounting_price.mean,
            second_derivative=self.second_derivative.mean,
            ito_term=self.ito_term.mean,
            price_term=self.price_term.mean,
            dV_dt=self.price_term.mean + self.ito_term.mean,
            dV_dsigma=self.dV_dsigma.mean,
        )


def time_grid(params: EconomyParams, config: McConfig) -> np.ndarray:
    return _grid_and_weights(params.delta, config)[0]


def _grid_and_weights(delta: float, config: McConfig):
    """Time grid with composite Simpson weights at steps ``h`` and ``2h``.

    The geometric grid is piecewise uniform: ``n_segments`` pieces with equal
    step counts and steps doubling from piece to piece, so early times (where
    discounted utility is largest) are resolved finely.
    """
    T = config.horizon / delta
    segs = config.n_segments if config.grid == "geometric" else 1
    m = config.n_steps // segs
    h0 = T / (m * (2 ** segs - 1)) if segs > 1 else T / m
    pieces, fine, coarse = [np.zeros(1)], [np.zeros(1)], [np.zeros(1)]
    start = 0.0
    for k in range(segs):
        h = h0 * 2 ** k if segs > 1 else h0
        t = start + h * np.arange(m + 1)
        wf = _simpson_weights(m, h)
        wc = np.zeros(m + 1)
        wc[::2] = _simpson_weights(m // 2, 2 * h)
        pieces.append(t[1:])
        fine[-1][-1] += wf[0]
        coarse[-1][-1] += wc[0]
        fine.append(wf[1:].copy())
        coarse.append(wc[1:].copy())
        start = t[-1]
    grid = np.concatenate(pieces)
    grid[-1] = T
    return grid, np.concatenate(fine), np.concatenate(coarse)


def sample_paths(params: EconomyParams, grid: np.ndarray, rng: np.random.Generator,
                 n_paths: int = 1, antithetic: bool = False) -> np.ndarray:
    """Exact samples of ``k`` on ``grid``; shape ``(n_paths, len(grid))``.

    With ``antithetic`` the second half of the rows reuses the negated
    increments of the first half.
    """
    k, _ = _paths(params, np.asarray(grid, dtype=float), rng, n_paths, antithetic)
    return params.k0 * k


def sample_path(params: EconomyParams, grid, rng: np.random.Generator) -> np.ndarray:
    return sample_paths(params, grid, rng, 1)[0]


def _brownian(grid: np.ndarray, rng: np.random.Generator, n: int) -> np.ndarray:
    """Brownian motion on ``grid`` for ``n`` paths, time-major: shape ``(len(grid), n)``."""
    dt = np.diff(grid)
    if grid[0] != 0 or np.any(dt <= 0):
        raise ValueError("grid must start at 0 and be strictly increasing")
    w = np.empty((len(grid), n))
    w[0] = 0.0
    rng.standard_normal(out=w[1:])
    w[1:] *= np.sqrt(dt)[:, None]
    np.cumsum(w[1:], axis=0, out=w[1:])
    return w


def _paths(params, grid, rng, n_paths, antithetic):
    """Return (k / k0, W) on ``grid``, path-major."""
    n_draw = (n_paths + 1) // 2 if antithetic else n_paths
    w = _brownian(grid, rng, n_draw).T
    if antithetic:
        w = np.concatenate([w, -w])[:n_paths]
    return np.exp(params.log_drift * grid + params.sigma * w), w


def _simpson_weights(n_steps: int, h: float) -> np.ndarray:
    w = np.ones(n_steps + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * h / 3.0


# Per-path functionals, each integrated against e^{-delta tau}:
#   u, u'C, u''C^2, u'C (W - sigma tau), u'C tau
_N_FUNC = 5


def _block_functionals(params: EconomyParams, u: Utility, config: McConfig,
                       grid: np.ndarray, weights: np.ndarray, block: int,
                       n_units: int) -> np.ndarray:
    """Per-unit functionals for one block; shape ``(n_units, 2 * _N_FUNC)``.

    A unit is an antithetic pair (averaged) or a single path.  Columns hold the
    step-``h`` Simpson integrals followed by the step-``2h`` ones.
    ``weights`` has columns ``[w_h, w_2h, w_h tau, w_2h tau]`` including the
    discount factor.
    """
    seq = np.random.SeedSequence(config.seed, spawn_key=(block,))
    rng = np.random.Generator(np.random.Philox(seq))
    w = _brownian(grid, rng, n_units)
    signs = (1.0, -1.0) if config.antithetic else (1.0,)
    n_cols = n_units * len(signs)
    logc = np.empty((len(grid), n_cols))
    for i, sg in enumerate(signs):
        np.multiply(w, sg * params.sigma, out=logc[:, i * n_units:(i + 1) * n_units])
    logc += (math.log(params.nu * params.k0) + params.log_drift * grid)[:, None]
    wt = weights.T
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        basis, coef = u.scaled_basis(logc)
        basis = [np.broadcast_to(b, logc.shape) for b in basis]
        # (u, u'C, u''C^2) = coef @ basis; reduce each basis array once
        red = np.stack([wt @ b for b in basis])  # (n_basis, 4, paths)
        red_w = np.stack([np.concatenate(
            [sg * (wt[:2] @ (b[:, i * n_units:(i + 1) * n_units] * w)) for i, sg in enumerate(signs)],
            axis=1) for b in basis])
        three = np.einsum("kb,bjp->kjp", coef, red[:, :2])
        base = np.stack([three[0], three[1], three[2],
                         np.einsum("b,bjp->jp", coef[1], red_w),
                         np.einsum("b,bjp->jp", coef[1], red[:, 2:])])  # (_N_FUNC, 2, paths)
    base[3] -= params.sigma * base[4]
    out = np.concatenate([base[:, 0], base[:, 1]]).T
    if config.antithetic:
        out = 0.5 * (out[:n_units] + out[n_units:])
    return out


def _n_workers(config: McConfig) -> int:
    if config.workers is not None:
        return max(1, int(config.workers))
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def simulate_functionals(params: EconomyParams, u: Utility, config: McConfig) -> np.ndarray:
    """Per-unit functionals in deterministic block order."""
    per_unit = 2 if config.antithetic else 1
    total_units = -(-config.n_paths // per_unit)
    block_units = config.block_paths // per_unit
    sizes = [min(block_units, total_units - start)
             for start in range(0, total_units, block_units)]
    grid, wf, wc = _grid_and_weights(params.delta, config)
    disc = np.exp(-params.delta * grid)
    weights = np.stack([wf * disc, wc * disc, wf * disc * grid, wc * disc * grid], axis=1)

    def run(b):
        return _block_functionals(params, u, config, grid, weights, b, sizes[b])

    workers = min(_n_workers(config), len(sizes))
    if workers <= 1:
        parts = [run(b) for b in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    return np.concatenate(parts)


def _tail_bounds(params: EconomyParams, u: Utility, horizon_time: float):
    """Bounds on the integrals of the five functionals beyond the horizon.

    Uses the lognormal moments of the known families; None otherwise.
    """
    base = base_family(u)
    s = total_scale(u)
    T, nu, k0, sig = horizon_time, params.nu, params.k0 * s, params.sigma
    if isinstance(base, Log):
        d = params.delta
        e0 = math.exp(-d * T) / d
        e1 = math.exp(-d * T) * (T / d + 1 / d ** 2)
        t0 = abs(math.log(nu * k0)) * e0 + abs(params.log_drift) * e1
        return t0, e0, e0, sig * e1, e1
    if isinstance(base, (PowerNeg, PowerPos)):
        d = denominator(params, u)
        if isinstance(base, PowerNeg):
            a = base.gamma
            amp, c1, c2 = (nu * k0) ** (-a), a, a * (a + 1)
            dd = a * (1 + a) * sig
        else:
            a = base.beta
            amp, c1, c2 = (nu * k0) ** a, a, a * (1 - a)
            dd = a * (1 - a) * sig
        e0 = amp * math.exp(-d * T) / d
        e1 = amp * math.exp(-d * T) * (T / d + 1 / d ** 2)
        return e0, c1 * e0, c2 * e0, c1 * dd * e1, c1 * e1
    return None


def variance_finite(params: EconomyParams, u: Utility) -> bool | None:
    """Whether the per-path value functional has finite variance.

    For ``u ~ C^a`` the second moment converges iff
    ``delta - a v - a^2 sigma^2 > 0`` with ``v`` the log drift.  Beyond that
    the standard error is not a reliable yardstick even though the mean
    exists.  None for utilities without a power law.
    """
    base = base_family(u)
    if isinstance(base, Log):
        return True
    if not isinstance(base, (PowerNeg, PowerPos)):
        return None
    a = base.exponent
    return params.delta - a * params.log_drift - a * a * params.sigma ** 2 > 0


def batch_mean_test(y: np.ndarray, min_batch: int = 64, min_batches: int = 8,
                    slope: float = 0.06) -> bool:
    """True when typical batch means grow with the batch size.

    The sample is cut into batches of size ``min_batch * 2^k`` for every ``k``
    leaving at least ``min_batches`` batches.  For a finite-variance functional
    the median of ``|batch mean|`` settles as batches grow; when the value
    integral diverges, rare paths dominate and the median keeps climbing.
    Flags growth when the least-squares slope of ``log2(median)`` per doubling
    exceeds ``slope``.  The default separates 0.9 sigma_c from sigma_c for the
    negative power family with margin on 1e5 paths.
    """
    y = np.asarray(y, dtype=float)
    meds = []
    b = min_batch
    while len(y) // b >= min_batches:
        m = y[: len(y) // b * b].reshape(-1, b).mean(axis=1)
        meds.append(np.median(np.abs(m)))
        b *= 2
    if len(meds) < 3 or not np.all(np.asarray(meds) > 0):
        return False
    levels = np.arange(len(meds))
    fit = np.polyfit(levels, np.log2(meds), 1)[0]
    return bool(fit > slope)


def _estimate(col: np.ndarray, col_coarse: np.ndarray, n_paths: int,
              tail: float | None) -> EstimateWithError:
    mean = float(np.mean(col))
    se = float(np.std(col, ddof=1) / math.sqrt(len(col)))
    grid_err = abs(mean - float(np.mean(col_coarse)))
    return EstimateWithError(mean, se, n_paths, tail, grid_err)


def simulate(params: EconomyParams, u: Utility, config: McConfig = McConfig()) -> McResult:
    """Estimate value, price and all wealth-change components on common paths."""
    conv = validate(params, u)
    divergent = conv is not None and conv is not ConvergenceClass.CONVERGENT
    if divergent and not config.diagnostic:
        raise divergence_error(params, u, DivergenceSuspected)
    f = simulate_functionals(params, u, config)
    simp, coarse = f[:, :_N_FUNC], f[:, _N_FUNC:]
    if not np.all(np.isfinite(simp)):
        raise DivergenceSuspected("non-finite path functional: the value integral diverges",
                                  convergence=conv)
    if batch_mean_test(simp[:, 0]):
        err = divergence_error(params, u) if divergent else None
        msg = "batch means of V grow with the number of paths"
        if err is not None:
            msg += f" ({err})"
        raise DivergenceSuspected(msg, convergence=conv,
                                  sigma_c=err.sigma_c if err is not None else None)
    tails = None if divergent else _tail_bounds(params, u, config.horizon / params.delta)
    k0, nu, dmu, half_s2 = params.k0, params.nu, params.mu - params.nu, 0.5 * params.sigma ** 2

    def combo(coefs, tail_coefs=None):
        a = np.asarray(coefs, dtype=float)
        tail = None
        if tails is not None:
            tail = float(np.abs(np.asarray(tail_coefs if tail_coefs is not None else coefs))
                         @ np.asarray(tails))
        return _estimate(simp @ a, coarse @ a, config.n_paths, tail)

    zero = [0.0] * _N_FUNC

    def unit(j, scale=1.0):
        c = list(zero)
        c[j] = scale
        return c

    price_c = unit(1, dmu)
    ito_c = unit(2, half_s2)
    return McResult(
        value=combo(unit(0)),
        accounting_price=combo(unit(1, 1 / k0)),
        second_derivative=combo(unit(2, 1 / k0 ** 2)),
        price_term=combo(price_c),
        ito_term=combo(ito_c),
        dV_dt=combo([p + i for p, i in zip(price_c, ito_c)]),
        dV_dsigma=combo(unit(3)),
        dV_dnu=combo([0.0, 1 / nu, 0.0, 0.0, -1.0]),
    )


def estimate_value(params, u, config: McConfig = McConfig()) -> EstimateWithError:
    return simulate(params, u, config).value


def estimate_price(params, u, config: McConfig = McConfig()) -> EstimateWithError:
    return simulate(params, u, config).accounting_price


def estimate_dV_dt_components(params, u, config: McConfig = McConfig()
                              ) -> tuple[EstimateWithError, EstimateWithError]:
    r = simulate(params, u, config)
    return r.price_term, r.ito_term


def estimate_dV_dt_from_value(params, u, config: McConfig = McConfig()) -> EstimateWithError:
    """Expected wealth change from the value estimate alone: ``delta V - u(nu k0)``.

    Follows from ``V(k0) = int e^{-delta tau} E[u(C)]``: letting time pass by
    ``h`` shifts the integral, so ``E[V(k_h)] = e^{delta h} (V - int_0^h ...)``.
    Independent of the price and Ito functionals.
    """
    v = estimate_value(params, u, config)
    d = params.delta
    flow = float(u.value(params.nu * params.k0))
    tail = None if v.tail_bound is None else d * v.tail_bound
    return EstimateWithError(d * v.mean - flow, d * v.std_error, v.n_paths, tail, d * v.grid_error)
