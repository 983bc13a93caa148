"""Command-line front end: single-point reports, parameter sweeps, verification.

Exit codes: 0 success, 1 configuration error, 2 divergence, 3 failed check.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from typing import Any

import numpy as np

from . import closed_form, monte_carlo, policy, quadrature
from .econ_core import (
    ConvergenceClass,
    DivergenceError,
    DomainError,
    EconomyParams,
    Log,
    PowerNeg,
    PowerPos,
    Utility,
    ValueReport,
    apply_depreciation,
    base_family,
    critical_sigma,
    denominator,
    divergence_error,
    validate,
)

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_CHECK = 0, 1, 2, 3
BACKENDS = ("closed", "quad", "mc")
SWEEP_PARAMS = ("sigma", "nu", "delta", "mu")
UTILITIES = ("power_neg", "power_pos", "log")
# Denominator below this fraction of delta counts as near the divergence boundary.
NEAR_BOUNDARY = 0.1
SCHEMA_FILE = os.path.join(os.path.dirname(__file__), "output_schema.json")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class SweepSpec:
    param: str
    start: float
    stop: float
    steps: int

    def __post_init__(self):
        if self.param not in SWEEP_PARAMS:
            raise ConfigError(f"sweep parameter must be one of {', '.join(SWEEP_PARAMS)}, got {self.param!r}")
        if not (math.isfinite(self.start) and math.isfinite(self.stop)):
            raise ConfigError("sweep range must be finite")
        if self.steps < 2:
            raise ConfigError("sweep needs steps >= 2")

    @classmethod
    def parse(cls, text: str) -> "SweepSpec":
        parts = text.split(":")
        if len(parts) != 4:
            raise ConfigError(f"sweep must look like param:from:to:steps, got {text!r}")
        try:
            return cls(parts[0].strip(), float(parts[1]), float(parts[2]), int(parts[3]))
        except ValueError as exc:
            raise ConfigError(f"bad sweep {text!r}: {exc}") from None

    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.steps)

    def __str__(self) -> str:
        return f"{self.param}:{self.start!r}:{self.stop!r}:{self.steps}"


@dataclass(frozen=True)
class ScenarioConfig:
    mu: float = 0.05
    sigma: float = 0.1
    nu: float = 0.02
    delta: float = 0.05
    k0: float = 1.0
    utility: str = "power_neg"
    gamma: float = 1.0
    beta: float = 0.5
    depreciation: float = 0.0
    backend: str = "quad"
    n_hermite: int = 64
    n_laguerre: int = 128
    rel_tol: float = 1e-8
    paths: int = 100_000
    seed: int = 12345
    steps: int = 2048
    horizon: float = 40.0
    sweep: SweepSpec | None = None
    nu_star: bool = False
    diagnostic: bool = False

    def __post_init__(self):
        if self.utility not in UTILITIES:
            raise ConfigError(f"utility must be one of {', '.join(UTILITIES)}, got {self.utility!r}")
        if self.backend not in BACKENDS + ("all",):
            raise ConfigError(f"backend must be closed, quad, mc or all, got {self.backend!r}")
        try:
            self.economy()
            self.base_utility()
            self.quad_config()
            self.mc_config()
        except (DomainError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    def economy(self) -> EconomyParams:
        return EconomyParams(self.mu, self.sigma, self.nu, self.delta, self.k0)

    def base_utility(self) -> Utility:
        if self.utility == "power_neg":
            return PowerNeg(self.gamma)
        if self.utility == "power_pos":
            return PowerPos(self.beta)
        return Log()

    def model(self, **overrides) -> tuple[EconomyParams, Utility]:
        """Effective parameters and utility after folding in depreciation."""
        params = self.economy().with_(**overrides) if overrides else self.economy()
        return apply_depreciation(params, self.base_utility(), self.depreciation)

    def quad_config(self) -> quadrature.QuadratureConfig:
        return quadrature.QuadratureConfig(self.n_hermite, self.n_laguerre, self.rel_tol)

    def mc_config(self) -> monte_carlo.McConfig:
        return monte_carlo.McConfig(n_paths=self.paths, horizon=self.horizon, n_steps=self.steps,
                                    seed=self.seed, diagnostic=self.diagnostic)

    def backends(self) -> tuple[str, ...]:
        return BACKENDS if self.backend == "all" else (self.backend,)

    def as_dict(self) -> dict[str, Any]:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["sweep"] = str(self.sweep) if self.sweep is not None else None
        return d


_FIELD_TYPES = {f.name: f.type for f in fields(ScenarioConfig)}


def _coerce(key: str, value: Any) -> Any:
    kind = _FIELD_TYPES[key]
    if key == "sweep":
        if value is None or isinstance(value, SweepSpec):
            return value
        if isinstance(value, dict):
            try:
                return SweepSpec(str(value["param"]), float(value["from"]), float(value["to"]),
                                 int(value["steps"]))
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"bad sweep block {value!r}: {exc}") from None
        return SweepSpec.parse(str(value))
    try:
        if kind == "bool":
            if isinstance(value, bool):
                return value
            text = str(value).strip().lower()
            if text in ("1", "true", "yes", "on"):
                return True
            if text in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {value!r}")
        if kind == "int":
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(f"not an integer: {value!r}")
            return int(value)
        if kind == "float":
            return float(value)
        return str(value).strip()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {exc}") from None


def parse_config_text(text: str) -> dict[str, Any]:
    """Parse a flat key=value file or a JSON object into coerced settings."""
    if text.lstrip().startswith("{"):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("JSON config must be an object")
        items = list(raw.items())
    else:
        items = []
        for n, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"config line {n}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            items.append((key, value.strip()))
    out = {}
    for key, value in items:
        key = key.strip().replace("-", "_")
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        out[key] = _coerce(key, value)
    return out


def build_config(file_settings: dict[str, Any], flag_settings: dict[str, Any]) -> ScenarioConfig:
    """Precedence: flags over file over defaults."""
    merged = dict(file_settings)
    merged.update({k: v for k, v in flag_settings.items() if v is not None})
    merged = {k: _coerce(k, v) for k, v in merged.items()}
    return ScenarioConfig(**merged)


# ---------------------------------------------------------------------------
# number formatting and output


def fmt(x: float) -> str:
    return "%.17g" % (x + 0.0)  # no "-0"


def _is_number(x) -> bool:
    return isinstance(x, (float, np.floating)) or (isinstance(x, (int, np.integer))
                                                   and not isinstance(x, bool))


def to_json(obj: Any, indent: int = 2, _level: int = 0) -> str:
    """JSON with every float written to 17 significant digits; non-finite -> null."""
    pad, inner = " " * (indent * _level), " " * (indent * (_level + 1))
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt(float(obj)) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        body = ",\n".join(f"{inner}{json.dumps(str(k))}: {to_json(v, indent, _level + 1)}"
                          for k, v in obj.items())
        return "{\n" + body + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        body = ",\n".join(inner + to_json(v, indent, _level + 1) for v in obj)
        return "[\n" + body + "\n" + pad + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def render_csv(header: list[str], rows: list[list[Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(["" if v is None else fmt(float(v)) if _is_number(v) else str(v)
                         for v in row])
    return buf.getvalue()


def parse_csv(text: str) -> tuple[list[str], list[list[Any]]]:
    """Inverse of ``render_csv``: empty -> None, numeric -> float, else str."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    rows = []
    for rec in reader:
        row = []
        for v in rec:
            if v == "":
                row.append(None)
                continue
            try:
                row.append(float(v))
            except ValueError:
                row.append(v)
        rows.append(row)
    return header, rows


def document(config: ScenarioConfig, rows: list[dict], checks: list[dict]) -> dict:
    return {"scenario": config.as_dict(), "rows": rows, "checks": checks}


# ---------------------------------------------------------------------------
# evaluation


REPORT_FIELDS = ("V", "p", "d2V_dk2", "ito_term", "price_term", "dV_dt", "dV_dsigma")
SWEEP_FIELDS = ("V", "p", "ito_term", "price_term", "dV_dt", "dV_dsigma")


@dataclass
class PointResult:
    convergence: str
    reports: dict[str, ValueReport]
    std_errors: dict[str, dict[str, float]]
    nu_star: float | None = None
    sigma_c: float | None = None
    message: str = ""

    @property
    def primary(self) -> ValueReport | None:
        for name in BACKENDS:
            if name in self.reports:
                return self.reports[name]
        return None

    def disagreement(self) -> float | None:
        return disagreement(list(self.reports.values()))


def _rel(a: float, b: float) -> float:
    scale = max(abs(a), abs(b))
    return 0.0 if scale == 0 else abs(a - b) / scale


def disagreement(reports: list[ValueReport]) -> float | None:
    """Maximum pairwise relative difference in V and p among backends."""
    if len(reports) < 2:
        return None
    worst = 0.0
    for i in range(len(reports)):
        for j in range(i + 1, len(reports)):
            for f in ("value", "accounting_price"):
                worst = max(worst, _rel(getattr(reports[i], f), getattr(reports[j], f)))
    return worst


def _sigma_c(params: EconomyParams, u: Utility) -> float | None:
    base = base_family(u)
    return critical_sigma(params, base.gamma) if isinstance(base, PowerNeg) else None


def _nu_star(config: ScenarioConfig, params: EconomyParams, u: Utility) -> float | None:
    backend = "closed_form" if "closed" in config.backends() else "quadrature"
    try:
        return policy.solve_nu_star(params, u, backend, config.quad_config())
    except (policy.PolicyError, DivergenceError, quadrature.ToleranceNotMet):
        return None


def evaluate_point(config: ScenarioConfig, **overrides) -> PointResult:
    """Run every requested backend at one parameter point.

    Divergent points come back flagged with no reports; the message names
    the critical volatility when one exists.
    """
    params, u = config.model(**overrides)
    conv = validate(params, u)
    sigma_c = _sigma_c(params, u)
    if conv is not ConvergenceClass.CONVERGENT:
        err = divergence_error(params, u)
        if config.diagnostic and "mc" in config.backends():
            try:
                monte_carlo.simulate(params, u, config.mc_config())
            except DivergenceError as exc:
                err = exc
        return PointResult(conv.value, {}, {}, sigma_c=sigma_c, message=str(err))
    reports, errors = {}, {}
    for name in config.backends():
        if name == "closed":
            reports[name] = closed_form.evaluate(params, u).report
        elif name == "quad":
            reports[name] = quadrature.report(params, u, config.quad_config())
        else:
            r = monte_carlo.simulate(params, u, config.mc_config())
            reports[name] = r.report()
            errors[name] = {"V": r.value.std_error, "p": r.accounting_price.std_error}
    nu = _nu_star(config, params, u) if config.nu_star else None
    return PointResult(conv.value, reports, errors, nu_star=nu, sigma_c=sigma_c)


def _workers() -> int:
    env = os.environ.get(monte_carlo.THREADS_ENV)
    return max(1, int(env)) if env else (os.cpu_count() or 1)


def run_sweep(config: ScenarioConfig) -> list[tuple[float, PointResult]]:
    """Evaluate the sweep grid in parallel; results in ascending grid order."""
    spec = config.sweep
    values = [float(v) for v in spec.values()]

    def one(v):
        try:
            return evaluate_point(config, **{spec.param: v})
        except DomainError as exc:
            return PointResult("invalid", {}, {}, message=str(exc))
        except (DivergenceError, quadrature.ToleranceNotMet) as exc:
            return PointResult("divergent_suspected", {}, {}, message=str(exc))

    with ThreadPoolExecutor(max_workers=min(_workers(), len(values))) as pool:
        results = list(pool.map(one, values))
    order = np.argsort(values, kind="stable")
    return [(values[i], results[i]) for i in order]


def sweep_header(config: ScenarioConfig) -> list[str]:
    head = [config.sweep.param, *SWEEP_FIELDS]
    if config.nu_star:
        head.append("nu_star")
    return head + ["convergence", "disagreement"]


def sweep_row(config: ScenarioConfig, x: float, res: PointResult) -> list[Any]:
    r = res.primary
    vals = [None] * len(SWEEP_FIELDS) if r is None else [r.as_dict()[k] for k in SWEEP_FIELDS]
    row = [x, *vals]
    if config.nu_star:
        row.append(res.nu_star if r is not None else None)
    return row + [res.convergence, res.disagreement()]


# ---------------------------------------------------------------------------
# verification


def _check(name, status, residual=None, tolerance=None, detail=""):
    return {"name": name, "status": status, "residual": residual,
            "tolerance": tolerance, "detail": detail}


def _rel_check(name, got, want, tol, detail=""):
    r = _rel(got, want)
    return _check(name, "pass" if r <= tol else "fail", r, tol, detail)


def near_boundary(params: EconomyParams, u: Utility) -> bool:
    d = denominator(params, u)
    return d is not None and d < NEAR_BOUNDARY * params.delta


def verify_checks(config: ScenarioConfig) -> list[dict]:
    """Backend agreement plus every sign and identity check at one point."""
    params, u = config.model()
    qc = config.quad_config()
    checks = []
    near = near_boundary(params, u)
    if near:
        checks.append(_check("near_boundary", "warn", denominator(params, u),
                             NEAR_BOUNDARY * params.delta,
                             "denominator close to 0: Monte Carlo tolerance widened to 5 SE"))
    s = params.sigma

    try:
        quad = quadrature.report(params, u, qc)
    except quadrature.ToleranceNotMet as exc:
        if not near:
            raise
        checks.append(_check("quadrature", "warn", detail=str(exc)))
        quad = None
    closed = closed_form.evaluate(params, u).report
    ref = quad or closed

    if quad is not None:
        checks.append(_rel_check("closed_vs_quad_V", quad.value, closed.value, 1e-6))
        checks.append(_rel_check("closed_vs_quad_p", quad.accounting_price, closed.accounting_price, 1e-6))

    k = 5.0 if near else 3.0
    heavy = monte_carlo.variance_finite(params, u) is False
    if heavy:
        checks.append(_check("mc_variance", "warn",
                             detail="path functional has infinite variance: Monte Carlo misses reported as warnings"))
    try:
        mc = monte_carlo.simulate(params, u, config.mc_config())
    except monte_carlo.DivergenceSuspected as exc:
        status = "warn" if near or heavy else "fail"
        checks.append(_check("mc_batch_means", status, detail=str(exc)))
        mc = None
    if mc is not None:
        for name, est, exact in (("mc_V", mc.value, closed.value),
                                 ("mc_p", mc.accounting_price, closed.accounting_price),
                                 ("mc_price_term", mc.price_term, closed.price_term),
                                 ("mc_ito_term", mc.ito_term, closed.ito_term)):
            tol = est.tolerance(k)
            resid = abs(est.mean - exact)
            miss = "warn" if heavy else "fail"
            checks.append(_check(name, "pass" if resid <= tol else miss, resid, tol,
                                 f"{k:g} SE + tail bound + grid error"))

    if s > 0:
        checks.append(_check("dV_dsigma_negative", "pass" if ref.dV_dsigma < 0 else "fail",
                             ref.dV_dsigma, 0.0))
        checks.append(_check("ito_term_negative", "pass" if ref.ito_term < 0 else "fail",
                             ref.ito_term, 0.0))
    else:
        checks.append(_check("dV_dsigma_negative", "skip", detail="sigma = 0"))
        checks.append(_check("ito_term_negative", "skip", detail="sigma = 0"))

    if quad is not None:
        value = lambda p: quadrature.value(p, u, qc)
        if s > 0:
            h = max(1e-6, 1e-4 * s)
            fd = (value(params.with_(sigma=s + h)) - value(params.with_(sigma=s - h))) / (2 * h)
            checks.append(_rel_check("dV_dsigma_fd", quad.dV_dsigma, fd, 1e-4))
        hk = 1e-3 * params.k0
        fd2 = (value(params.with_(k0=params.k0 + hk)) - 2 * quad.value
               + value(params.with_(k0=params.k0 - hk))) / hk ** 2
        checks.append(_rel_check("d2V_dk2_fd", quad.second_derivative, fd2, 1e-4))
        direct = quadrature.dV_dt(params, u, qc)
        checks.append(_rel_check("decomposition", quad.price_term + quad.ito_term, direct, 1e-8))
        if s > 0 and params.mu > params.nu:
            ok = quad.price_term > quad.dV_dt
            checks.append(_check("price_term_overestimates", "pass" if ok else "fail",
                                 quad.price_term - quad.dV_dt, 0.0))
        checks.append(_price_slope_check(params, u, qc))
        tau = 1.0 / params.delta
        lhs, rhs = quadrature.ibp_slice(params, u, tau)
        checks.append(_check("ibp_identity", "pass" if abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs)) else "fail",
                             abs(lhs - rhs), 1e-10 * max(1.0, abs(lhs)), "at tau = 1/delta"))
        checks.extend(_policy_checks(params, u, qc))
    return checks


def _price_slope_check(params, u, qc) -> dict:
    s = params.sigma
    h = max(1e-6, 1e-4 * s) if s > 0 else 1e-4
    price = lambda sig: quadrature.accounting_price(params.with_(sigma=sig), u, qc)
    slope = (price(s + h) - price(abs(s - h))) / (2 * h) if s > 0 else 0.0
    curv = quadrature.price_curvature_integral(params, u, qc)
    if s == 0:
        return _check("price_slope_sign", "skip", detail="sigma = 0")
    if isinstance(base_family(u), Log):
        ok = abs(slope) < 1e-10
        return _check("price_slope_sign", "pass" if ok else "fail", abs(slope), 1e-10,
                      "log utility: price independent of sigma")
    ok = np.sign(slope) == np.sign(curv) and slope != 0
    return _check("price_slope_sign", "pass" if ok else "fail", slope, 0.0,
                  f"sign must match curvature integral {fmt(curv)}")


def _policy_checks(params, u, qc) -> list[dict]:
    out = []
    try:
        closed_nu = policy.solve_nu_star(params, u, "closed_form")
    except policy.NoInteriorOptimum as exc:
        return [_check("nu_star", "skip", detail=str(exc))]
    nu = policy.solve_nu_star(params, u, "quadrature", qc)
    out.append(_rel_check("nu_star_solver", nu, closed_nu, 1e-6))
    resid = policy.nu_star_price_identity(params, u, "quadrature", qc)
    out.append(_check("nu_star_price_identity", "pass" if resid <= 1e-4 * nu else "fail",
                      resid, 1e-4 * nu))
    at = params.with_(nu=nu)
    dvdnu = quadrature.dV_dnu(at, u, qc)
    v = quadrature.value(at, u, qc)
    out.append(_check("envelope", "pass" if abs(dvdnu) <= 1e-8 * abs(v) else "fail",
                      abs(dvdnu), 1e-8 * abs(v)))
    analytic = policy.dnu_star_dsigma(params, u, "closed_form")
    if params.sigma > 0 and not isinstance(base_family(u), Log):
        numeric = policy.dnu_star_dsigma(params, u, "quadrature", qc, numeric=True)
        ok = np.sign(numeric) == np.sign(analytic)
        out.append(_check("dnu_star_dsigma_sign", "pass" if ok else "fail", numeric, 0.0,
                          f"analytic {fmt(analytic)}"))
    return out


# ---------------------------------------------------------------------------
# commands


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _report_rows(res: PointResult) -> list[dict]:
    rows = []
    for name, rep in res.reports.items():
        d = {"backend": name, **rep.as_dict()}
        se = res.std_errors.get(name, {})
        d["V_std_error"] = se.get("V")
        d["p_std_error"] = se.get("p")
        rows.append(d)
    return rows


def cmd_report(config: ScenarioConfig, fmt_name: str | None, out: str | None) -> int:
    res = evaluate_point(config)
    summary = {"convergence": res.convergence, "sigma_c": res.sigma_c,
               "nu_star": res.nu_star, "disagreement": res.disagreement()}
    rows = _report_rows(res)
    if fmt_name == "json":
        doc = document(config, rows, [])
        doc["scenario"]["summary"] = summary
        _emit(to_json(doc) + "\n", out)
    elif fmt_name == "csv":
        header = ["backend", *REPORT_FIELDS, "V_std_error", "p_std_error",
                  "nu_star", "sigma_c", "convergence", "disagreement"]
        body = [[r[h] if h in r else summary.get(h) for h in header] for r in rows]
        if not rows:
            body = [[None] * (len(header) - 4) + [res.nu_star, res.sigma_c, res.convergence, None]]
        _emit(render_csv(header, body), out)
    else:
        lines = []
        for r in rows:
            lines.append(f"[{r['backend']}]")
            labels = {"V": "V", "p": "p", "d2V_dk2": "d2V/dk0^2", "ito_term": "Ito term",
                      "price_term": "price term", "dV_dt": "dV/dt", "dV_dsigma": "dV/dsigma"}
            for key in REPORT_FIELDS:
                lines.append(f"{labels[key]} = {fmt(r[key])}")
            if r["V_std_error"] is not None:
                lines.append(f"V std error = {fmt(r['V_std_error'])}")
                lines.append(f"p std error = {fmt(r['p_std_error'])}")
        for key, label in (("nu_star", "nu*"), ("sigma_c", "sigma_c"),
                           ("disagreement", "backend disagreement")):
            if summary[key] is not None:
                lines.append(f"{label} = {fmt(summary[key])}")
        lines.append(f"convergence = {res.convergence}")
        _emit("\n".join(lines) + "\n", out)
    if res.convergence != ConvergenceClass.CONVERGENT.value:
        print(f"error: {res.message}", file=sys.stderr)
        return EXIT_DIVERGENCE
    return EXIT_OK


def cmd_sweep(config: ScenarioConfig, fmt_name: str | None, out: str | None) -> int:
    if config.sweep is None:
        raise ConfigError("sweep requires --sweep param:from:to:steps or a sweep entry in the config")
    results = run_sweep(config)
    header = sweep_header(config)
    rows = [sweep_row(config, x, r) for x, r in results]
    if fmt_name == "json":
        _emit(to_json(document(config, [dict(zip(header, row)) for row in rows], [])) + "\n", out)
    else:
        _emit(render_csv(header, rows), out)
    for x, r in results:
        if r.message:
            print(f"warning: {config.sweep.param}={fmt(x)}: {r.message}", file=sys.stderr)
    return EXIT_OK


def cmd_verify(config: ScenarioConfig, fmt_name: str | None, out: str | None) -> int:
    params, u = config.model()
    if validate(params, u) is not ConvergenceClass.CONVERGENT:
        print(f"error: {divergence_error(params, u)}", file=sys.stderr)
        return EXIT_DIVERGENCE
    checks = verify_checks(config)
    if fmt_name == "csv":
        header = ["name", "status", "residual", "tolerance", "detail"]
        _emit(render_csv(header, [[c[h] for h in header] for c in checks]), out)
    else:
        _emit(to_json(document(config, [], checks)) + "\n", out)
    failed = [c for c in checks if c["status"] == "fail"]
    for c in failed:
        resid = "" if c["residual"] is None else f" residual={fmt(c['residual'])}"
        print(f"FAILED {c['name']}{resid} {c['detail']}".rstrip(), file=sys.stderr)
    return EXIT_CHECK if failed else EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _common() -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    p.add_argument("--config", help="key=value or JSON scenario file")
    p.add_argument("--backend", choices=("closed", "quad", "mc", "all"))
    p.add_argument("--sweep", help="param:from:to:steps, param in sigma|nu|delta|mu")
    p.add_argument("--out", help="write output here instead of stdout")
    p.add_argument("--format", dest="fmt", choices=("csv", "json"))
    p.add_argument("--seed", type=int)
    p.add_argument("--paths", type=int, help="Monte Carlo paths")
    p.add_argument("--steps", type=int, help="Monte Carlo time steps per path")
    for name in ("mu", "sigma", "nu", "delta", "k0", "gamma", "beta", "depreciation"):
        p.add_argument(f"--{name}", type=float)
    p.add_argument("--utility", choices=UTILITIES)
    p.add_argument("--nu-star", dest="nu_star", action="store_const", const=True,
                   help="also solve for the optimal consumption rate")
    p.add_argument("--diagnostic", action="store_const", const=True,
                   help="run divergent points through the Monte Carlo batch-mean test")
    return p


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="volwealth", description="Value of a volatile capital stock.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = _common()
    sub.add_parser("report", parents=[common], help="value, prices and wealth change at one point")
    sub.add_parser("sweep", parents=[common], help="table over a parameter range")
    sub.add_parser("verify", parents=[common], help="cross-check backends and identities")
    return parser


_FLAG_KEYS = ("backend", "sweep", "seed", "paths", "steps", "mu", "sigma", "nu", "delta", "k0",
              "gamma", "beta", "depreciation", "utility", "nu_star", "diagnostic")


def load_config(args: argparse.Namespace) -> ScenarioConfig:
    file_settings = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                file_settings = parse_config_text(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
    flags = {k: getattr(args, k) for k in _FLAG_KEYS}
    return build_config(file_settings, flags)


def main(argv: list[str] | None = None) -> int:
    try:
        args = make_parser().parse_args(argv)
        config = load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    command = {"report": cmd_report, "sweep": cmd_sweep, "verify": cmd_verify}[args.command]
    try:
        return command(config, args.fmt, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except quadrature.ToleranceNotMet as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
