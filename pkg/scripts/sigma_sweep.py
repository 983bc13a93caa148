"""Value, accounting price and wealth change against volatility for each family.

Writes one CSV per utility with closed-form, quadrature and (optionally)
Monte Carlo columns, ready for plotting.

    python scripts/sigma_sweep.py --out results/ --mc-paths 20000
"""

import argparse
import os

import numpy as np

from volwealth import closed_form as cf
from volwealth import monte_carlo as mc
from volwealth import quadrature as q
from volwealth.cli import render_csv
from volwealth.econ_core import EconomyParams, Log, PowerNeg, PowerPos, critical_sigma

FAMILIES = {"power_neg_g1": PowerNeg(1.0), "power_neg_g2": PowerNeg(2.0),
            "power_pos_b05": PowerPos(0.5), "log": Log()}


def sweep(u, base: EconomyParams, n: int, mc_paths: int) -> tuple[list[str], list[list]]:
    top = 0.95 * critical_sigma(base, u.gamma) if isinstance(u, PowerNeg) else 0.5
    header = ["sigma", "V_closed", "V_quad", "p_closed", "p_quad", "price_term", "ito_term",
              "dV_dt", "nu_star"]
    if mc_paths:
        header += ["V_mc", "V_mc_se"]
    rows = []
    config = mc.McConfig(n_paths=mc_paths, n_steps=512) if mc_paths else None
    for s in np.linspace(0.0, top, n):
        p = base.with_(sigma=float(s))
        c, r = cf.evaluate(p, u), q.report(p, u)
        row = [float(s), c.report.value, r.value, c.report.accounting_price, r.accounting_price,
               r.price_term, r.ito_term, r.dV_dt, c.nu_star]
        if config is not None:
            try:
                est = mc.estimate_value(p, u, config)
                row += [est.mean, est.std_error]
            except mc.DivergenceSuspected:
                row += [None, None]
        rows.append(row)
    return header, rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results")
    ap.add_argument("--points", type=int, default=25)
    ap.add_argument("--mc-paths", type=int, default=0, help="0 skips Monte Carlo")
    ap.add_argument("--mu", type=float, default=0.04)
    ap.add_argument("--nu", type=float, default=0.02)
    ap.add_argument("--delta", type=float, default=0.05)
    args = ap.parse_args(argv)
    os.makedirs(args.out, exist_ok=True)
    base = EconomyParams(args.mu, 0.0, args.nu, args.delta)
    for name, u in FAMILIES.items():
        header, rows = sweep(u, base, args.points, args.mc_paths)
        path = os.path.join(args.out, f"sigma_sweep_{name}.csv")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(render_csv(header, rows))
        print(f"wrote {path} ({len(rows)} rows)")


if __name__ == "__main__":
    main()
