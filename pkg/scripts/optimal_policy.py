"""Optimal consumption rate and the value along it as volatility grows.

Solves the first-order condition numerically, compares it with the closed
form, and prints the policy classification at each point.

    python scripts/optimal_policy.py --utility power_pos --beta 0.5
"""

import argparse

import numpy as np

from volwealth import closed_form as cf
from volwealth import policy
from volwealth import quadrature as q
from volwealth.econ_core import EconomyParams, Log, PowerNeg, PowerPos


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--utility", choices=("power_neg", "power_pos", "log"), default="power_neg")
    ap.add_argument("--gamma", type=float, default=1.0)
    ap.add_argument("--beta", type=float, default=0.5)
    ap.add_argument("--mu", type=float, default=0.05)
    ap.add_argument("--delta", type=float, default=0.03)
    ap.add_argument("--sigma-max", type=float, default=0.25)
    ap.add_argument("--points", type=int, default=11)
    args = ap.parse_args(argv)
    u = {"power_neg": PowerNeg(args.gamma), "power_pos": PowerPos(args.beta), "log": Log()}[args.utility]
    print(f"{'sigma':>8} {'nu*':>12} {'closed':>12} {'V(nu*)':>14} {'p(nu*)':>14} {'dnu*/dsigma':>12} policy")
    for s in np.linspace(0.0, args.sigma_max, args.points):
        p = EconomyParams(args.mu, float(s), args.delta, args.delta)
        try:
            r = policy.optimal_nu(p, u)
        except policy.PolicyError as exc:
            print(f"{s:8.4f} {exc}")
            continue
        at = p.with_(nu=r.nu_star)
        print(f"{s:8.4f} {r.nu_star:12.8f} {cf.nu_star_closed(p, u):12.8f} {q.value(at, u):14.6g} "
              f"{q.accounting_price(at, u):14.6g} {r.dnu_dsigma:12.5g} {r.mitigation.value}")


if __name__ == "__main__":
    main()
