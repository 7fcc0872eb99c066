#!/usr/bin/env python3
"""Sweep risk aversion and discount specifications and confirm that every
solver output stays inside its solver-independent a priori bounds box."""

import argparse

from eqmerton import (
    CrraUtility,
    ExponentialDiscount,
    ExponentialMixtureDiscount,
    HyperbolicDiscount,
    MarketParams,
    TimeGrid,
    a_priori_bounds,
    picard_solve,
)

DISCOUNTS = {
    "exp(0.1)": ExponentialDiscount(rho=0.1),
    "exp(0.5)": ExponentialDiscount(rho=0.5),
    "mix(2)": ExponentialMixtureDiscount(betas=(0.4, 0.6), rhos=(0.05, 0.5)),
    "hyp(1,1)": HyperbolicDiscount(k=1.0, gamma=1.0),
}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--horizon", type=float, default=1.0)
    ap.add_argument("--n-steps", type=int, default=500)
    ap.add_argument("--exponents", type=float, nargs="+",
                    default=[-2.0, -1.0, 0.3, 0.5, 0.8])
    args = ap.parse_args()

    m = MarketParams(r=0.05, alpha=0.12, sigma=0.2)
    g = TimeGrid(horizon=args.horizon, n_steps=args.n_steps)
    print(f"{'p':>6} {'discount':>10} {'lower':>10} {'min lam':>10} "
          f"{'max lam':>10} {'upper':>10} {'inside':>7}")
    for p in args.exponents:
        u = CrraUtility(p=p)
        for label, d in DISCOUNTS.items():
            sol = picard_solve(m, u, d, g)
            box = a_priori_bounds(m, u, d, g)
            print(f"{p:>6.2f} {label:>10} {box.lower:>10.4g} "
                  f"{sol.values.min():>10.4g} {sol.values.max():>10.4g} "
                  f"{box.upper:>10.4g} {str(box.contains(sol.values)):>7}")


if __name__ == "__main__":
    main()
