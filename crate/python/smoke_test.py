#!/usr/bin/env python3
"""Smoke test for the harris_regen_py extension module.

Build and stage the module first:

    cargo build -p harris-regen-py --release
    cp target/release/libharris_regen_py.so python/harris_regen_py.so
    python3 python/smoke_test.py
"""

import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import harris_regen_py as hr  # noqa: E402

CHECKS = []


def check(name, ok, detail=""):
    CHECKS.append((name, ok))
    print(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")


def main():
    # Two-state chain: stationary measure and minorization certificate.
    chain = hr.Ctmc.two_state(1.0, 1.0)
    pi = chain.stationary()
    check("stationary (1/2, 1/2)", abs(pi[0] - 0.5) < 1e-12 and abs(pi[1] - 0.5) < 1e-12)
    small_set, alpha, nu = chain.minorize()
    check(
        "minorization alpha = 2/3, nu = (1/2, 1/2)",
        abs(alpha - 2.0 / 3.0) < 1e-12 and abs(nu[0] - 0.5) < 1e-12,
        f"alpha={alpha:.12f}",
    )
    p = chain.transition_matrix(1.0)
    expected = 0.5 + 0.5 * math.exp(-2.0)
    check("p_1(0,0) closed form", abs(p[0][0] - expected) < 1e-10, f"{p[0][0]:.6f}")

    # Kac ratio on the asymmetric chain: mu(0)/mu(1) = b/a = 3.
    chain13 = hr.Ctmc.two_state(1.0, 3.0)
    data = chain13.cycles(40000, seed=7, indicators={"f0": 0, "f1": 1})
    ratio, lo, hi = hr.kac_ratio(data["xi"]["f0"], data["xi"]["f1"])
    check("kac ratio CI covers 3.0", lo <= 3.0 <= hi, f"ratio={ratio:.4f} CI=({lo:.4f}, {hi:.4f})")

    # Exact Brownian cycles: Laplace transform and tail index.
    durations = hr.sample_bm_cycles(200000, seed=11)
    value, stderr = hr.empirical_laplace(durations, 0.5)
    target = math.exp(-2.0)
    check(
        "Brownian Laplace at 1/2",
        abs(value - target) < 4.0 * stderr,
        f"{value:.5f} vs {target:.5f} (se {stderr:.5f})",
    )
    alpha_hat = hr.hill_estimator(durations)
    check("Hill tail index near 1/2", abs(alpha_hat - 0.5) < 0.08, f"alpha_hat={alpha_hat:.4f}")

    # Bound calculus.
    sup, lower = hr.birge_massart(1.0, 1.0)
    check(
        "Birge-Massart spot value",
        abs(sup - 0.17157287525381) < 1e-9 and abs(lower - 1.0 / 6.0) < 1e-12,
        f"sup={sup:.6f} lower={lower:.6f}",
    )
    lam = hr.lambda_star_t(0.5, 0.25, 1.0e6, 2.0 * math.sqrt(2.0))
    check("regular-regime floor 1/4", abs(lam - 0.25) < 1e-5, f"{lam:.6f}")
    check("legendre_star positive for Brownian", hr.legendre_star(10.0) > 0.0)

    bounds = [
        hr.theorem_bound("positive_eta", t=200.0, x=x, k_f=1.75, m=2.5, eta=0.5, durations=durations)
        for x in (1.0, 2.0, 4.0)
    ]
    totals = [b["total"] for b in bounds]
    check(
        "positive-regime bound decreasing in x",
        totals[0] >= totals[1] >= totals[2],
        f"totals={['%.3f' % t for t in totals]}",
    )

    failed = [name for name, ok in CHECKS if not ok]
    print(f"\n{len(CHECKS) - len(failed)}/{len(CHECKS)} smoke checks passed")
    if failed:
        sys.exit(1)


if __name__ == "__main__":
    main()
