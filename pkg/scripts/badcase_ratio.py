#!/usr/bin/env python3
"""Simulated NTP makespan on the adversarial family against both closed forms."""

from __future__ import annotations

import argparse

from rackplan import BadCaseParams, generate_bad_case, run


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--ks", type=int, nargs="+", default=[2, 4, 6, 8, 10])
    ap.add_argument("--D", type=int, default=40)
    ap.add_argument("--xi", type=int, default=2)
    ap.add_argument("--M", type=int, default=10)
    ap.add_argument("--Dj", type=int, default=8)
    ns = ap.parse_args()
    print("k,ntp_sim,ntp_closed,opt_closed,ratio_sim,ratio_closed")
    for k in ns.ks:
        p = BadCaseParams(k, ns.D, ns.xi, ns.M, (ns.Dj,) * k)
        sim = run(generate_bad_case(p), "ntp").makespan
        opt = p.opt_makespan()
        print(f"{k},{sim},{p.ntp_makespan()},{opt},{sim / opt:.4f},{p.ratio():.4f}")


if __name__ == "__main__":
    main()
