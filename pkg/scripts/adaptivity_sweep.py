#!/usr/bin/env python3
"""ATP's final-episode makespan relative to NTP on the adversarial family.

Prints one row per (k, seed) with the makespan ratio and how often p1's
rack was delivered. Hyperparameters can be overridden to explore settings
other than the defaults.
"""

from __future__ import annotations

import argparse

from rackplan import BadCaseParams, HyperParams, generate_bad_case, run, run_episodes


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ks", type=int, nargs="+", default=[6, 8, 10])
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--episodes", type=int, default=30)
    ap.add_argument("--delta", type=float, default=HyperParams.delta)
    ap.add_argument("--epsilon", type=float, default=HyperParams.epsilon)
    ap.add_argument("--bucket-width", type=int, default=HyperParams.bucket_width)
    ns = ap.parse_args()
    hp = HyperParams(delta=ns.delta, epsilon=ns.epsilon, bucket_width=ns.bucket_width)
    print("k,seed,ntp,atp_final,ratio,p1_deliveries,q_entries")
    for k in ns.ks:
        sc = generate_bad_case(BadCaseParams(k, 40, 2, 10, (8,) * k))
        ntp = run(sc, "ntp").makespan
        for seed in range(ns.seeds):
            reps, q = run_episodes(sc, "atp", ns.episodes, hp, seed)
            final = reps[-1]
            print(
                f"{k},{seed},{ntp},{final.makespan},{final.makespan / ntp:.3f},"
                f"{final.rack_deliveries.get(0, 0)},{len(q)}"
            )


if __name__ == "__main__":
    main()
