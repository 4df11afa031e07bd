#!/usr/bin/env python3
"""Selection time, path-finding time and memory proxy for ATP versus EATP."""

from __future__ import annotations

import argparse
import statistics

from rackplan import generate_poisson, make_block_layout, run


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--blocks", type=int, nargs=3, default=[5, 4, 16], metavar=("ROWS", "COLS", "PICKERS"))
    ap.add_argument("--robots", type=int, default=20)
    ap.add_argument("--items", type=int, default=10_000)
    ap.add_argument("--rate", type=float, default=0.3)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--planners", default="atp,eatp")
    ns = ap.parse_args()
    lay = make_block_layout(*ns.blocks)
    planners = ns.planners.split(",")
    print(f"# {len(lay.rack_homes)} racks, {len(lay.picker_stations)} pickers, {lay.height}x{lay.width} grid")
    print("planner,seed,makespan,stc_ms,ptc_ms,mc_proxy,peak_table_entries,peak_open_set")
    agg: dict[str, dict[str, list[float]]] = {p: {"stc": [], "ptc": [], "mc": []} for p in planners}
    for seed in range(ns.seeds):
        sc = generate_poisson(lay, ns.rate, ns.items, seed=seed, n_robots=ns.robots)
        for name in planners:
            r = run(sc, name, seed=seed)
            agg[name]["stc"].append(r.stc_ms)
            agg[name]["ptc"].append(r.ptc_ms)
            agg[name]["mc"].append(r.mc_proxy)
            print(
                f"{name},{seed},{r.makespan},{r.stc_ms:.1f},{r.ptc_ms:.1f},{r.mc_proxy},"
                f"{r.peak_table_entries},{r.peak_open_set}"
            )
    for name, v in agg.items():
        print(
            f"# median {name}: stc_ms={statistics.median(v['stc']):.1f} "
            f"ptc_ms={statistics.median(v['ptc']):.1f} mc_proxy={statistics.median(v['mc']):.0f}"
        )


if __name__ == "__main__":
    main()
