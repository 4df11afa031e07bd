"""Command-line front end.

Exit codes: 0 ok, 2 usage or bad input, 3 scenario generation failed,
4 runtime invariant (livelock or collision).
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Any, Sequence

from .errors import ConfigError, GeometryError, InvariantViolation, LayoutError, Livelock, SchemaError
from .planners import PLANNER_NAMES
from .rl_selection import HyperParams, QTable
from .scenario import BadCaseParams, generate_bad_case, generate_poisson, load_scenario, save_scenario
from .schemas import validate
from .simulator import SimReport, run_episodes
from .warehouse_model import load_layout, make_block_layout

EXIT_OK, EXIT_USAGE, EXIT_GENERATE, EXIT_RUNTIME = 0, 2, 3, 4

log = logging.getLogger("rackplan")


@dataclass
class RunConfig:
    scenario: str
    planner: str
    hp: HyperParams = field(default_factory=HyperParams)
    seed: int = 0
    episodes: int = 1
    out: str | None = None
    q_export: str | None = None
    q_import: str | None = None
    tick_log: str | None = None
    path_trace: str | None = None


def _setup_logging(verbose: int) -> None:
    level = os.environ.get("RACKPLAN_LOG", "").upper()
    if verbose:
        level = "DEBUG" if verbose > 1 else "INFO"
    logging.basicConfig(level=getattr(logging, level or "WARNING", logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def _add_hp(p: argparse.ArgumentParser) -> None:
    d = HyperParams()
    g = p.add_argument_group("hyperparameters")
    g.add_argument("--delta", type=float, default=d.delta, help="bootstrap probability")
    g.add_argument("--beta", type=float, default=d.beta, help="learning rate")
    g.add_argument("--gamma", type=float, default=d.gamma, help="discount factor")
    g.add_argument("--epsilon", type=float, default=d.epsilon, help="exploration probability")
    g.add_argument("--K", type=int, default=d.K, help="nearest-rack fan-out")
    g.add_argument("--L", type=int, default=d.L, help="cache distance threshold")
    g.add_argument("--bucket-width", type=int, default=d.bucket_width, help="state bucket width")


def _hp(ns: argparse.Namespace) -> HyperParams:
    return HyperParams(
        delta=ns.delta,
        beta=ns.beta,
        gamma=ns.gamma,
        epsilon=ns.epsilon,
        K=ns.K,
        L=ns.L,
        bucket_width=ns.bucket_width,
    )


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rackplan", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("generate", help="write a scenario file")
    g.add_argument("--mode", choices=("poisson", "badcase"), required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--layout", help="layout document (poisson mode); default is a block layout")
    g.add_argument("--blocks", type=int, nargs=3, metavar=("ROWS", "COLS", "PICKERS"), default=(5, 4, 16))
    g.add_argument("--items", type=int, default=1000)
    g.add_argument("--rate", type=float, default=0.3)
    g.add_argument("--proc", type=int, nargs=2, metavar=("LO", "HI"), default=(20, 40))
    g.add_argument("--robots", type=int, default=20)
    g.add_argument("--k", type=int, default=5)
    g.add_argument("--D", type=int, default=40)
    g.add_argument("--xi", type=int, default=2)
    g.add_argument("--M", type=int, default=10)
    g.add_argument("--Dj", type=int, default=8, help="per-rack round trip on p2's side")

    r = sub.add_parser("run", help="simulate one planner on a scenario")
    r.add_argument("--scenario", required=True)
    r.add_argument("--planner", choices=PLANNER_NAMES, required=True)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--episodes", type=int, default=1, help="replays carrying the Q-table forward")
    r.add_argument("--out", help="report path (default stdout)")
    r.add_argument("--q-export")
    r.add_argument("--q-import")
    r.add_argument("--tick-log", help="per-tick CSV of the final episode")
    r.add_argument("--path-trace", help="executed-path CSV of the final episode")
    _add_hp(r)

    c = sub.add_parser("compare", help="run several planners over seeds, emit CSV")
    c.add_argument("--scenario", required=True)
    c.add_argument("--planners", default=",".join(PLANNER_NAMES))
    c.add_argument("--reps", type=int, default=3)
    c.add_argument("--seed", type=int, default=0, help="first seed; reps use seed..seed+reps-1")
    c.add_argument("--episodes", type=int, default=1)
    c.add_argument("--jobs", type=int, default=1)
    c.add_argument("--out", help="CSV path (default stdout)")
    c.add_argument("--tick-dir", help="directory for per-tick CSVs, one per (planner, seed)")
    _add_hp(c)
    return ap


def _write(path: str | None, data: bytes) -> None:
    if path is None or path == "-":
        sys.stdout.write(data.decode("utf-8"))
        if not data.endswith(b"\n"):
            sys.stdout.write("\n")
    else:
        FsPath(path).write_bytes(data)


def cmd_generate(ns: argparse.Namespace) -> int:
    if ns.mode == "poisson":
        if ns.layout:
            layout = load_layout(FsPath(ns.layout).read_bytes(), name=FsPath(ns.layout).stem)
        else:
            layout = make_block_layout(ns.blocks[0], ns.blocks[1], ns.blocks[2])
        sc = generate_poisson(layout, ns.rate, ns.items, tuple(ns.proc), ns.seed, ns.robots)
        extra = ""
    else:
        p = BadCaseParams(ns.k, ns.D, ns.xi, ns.M, (ns.Dj,) * ns.k)
        sc = generate_bad_case(p)
        extra = f" closed_form_ntp={sc.meta['closed_form_ntp']} closed_form_opt={sc.meta['closed_form_opt']}"
    FsPath(ns.out).write_bytes(save_scenario(sc))
    print(
        f"wrote {ns.out}: items={len(sc.items)} racks={len(sc.layout.rack_homes)} robots={len(sc.robots_init)} "
        f"horizon_hint={sc.horizon_hint}{extra}"
    )
    return EXIT_OK


def _episodes(cfg: RunConfig) -> tuple[list[SimReport], QTable]:
    sc = load_scenario(FsPath(cfg.scenario).read_bytes())
    q = QTable.from_json(FsPath(cfg.q_import).read_bytes()) if cfg.q_import else None
    return run_episodes(
        sc,
        cfg.planner,
        cfg.episodes,
        cfg.hp,
        cfg.seed,
        q=q,
        record_ticks=cfg.tick_log is not None,
        record_paths=cfg.path_trace is not None,
    )


def cmd_run(ns: argparse.Namespace) -> int:
    if ns.episodes < 1:
        raise ConfigError("--episodes must be >= 1")
    cfg = RunConfig(
        scenario=ns.scenario,
        planner=ns.planner,
        hp=_hp(ns),
        seed=ns.seed,
        episodes=ns.episodes,
        out=ns.out,
        q_export=ns.q_export,
        q_import=ns.q_import,
        tick_log=ns.tick_log,
        path_trace=ns.path_trace,
    )
    reports, q = _episodes(cfg)
    final = reports[-1]
    doc = final.to_dict()
    validate(doc, "report")
    _write(cfg.out, final.to_json())
    if cfg.q_export:
        qdoc = q.to_dict()
        validate(qdoc, "qtable")
        FsPath(cfg.q_export).write_bytes(q.to_json())
    if cfg.tick_log:
        with open(cfg.tick_log, "w", newline="", encoding="utf-8") as fh:
            final.write_tick_log(fh)
    if cfg.path_trace:
        with open(cfg.path_trace, "w", newline="", encoding="utf-8") as fh:
            final.write_path_trace(fh)
    log.info("makespan %d over %d episode(s)", final.makespan, len(reports))
    return EXIT_OK


COMPARE_FIELDS = ["planner", "seed", "status", "makespan", "ppr", "rwr", "stc_ms", "ptc_ms", "mc_proxy"]


def _compare_cell(args: tuple[RunConfig, str | None]) -> dict[str, Any]:
    cfg, tick_path = args
    row: dict[str, Any] = {"planner": cfg.planner, "seed": cfg.seed}
    try:
        reports, _ = _episodes(cfg)
    except (Livelock, InvariantViolation) as e:
        row.update(status=f"failed: {type(e).__name__}")
        return row
    rep = reports[-1]
    row.update(
        status="ok",
        makespan=rep.makespan,
        ppr=f"{rep.ppr:.6f}",
        rwr=f"{rep.rwr:.6f}",
        stc_ms=f"{rep.stc_ms:.3f}",
        ptc_ms=f"{rep.ptc_ms:.3f}",
        mc_proxy=rep.mc_proxy,
    )
    if tick_path:
        with open(tick_path, "w", newline="", encoding="utf-8") as fh:
            rep.write_tick_log(fh)
    return row


def cmd_compare(ns: argparse.Namespace) -> int:
    planners = [p.strip() for p in ns.planners.split(",") if p.strip()]
    bad = [p for p in planners if p not in PLANNER_NAMES]
    if bad or not planners:
        print(f"rackplan compare: unknown planner(s) {', '.join(bad) or '(none)'}", file=sys.stderr)
        return EXIT_USAGE
    if ns.reps < 1 or ns.episodes < 1:
        raise ConfigError("--reps and --episodes must be >= 1")
    hp = _hp(ns)
    # fail fast on an unreadable scenario before spawning workers
    load_scenario(FsPath(ns.scenario).read_bytes())
    if ns.tick_dir:
        FsPath(ns.tick_dir).mkdir(parents=True, exist_ok=True)
    cells = []
    for planner in planners:
        for seed in range(ns.seed, ns.seed + ns.reps):
            cfg = RunConfig(ns.scenario, planner, hp, seed, ns.episodes, tick_log="x" if ns.tick_dir else None)
            tick = str(FsPath(ns.tick_dir) / f"{planner}-{seed}.csv") if ns.tick_dir else None
            cells.append((cfg, tick))
    if ns.jobs > 1:
        with ProcessPoolExecutor(max_workers=ns.jobs) as ex:
            rows = list(ex.map(_compare_cell, cells))
    else:
        rows = [_compare_cell(c) for c in cells]
    out = open(ns.out, "w", newline="", encoding="utf-8") if ns.out else sys.stdout
    try:
        w = csv.DictWriter(out, fieldnames=COMPARE_FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    finally:
        if ns.out:
            out.close()
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    _setup_logging(ns.verbose)
    handler = {"generate": cmd_generate, "run": cmd_run, "compare": cmd_compare}[ns.cmd]
    try:
        return handler(ns)
    except GeometryError as e:
        print(f"rackplan: geometry error: {e}", file=sys.stderr)
        return EXIT_GENERATE
    except (Livelock, InvariantViolation) as e:
        print(f"rackplan: runtime invariant failed: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ConfigError, SchemaError, LayoutError, OSError) as e:
        print(f"rackplan: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
