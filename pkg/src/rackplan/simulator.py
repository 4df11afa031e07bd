"""Discrete-time execution engine.

Order of work inside tick ``t``:

1. inject items emerging at ``t``;
2. finish legs that end at ``t`` (pickup -> delivery, delivery -> queue,
   return -> idle) and start return legs for racks whose processing is done;
3. let the planner select racks and route pickups for idle robots;
4. finish legs again, for zero-length pickups produced in step 3;
5. pickers process over ``[t, t+1)``;
6. count busy robots;
7. advance robots to ``t+1`` and check that no two share a cell or swap;
8. prune reservations older than ``t+1``.

A robot whose rack reaches the station leaves the grid into the picker's
FIFO buffer and reappears on the station cell when it starts its return.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
from collections import deque
from dataclasses import dataclass, field
from typing import IO, Any, Iterable

from .errors import InvariantViolation, Livelock, NoPath
from .pathfinding import Path, Purpose, ReservationTable, SearchStats, write_path_trace
from .planners import Planner, make_planner
from .rl_selection import HyperParams, QTable
from .scenario import Scenario
from .warehouse_model import (
    GridMap,
    Item,
    Location,
    Picker,
    Rack,
    RackPosition,
    Robot,
    RobotState,
    manhattan,
)

log = logging.getLogger(__name__)


@dataclass
class WorldState:
    t: int
    grid: GridMap
    racks: dict[int, Rack]
    pickers: dict[int, Picker]
    robots: dict[int, Robot]
    table: ReservationTable
    pending_events: deque[Item]
    search_stats: SearchStats = field(default_factory=SearchStats)

    @classmethod
    def from_scenario(cls, sc: Scenario, table: ReservationTable) -> WorldState:
        g = sc.layout
        racks = {rid: Rack(rid, g.rack_homes[rid], g.rack_picker[rid]) for rid in g.rack_ids()}
        pickers = {pid: Picker(pid, loc) for pid, loc in sorted(g.picker_stations.items())}
        robots = {rid: Robot(rid, loc) for rid, loc in sorted(sc.robots_init)}
        t0 = sc.items[0].emerge_time if sc.items else 0
        table.prune(t0)
        return cls(t0, g, racks, pickers, robots, table, deque(sc.items))

    def parked_cells(self, exclude: int | None = None) -> set[int]:
        """Cells of on-grid robots that hold no path, treated as obstacles."""
        idx = self.grid.index
        return {
            idx(a.location)
            for a in self.robots.values()
            if a.on_grid and a.current_path is None and a.id != exclude
        }

    def commit_pickup(self, robot: Robot, rack: Rack, path: Path) -> None:
        self.commit_path(robot, path)
        robot.state = RobotState.PICKING_UP
        robot.target_rack = rack.id
        rack.reserved = True

    def commit_path(self, robot: Robot, path: Path) -> None:
        # a path continuing from the robot's own path end shares its first cell-tick
        self.table.insert(path, skip_first=robot.reserved_until >= path.start_t)
        robot.current_path = path
        robot.reserved_until = path.end_t

    @property
    def pending_items(self) -> int:
        return sum(len(r.pending) + len(r.batch or ()) for r in self.racks.values())


@dataclass
class SimReport:
    planner: str
    seed: int
    makespan: int
    ppr: float
    rwr: float
    stc_ms: float
    ptc_ms: float
    mc_proxy: int
    peak_table_entries: int
    peak_open_set: int
    event_counts: dict[str, int]
    rack_deliveries: dict[int, int]
    processed_work: int
    first_emerge: int | None
    last_return: int | None
    event_digest: str
    episode: int = 0
    hyperparams: dict[str, Any] = field(default_factory=dict)
    per_tick_log: list[tuple[int, int, int, int]] | None = None
    executed_paths: list[Path] | None = None

    WALL_CLOCK_FIELDS = ("stc_ms", "ptc_ms")

    def to_dict(self, wall_clock: bool = True) -> dict[str, Any]:
        d = {
            "planner": self.planner,
            "seed": self.seed,
            "episode": self.episode,
            "makespan": self.makespan,
            "first_emerge": self.first_emerge,
            "last_return": self.last_return,
            "ppr": self.ppr,
            "rwr": self.rwr,
            "stc_ms": self.stc_ms,
            "ptc_ms": self.ptc_ms,
            "mc_proxy": self.mc_proxy,
            "peak_table_entries": self.peak_table_entries,
            "peak_open_set": self.peak_open_set,
            "processed_work": self.processed_work,
            "event_digest": self.event_digest,
            "event_counts": dict(sorted(self.event_counts.items())),
            "rack_deliveries": {str(k): v for k, v in sorted(self.rack_deliveries.items())},
            "hyperparams": self.hyperparams,
        }
        if not wall_clock:
            for k in self.WALL_CLOCK_FIELDS:
                d[k] = 0.0
        return d

    def to_json(self, wall_clock: bool = True) -> bytes:
        return json.dumps(self.to_dict(wall_clock), indent=1).encode("utf-8")

    def write_tick_log(self, fh: IO[str]) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "busy_pickers", "busy_robots", "pending_items"])
        w.writerows(self.per_tick_log or ())

    def write_path_trace(self, fh: IO[str]) -> None:
        write_path_trace(self.executed_paths or (), fh)


def compute_metrics(
    makespan: int, picker_busy: Iterable[int], robot_busy: Iterable[int]
) -> tuple[int, float, float]:
    """Makespan, mean picker processing ratio, mean robot working ratio."""
    pb, rb = list(picker_busy), list(robot_busy)
    if makespan <= 0:
        return makespan, 0.0, 0.0
    ppr = sum(b / makespan for b in pb) / len(pb) if pb else 0.0
    rwr = sum(b / makespan for b in rb) / len(rb) if rb else 0.0
    return makespan, min(ppr, 1.0), min(rwr, 1.0)


class Simulation:
    """One run of one planner over one scenario."""

    def __init__(
        self,
        scenario: Scenario,
        planner: Planner,
        *,
        record_ticks: bool = False,
        record_paths: bool = False,
        check_invariants: bool = True,
    ) -> None:
        self.scenario = scenario
        self.planner = planner
        planner.prepare(scenario.layout)
        self.world = WorldState.from_scenario(scenario, planner.make_table(scenario.layout))
        self.record_ticks = record_ticks
        self.check_invariants = check_invariants
        self.tick_log: list[tuple[int, int, int, int]] | None = [] if record_ticks else None
        self.paths: list[Path] | None = [] if record_paths else None
        self.counts: dict[str, int] = {
            "arrivals": 0,
            "deliveries": 0,
            "returns": 0,
            "nopath_pickup": 0,
            "nopath_delivery": 0,
            "nopath_return": 0,
            "return_blocked": 0,
            "waits": 0,
            "cache_hits": 0,
        }
        self.picker_busy = {pid: 0 for pid in self.world.pickers}
        self.processed_work = 0
        self.stc = 0.0
        self.ptc = 0.0
        self.peak_entries = 0
        # robots off-grid at a station whose rack is done, with the tick it is ready
        self.outbound: list[tuple[int, Robot, Rack]] = []
        # robots that reached a leg end but could not route the next leg yet
        self.stalled: dict[int, Purpose] = {}
        self.first_emerge = scenario.items[0].emerge_time if scenario.items else None
        self.last_return: int | None = None
        self._digest = hashlib.sha256()
        self._last_progress = self.world.t
        g = scenario.layout
        work = sum(
            it.processing_time + 2 * manhattan(g.rack_homes[it.rack_id], g.picker_stations[g.rack_picker[it.rack_id]])
            for it in scenario.items
        )
        self.livelock_after = max(10 * work, 1000)

    # --- bookkeeping ------------------------------------------------------------

    def _event(self, kind: str, robot: int, rack: int) -> None:
        self._digest.update(f"{self.world.t}|{kind}|{robot}|{rack}\n".encode())

    def _progress(self) -> None:
        self._last_progress = self.world.t

    def _record(self, path: Path) -> None:
        self.counts["waits"] += path.waits
        if self.paths is not None:
            self.paths.append(path)

    def _route(self, robot: Robot, src: Location, dst: Location, purpose: Purpose) -> Path | None:
        w = self.world
        t0 = time.perf_counter()
        try:
            return self.planner.route(
                w.table,
                src,
                dst,
                w.t,
                blocked=w.parked_cells(exclude=robot.id),
                robot_id=robot.id,
                purpose=purpose,
                stats=w.search_stats,
            )
        except NoPath:
            self.counts[f"nopath_{purpose.value}"] += 1
            return None
        finally:
            self.ptc += time.perf_counter() - t0

    # --- phases -------------------------------------------------------------------

    def _inject(self) -> None:
        w = self.world
        while w.pending_events and w.pending_events[0].emerge_time == w.t:
            it = w.pending_events.popleft()
            w.racks[it.rack_id].pending.append(it)
            self.counts["arrivals"] += 1
            self._progress()

    def _start_delivery(self, a: Robot, rack: Rack) -> None:
        station = self.world.pickers[rack.picker_id].location
        path = self._route(a, a.location, station, Purpose.DELIVERY)
        if path is None:
            self.stalled[a.id] = Purpose.DELIVERY
            return
        self.stalled.pop(a.id, None)
        self.world.commit_path(a, path)
        self._record(path)
        a.state = RobotState.DELIVERING

    def _finish_legs(self) -> None:
        w = self.world
        t = w.t
        for a in w.robots.values():
            p = a.current_path
            if p is not None and p.end_t == t:
                a.current_path = None
                if p.purpose is Purpose.PICKUP:
                    rack = w.racks[a.target_rack]
                    rack.position_state = RackPosition.CARRIED
                    a.carried_rack = rack.id
                    a.target_rack = None
                    self._event("pickup", a.id, rack.id)
                    self._start_delivery(a, rack)
                elif p.purpose is Purpose.DELIVERY:
                    rack = w.racks[a.carried_rack]
                    picker = w.pickers[rack.picker_id]
                    rack.position_state = RackPosition.AT_PICKER
                    rack.deliveries += 1
                    picker.queue.append(rack)
                    a.on_grid = False
                    a.state = RobotState.QUEUING
                    self.counts["deliveries"] += 1
                    self._event("deliver", a.id, rack.id)
                    self._progress()
                else:
                    rack = w.racks[a.carried_rack]
                    rack.position_state = RackPosition.AT_HOME
                    rack.reserved = False
                    a.carried_rack = None
                    a.state = RobotState.IDLE
                    self.last_return = t
                    self.counts["returns"] += 1
                    self._event("return", a.id, rack.id)
                    self._progress()
            elif p is None and self.stalled.get(a.id) is Purpose.DELIVERY:
                self._start_delivery(a, w.racks[a.carried_rack])

        still: list[tuple[int, Robot, Rack]] = []
        for ready_t, a, rack in self.outbound:
            if ready_t > t or not self._start_return(a, rack):
                still.append((ready_t, a, rack))
        self.outbound = still

    def _start_return(self, a: Robot, rack: Rack) -> bool:
        w = self.world
        station = w.pickers[rack.picker_id].location
        if w.table.cell_busy(w.grid.index(station), w.t):
            self.counts["return_blocked"] += 1
            return False
        # the robot reappears at the station only once it holds a path
        path = self._route(a, station, rack.home, Purpose.RETURN)
        if path is None:
            return False
        a.location = station
        a.on_grid = True
        a.state = RobotState.RETURNING
        rack.position_state = RackPosition.CARRIED
        w.commit_path(a, path)
        self._record(path)
        self._event("depart", a.id, rack.id)
        return True

    def _plan(self) -> None:
        w = self.world
        if not any(a.idle and a.on_grid for a in w.robots.values()):
            return
        if not any(r.selectable for r in w.racks.values()):
            return
        scheme = self.planner.plan(w, w.t)
        self.stc += scheme.stc_s
        self.ptc += scheme.ptc_s
        self.counts["nopath_pickup"] += len(scheme.cancelled)
        for path in scheme.paths.values():
            self._record(path)
            self._event("assign", path.robot_id, w.robots[path.robot_id].target_rack)

    def _process(self) -> int:
        w = self.world
        busy = 0
        for p in w.pickers.values():
            if p.current_item is None:
                head = p.queue[0] if p.queue else None
                if head is None:
                    continue
                if head.batch is None:
                    head.batch = head.pending
                    head.pending = []
                    for a in w.robots.values():
                        if a.carried_rack == head.id:
                            a.state = RobotState.AT_PROCESSING
                p.current_item = head.batch.pop(0)
                p.remaining_current = p.current_item.processing_time
            head = p.queue[0]
            p.remaining_current -= 1
            p.accumulated += 1
            head.accumulated += 1
            self.picker_busy[p.id] += 1
            self.processed_work += 1
            busy += 1
            if p.remaining_current == 0:
                p.current_item = None
                if not head.batch:
                    head.batch = None
                    p.queue.popleft()
                    carrier = next(a for a in w.robots.values() if a.carried_rack == head.id)
                    self.outbound.append((w.t + 1, carrier, head))
                    self._event("processed", carrier.id, head.id)
        if busy:
            self._progress()
        return busy

    def _advance(self) -> None:
        w = self.world
        nt = w.t + 1
        before: dict[int, Location] = {}
        after: dict[Location, int] = {}
        for a in w.robots.values():
            if not a.on_grid:
                continue
            before[a.id] = a.location
            if a.current_path is not None:
                nxt = a.current_path.at(nt)
                if nxt is not None:
                    a.location = nxt
            if self.check_invariants:
                other = after.get(a.location)
                if other is not None:
                    raise InvariantViolation(
                        f"robots {other} and {a.id} both at {tuple(a.location)} at t={nt}"
                    )
                after[a.location] = a.id
        if self.check_invariants:
            for rid, old in before.items():
                new = w.robots[rid].location
                if new != old:
                    j = after.get(old)
                    if j is not None and j != rid and before.get(j) == new:
                        raise InvariantViolation(f"robots {rid} and {j} swapped {tuple(old)}<->{tuple(new)} at t={w.t}")

    def _active(self) -> bool:
        w = self.world
        return (
            any(not a.idle for a in w.robots.values())
            or any(p.queue for p in w.pickers.values())
            or any(r.pending for r in w.racks.values())
        )

    # --- driver -------------------------------------------------------------------

    def step(self) -> None:
        w = self.world
        self._inject()
        self._finish_legs()
        self._plan()
        self._finish_legs()
        self._process()
        busy_robots = 0
        for a in w.robots.values():
            if not a.idle:
                a.busy_ticks += 1
                busy_robots += 1
        if self.tick_log is not None:
            busy_p = sum(1 for p in w.pickers.values() if p.queue)
            self.tick_log.append((w.t, busy_p, busy_robots, w.pending_items))
        entries = w.table.entry_count
        if entries > self.peak_entries:
            self.peak_entries = entries
        self._advance()
        w.t += 1
        w.table.prune(w.t)
        if w.t - self._last_progress > self.livelock_after:
            raise Livelock(f"no progress for {self.livelock_after} ticks (t={w.t}, {w.pending_items} items pending)")

    @property
    def done(self) -> bool:
        return not self.world.pending_events and not self._active()

    def run(self) -> SimReport:
        w = self.world
        while not self.done:
            if not self._active() and w.pending_events and w.pending_events[0].emerge_time > w.t:
                # nothing moves until the next arrival
                w.t = w.pending_events[0].emerge_time
                w.table.prune(w.t)
                self._last_progress = w.t
            self.step()
        return self.report()

    def report(self) -> SimReport:
        w = self.world
        if self.first_emerge is None or self.last_return is None:
            makespan = 0
        else:
            makespan = self.last_return - self.first_emerge
        m, ppr, rwr = compute_metrics(
            makespan, self.picker_busy.values(), (a.busy_ticks for a in w.robots.values())
        )
        self.counts["cache_hits"] = w.search_stats.cache_hits
        return SimReport(
            planner=self.planner.name,
            seed=0,
            makespan=m,
            ppr=ppr,
            rwr=rwr,
            stc_ms=self.stc * 1e3,
            ptc_ms=self.ptc * 1e3,
            mc_proxy=self.peak_entries + w.search_stats.peak_open,
            peak_table_entries=self.peak_entries,
            peak_open_set=w.search_stats.peak_open,
            event_counts=dict(self.counts),
            rack_deliveries={rid: r.deliveries for rid, r in w.racks.items() if r.deliveries},
            processed_work=self.processed_work,
            first_emerge=self.first_emerge,
            last_return=self.last_return,
            event_digest=self._digest.hexdigest(),
            hyperparams=self.planner.hp.to_dict(),
            per_tick_log=self.tick_log,
            executed_paths=self.paths,
        )


def run(
    scenario: Scenario,
    planner: str | Planner,
    hp: HyperParams | None = None,
    seed: int = 0,
    *,
    record_ticks: bool = False,
    record_paths: bool = False,
) -> SimReport:
    """Simulate ``scenario`` to completion under one planner."""
    p = make_planner(planner, hp, seed) if isinstance(planner, str) else planner
    sim = Simulation(scenario, p, record_ticks=record_ticks, record_paths=record_paths)
    rep = sim.run()
    rep.seed = seed
    return rep


def run_episodes(
    scenario: Scenario,
    planner: str,
    episodes: int,
    hp: HyperParams | None = None,
    seed: int = 0,
    q: QTable | None = None,
    **kw: Any,
) -> tuple[list[SimReport], QTable]:
    """Replay one scenario ``episodes`` times, carrying the Q-table forward.

    The planner RNG is seeded once and keeps its stream across episodes.
    """
    p = make_planner(planner, hp, seed)
    if q is not None:
        p.q = q
    reports = []
    for ep in range(episodes):
        sim = Simulation(scenario, p, **kw)
        rep = sim.run()
        rep.seed = seed
        rep.episode = ep
        reports.append(rep)
    return reports, p.q
