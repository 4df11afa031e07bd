"""The four selection-and-routing policies behind one interface.

Every planner selects racks for idle robots, pairs each selected rack with
the closest idle robot, plans the pickup leg, and inserts it into the shared
reservation table before planning the next one, so selection order is
reservation order.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from .errors import ConfigError, NoPath
from .pathfinding import (
    ConflictDetectionTable,
    Path,
    PathCache,
    Purpose,
    ReservationTable,
    SearchStats,
    SpaceTimeGraph,
    astar,
    cache_aided_astar,
)
from .rl_selection import (
    HyperParams,
    QTable,
    epsilon_greedy,
    finish_picker,
    greedy_bootstrap_select,
    learn_selected,
    rack_state,
)
from .warehouse_model import GridMap, Location, Picker, Rack, Robot, manhattan

PLANNER_NAMES = ("ntp", "lef", "atp", "eatp")


class PlanningWorld(Protocol):
    t: int
    grid: GridMap
    racks: dict[int, Rack]
    pickers: dict[int, Picker]
    robots: dict[int, Robot]
    table: ReservationTable
    search_stats: SearchStats

    def parked_cells(self, exclude: int | None = None) -> set[int]: ...
    def commit_pickup(self, robot: Robot, rack: Rack, path: Path) -> None: ...


@dataclass
class SelectionScheme:
    t: int
    pairs: list[tuple[int, int]] = field(default_factory=list)

    def __post_init__(self) -> None:
        robots = [a for _, a in self.pairs]
        if len(set(robots)) != len(robots):
            raise ValueError("robot assigned twice in one selection scheme")

    def __len__(self) -> int:
        return len(self.pairs)


@dataclass
class PlanningScheme:
    t: int
    selection: SelectionScheme
    paths: dict[int, Path] = field(default_factory=dict)
    # (rack id, robot id) pairs whose pickup search raised NoPath
    cancelled: list[tuple[int, int]] = field(default_factory=list)
    stc_s: float = 0.0
    ptc_s: float = 0.0


class NearestRackIndex:
    """Static per-cell list of the K nearest rack homes (Manhattan, ties by id)."""

    def __init__(self, grid: GridMap, K: int) -> None:
        racks = grid.rack_ids()
        if not 1 <= K <= len(racks):
            raise ConfigError(f"K must be in [1, {len(racks)}], got {K}")
        self.K = K
        self.grid = grid
        homes = np.array([grid.rack_homes[r] for r in racks], dtype=np.int64)
        cells = np.array([grid.loc(i) for i in range(grid.size)], dtype=np.int64)
        dist = np.abs(cells[:, None, :] - homes[None, :, :]).sum(axis=2)
        # stable sort keeps rack-id order among equal distances
        order = np.argsort(dist, axis=1, kind="stable")[:, :K]
        ids = np.array(racks, dtype=np.int64)[order]
        self._lists: list[tuple[int, ...]] = [tuple(int(r) for r in row) for row in ids]

    def nearest(self, loc: Location) -> tuple[int, ...]:
        return self._lists[self.grid.index(loc)]


def build_nearest_rack_index(layout: GridMap, K: int) -> NearestRackIndex:
    return NearestRackIndex(layout, K)


def _closest_robot(rack: Rack, robots: list[Robot]) -> Robot:
    return min(robots, key=lambda a: (manhattan(a.location, rack.home), a.id))


def _idle_robots(world: PlanningWorld) -> list[Robot]:
    return [a for _, a in sorted(world.robots.items()) if a.idle and a.on_grid]


SearchFn = Callable[..., Path]


def _assign_and_route(
    world: PlanningWorld,
    t: int,
    rack_ids: list[int],
    idle: list[Robot],
    search: SearchFn,
) -> PlanningScheme:
    """Pair racks with their closest idle robot and route the pickups in order."""
    chosen: list[tuple[Rack, Robot]] = []
    free = list(idle)
    for rid in rack_ids:
        if not free:
            break
        rack = world.racks[rid]
        a = _closest_robot(rack, free)
        free.remove(a)
        chosen.append((rack, a))
    scheme = PlanningScheme(t, SelectionScheme(t, [(r.id, a.id) for r, a in chosen]))
    t0 = time.perf_counter()
    for rack, a in chosen:
        try:
            path = search(
                world.table,
                a.location,
                rack.home,
                t,
                blocked=world.parked_cells(exclude=a.id),
                robot_id=a.id,
                purpose=Purpose.PICKUP,
                stats=world.search_stats,
            )
        except NoPath:
            scheme.cancelled.append((rack.id, a.id))
            continue
        world.commit_pickup(a, rack, path)
        scheme.paths[a.id] = path
    scheme.ptc_s = time.perf_counter() - t0
    return scheme


class Planner:
    """Base planner; subclasses provide ``select``."""

    name = "base"
    uses_learning = False

    def __init__(self, hp: HyperParams | None = None, seed: int = 0) -> None:
        self.hp = hp or HyperParams()
        self.rng = random.Random(seed)
        self.q: QTable = QTable(bucket_width=self.hp.bucket_width)

    def make_table(self, grid: GridMap) -> ReservationTable:
        return SpaceTimeGraph(grid)

    def prepare(self, grid: GridMap) -> None:
        """Build static indices for a layout; called once per run."""

    def route(self, *args, **kwargs) -> Path:
        return astar(*args, **kwargs)

    def select(self, world: PlanningWorld, idle: list[Robot]) -> list[int]:
        """Rack ids to serve this tick, in reservation order."""
        raise NotImplementedError

    def plan(self, world: PlanningWorld, t: int) -> PlanningScheme:
        idle = _idle_robots(world)
        if not idle:
            return PlanningScheme(t, SelectionScheme(t))
        t0 = time.perf_counter()
        rack_ids = self.select(world, idle)
        stc = time.perf_counter() - t0
        scheme = _assign_and_route(world, t, rack_ids, idle, self.route)
        scheme.stc_s = stc
        return scheme


class NTPPlanner(Planner):
    name = "ntp"

    def select(self, world, idle):
        f = {pid: finish_picker(p) for pid, p in world.pickers.items()}
        by_picker: dict[int, list[int]] = {}
        for rid in sorted(world.racks):
            rack = world.racks[rid]
            if rack.selectable:
                by_picker.setdefault(rack.picker_id, []).append(rid)
        out: list[int] = []
        for pid in sorted(by_picker, key=lambda p: (f[p], p)):
            out.extend(by_picker[pid])
            if len(out) >= len(idle):
                break
        return out[: len(idle)]


class LEFPlanner(Planner):
    name = "lef"

    def select(self, world, idle):
        cands = [r for r in world.racks.values() if r.selectable]
        cands.sort(key=lambda r: (min(i.emerge_time for i in r.pending), r.id))
        return [r.id for r in cands[: len(idle)]]


class ATPPlanner(Planner):
    name = "atp"
    uses_learning = True

    def select(self, world, idle):
        if self.rng.random() < self.hp.delta:
            return greedy_bootstrap_select(world, len(idle), self.q, self.hp)
        q, hp = self.q, self.hp
        cands = [(r, rack_state(world, r)) for r in world.racks.values() if r.selectable]
        cands.sort(key=lambda rs: (-q.get(rs[1], 0), rs[0].id))
        out: list[int] = []
        for rack, s in cands:
            if epsilon_greedy(q, s, hp, self.rng) == 1:
                out.append(rack.id)
                learn_selected(world, rack, q, hp)
            if len(out) == len(idle):
                break
        return out


class EATPPlanner(ATPPlanner):
    name = "eatp"

    def __init__(self, hp: HyperParams | None = None, seed: int = 0) -> None:
        super().__init__(hp, seed)
        self.index: NearestRackIndex | None = None
        self.cache: PathCache | None = None
        self.evaluations = 0

    def make_table(self, grid: GridMap) -> ReservationTable:
        return ConflictDetectionTable(grid)

    def prepare(self, grid: GridMap) -> None:
        if self.index is None or self.index.grid is not grid:
            self.index = build_nearest_rack_index(grid, min(self.hp.K, len(grid.rack_homes)))
            self.cache = PathCache(grid, self.hp.L)
            # destinations are rack homes and stations; fields are filled lazily
            self.cache.build(grid.picker_stations.values())

    def route(self, table, src, dst, start_t, **kw) -> Path:
        return cache_aided_astar(table, self.cache, src, dst, start_t, **kw)

    def select(self, world, idle):
        if self.rng.random() < self.hp.delta:
            return greedy_bootstrap_select(world, len(idle), self.q, self.hp)
        assert self.index is not None, "prepare() not called"
        q, hp = self.q, self.hp
        out: list[int] = []
        taken: set[int] = set()
        for a in idle:
            for rid in self.index.nearest(a.location):
                rack = world.racks[rid]
                if rid in taken or not rack.selectable:
                    continue
                self.evaluations += 1
                s = rack_state(world, rack)
                if epsilon_greedy(q, s, hp, self.rng) == 1:
                    out.append(rid)
                    taken.add(rid)
                    learn_selected(world, rack, q, hp)
                    break
        return out


_PLANNERS: dict[str, type[Planner]] = {
    "ntp": NTPPlanner,
    "lef": LEFPlanner,
    "atp": ATPPlanner,
    "eatp": EATPPlanner,
}


def make_planner(name: str, hp: HyperParams | None = None, seed: int = 0) -> Planner:
    try:
        cls = _PLANNERS[name]
    except KeyError:
        raise ConfigError(f"unknown planner {name!r}; choose from {', '.join(PLANNER_NAMES)}") from None
    return cls(hp, seed)


def plan_ntp(world: PlanningWorld, t: int) -> PlanningScheme:
    return NTPPlanner().plan(world, t)


def plan_lef(world: PlanningWorld, t: int) -> PlanningScheme:
    return LEFPlanner().plan(world, t)


def plan_atp(world: PlanningWorld, t: int, q: QTable, hp: HyperParams, rng: random.Random) -> PlanningScheme:
    p = ATPPlanner(hp)
    p.q, p.rng = q, rng
    return p.plan(world, t)


def plan_eatp(
    world: PlanningWorld,
    t: int,
    q: QTable,
    hp: HyperParams,
    rng: random.Random,
    index: NearestRackIndex,
    cache: PathCache,
) -> PlanningScheme:
    p = EATPPlanner(hp)
    p.q, p.rng, p.index, p.cache = q, rng, index, cache
    return p.plan(world, t)
