"""Single-robot conflict-free path search over shared reservations.

Two reservation backends expose the same query surface (``cell_busy``,
``swap_busy``, ``insert``, ``prune``):

* ``ConflictDetectionTable`` keeps, per grid cell, the set of reserved
  timestamps plus directed edge reservations. Its size tracks the live path
  footprint only.
* ``SpaceTimeGraph`` materializes one dense H*W layer per future timestep,
  i.e. the full time-expanded graph. It exists as the memory reference.

Search moves are tried in the fixed order wait, up, down, left, right.
"""

from __future__ import annotations

import csv
import enum
import heapq
from array import array
from collections import deque
from dataclasses import dataclass, field
from typing import IO, Iterable, NamedTuple, Protocol

from .errors import NoPath, ReservationClash, StaleQuery
from .warehouse_model import GridMap, Location, manhattan


class Purpose(str, enum.Enum):
    PICKUP = "pickup"
    DELIVERY = "delivery"
    RETURN = "return"


@dataclass(frozen=True)
class Path:
    robot_id: int
    start_t: int
    locs: tuple[Location, ...]
    purpose: Purpose = Purpose.PICKUP

    def __post_init__(self) -> None:
        if not self.locs:
            raise ValueError("a path has at least one step")
        for a, b in zip(self.locs, self.locs[1:]):
            if manhattan(a, b) > 1:
                raise ValueError(f"non-adjacent consecutive steps {a} -> {b}")

    @property
    def end_t(self) -> int:
        return self.start_t + len(self.locs) - 1

    @property
    def source(self) -> Location:
        return self.locs[0]

    @property
    def destination(self) -> Location:
        return self.locs[-1]

    @property
    def steps(self) -> list[tuple[int, Location]]:
        return [(self.start_t + i, loc) for i, loc in enumerate(self.locs)]

    def at(self, t: int) -> Location | None:
        i = t - self.start_t
        if 0 <= i < len(self.locs):
            return self.locs[i]
        return None

    @property
    def waits(self) -> int:
        return sum(1 for a, b in zip(self.locs, self.locs[1:]) if a == b)

    def __len__(self) -> int:
        """Number of moves (waits included)."""
        return len(self.locs) - 1


class ConflictKind(str, enum.Enum):
    SINGLE_GRID = "single_grid"
    INTER_GRID = "inter_grid"


class Conflict(NamedTuple):
    kind: ConflictKind
    time: int
    cells: tuple[Location, ...]


def detect_conflict(p: Path, q: Path) -> Conflict | None:
    """Earliest conflict between two paths, or None.

    At equal times a single-grid conflict is reported before an inter-grid
    one. Inter-grid conflicts are stamped with the departure tick.
    """
    lo = max(p.start_t, q.start_t)
    hi = min(p.end_t, q.end_t)
    for t in range(lo, hi + 1):
        a, b = p.at(t), q.at(t)
        if a == b:
            return Conflict(ConflictKind.SINGLE_GRID, t, (a,))
        if t < hi:
            a1, b1 = p.at(t + 1), q.at(t + 1)
            if a == b1 and a1 == b and a != a1:
                return Conflict(ConflictKind.INTER_GRID, t, (a, a1))
    return None


class ReservationTable(Protocol):
    grid: GridMap
    low_watermark: int
    max_time: int

    def cell_busy(self, c: int, t: int) -> bool: ...
    def swap_busy(self, u: int, v: int, t: int) -> bool: ...
    def insert(self, path: Path, skip_first: bool = False) -> None: ...
    def prune(self, now: int) -> int: ...
    @property
    def entry_count(self) -> int: ...


class _TableQueries:
    """Location-level queries shared by both backends."""

    grid: GridMap
    low_watermark: int

    def check(self, frm: Location, to: Location, depart_t: int) -> bool:
        """True iff moving ``frm -> to`` departing at ``depart_t`` conflicts."""
        if depart_t < self.low_watermark:
            raise StaleQuery(f"query at t={depart_t} below watermark {self.low_watermark}")
        g = self.grid
        u, v = g.index(frm), g.index(to)
        if self.cell_busy(v, depart_t + 1):
            return True
        return u != v and self.swap_busy(u, v, depart_t)

    def path_conflict(self, path: Path) -> Conflict | None:
        """Screen a whole path against the table; earliest conflict first."""
        g = self.grid
        cells = [g.index(loc) for loc in path.locs]
        t0 = path.start_t
        if t0 < self.low_watermark:
            raise StaleQuery(f"path starts at t={t0} below watermark {self.low_watermark}")
        if self.cell_busy(cells[0], t0):
            return Conflict(ConflictKind.SINGLE_GRID, t0, (path.locs[0],))
        for i in range(len(cells) - 1):
            u, v, t = cells[i], cells[i + 1], t0 + i
            if u != v and self.swap_busy(u, v, t):
                return Conflict(ConflictKind.INTER_GRID, t, (path.locs[i], path.locs[i + 1]))
            if self.cell_busy(v, t + 1):
                return Conflict(ConflictKind.SINGLE_GRID, t + 1, (path.locs[i + 1],))
        return None

    def _check_insertable(self, cells: list[int], t0: int, start: int) -> None:
        for i in range(start, len(cells)):
            if self.cell_busy(cells[i], t0 + i):
                raise ReservationClash(f"cell {self.grid.loc(cells[i])} already reserved at t={t0 + i}")


class ConflictDetectionTable(_TableQueries):
    def __init__(self, grid: GridMap) -> None:
        self.grid = grid
        self._cells: list[set[int]] = [set() for _ in range(grid.size)]
        self._cells_at: dict[int, list[int]] = {}
        self._edges: set[tuple[int, int, int]] = set()
        self._edges_at: dict[int, list[tuple[int, int, int]]] = {}
        self.low_watermark = 0
        self.max_time = -1
        self._n_cells = 0

    def cell_busy(self, c: int, t: int) -> bool:
        return t in self._cells[c]

    def swap_busy(self, u: int, v: int, t: int) -> bool:
        return (v, u, t) in self._edges

    def reserved_times(self, loc: Location) -> set[int]:
        return set(self._cells[self.grid.index(loc)])

    def insert(self, path: Path, skip_first: bool = False) -> None:
        g = self.grid
        cells = [g.index(loc) for loc in path.locs]
        t0 = path.start_t
        if t0 < self.low_watermark:
            raise StaleQuery(f"path starts at t={t0} below watermark {self.low_watermark}")
        start = 1 if skip_first else 0
        self._check_insertable(cells, t0, start)
        for i in range(start, len(cells)):
            c, t = cells[i], t0 + i
            self._cells[c].add(t)
            self._cells_at.setdefault(t, []).append(c)
        self._n_cells += len(cells) - start
        for i in range(len(cells) - 1):
            u, v = cells[i], cells[i + 1]
            if u != v:
                e = (u, v, t0 + i)
                self._edges.add(e)
                self._edges_at.setdefault(t0 + i, []).append(e)
        self.max_time = max(self.max_time, path.end_t)

    def prune(self, now: int) -> int:
        if now < self.low_watermark:
            raise StaleQuery(f"prune at t={now} below watermark {self.low_watermark}")
        removed = 0
        for t in range(self.low_watermark, now):
            for c in self._cells_at.pop(t, ()):
                self._cells[c].discard(t)
                removed += 1
            for e in self._edges_at.pop(t, ()):
                self._edges.discard(e)
        self._n_cells -= removed
        self.low_watermark = now
        return removed

    @property
    def cell_entries(self) -> int:
        return self._n_cells

    @property
    def entry_count(self) -> int:
        return self._n_cells + len(self._edges)


class SpaceTimeGraph(_TableQueries):
    """Dense time-expanded occupancy: one H*W layer per live timestep."""

    def __init__(self, grid: GridMap) -> None:
        self.grid = grid
        self._occ: dict[int, bytearray] = {}
        self._out: dict[int, array] = {}
        self.low_watermark = 0
        self.max_time = -1

    def _layer(self, t: int) -> bytearray:
        # materialize every layer up to t so the graph is contiguous in time
        n = self.grid.size
        for s in range(max(self.low_watermark, self.max_time + 1), t + 1):
            self._occ[s] = bytearray(n)
            self._out[s] = array("i", [-1]) * n
        self.max_time = max(self.max_time, t)
        return self._occ[t]

    def cell_busy(self, c: int, t: int) -> bool:
        layer = self._occ.get(t)
        return layer is not None and layer[c] != 0

    def swap_busy(self, u: int, v: int, t: int) -> bool:
        layer = self._out.get(t)
        return layer is not None and layer[v] == u

    def insert(self, path: Path, skip_first: bool = False) -> None:
        g = self.grid
        cells = [g.index(loc) for loc in path.locs]
        t0 = path.start_t
        if t0 < self.low_watermark:
            raise StaleQuery(f"path starts at t={t0} below watermark {self.low_watermark}")
        start = 1 if skip_first else 0
        self._check_insertable(cells, t0, start)
        self._layer(path.end_t)
        for i in range(start, len(cells)):
            self._occ[t0 + i][cells[i]] = 1
        for i in range(len(cells) - 1):
            if cells[i] != cells[i + 1]:
                self._out[t0 + i][cells[i]] = cells[i + 1]

    def prune(self, now: int) -> int:
        if now < self.low_watermark:
            raise StaleQuery(f"prune at t={now} below watermark {self.low_watermark}")
        removed = 0
        for t in range(self.low_watermark, now):
            layer = self._occ.pop(t, None)
            if layer is not None:
                removed += sum(layer)
                del self._out[t]
        self.low_watermark = now
        return removed

    @property
    def entry_count(self) -> int:
        return len(self._occ) * self.grid.size


def cdt_insert(cdt: ReservationTable, p: Path) -> None:
    cdt.insert(p)


def cdt_check(cdt: _TableQueries, candidate_move: tuple[Location, Location, int]) -> bool:
    frm, to, depart_t = candidate_move
    return cdt.check(frm, to, depart_t)


def cdt_prune(cdt: ReservationTable, now: int) -> int:
    return cdt.prune(now)


# --- search -------------------------------------------------------------------


@dataclass
class SearchStats:
    searches: int = 0
    expansions: int = 0
    peak_open: int = 0
    cache_hits: int = 0

    def merge_open(self, n: int) -> None:
        if n > self.peak_open:
            self.peak_open = n


def _horizon(table: ReservationTable, start_t: int) -> int:
    g = table.grid
    return max(start_t, table.max_time) + 4 * (g.height + g.width)


def _statically_reachable(grid: GridMap, sc: int, dc: int, blocked: set[int] | frozenset[int]) -> bool:
    aisle, adj = grid.aisle, grid.adj
    seen = {sc}
    todo = deque([sc])
    while todo:
        c = todo.popleft()
        for n in adj[c]:
            if n == dc:
                return True
            if n >= 0 and aisle[n] and n not in seen and n not in blocked:
                seen.add(n)
                todo.append(n)
    return False


def _search(
    table: ReservationTable,
    src: Location,
    dst: Location,
    start_t: int,
    blocked: set[int] | frozenset[int],
    robot_id: int,
    purpose: Purpose,
    stats: SearchStats | None,
    cache: PathCache | None,
) -> Path:
    grid = table.grid
    if start_t < table.low_watermark:
        raise StaleQuery(f"search from t={start_t} below watermark {table.low_watermark}")
    sc, dc = grid.index(src), grid.index(dst)
    if stats is not None:
        stats.searches += 1
    if sc == dc:
        return Path(robot_id, start_t, (src,), purpose)
    if dc in blocked or (blocked and not _statically_reachable(grid, sc, dc, blocked)):
        raise NoPath(f"{src} -> {dst} unreachable around parked robots")

    limit = _horizon(table, start_t)
    xs, ys, adj, aisle = grid.xs, grid.ys, grid.adj, grid.aisle
    gx, gy = xs[dc], ys[dc]
    cell_busy, swap_busy = table.cell_busy, table.swap_busy
    cache_l = cache.threshold if cache is not None else -1

    parent: dict[tuple[int, int], tuple[int, int] | None] = {(sc, start_t): None}
    h0 = abs(xs[sc] - gx) + abs(ys[sc] - gy)
    heap = [(h0, 0, 0, sc, start_t)]
    counter = 1
    peak = 1
    expansions = 0
    found: tuple[int, int] | None = None
    tail: list[int] | None = None
    # cached completions, pushed as terminal entries under cell id -1 - i
    completions: list[tuple[int, int, list[int]]] = []

    while heap:
        if len(heap) > peak:
            peak = len(heap)
        _, _, _, c, t = heapq.heappop(heap)
        if c < 0:
            oc, ot, tail = completions[-1 - c]
            found = (oc, ot)
            if stats is not None:
                stats.cache_hits += 1
            break
        if c == dc:
            found = (c, t)
            break
        if cache_l >= 0 and abs(xs[c] - gx) + abs(ys[c] - gy) <= cache_l:
            rest = _follow_cached(table, cache, c, dc, t, limit, blocked)
            if rest is not None:
                # keyed by its true arrival, so a detour vertex cannot win early
                g_end = t + len(rest) - start_t
                heapq.heappush(heap, (g_end, -g_end, counter, -1 - len(completions), t))
                completions.append((c, t, rest))
                counter += 1
                continue
        if t >= limit:
            continue
        expansions += 1
        nt = t + 1
        g_next = nt - start_t
        # wait in place: legal on aisle cells and on the start cell
        if (aisle[c] or c == sc) and not cell_busy(c, nt):
            key = (c, nt)
            if key not in parent:
                parent[key] = (c, t)
                heapq.heappush(heap, (g_next + abs(xs[c] - gx) + abs(ys[c] - gy), -g_next, counter, c, nt))
                counter += 1
        for n in adj[c]:
            if n < 0:
                continue
            if n != dc and (not aisle[n] or n in blocked):
                continue
            if cell_busy(n, nt) or swap_busy(c, n, t):
                continue
            key = (n, nt)
            if key in parent:
                continue
            parent[key] = (c, t)
            heapq.heappush(heap, (g_next + abs(xs[n] - gx) + abs(ys[n] - gy), -g_next, counter, n, nt))
            counter += 1

    if stats is not None:
        stats.expansions += expansions
        stats.merge_open(peak)
    if found is None:
        raise NoPath(f"{src} -> {dst} from t={start_t}: frontier exhausted by t={limit}")
    cells = []
    node: tuple[int, int] | None = found
    while node is not None:
        cells.append(node[0])
        node = parent[node]
    cells.reverse()
    if tail is not None:
        cells.extend(tail)
    loc = grid.loc
    return Path(robot_id, start_t, tuple(loc(c) for c in cells), purpose)


def astar(
    table: ReservationTable,
    src: Location,
    dst: Location,
    start_t: int,
    *,
    blocked: set[int] | frozenset[int] = frozenset(),
    robot_id: int = -1,
    purpose: Purpose = Purpose.PICKUP,
    stats: SearchStats | None = None,
) -> Path:
    """Earliest-arrival conflict-free path on the time-expanded grid.

    ``blocked`` holds cell indices of parked robots, treated as obstacles
    for every future tick. Ties on f prefer the deeper node, then the
    earlier-generated one, which makes the output deterministic.
    """
    return _search(table, src, dst, start_t, blocked, robot_id, purpose, stats, None)


class PathCache:
    """Conflict-ignorant shortest paths for pairs within Manhattan distance L.

    Stored as one BFS distance field per destination cell; a cached path is
    recovered by descending the field, taking the first improving neighbor
    in move order.
    """

    def __init__(self, grid: GridMap, threshold: int) -> None:
        if threshold < 1:
            raise ValueError("cache threshold must be >= 1")
        self.grid = grid
        self.threshold = threshold
        self._fields: dict[int, array] = {}

    def _field(self, dc: int) -> array:
        fld = self._fields.get(dc)
        if fld is None:
            grid = self.grid
            aisle, adj = grid.aisle, grid.adj
            fld = array("i", [-1]) * grid.size
            fld[dc] = 0
            todo = deque([dc])
            while todo:
                c = todo.popleft()
                d = fld[c] + 1
                for n in adj[c]:
                    if n >= 0 and aisle[n] and fld[n] < 0:
                        fld[n] = d
                        todo.append(n)
            self._fields[dc] = fld
        return fld

    def build(self, destinations: Iterable[Location]) -> None:
        for d in destinations:
            self._field(self.grid.index(d))

    def _distance(self, fld: array, sc: int) -> int:
        if fld[sc] >= 0 and (self.grid.aisle[sc] or fld[sc] == 0):
            return fld[sc]
        best = -1
        for n in self.grid.adj[sc]:
            if n >= 0 and fld[n] >= 0 and (self.grid.aisle[n] or fld[n] == 0):
                if best < 0 or fld[n] + 1 < best:
                    best = fld[n] + 1
        return best

    def tail_cells(self, sc: int, dc: int) -> list[int] | None:
        grid = self.grid
        if abs(grid.xs[sc] - grid.xs[dc]) + abs(grid.ys[sc] - grid.ys[dc]) > self.threshold:
            return None
        fld = self._field(dc)
        d = self._distance(fld, sc)
        if d < 0:
            return None
        aisle, adj = grid.aisle, grid.adj
        out = [sc]
        c = sc
        while d > 0:
            for n in adj[c]:
                if n >= 0 and fld[n] == d - 1 and (aisle[n] or n == dc):
                    c = n
                    break
            out.append(c)
            d -= 1
        return out

    def lookup(self, src: Location, dst: Location) -> tuple[Location, ...] | None:
        cells = self.tail_cells(self.grid.index(src), self.grid.index(dst))
        if cells is None:
            return None
        return tuple(self.grid.loc(c) for c in cells)

    def __contains__(self, pair: tuple[Location, Location]) -> bool:
        src, dst = pair
        return src != dst and self.lookup(src, dst) is not None

    def pairs(self) -> Iterable[tuple[Location, Location]]:
        """All cached (source, destination) pairs over built destinations."""
        cells = self.grid.traversable_cells()
        for dc in sorted(self._fields):
            dst = self.grid.loc(dc)
            for src in cells:
                if src != dst and manhattan(src, dst) <= self.threshold and self.tail_cells(self.grid.index(src), dc):
                    yield src, dst

    def __len__(self) -> int:
        return sum(1 for _ in self.pairs())


def cache_build(layout: GridMap, L: int, destinations: Iterable[Location] | None = None) -> PathCache:
    """Eagerly build fields for ``destinations`` (default: every traversable cell)."""
    cache = PathCache(layout, L)
    cache.build(layout.traversable_cells() if destinations is None else destinations)
    return cache


def _follow_cached(
    table: ReservationTable,
    cache: PathCache,
    c: int,
    dc: int,
    t: int,
    limit: int,
    blocked: set[int] | frozenset[int],
) -> list[int] | None:
    """Walk the cached shape from (c, t), waiting until each next move is clear.

    Returns the cells after ``c`` (one per tick) or None when the robot can
    neither advance nor hold its cell, or the walk overruns the horizon.
    """
    shape = cache.tail_cells(c, dc)
    if shape is None:
        return None
    cell_busy, swap_busy = table.cell_busy, table.swap_busy
    out: list[int] = []
    cur = c
    for nxt in shape[1:]:
        if nxt != dc and nxt in blocked:
            return None
        while True:
            if not cell_busy(nxt, t + 1) and not swap_busy(cur, nxt, t):
                out.append(nxt)
                cur = nxt
                t += 1
                break
            if cell_busy(cur, t + 1) or t >= limit:
                return None
            out.append(cur)
            t += 1
    return out


def cache_aided_astar(
    table: ReservationTable,
    cache: PathCache,
    src: Location,
    dst: Location,
    start_t: int,
    *,
    blocked: set[int] | frozenset[int] = frozenset(),
    robot_id: int = -1,
    purpose: Purpose = Purpose.PICKUP,
    stats: SearchStats | None = None,
) -> Path:
    """A* that hands off to the cached shortest shape once within L of ``dst``.

    A vertex within range is not expanded. Its cached remainder, walked with
    inserted waits, goes back on the open list keyed by its real arrival
    time, and the first goal popped wins. The arrival can therefore be later
    than ``astar``'s but equals it on an empty table. A vertex whose
    remainder is unusable is expanded normally.
    """
    return _search(table, src, dst, start_t, blocked, robot_id, purpose, stats, cache)


def write_path_trace(paths: Iterable[Path], fh: IO[str]) -> None:
    """CSV dump ``robot,t,x,y`` with one row per path step."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["robot", "t", "x", "y"])
    for p in paths:
        for t, loc in p.steps:
            w.writerow([p.robot_id, t, loc.x, loc.y])
