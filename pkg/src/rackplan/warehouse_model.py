"""Static warehouse layout and the entity records the simulator mutates.

Layout documents are plain text::

    # comments start with '#'
    H W
    <H rows of W characters: '.' aisle, 'S' storage / rack home, 'P' picker station>
    racks:
    <rack_id> <x> <y> <picker_id>
    pickers:
    <picker_id> <x> <y>

Rack homes and picker stations are path endpoints only: a robot may start on
one, end on one, or wait on its start cell, but never pass through one.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, NamedTuple

from .errors import ConfigError, LayoutError, SchemaError

if TYPE_CHECKING:
    from .pathfinding import Path


class Location(NamedTuple):
    x: int
    y: int


# Move order used everywhere a deterministic neighbor order matters.
MOVES: tuple[tuple[int, int], ...] = ((0, -1), (0, 1), (-1, 0), (1, 0))


class CellRole(str, enum.Enum):
    AISLE = "."
    STORAGE = "S"
    STATION = "P"


def manhattan(a: Location, b: Location) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


@dataclass(eq=True)
class GridMap:
    """Immutable H x W layout with rack and picker bindings.

    ``rack_homes`` maps rack id to its storage cell, ``rack_picker`` maps rack
    id to the picker it serves, ``picker_stations`` maps picker id to its
    station cell. Cell-index helpers (``index``/``loc``) and the precomputed
    4-neighbor table are what the path finders use in their inner loops.
    """

    height: int
    width: int
    rows: tuple[str, ...]
    rack_homes: dict[int, Location]
    rack_picker: dict[int, int]
    picker_stations: dict[int, Location]
    name: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        h, w = self.height, self.width
        self.aisle = bytearray(1 if ch == "." else 0 for row in self.rows for ch in row)
        adj = []
        for y in range(h):
            for x in range(w):
                nbrs = []
                for dx, dy in MOVES:
                    nx, ny = x + dx, y + dy
                    if 0 <= nx < w and 0 <= ny < h:
                        nbrs.append(ny * w + nx)
                    else:
                        nbrs.append(-1)
                adj.append(tuple(nbrs))
        self.adj: tuple[tuple[int, ...], ...] = tuple(adj)
        self.xs = tuple(i % w for i in range(h * w))
        self.ys = tuple(i // w for i in range(h * w))
        self.home_of = {loc: rid for rid, loc in self.rack_homes.items()}

    @property
    def size(self) -> int:
        return self.height * self.width

    def index(self, loc: Location) -> int:
        return loc[1] * self.width + loc[0]

    def loc(self, idx: int) -> Location:
        return Location(idx % self.width, idx // self.width)

    def in_bounds(self, loc: Location) -> bool:
        return 0 <= loc[0] < self.width and 0 <= loc[1] < self.height

    def role(self, loc: Location) -> CellRole:
        return CellRole(self.rows[loc[1]][loc[0]])

    def is_aisle(self, loc: Location) -> bool:
        return self.rows[loc[1]][loc[0]] == "."

    def is_endpoint(self, loc: Location) -> bool:
        return self.rows[loc[1]][loc[0]] != "."

    def traversable_cells(self) -> list[Location]:
        """Aisle cells plus bound rack homes and picker stations."""
        cells = [self.loc(i) for i in range(self.size) if self.aisle[i]]
        cells.extend(self.rack_homes.values())
        cells.extend(self.picker_stations.values())
        return sorted(set(cells), key=self.index)

    def rack_ids(self) -> list[int]:
        return sorted(self.rack_homes)

    def picker_ids(self) -> list[int]:
        return sorted(self.picker_stations)


def neighbors(g: GridMap, l: Location, allow: Iterable[Location] = ()) -> list[Location]:
    """In-bounds 4-neighbors of ``l`` a robot may step onto.

    Aisle cells are always allowed; endpoint cells (rack homes, stations)
    only if listed in ``allow``, i.e. the cell being targeted.
    """
    allowed = set(allow)
    out = []
    for dx, dy in MOVES:
        n = Location(l[0] + dx, l[1] + dy)
        if g.in_bounds(n) and (g.is_aisle(n) or n in allowed):
            out.append(n)
    return out


def _parse_ints(line: str, n: int, lineno: int) -> list[int]:
    parts = line.split()
    if len(parts) != n:
        raise SchemaError(f"line {lineno}: expected {n} integers, got {line!r}")
    try:
        return [int(p) for p in parts]
    except ValueError:
        raise SchemaError(f"line {lineno}: non-integer field in {line!r}") from None


def load_layout(data: bytes | str, name: str = "") -> GridMap:
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    lines = [
        (i + 1, ln.rstrip())
        for i, ln in enumerate(text.splitlines())
        if ln.strip() and not ln.lstrip().startswith("#")
    ]
    if not lines:
        raise SchemaError("empty layout document")
    lineno, header = lines[0]
    h, w = _parse_ints(header, 2, lineno)
    if h <= 0 or w <= 0:
        raise SchemaError("layout dimensions must be positive")
    if len(lines) < 1 + h:
        raise SchemaError(f"expected {h} grid rows")
    rows = []
    for lineno, row in lines[1 : 1 + h]:
        row = row.strip()
        if len(row) != w or set(row) - {".", "S", "P"}:
            raise SchemaError(f"line {lineno}: bad grid row {row!r}")
        rows.append(row)

    racks: dict[int, tuple[Location, int]] = {}
    pickers: dict[int, Location] = {}
    section = None
    for lineno, ln in lines[1 + h :]:
        key = ln.strip()
        if key in ("racks:", "pickers:"):
            section = key
            continue
        if section == "racks:":
            rid, x, y, pid = _parse_ints(ln, 4, lineno)
            if rid in racks:
                raise SchemaError(f"line {lineno}: duplicate rack id {rid}")
            racks[rid] = (Location(x, y), pid)
        elif section == "pickers:":
            pid, x, y = _parse_ints(ln, 3, lineno)
            if pid in pickers:
                raise SchemaError(f"line {lineno}: duplicate picker id {pid}")
            pickers[pid] = Location(x, y)
        else:
            raise SchemaError(f"line {lineno}: content outside a section: {ln!r}")

    def cell(loc: Location) -> str:
        return rows[loc.y][loc.x]

    seen: dict[Location, str] = {}
    for rid, (loc, pid) in racks.items():
        if not (0 <= loc.x < w and 0 <= loc.y < h):
            raise LayoutError(f"rack {rid} home {tuple(loc)} out of bounds")
        if cell(loc) != "S":
            raise LayoutError(f"rack {rid} home {tuple(loc)} is not a storage cell")
        if pid not in pickers:
            raise LayoutError(f"rack {rid} bound to unknown picker {pid}")
        if loc in seen:
            raise LayoutError(f"rack {rid} shares cell {tuple(loc)} with {seen[loc]}")
        seen[loc] = f"rack {rid}"
    for pid, loc in pickers.items():
        if not (0 <= loc.x < w and 0 <= loc.y < h):
            raise LayoutError(f"picker {pid} station {tuple(loc)} out of bounds")
        if cell(loc) != "P":
            raise LayoutError(f"picker {pid} station {tuple(loc)} is not a station cell")
        if loc in seen:
            raise LayoutError(f"picker {pid} shares cell {tuple(loc)} with {seen[loc]}")
        seen[loc] = f"picker {pid}"
    if not racks or not pickers:
        raise LayoutError("layout needs at least one rack and one picker")

    grid = GridMap(
        height=h,
        width=w,
        rows=tuple(rows),
        rack_homes={rid: loc for rid, (loc, _) in sorted(racks.items())},
        rack_picker={rid: pid for rid, (_, pid) in sorted(racks.items())},
        picker_stations=dict(sorted(pickers.items())),
        name=name,
    )
    _check_connected(grid)
    return grid


def _check_connected(g: GridMap) -> None:
    aisle = [i for i in range(g.size) if g.aisle[i]]
    if not aisle:
        raise LayoutError("layout has no aisle cells")
    seen = {aisle[0]}
    todo = deque([aisle[0]])
    while todo:
        c = todo.popleft()
        for n in g.adj[c]:
            if n >= 0 and g.aisle[n] and n not in seen:
                seen.add(n)
                todo.append(n)
    if len(seen) != len(aisle):
        raise LayoutError(f"aisle network is disconnected ({len(seen)} of {len(aisle)} cells reachable)")
    endpoints = [("rack", k, v) for k, v in g.rack_homes.items()]
    endpoints += [("picker", k, v) for k, v in g.picker_stations.items()]
    for kind, ident, loc in endpoints:
        if not any(n >= 0 and n in seen for n in g.adj[g.index(loc)]):
            raise LayoutError(f"{kind} {ident} at {tuple(loc)} has no aisle access")


def save_layout(g: GridMap) -> bytes:
    out = [f"{g.height} {g.width}", *g.rows, "racks:"]
    out += [f"{rid} {loc.x} {loc.y} {g.rack_picker[rid]}" for rid, loc in sorted(g.rack_homes.items())]
    out.append("pickers:")
    out += [f"{pid} {loc.x} {loc.y}" for pid, loc in sorted(g.picker_stations.items())]
    return ("\n".join(out) + "\n").encode("utf-8")


def make_block_layout(
    block_rows: int,
    block_cols: int,
    n_pickers: int,
    block_h: int = 2,
    block_w: int = 5,
    both_sides: bool = True,
) -> GridMap:
    """Kiva-style layout: storage blocks separated by one-cell aisles.

    Stations sit on the outer columns (left, and right when ``both_sides``),
    every other row. Racks are bound to pickers round-robin by rack id.
    """
    if block_h > 2:
        raise ConfigError("block_h > 2 leaves interior homes without aisle access")
    h = 1 + block_rows * (block_h + 1)
    w = 2 + block_cols * (block_w + 1) + (1 if both_sides else 0)
    grid = [["."] * w for _ in range(h)]
    homes = []
    for br in range(block_rows):
        for bc in range(block_cols):
            y0 = 1 + br * (block_h + 1)
            x0 = 2 + bc * (block_w + 1)
            for dy in range(block_h):
                for dx in range(block_w):
                    grid[y0 + dy][x0 + dx] = "S"
                    homes.append(Location(x0 + dx, y0 + dy))
    slots = [Location(0, y) for y in range(0, h, 2)]
    if both_sides:
        right = [Location(w - 1, y) for y in range(0, h, 2)]
        slots = [s for pair in zip(slots, right) for s in pair]
    if not 1 <= n_pickers <= len(slots):
        raise ConfigError(f"n_pickers must be in [1, {len(slots)}] for this layout")
    stations = {}
    for pid, loc in enumerate(slots[:n_pickers]):
        grid[loc.y][loc.x] = "P"
        stations[pid] = loc
    g = GridMap(
        height=h,
        width=w,
        rows=tuple("".join(r) for r in grid),
        rack_homes=dict(enumerate(homes)),
        rack_picker={rid: rid % n_pickers for rid in range(len(homes))},
        picker_stations=stations,
        name=f"blocks-{block_rows}x{block_cols}-p{n_pickers}",
    )
    _check_connected(g)
    return g


# --- mutable entity records -------------------------------------------------


@dataclass(frozen=True)
class Item:
    emerge_time: int
    processing_time: int
    rack_id: int

    def __post_init__(self) -> None:
        if self.processing_time <= 0:
            raise ValueError("processing_time must be positive")
        if self.emerge_time < 0:
            raise ValueError("emerge_time must be non-negative")


class RackPosition(enum.Enum):
    AT_HOME = "at_home"
    CARRIED = "carried"
    AT_PICKER = "at_picker"


@dataclass(eq=False)
class Rack:
    id: int
    home: Location
    picker_id: int
    pending: list[Item] = field(default_factory=list)
    # items frozen into the current visit once processing starts
    batch: list[Item] | None = None
    position_state: RackPosition = RackPosition.AT_HOME
    reserved: bool = False
    accumulated: int = 0
    deliveries: int = 0

    @property
    def pending_sum(self) -> int:
        return sum(i.processing_time for i in self.pending)

    @property
    def queued_work(self) -> int:
        if self.batch is not None:
            return sum(i.processing_time for i in self.batch)
        return self.pending_sum

    @property
    def selectable(self) -> bool:
        return bool(self.pending) and not self.reserved and self.position_state is RackPosition.AT_HOME


@dataclass(eq=False)
class Picker:
    id: int
    location: Location
    queue: deque[Rack] = field(default_factory=deque)
    remaining_current: int = 0
    current_item: Item | None = None
    accumulated: int = 0


class RobotState(enum.Enum):
    IDLE = "idle"
    PICKING_UP = "picking_up"
    DELIVERING = "delivering"
    QUEUING = "queuing"
    AT_PROCESSING = "at_processing"
    RETURNING = "returning"


@dataclass(eq=False)
class Robot:
    id: int
    location: Location
    state: RobotState = RobotState.IDLE
    current_path: Path | None = None
    carried_rack: int | None = None
    target_rack: int | None = None
    on_grid: bool = True
    # last tick this robot holds a reservation for (its path end)
    reserved_until: int = -1
    busy_ticks: int = 0

    @property
    def idle(self) -> bool:
        return self.state is RobotState.IDLE
