"""Reference implementations kept independent of the package internals.

They work on raw row strings and coordinate tuples so that a bug in the
package's cell indexing or neighbor tables cannot leak into the oracle.
"""

from __future__ import annotations

import random
from collections import deque
from typing import Iterable, Sequence

from rackplan.pathfinding import Path
from rackplan.warehouse_model import GridMap, Location

Cell = tuple[int, int]
STEPS = ((0, 0), (0, -1), (0, 1), (-1, 0), (1, 0))


def open_grid(h: int, w: int, rows: Sequence[str] | None = None) -> GridMap:
    """GridMap without rack or picker bindings, for pure path-finding tests."""
    rows = tuple(rows) if rows is not None else tuple("." * w for _ in range(h))
    return GridMap(h, w, rows, {}, {}, {})


def static_bfs(rows: Sequence[str], src: Cell, dst: Cell) -> int | None:
    """Shortest move count ignoring time, through '.' cells, src/dst as endpoints."""
    h, w = len(rows), len(rows[0])
    dist = {src: 0}
    todo = deque([src])
    while todo:
        x, y = todo.popleft()
        if (x, y) == dst:
            return dist[(x, y)]
        for dx, dy in STEPS[1:]:
            n = (x + dx, y + dy)
            if not (0 <= n[0] < w and 0 <= n[1] < h) or n in dist:
                continue
            if n != dst and rows[n[1]][n[0]] != ".":
                continue
            dist[n] = dist[(x, y)] + 1
            todo.append(n)
    return None


def reservations(paths: Iterable[Path]) -> tuple[set[tuple[Cell, int]], set[tuple[Cell, Cell, int]]]:
    cells: set[tuple[Cell, int]] = set()
    edges: set[tuple[Cell, Cell, int]] = set()
    for p in paths:
        for i, loc in enumerate(p.locs):
            cells.add((tuple(loc), p.start_t + i))
        for i in range(len(p.locs) - 1):
            a, b = tuple(p.locs[i]), tuple(p.locs[i + 1])
            if a != b:
                edges.add((a, b, p.start_t + i))
    return cells, edges


def spacetime_bfs(
    rows: Sequence[str],
    reserved: Iterable[Path],
    src: Cell,
    dst: Cell,
    start_t: int,
    horizon: int,
) -> int | None:
    """Earliest arrival tick at ``dst`` by layered BFS over (cell, t), t <= horizon."""
    h, w = len(rows), len(rows[0])
    cells, edges = reservations(reserved)
    frontier = {src}
    t = start_t
    while frontier:
        if dst in frontier:
            return t
        if t >= horizon:
            return None
        nxt = set()
        for c in frontier:
            for dx, dy in STEPS:
                n = (c[0] + dx, c[1] + dy)
                if not (0 <= n[0] < w and 0 <= n[1] < h):
                    continue
                if n == c:
                    if rows[c[1]][c[0]] != "." and c != src:
                        continue
                elif n != dst and rows[n[1]][n[0]] != ".":
                    continue
                if (n, t + 1) in cells:
                    continue
                if n != c and (n, c, t) in edges:
                    continue
                nxt.add(n)
        frontier = nxt
        t += 1
    return None


def pairwise_conflict(p: Path, q: Path) -> tuple[str, int] | None:
    """Earliest (kind, time) conflict by direct enumeration of both timelines."""
    pa = {p.start_t + i: tuple(l) for i, l in enumerate(p.locs)}
    qa = {q.start_t + i: tuple(l) for i, l in enumerate(q.locs)}
    for t in sorted(set(pa) & set(qa)):
        if pa[t] == qa[t]:
            return ("single_grid", t)
        if t + 1 in pa and t + 1 in qa:
            if pa[t] == qa[t + 1] and pa[t + 1] == qa[t] and pa[t] != pa[t + 1]:
                return ("inter_grid", t)
    return None


def random_walk(rng: random.Random, rows: Sequence[str], start: Cell, t0: int, n: int, robot_id: int = 0) -> Path:
    h, w = len(rows), len(rows[0])
    locs = [start]
    for _ in range(n):
        x, y = locs[-1]
        opts = [
            (x + dx, y + dy)
            for dx, dy in STEPS
            if 0 <= x + dx < w and 0 <= y + dy < h and rows[y + dy][x + dx] == "."
        ]
        locs.append(rng.choice(opts))
    return Path(robot_id, t0, tuple(Location(*c) for c in locs))


def random_rows(rng: random.Random, h: int, w: int, density: float) -> list[str]:
    return ["".join("S" if rng.random() < density else "." for _ in range(w)) for _ in range(h)]


def aisle_cells(rows: Sequence[str]) -> list[Cell]:
    return [(x, y) for y, r in enumerate(rows) for x, ch in enumerate(r) if ch == "."]
