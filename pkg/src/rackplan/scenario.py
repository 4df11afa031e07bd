"""Workloads: seeded Poisson item streams, the adversarial two-picker instance,
and the JSON scenario format."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import ConfigError, GeometryError, SchemaError
from .warehouse_model import GridMap, Item, Location, load_layout, save_layout

FORMAT = "rackplan-scenario/1"


@dataclass
class Scenario:
    layout: GridMap
    items: list[Item]
    robots_init: list[tuple[int, Location]]
    seed: int = 0
    horizon_hint: int | None = None
    layout_ref: str = ""
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        known = self.layout.rack_homes
        for it in self.items:
            if it.rack_id not in known:
                raise SchemaError(f"item references unknown rack {it.rack_id}")
        if any(a.emerge_time > b.emerge_time for a, b in zip(self.items, self.items[1:])):
            raise SchemaError("items must be sorted by emerge_time")
        ids = [rid for rid, _ in self.robots_init]
        if len(set(ids)) != len(ids):
            raise SchemaError("duplicate robot id")
        cells = [loc for _, loc in self.robots_init]
        if len(set(cells)) != len(cells):
            raise SchemaError("two robots share a start cell")
        for loc in cells:
            if not self.layout.in_bounds(loc):
                raise SchemaError(f"robot start {tuple(loc)} out of bounds")
            if self.layout.role(loc).value == "S" and loc not in self.layout.home_of:
                raise SchemaError(f"robot start {tuple(loc)} is an unbound storage cell")

    @property
    def total_processing(self) -> int:
        return sum(it.processing_time for it in self.items)


def generate_poisson(
    layout: GridMap,
    rate: float,
    count: int,
    processing_range: tuple[int, int] = (20, 40),
    seed: int = 0,
    n_robots: int = 1,
) -> Scenario:
    """Poisson arrivals (first item at t=0), uniform racks, uniform integer durations.

    Robots start on distinct rack homes drawn from the same generator.
    """
    lo, hi = processing_range
    if rate <= 0:
        raise ConfigError("rate must be positive")
    if lo > hi or lo < 1:
        raise ConfigError("processing range needs 1 <= lo <= hi")
    if count < 1:
        raise ConfigError("count must be >= 1")
    racks = layout.rack_ids()
    if not racks:
        raise ConfigError("layout has no racks")
    if not 1 <= n_robots <= len(racks):
        raise ConfigError(f"n_robots must be in [1, {len(racks)}]")
    rng = np.random.default_rng(seed)
    gaps = rng.exponential(1.0 / rate, size=count - 1)
    times = np.floor(np.concatenate(([0.0], np.cumsum(gaps)))).astype(np.int64)
    durs = rng.integers(lo, hi + 1, size=count)
    which = rng.integers(0, len(racks), size=count)
    items = [Item(int(t), int(d), racks[int(r)]) for t, d, r in zip(times, durs, which)]
    starts = rng.permutation(len(racks))[:n_robots]
    robots = [(i, layout.rack_homes[racks[int(s)]]) for i, s in enumerate(starts)]
    return Scenario(
        layout=layout,
        items=items,
        robots_init=robots,
        seed=seed,
        horizon_hint=int(times[-1]) + hi,
        layout_ref=layout.name,
        meta={"generator": "poisson", "rate": rate, "processing_range": [lo, hi]},
    )


@dataclass(frozen=True)
class BadCaseParams:
    """Two pickers, one robot: p1 owns one rack with k items, p2 owns k racks."""

    k: int
    D: int
    xi: int
    M: int
    D_list: tuple[int, ...] = ()
    gap: int = 1

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if min(self.D, self.xi, self.M, self.gap) <= 0:
            raise ConfigError("durations must be positive")
        if not self.D_list:
            object.__setattr__(self, "D_list", (8,) * self.k)
        object.__setattr__(self, "D_list", tuple(self.D_list))
        if len(self.D_list) != self.k:
            raise ConfigError("D_list needs exactly k entries")
        if any(d <= 0 for d in self.D_list):
            raise ConfigError("durations must be positive")
        if self.gap >= min(self.D_list):
            raise ConfigError("arrival gap on p2's racks must be shorter than every D_j")

    def ntp_makespan(self) -> int:
        return self.k * (self.D + self.xi) + self.M + sum(self.D_list) + self.k * self.xi

    def opt_makespan(self) -> int:
        return self.D + self.k * self.xi + 2 * self.M + sum(self.D_list) + self.k * self.xi

    def ratio(self) -> float:
        return self.ntp_makespan() / self.opt_makespan()


def _diamond(cx: int, cy: int, rho: int) -> list[Location]:
    """Radius-``rho`` diamond cells in cyclic order from the leftmost cell."""
    out = []
    for i in range(rho):
        out.append(Location(cx - rho + i, cy - i))
    for i in range(rho):
        out.append(Location(cx + i, cy - rho + i))
    for i in range(rho):
        out.append(Location(cx + rho - i, cy + i))
    for i in range(rho):
        out.append(Location(cx - i, cy + rho - i))
    return out


def generate_bad_case(p: BadCaseParams) -> Scenario:
    """Lay out the adversarial instance on a single corridor row.

    p1's station sits at the left end and its rack D'/2 cells to the right,
    where D' is D rounded up to even. p2's station is the centre of a
    diamond of radius rho = (D_j - 2) / 2 whose cells hold p2's racks in
    cyclic order, so consecutive racks are 2 apart and each round trip with
    its pickup hop costs D_j. The leftmost diamond cell is M past p1's rack.
    """
    if len(set(p.D_list)) != 1:
        raise GeometryError("a single diamond realizes only uniform D_j")
    dj = p.D_list[0]
    if dj < 4:
        raise GeometryError("D_j must be >= 4 (pickup hop 2 plus a round trip of at least 2)")
    rho = math.ceil((dj - 2) / 2)
    if 4 * rho < p.k:
        raise GeometryError(f"radius {rho} diamond holds {4 * rho} racks, need {p.k}")
    half = math.ceil(p.D / 2)
    if p.D < 2:
        raise GeometryError("D must be >= 2")
    cy = rho + 1
    h = 2 * rho + 3
    home_r = Location(half, cy)
    cx = half + p.M + rho
    w = cx + rho + 2
    rows = [["."] * w for _ in range(h)]
    p1, p2 = Location(0, cy), Location(cx, cy)
    rows[p1.y][p1.x] = "P"
    rows[p2.y][p2.x] = "P"
    rows[home_r.y][home_r.x] = "S"
    ring = _diamond(cx, cy, rho)[: p.k]
    for loc in ring:
        rows[loc.y][loc.x] = "S"
    homes = {0: home_r, **{j + 1: loc for j, loc in enumerate(ring)}}
    binding = {0: 0, **{j + 1: 1 for j in range(p.k)}}
    layout = GridMap(
        height=h,
        width=w,
        rows=tuple("".join(r) for r in rows),
        rack_homes=homes,
        rack_picker=binding,
        picker_stations={0: p1, 1: p2},
        name=f"badcase-k{p.k}",
    )
    # round-trip through the loader so the usual layout checks run
    layout = load_layout(save_layout(layout), name=layout.name)

    d_real = 2 * half
    dj_real = 2 + 2 * rho
    items = [Item(i * (d_real + p.xi), p.xi, 0) for i in range(p.k)]
    items += [Item((j + 1) * p.gap, p.xi, j + 1) for j in range(p.k)]
    items.sort(key=lambda it: (it.emerge_time, it.rack_id))
    realized = BadCaseParams(p.k, d_real, p.xi, p.M, (dj_real,) * p.k, p.gap)
    return Scenario(
        layout=layout,
        items=items,
        robots_init=[(0, home_r)],
        seed=0,
        horizon_hint=realized.ntp_makespan(),
        layout_ref=layout.name,
        meta={
            "generator": "badcase",
            "requested": {"k": p.k, "D": p.D, "xi": p.xi, "M": p.M, "D_list": list(p.D_list)},
            "realized": {"D": d_real, "M": p.M, "D_j": dj_real},
            "closed_form_ntp": realized.ntp_makespan(),
            "closed_form_opt": realized.opt_makespan(),
        },
    )


# --- JSON round trip ----------------------------------------------------------


def scenario_to_dict(s: Scenario) -> dict[str, Any]:
    return {
        "format": FORMAT,
        "layout_ref": s.layout_ref,
        "layout": save_layout(s.layout).decode("utf-8"),
        "seed": s.seed,
        "horizon_hint": s.horizon_hint,
        "robots": [{"id": rid, "x": loc.x, "y": loc.y} for rid, loc in s.robots_init],
        "items": [{"t": it.emerge_time, "rack": it.rack_id, "dur": it.processing_time} for it in s.items],
        "meta": s.meta,
    }


def save_scenario(s: Scenario) -> bytes:
    return json.dumps(scenario_to_dict(s), indent=1, sort_keys=True).encode("utf-8")


def load_scenario(data: bytes | str, layout: GridMap | None = None) -> Scenario:
    """Parse a scenario document; ``layout`` overrides the embedded one."""
    from .schemas import validate

    try:
        doc = json.loads(data)
    except json.JSONDecodeError as e:
        raise SchemaError(f"scenario is not valid JSON: {e}") from None
    validate(doc, "scenario")
    if layout is None:
        if "layout" not in doc:
            raise SchemaError(f"no embedded layout and none supplied for {doc['layout_ref']!r}")
        layout = load_layout(doc["layout"], name=doc.get("layout_ref", ""))
    raw = [(d["t"], d["rack"], d["dur"]) for d in doc["items"]]
    for t, rack, dur in raw:
        if rack not in layout.rack_homes:
            raise SchemaError(f"item references unknown rack {rack}")
    order = sorted(range(len(raw)), key=lambda i: raw[i][0])
    if order != list(range(len(raw))):
        warnings.warn("scenario items were out of emerge_time order; re-sorted", stacklevel=2)
    try:
        items = [Item(raw[i][0], raw[i][2], raw[i][1]) for i in order]
    except ValueError as e:
        raise SchemaError(str(e)) from None
    return Scenario(
        layout=layout,
        items=items,
        robots_init=[(r["id"], Location(r["x"], r["y"])) for r in doc["robots"]],
        seed=doc.get("seed", 0),
        horizon_hint=doc.get("horizon_hint"),
        layout_ref=doc.get("layout_ref", layout.name),
        meta=doc.get("meta", {}),
    )
