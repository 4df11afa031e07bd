from __future__ import annotations

import io
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import aisle_cells, open_grid, random_rows, random_walk, spacetime_bfs, static_bfs
from rackplan.errors import NoPath, ReservationClash, StaleQuery
from rackplan.pathfinding import (
    ConflictDetectionTable,
    ConflictKind,
    Path,
    PathCache,
    Purpose,
    SearchStats,
    SpaceTimeGraph,
    astar,
    cache_aided_astar,
    cache_build,
    cdt_check,
    cdt_insert,
    cdt_prune,
    detect_conflict,
    write_path_trace,
)
from rackplan.warehouse_model import Location as L


def P(t0, *cells, rid=0):
    return Path(rid, t0, tuple(L(*c) for c in cells))


# --- Path / detect_conflict ----------------------------------------------------


def test_path_rejects_jumps():
    with pytest.raises(ValueError):
        P(0, (0, 0), (2, 0))


def test_path_accessors():
    p = P(3, (0, 0), (0, 0), (1, 0))
    assert p.end_t == 5 and len(p) == 2 and p.waits == 1
    assert p.at(4) == L(0, 0) and p.at(9) is None
    assert p.steps[-1] == (5, L(1, 0))


def test_single_grid_conflict():
    p = P(4, (1, 2), (2, 2))
    q = P(4, (3, 2), (2, 2))
    c = detect_conflict(p, q)
    assert c.kind is ConflictKind.SINGLE_GRID and c.time == 5 and c.cells == (L(2, 2),)


def test_inter_grid_conflict():
    p = P(3, (1, 1), (1, 2))
    q = P(3, (1, 2), (1, 1))
    c = detect_conflict(p, q)
    assert c.kind is ConflictKind.INTER_GRID and c.time == 3


def test_disjoint_corridors():
    assert detect_conflict(P(0, (0, 0), (1, 0), (2, 0)), P(0, (0, 2), (1, 2), (2, 2))) is None


def test_non_overlapping_times_never_conflict():
    assert detect_conflict(P(0, (0, 0), (1, 0)), P(2, (0, 0), (1, 0))) is None


# --- reservation tables ---------------------------------------------------------


@pytest.fixture(params=[ConflictDetectionTable, SpaceTimeGraph], ids=["cdt", "stg"])
def table_cls(request):
    return request.param


def test_insert_then_check_self_collides(table_cls):
    g = open_grid(3, 3)
    tab = table_cls(g)
    p = P(0, (0, 0), (1, 0), (2, 0))
    cdt_insert(tab, p)
    c = tab.path_conflict(p)
    assert c is not None and c.time == 0
    with pytest.raises(ReservationClash):
        tab.insert(p)


def test_empty_table_check_false(table_cls):
    tab = table_cls(open_grid(3, 3))
    assert not cdt_check(tab, (L(0, 0), L(1, 0), 0))
    assert not cdt_check(tab, (L(1, 1), L(1, 1), 7))


def test_check_arrival_cell_and_swap(table_cls):
    tab = table_cls(open_grid(3, 3))
    tab.insert(P(0, (0, 0), (1, 0), (2, 0)))
    assert cdt_check(tab, (L(1, 1), L(1, 0), 0))  # (1,0) reserved at t=1
    assert not cdt_check(tab, (L(1, 1), L(1, 0), 1))
    assert cdt_check(tab, (L(2, 0), L(1, 0), 1))  # reverse of (1,0)->(2,0) at 1


def test_two_disjoint_paths_queryable(table_cls):
    tab = table_cls(open_grid(3, 3))
    p, q = P(0, (0, 0), (1, 0)), P(0, (0, 2), (1, 2))
    tab.insert(p)
    tab.insert(q)
    for path in (p, q):
        for t, loc in path.steps:
            assert tab.cell_busy(tab.grid.index(loc), t)


def test_swap_reported_as_inter_grid(table_cls):
    tab = table_cls(open_grid(3, 3))
    p = P(0, (0, 1), (1, 1), (2, 1))
    tab.insert(p)
    q = P(1, (2, 1), (1, 1))
    c = tab.path_conflict(q)
    assert c.kind is ConflictKind.INTER_GRID and c.time == 1
    assert detect_conflict(p, q).kind is ConflictKind.INTER_GRID


def test_prune_counts(table_cls):
    tab = table_cls(open_grid(1, 10))
    assert cdt_prune(tab, 0) == 0
    p = P(0, *[(x, 0) for x in range(10)])
    tab.insert(p)
    # one reservation per tick before t=5
    assert cdt_prune(tab, 5) == 5
    assert tab.low_watermark == 5
    with pytest.raises(StaleQuery):
        cdt_check(tab, (L(0, 0), L(1, 0), 4))
    with pytest.raises(StaleQuery):
        tab.insert(P(3, (0, 0)))


def test_prune_counts_with_waits():
    tab = ConflictDetectionTable(open_grid(1, 4))
    p = P(0, (0, 0), (0, 0), (0, 0), (1, 0), (2, 0), (3, 0), (3, 0), (3, 0), (3, 0), (3, 0))
    tab.insert(p)
    # replay: cell-ticks with t < 5
    expected = sum(1 for t, _ in p.steps if t < 5)
    assert tab.prune(5) == expected
    assert tab.reserved_times(L(0, 0)) == set()
    assert tab.reserved_times(L(3, 0)) == {5, 6, 7, 8, 9}


def test_cdt_retained_entries_bounded_by_live_footprint():
    g = open_grid(4, 4)
    tab = ConflictDetectionTable(g)
    rng = random.Random(3)
    rows = ["...."] * 4
    live: list[Path] = []
    for now in range(0, 200, 5):
        start = (rng.randrange(4), rng.randrange(4))
        p = random_walk(rng, rows, start, now, 8, robot_id=now)
        if tab.path_conflict(p) is None:
            tab.insert(p)
            live.append(p)
        tab.prune(now)
        remaining = sum(max(0, p.end_t - now + 1) for p in live)
        assert tab.cell_entries <= remaining
    # bounded independent of elapsed time
    assert tab.cell_entries <= 2 * 9


def test_spacetime_graph_memory_is_dense():
    g = open_grid(5, 5)
    stg, cdt = SpaceTimeGraph(g), ConflictDetectionTable(g)
    p = P(0, *[(x, 0) for x in range(5)])
    stg.insert(p)
    cdt.insert(p)
    assert stg.entry_count == 5 * 25
    assert cdt.entry_count == 5 + 4


# --- astar ----------------------------------------------------------------------


def test_astar_unobstructed():
    tab = ConflictDetectionTable(open_grid(3, 3))
    p = astar(tab, L(0, 0), L(2, 0), 0)
    assert p.end_t == 2 and len(p) == 2


def test_astar_one_wait_on_corridor():
    g = open_grid(1, 3)
    tab = ConflictDetectionTable(g)
    blocker = Path(9, 1, (L(1, 0),))
    tab.insert(blocker)
    p = astar(tab, L(0, 0), L(2, 0), 0)
    assert p.end_t == 3
    assert p.locs == (L(0, 0), L(0, 0), L(1, 0), L(2, 0))
    assert spacetime_bfs(g.rows, [blocker], (0, 0), (2, 0), 0, 40) == 3


def test_astar_identity():
    tab = ConflictDetectionTable(open_grid(3, 3))
    p = astar(tab, L(1, 1), L(1, 1), 4)
    assert p.start_t == 4 and p.end_t == 4 and p.locs == (L(1, 1),)


def test_astar_tie_break_is_deterministic():
    tab = ConflictDetectionTable(open_grid(3, 3))
    a = astar(tab, L(0, 0), L(2, 2), 0)
    b = astar(tab, L(0, 0), L(2, 2), 0)
    assert a == b
    # larger g first, then move order up,down,left,right: down before right
    assert a.locs[1] == L(0, 1)


def test_astar_no_path_around_parked_robot():
    g = open_grid(1, 3)
    tab = ConflictDetectionTable(g)
    with pytest.raises(NoPath):
        astar(tab, L(0, 0), L(2, 0), 0, blocked={g.index(L(1, 0))})


def test_astar_never_passes_through_endpoints():
    rows = ["...", ".S.", "..."]
    g = open_grid(3, 3, rows)
    tab = ConflictDetectionTable(g)
    p = astar(tab, L(1, 0), L(1, 2), 0)
    assert L(1, 1) not in p.locs
    assert len(p) == 4
    # the endpoint itself is reachable as a destination
    q = astar(tab, L(1, 0), L(1, 1), 0)
    assert q.locs[-1] == L(1, 1) and len(q) == 1


def test_astar_frontier_exhaustion_raises_no_path():
    g = open_grid(1, 2)
    tab = ConflictDetectionTable(g)
    # both the start cell and its only neighbor are taken at t=1
    tab.insert(Path(8, 1, (L(0, 0),)))
    tab.insert(Path(9, 1, (L(1, 0),)))
    with pytest.raises(NoPath, match="frontier exhausted"):
        astar(tab, L(0, 0), L(1, 0), 0)


def test_astar_waits_out_a_long_reservation():
    g = open_grid(1, 2)
    tab = ConflictDetectionTable(g)
    tab.insert(Path(9, 0, (L(1, 0),) * 20))
    assert astar(tab, L(0, 0), L(1, 0), 0).end_t == 20


def test_stats_collected():
    st_ = SearchStats()
    tab = ConflictDetectionTable(open_grid(4, 4))
    astar(tab, L(0, 0), L(3, 3), 0, stats=st_)
    assert st_.searches == 1 and st_.expansions >= 6 and st_.peak_open >= 1


def _random_instance(rng: random.Random):
    h, w = rng.randint(2, 6), rng.randint(2, 6)
    while True:
        rows = random_rows(rng, h, w, 0.2)
        cells = aisle_cells(rows)
        if len(cells) >= 2:
            break
    g = open_grid(h, w, rows)
    tab = ConflictDetectionTable(g)
    reserved = []
    for i in range(rng.randint(0, 3)):
        for _ in range(10):
            p = random_walk(rng, rows, rng.choice(cells), rng.randint(0, 10), rng.randint(0, 20), robot_id=i)
            if tab.path_conflict(p) is None:
                tab.insert(p)
                reserved.append(p)
                break
    return rows, g, tab, reserved, cells


def test_astar_matches_spacetime_bfs_oracle_small():
    rng = random.Random(11)
    checked = 0
    while checked < 60:
        rows, g, tab, reserved, cells = _random_instance(rng)
        src, dst = rng.sample(cells, 2)
        t0 = rng.randint(0, 5)
        if tab.cell_busy(g.index(L(*src)), t0):
            continue
        horizon = max(t0, tab.max_time) + 4 * (g.height + g.width)
        want = spacetime_bfs(rows, reserved, src, dst, t0, horizon)
        try:
            got = astar(tab, L(*src), L(*dst), t0).end_t
        except NoPath:
            got = None
        assert got == want, (rows, reserved, src, dst, t0)
        checked += 1


# --- cache ----------------------------------------------------------------------


def test_cache_L1_open_map_adjacent_pairs_only():
    g = open_grid(3, 3)
    c = cache_build(g, 1)
    pairs = set(c.pairs())
    expect = {(a, b) for a in g.traversable_cells() for b in g.traversable_cells() if abs(a.x - b.x) + abs(a.y - b.y) == 1}
    assert pairs == expect
    assert all(len(c.lookup(a, b)) - 1 == 1 for a, b in pairs)
    assert len(c) == 24


def test_cache_threshold_boundary():
    g = open_grid(1, 6)
    c = cache_build(g, 3)
    assert (L(0, 0), L(3, 0)) in c
    assert (L(0, 0), L(4, 0)) not in c
    assert c.lookup(L(0, 0), L(4, 0)) is None


def test_cache_lengths_match_bfs_oracle_10x10():
    rng = random.Random(5)
    rows = random_rows(rng, 10, 10, 0.25)
    g = open_grid(10, 10, rows)
    cells = aisle_cells(rows)
    c = cache_build(g, 6, [L(*d) for d in cells])
    n = 0
    for s in cells:
        for d in cells:
            if s == d or abs(s[0] - d[0]) + abs(s[1] - d[1]) > 6:
                continue
            want = static_bfs(rows, s, d)
            shape = c.lookup(L(*s), L(*d))
            if want is None:
                assert shape is None
            else:
                assert len(shape) - 1 == want
                n += 1
    assert n > 100


def test_cache_rejects_bad_threshold():
    with pytest.raises(ValueError):
        PathCache(open_grid(2, 2), 0)


def test_cache_aided_equals_astar_on_empty_table():
    g = open_grid(6, 6)
    cache = cache_build(g, 50)
    a = astar(ConflictDetectionTable(g), L(0, 0), L(5, 4), 2)
    b = cache_aided_astar(ConflictDetectionTable(g), cache, L(0, 0), L(5, 4), 2)
    assert a.end_t == b.end_t


def test_cache_aided_equals_astar_on_empty_obstacle_map():
    # manhattan underestimates here, so the first in-range vertex may be a detour
    rng = random.Random(3)
    for _ in range(40):
        rows = random_rows(rng, 12, 12, 0.3)
        cells = aisle_cells(rows)
        src, dst = rng.sample(cells, 2)
        if static_bfs(rows, src, dst) is None:
            continue
        g = open_grid(12, 12, rows)
        cache = PathCache(g, rng.randint(1, 12))
        a = astar(ConflictDetectionTable(g), L(*src), L(*dst), 0)
        b = cache_aided_astar(ConflictDetectionTable(g), cache, L(*src), L(*dst), 0)
        assert a.end_t == b.end_t == static_bfs(rows, src, dst)


def test_cache_aided_waits_on_reserved_tail():
    g = open_grid(1, 5)
    tab = ConflictDetectionTable(g)
    other = Path(9, 2, (L(2, 0), L(2, 0)))
    tab.insert(other)
    cache = cache_build(g, 10)
    p = cache_aided_astar(tab, cache, L(0, 0), L(4, 0), 0)
    assert detect_conflict(p, other) is None
    # cached shape is the straight corridor; waiting before (2,0) is inserted
    assert [l for i, l in enumerate(p.locs) if i == 0 or l != p.locs[i - 1]] == [L(x, 0) for x in range(5)]
    assert p.waits >= 1
    assert p.end_t >= astar(tab, L(0, 0), L(4, 0), 0).end_t


def test_cache_hit_first_occurs_within_threshold():
    g = open_grid(1, 12)
    cache = PathCache(g, 3)
    st_ = SearchStats()
    p = cache_aided_astar(ConflictDetectionTable(g), cache, L(0, 0), L(11, 0), 0, stats=st_)
    assert st_.cache_hits == 1
    # A* expanded the eight cells farther than L before the cache took over
    assert st_.expansions == 8
    assert p.end_t == 11


def test_write_path_trace():
    buf = io.StringIO()
    write_path_trace([P(0, (0, 0), (1, 0), rid=3)], buf)
    assert buf.getvalue().splitlines() == ["robot,t,x,y", "3,0,0,0", "3,1,1,0"]


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_returned_paths_conflict_free_against_reservations(seed):
    rng = random.Random(seed)
    rows, g, tab, reserved, cells = _random_instance(rng)
    src, dst = rng.sample(cells, 2)
    if tab.cell_busy(g.index(L(*src)), 0):
        return
    cache = PathCache(g, rng.randint(1, 6))
    for search in (astar, lambda *a, **k: cache_aided_astar(a[0], cache, *a[1:], **k)):
        try:
            p = search(tab, L(*src), L(*dst), 0, purpose=Purpose.RETURN)
        except NoPath:
            continue
        for q in reserved:
            assert detect_conflict(p, q) is None
        assert p.purpose is Purpose.RETURN
