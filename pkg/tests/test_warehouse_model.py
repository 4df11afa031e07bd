from __future__ import annotations

import itertools
from collections import deque

import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import open_grid
from rackplan.errors import ConfigError, LayoutError, SchemaError
from rackplan.warehouse_model import (
    CellRole,
    Item,
    Location,
    load_layout,
    make_block_layout,
    manhattan,
    neighbors,
    save_layout,
)

MINIMAL = """\
3 3
S..
...
..P
racks:
0 0 0 0
pickers:
0 2 2
"""


@pytest.mark.parametrize(
    "a,b,d",
    [((0, 0), (3, 4), 7), ((5, 5), (5, 5), 0), ((2, 7), (9, 1), 13)],
)
def test_manhattan_examples(a, b, d):
    assert manhattan(Location(*a), Location(*b)) == d


def test_manhattan_metric_exhaustive_small_grid():
    cells = [Location(x, y) for x in range(4) for y in range(4)]
    for a, b in itertools.product(cells, repeat=2):
        assert manhattan(a, b) == manhattan(b, a) >= 0
        assert (manhattan(a, b) == 0) == (a == b)
    for a, b, c in itertools.product(cells, repeat=3):
        assert manhattan(a, c) <= manhattan(a, b) + manhattan(b, c)


@given(st.tuples(*[st.integers(-1000, 1000)] * 6))
def test_manhattan_triangle_property(v):
    a, b, c = Location(v[0], v[1]), Location(v[2], v[3]), Location(v[4], v[5])
    assert manhattan(a, c) <= manhattan(a, b) + manhattan(b, c)


def test_load_minimal_layout():
    g = load_layout(MINIMAL)
    assert (g.height, g.width) == (3, 3)
    assert g.rack_homes == {0: Location(0, 0)}
    assert g.picker_stations == {0: Location(2, 2)}
    assert g.role(Location(1, 1)) is CellRole.AISLE
    assert g.rack_picker[0] == 0


def test_rack_home_on_aisle_rejected():
    doc = MINIMAL.replace("0 0 0 0", "0 1 0 0")
    with pytest.raises(LayoutError, match="not a storage"):
        load_layout(doc)


def test_station_out_of_bounds_rejected():
    doc = MINIMAL.replace("0 2 2\n", "0 5 2\n")
    with pytest.raises(LayoutError, match="out of bounds"):
        load_layout(doc)


def _flood_reaches(rows, start, goal):
    h, w = len(rows), len(rows[0])
    seen = {start}
    todo = deque([start])
    while todo:
        x, y = todo.popleft()
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            n = (x + dx, y + dy)
            if n == goal:
                return True
            if 0 <= n[0] < w and 0 <= n[1] < h and rows[n[1]][n[0]] == "." and n not in seen:
                seen.add(n)
                todo.append(n)
    return False


def test_storage_wall_disconnecting_station_rejected():
    doc = """\
4 3
S..
...
SSS
.P.
racks:
0 0 0 0
pickers:
0 1 3
"""
    rows = ["S..", "...", "SSS", ".P."]
    # flood-fill oracle: the station is not reachable from the rack's aisle side
    assert not _flood_reaches(rows, (1, 0), (1, 3))
    with pytest.raises(LayoutError, match="disconnected"):
        load_layout(doc)


@pytest.mark.parametrize(
    "doc",
    ["", "3\n", "2 2\n..\n", "2 2\n..\n.X\nracks:\n", "1 2\nSP\nracks:\n0 0 0\n", "1 2\nSP\n0 0 0 0\n"],
)
def test_malformed_documents_raise_schema_error(doc):
    with pytest.raises(SchemaError):
        load_layout(doc)


def test_unknown_picker_binding_rejected():
    with pytest.raises(LayoutError, match="unknown picker"):
        load_layout(MINIMAL.replace("0 0 0 0", "0 0 0 7"))


def test_round_trip_is_bit_exact():
    g = make_block_layout(2, 2, 3)
    data = save_layout(g)
    g2 = load_layout(data)
    assert g2 == g
    assert save_layout(g2) == data


def test_neighbors_corner_and_interior():
    g = open_grid(3, 3)
    assert set(neighbors(g, Location(0, 0))) == {Location(1, 0), Location(0, 1)}
    assert len(neighbors(g, Location(1, 1))) == 4


def test_neighbors_exclude_non_target_rack_home():
    g = load_layout(MINIMAL)
    # (1,0) borders rack home (0,0)
    assert Location(0, 0) not in neighbors(g, Location(1, 0))
    assert Location(0, 0) in neighbors(g, Location(1, 0), allow=[Location(0, 0)])


def test_neighbors_never_out_of_bounds_or_storage():
    g = make_block_layout(2, 2, 2)
    for i in range(g.size):
        loc = g.loc(i)
        for n in neighbors(g, loc):
            assert g.in_bounds(n)
            assert g.role(n) is CellRole.AISLE


def test_block_layout_sizes():
    g = make_block_layout(5, 4, 16)
    assert len(g.rack_homes) == 200
    assert len(g.picker_stations) == 16
    assert set(g.rack_picker.values()) == set(range(16))
    with pytest.raises(ConfigError):
        make_block_layout(1, 1, 99)


def test_item_validation():
    with pytest.raises(ValueError):
        Item(0, 0, 1)
    with pytest.raises(ValueError):
        Item(-1, 3, 1)
