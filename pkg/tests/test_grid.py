import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from floorplan_nav.floorplan import load_plan
from floorplan_nav.grid import (
    DOOR,
    FREE,
    WALL,
    NoPathFound,
    OccupancyGrid,
    RasterError,
    astar,
    bfs_distances,
    rasterize,
    read_pgm,
)
from floorplan_nav.transforms import grid_map


def test_fixture_raster_shapes(map1):
    assert rasterize(map1, 1.0).cells.shape == (28, 38)
    assert rasterize(map1, 0.5).cells.shape == (54, 74)


def test_single_room_raster():
    g = rasterize(load_plan("builtin:single_room"))
    assert g.cells.shape == (12, 12)
    assert int((g.cells == FREE).sum()) == 100
    assert (g.cells[0] == WALL).all() and (g.cells[-1] == WALL).all()


def test_door_cells_bridge_their_rooms(map1):
    g = rasterize(map1)
    assert g.door_cells("D8") == [(5, 10), (6, 10)]
    for d in map1.doors:
        touching = set()
        for r, c in g.door_cells(d.door_id):
            for n in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
                if g.room_of(n):
                    touching.add(g.room_of(n))
        assert touching == set(d.connects)


def test_every_room_cell_is_inside_its_room(map1):
    g = rasterize(map1, 0.5)
    for room in map1.rooms:
        for cell in g.room_cells(room.room_id):
            assert room.contains(*g.cell_center(cell))


def test_rooms_never_touch_without_a_door(map1):
    g = rasterize(map1)
    ri = g.room_index
    horiz = (ri[:, :-1] >= 0) & (ri[:, 1:] >= 0) & (ri[:, :-1] != ri[:, 1:])
    vert = (ri[:-1] >= 0) & (ri[1:] >= 0) & (ri[:-1] != ri[1:])
    assert not horiz.any() and not vert.any()


def test_too_coarse_resolution(map1):
    with pytest.raises(RasterError):
        rasterize(map1, 2.0)
    with pytest.raises(RasterError):
        rasterize(map1, 0)


def test_labels_do_not_become_obstacles(map1):
    from floorplan_nav.transforms import apply_labeling

    assert (rasterize(apply_labeling(map1, "dense")).cells == rasterize(map1).cells).all()


def test_pgm_round_trip(map1):
    g = rasterize(map1)
    pixels = read_pgm(g.to_pgm())
    assert pixels.shape == g.cells.shape
    assert set(np.unique(pixels)) == {0, 128, 255}
    assert ((pixels == 128) == (g.cells == DOOR)).all()


def test_grid_arrays_are_read_only(map1):
    g = rasterize(map1)
    with pytest.raises(ValueError):
        g.cells[0, 0] = FREE


def test_closed_doors_block(map1):
    g = rasterize(map1)
    a = g.room_cells("Terrasse Couverte")[0]
    b = g.room_cells("Hall")[0]
    with pytest.raises(NoPathFound):
        astar(g, a, b)
    path = astar(g, a, b, {"D8": True})
    assert path[0] == a and path[-1] == b


def test_astar_trivial_and_blocked_endpoints():
    grid = OccupancyGrid.from_array(np.array([[0, 1], [0, 0]], dtype=bool))
    assert astar(grid, (0, 0), (0, 0)) == [(0, 0)]
    assert astar(grid, (0, 0), (1, 1)) == [(0, 0), (1, 0), (1, 1)]
    with pytest.raises(NoPathFound):
        astar(grid, (0, 0), (0, 1))


def test_astar_is_deterministic(map1):
    g = rasterize(map1)
    a, b = g.room_cells("Cuisine")[5], g.room_cells("WC")[-1]
    doors = {d.door_id: True for d in map1.doors}
    assert astar(g, a, b, doors) == astar(g, a, b, doors)


@st.composite
def random_grids(draw):
    h = draw(st.integers(1, 30))
    w = draw(st.integers(1, 30))
    density = draw(st.floats(0.0, 0.45))
    seed = draw(st.integers(0, 2**31))
    occ = np.random.default_rng(seed).random((h, w)) < density
    free = np.argwhere(~occ)
    if len(free) == 0:
        occ[0, 0] = False
        free = np.argwhere(~occ)
    i = draw(st.integers(0, len(free) - 1))
    j = draw(st.integers(0, len(free) - 1))
    return occ, tuple(map(int, free[i])), tuple(map(int, free[j]))


@settings(max_examples=150, deadline=None)
@given(random_grids())
def test_astar_length_equals_bfs(case):
    occ, s, t = case
    grid = OccupancyGrid.from_array(occ)
    dist = bfs_distances(~occ, s)
    if dist[t] < 0:
        with pytest.raises(NoPathFound):
            astar(grid, s, t)
        return
    path = astar(grid, s, t)
    assert len(path) - 1 == dist[t]
    for (r0, c0), (r1, c1) in zip(path, path[1:]):
        assert abs(r0 - r1) + abs(c0 - c1) == 1
        assert not occ[r1, c1]


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(0, 10_000))
def test_synthetic_maps_rasterize(rows, cols, seed):
    plan = grid_map(rows, cols, seed)
    g = rasterize(plan)
    assert len(g.door_ids) == len(plan.doors)
    for d in plan.doors:
        assert g.door_cells(d.door_id)
