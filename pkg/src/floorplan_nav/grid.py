"""Occupancy-grid rasterization and 4-connected A*."""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .floorplan import EPS, FloorPlan

FREE, WALL, DOOR = 0, 1, 2
PGM_LEVELS = {FREE: 255, WALL: 0, DOOR: 128}

Cell = tuple[int, int]  # (row, col)


class RasterError(ValueError):
    pass


class NoPathFound(Exception):
    pass


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    """Cell codes plus per-cell room/door indices; arrays are read-only.

    ``origin`` is the map coordinate of the top-left corner of cell (0, 0).
    """

    resolution: float
    origin: tuple[float, float]
    cells: np.ndarray
    room_index: np.ndarray
    door_index: np.ndarray
    room_ids: tuple[str, ...] = ()
    door_ids: tuple[str, ...] = ()

    def __post_init__(self):
        for arr in (self.cells, self.room_index, self.door_index):
            arr.setflags(write=False)

    @classmethod
    def from_array(cls, occupied: np.ndarray, resolution: float = 1.0) -> OccupancyGrid:
        """Bare grid from a boolean obstacle array (no rooms, no doors)."""
        occ = np.asarray(occupied, dtype=bool)
        cells = np.where(occ, WALL, FREE).astype(np.int8)
        neg = np.full(occ.shape, -1, dtype=np.int32)
        return cls(resolution, (0.0, 0.0), cells, neg.copy(), neg.copy())

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    def cell_center(self, cell: Cell) -> tuple[float, float]:
        r, c = cell
        return (self.origin[0] + (c + 0.5) * self.resolution, self.origin[1] + (r + 0.5) * self.resolution)

    def cell_at(self, x: float, y: float) -> Cell:
        return (int(math.floor((y - self.origin[1]) / self.resolution)),
                int(math.floor((x - self.origin[0]) / self.resolution)))

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.height and 0 <= cell[1] < self.width

    def room_of(self, cell: Cell) -> str | None:
        i = int(self.room_index[cell])
        return self.room_ids[i] if i >= 0 else None

    def door_of(self, cell: Cell) -> str | None:
        i = int(self.door_index[cell])
        return self.door_ids[i] if i >= 0 else None

    def door_cells(self, door_id: str) -> list[Cell]:
        i = self.door_ids.index(door_id)
        return [tuple(map(int, rc)) for rc in np.argwhere(self.door_index == i)]

    def room_cells(self, room_id: str) -> list[Cell]:
        i = self.room_ids.index(room_id)
        return [tuple(map(int, rc)) for rc in np.argwhere(self.room_index == i)]

    def passable(self, door_states: Mapping[str, bool] | None = None) -> np.ndarray:
        """Boolean mask of cells a robot may occupy given open/closed doors."""
        mask = self.cells == FREE
        if door_states:
            for j, door in enumerate(self.door_ids):
                if door_states.get(door, False):
                    mask |= self.door_index == j
        return mask

    def to_pgm(self) -> bytes:
        """Binary PGM: wall 0, door 128, free 255."""
        lut = np.zeros(3, dtype=np.uint8)
        for code, level in PGM_LEVELS.items():
            lut[code] = level
        pixels = lut[self.cells]
        header = f"P5\n{self.width} {self.height}\n255\n".encode("ascii")
        return header + pixels.tobytes()

    def save_pgm(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_pgm())


def read_pgm(data: bytes) -> np.ndarray:
    """Decode a binary (P5) PGM into a uint8 array."""
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval > 255:
        raise ValueError("only 8-bit PGM supported")
    body = data[len(data) - w * h:]
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w)


def rasterize(plan: FloorPlan, resolution: float = 1.0) -> OccupancyGrid:
    """Burn rooms and doors into a grid with a one-cell wall ring around the map.

    A cell belongs to a room when its centre is inside one of the room's
    rectangles (half-open). Door cells are the non-room cells whose centres
    fall in the wall gap along the door segment. Labels are ignored.
    """
    if resolution <= 0:
        raise RasterError("resolution must be positive")
    plan.validate()
    for d in plan.doors:
        if resolution > d.width / 2 + EPS:
            raise RasterError(
                f"resolution {resolution:g} too coarse for door {d.door_id} (width {d.width:g}); need <= {d.width / 2:g}"
            )
    b = plan.bounds
    ox, oy = b.x - resolution, b.y - resolution
    width = int(math.ceil(b.w / resolution - EPS)) + 2
    height = int(math.ceil(b.h / resolution - EPS)) + 2
    xs = ox + (np.arange(width) + 0.5) * resolution
    ys = oy + (np.arange(height) + 0.5) * resolution
    X, Y = np.meshgrid(xs, ys)

    room_index = np.full((height, width), -1, dtype=np.int32)
    for i, room in enumerate(plan.rooms):
        inside = np.zeros_like(X, dtype=bool)
        for r in room.rectangles:
            inside |= (X >= r.x) & (X < r.x1) & (Y >= r.y) & (Y < r.y1)
        room_index[inside] = i

    door_index = np.full((height, width), -1, dtype=np.int32)
    half = plan.wall_thickness / 2 + EPS
    for j, d in enumerate(plan.doors):
        lo, hi = d.span
        along, across = (Y, X) if d.vertical else (X, Y)
        mask = (np.abs(across - d.line) <= half) & (along > lo + EPS) & (along < hi - EPS) & (room_index < 0)
        if not mask.any():
            raise RasterError(f"door {d.door_id} yields no cells at resolution {resolution:g}")
        door_index[mask & (door_index < 0)] = j

    cells = np.full((height, width), WALL, dtype=np.int8)
    cells[room_index >= 0] = FREE
    cells[door_index >= 0] = DOOR

    # neighbouring cells from different rooms mean the wall vanished
    for axis in (0, 1):
        a = room_index
        b_ = np.roll(a, -1, axis=axis)
        diff = (a >= 0) & (b_ >= 0) & (a != b_)
        if axis == 0:
            diff[-1, :] = False
        else:
            diff[:, -1] = False
        if diff.any():
            r, c = np.argwhere(diff)[0]
            other = b_[r, c]
            raise RasterError(
                f"resolution {resolution:g} merges rooms {plan.rooms[a[r, c]].room_id!r} and {plan.rooms[other].room_id!r}"
            )

    grid = OccupancyGrid(
        resolution=resolution,
        origin=(ox, oy),
        cells=cells,
        room_index=room_index,
        door_index=door_index,
        room_ids=tuple(r.room_id for r in plan.rooms),
        door_ids=tuple(d.door_id for d in plan.doors),
    )
    for d in plan.doors:
        _check_door_bridges(grid, d.door_id, *d.connects)
    return grid


def _check_door_bridges(grid: OccupancyGrid, door_id: str, a: str, b: str) -> None:
    ia, ib = grid.room_ids.index(a), grid.room_ids.index(b)
    jd = grid.door_ids.index(door_id)
    ok = (grid.room_index == ia) | (grid.room_index == ib) | (grid.door_index == jd)
    starts = [c for c in grid.door_cells(door_id) if any(
        grid.in_bounds(n) and grid.room_index[n] == ia for n in _neighbors(c))]
    seen = set(starts)
    queue = deque(starts)
    while queue:
        cur = queue.popleft()
        if grid.room_index[cur] == ib:
            return
        for n in _neighbors(cur):
            if n not in seen and grid.in_bounds(n) and ok[n] and grid.room_index[n] != ia:
                seen.add(n)
                queue.append(n)
    raise RasterError(f"door {door_id} does not open a passage between {a!r} and {b!r} at resolution {grid.resolution:g}")


# row-major neighbour order keeps expansion deterministic
def _neighbors(cell: Cell):
    r, c = cell
    yield (r - 1, c)
    yield (r, c - 1)
    yield (r, c + 1)
    yield (r + 1, c)


def astar(grid: OccupancyGrid, start: Cell, goal: Cell,
          door_states: Mapping[str, bool] | None = None,
          passable: np.ndarray | None = None) -> list[Cell]:
    """Shortest 4-connected path with unit steps and a Manhattan heuristic.

    Ties on f are broken toward the smaller (row, col), so the
    returned path is deterministic. Raises NoPathFound when the goal cannot be
    reached.
    """
    start, goal = tuple(start), tuple(goal)
    mask = grid.passable(door_states) if passable is None else passable
    for name, cell in (("start", start), ("goal", goal)):
        if not grid.in_bounds(cell) or not mask[cell]:
            raise NoPathFound(f"{name} cell {cell} is not traversable")
    if start == goal:
        return [start]

    def h(cell: Cell) -> int:
        return abs(cell[0] - goal[0]) + abs(cell[1] - goal[1])

    g = {start: 0}
    came: dict[Cell, Cell] = {}
    heap = [(h(start), start[0], start[1])]
    closed = set()
    H, W = mask.shape
    while heap:
        _, r, c = heapq.heappop(heap)
        cur = (r, c)
        if cur in closed:
            continue
        if cur == goal:
            path = [cur]
            while cur in came:
                cur = came[cur]
                path.append(cur)
            return path[::-1]
        closed.add(cur)
        gc = g[cur] + 1
        for n in _neighbors(cur):
            if not (0 <= n[0] < H and 0 <= n[1] < W) or not mask[n] or n in closed:
                continue
            if gc < g.get(n, math.inf):
                g[n] = gc
                came[n] = cur
                heapq.heappush(heap, (gc + h(n), n[0], n[1]))
    raise NoPathFound(f"no path from {start} to {goal}")


def bfs_distances(passable: np.ndarray, start: Cell) -> np.ndarray:
    """Step counts from ``start`` over a passability mask (-1 = unreachable)."""
    H, W = passable.shape
    dist = np.full((H, W), -1, dtype=np.int64)
    if not passable[start]:
        return dist
    dist[start] = 0
    queue = deque([tuple(start)])
    while queue:
        cur = queue.popleft()
        for n in _neighbors(cur):
            if 0 <= n[0] < H and 0 <= n[1] < W and passable[n] and dist[n] < 0:
                dist[n] = dist[cur] + 1
                queue.append(n)
    return dist
