"""Map transforms used by the experiments: doubling and relabeling.

Also holds a small generator of grid-shaped synthetic maps for property tests
and benchmarks.
"""

from __future__ import annotations

import math
import random
import re
from dataclasses import dataclass, replace

from .floorplan import EPS, Door, FloorPlan, Label, MapValidationError, Rect, Room, natural_key

SCHEMES = ("sparse", "dense")
DEFAULT_OPEN_AREA_FRACTION = 0.25


@dataclass(frozen=True)
class BridgeSpec:
    """Where the extra door joining the two copies goes.

    ``room`` must touch the east edge of the map bounds. ``center`` is the
    door centre along that edge (defaults to the middle of the touching
    rectangle, floored to the wall-thickness grid) and ``width`` defaults to
    the narrowest existing door. With ``mirror`` the second copy is reflected
    about the shared wall so the bridge joins ``room`` to its own copy; without
    it the copy is only translated and ``room`` must also touch the west edge.
    """

    room: str
    width: float | None = None
    center: float | None = None
    mirror: bool = True
    suffix: str | None = None  # None: shortest run of primes that keeps ids unique


def _next_door_number(doors) -> int:
    nums = [int(m.group(1)) for d in doors if (m := re.fullmatch(r"D(\d+)", d.door_id))]
    return max(nums, default=0) + 1


def _copy_room(room: Room, fx, suffix: str) -> Room:
    return Room(
        room_id=room.room_id + suffix,
        display_name=room.display_name + suffix,
        rectangles=tuple(fx(r) for r in room.rectangles),
    )


def double_map(plan: FloorPlan, bridge: BridgeSpec | str) -> FloorPlan:
    """Join the map to a copy of itself, placed east of it, through one new door."""
    if isinstance(bridge, str):
        bridge = BridgeSpec(room=bridge)
    plan.validate()
    try:
        room = plan.room(plan.resolve_room(bridge.room))
    except KeyError:
        raise MapValidationError(f"bridge room {bridge.room!r} is not in map {plan.map_id!r}", [bridge.room]) from None
    b, wt = plan.bounds, plan.wall_thickness
    axis = b.x1 + wt / 2  # centre line of the wall between the copies
    shift = b.w + wt

    if bridge.mirror:
        def fx_rect(r: Rect) -> Rect:
            return Rect(2 * axis - r.x1, r.y, r.w, r.h)

        def fx_pt(p):
            return (2 * axis - p[0], p[1])
    else:
        def fx_rect(r: Rect) -> Rect:
            return Rect(r.x + shift, r.y, r.w, r.h)

        def fx_pt(p):
            return (p[0] + shift, p[1])

    ids = {r.room_id for r in plan.rooms} | {d.door_id for d in plan.doors}
    ids |= {r.display_name for r in plan.rooms}
    sfx = bridge.suffix
    if sfx is None:
        sfx = "'"
        while any(i + sfx in ids for i in ids):
            sfx += "'"
    clashes = sorted(i + sfx for i in ids if i + sfx in ids)
    if clashes:
        raise MapValidationError(f"copy suffix {sfx!r} collides with existing ids {clashes}", clashes)

    east = [r for r in room.rectangles if abs(r.x1 - b.x1) <= EPS]
    if not east:
        raise MapValidationError(
            f"bridge room {room.room_id!r} does not touch the shared boundary (east edge x={b.x1:g})", [room.room_id]
        )
    if bridge.mirror:
        lo, hi = east[0].y, east[0].y1
    else:
        west = [r for r in room.rectangles if abs(r.x - b.x) <= EPS]
        spans = [(max(e.y, w.y), min(e.y1, w.y1)) for e in east for w in west]
        spans = [s for s in spans if s[1] - s[0] > EPS]
        if not spans:
            raise MapValidationError(
                f"bridge room {room.room_id!r} must touch both east and west edges to bridge translated copies",
                [room.room_id],
            )
        lo, hi = spans[0]

    width = bridge.width if bridge.width is not None else min((d.width for d in plan.doors), default=2 * wt)
    if bridge.center is None:
        start = lo + math.floor(((hi - lo) - width) / 2 / wt) * wt
        center = start + width / 2
    else:
        center = bridge.center
    y0, y1 = center - width / 2, center + width / 2
    if width <= 0 or y0 < lo - EPS or y1 > hi + EPS:
        raise MapValidationError(
            f"bridge segment y=[{y0:g}, {y1:g}] is not on the shared boundary of {room.room_id!r} (y=[{lo:g}, {hi:g}])",
            [room.room_id],
        )

    copy_rooms = tuple(_copy_room(r, fx_rect, sfx) for r in plan.rooms)
    copy_doors = tuple(
        Door(
            door_id=d.door_id + sfx,
            connects=(d.connects[0] + sfx, d.connects[1] + sfx),
            segment=(fx_pt(d.segment[0]), fx_pt(d.segment[1])),
            width=d.width,
            open_by_default=d.open_by_default,
        )
        for d in plan.doors
    )
    copy_labels = tuple(
        Label(l.room_id + sfx, l.text + sfx, fx_pt(l.anchor), l.kind) for l in plan.labels
    )
    new_id = f"D{_next_door_number(plan.doors + copy_doors)}"
    bridge_door = Door(
        door_id=new_id,
        connects=(room.room_id, room.room_id + sfx),
        segment=((axis, y0), (axis, y1)),
        width=width,
    )
    doubled = FloorPlan(
        map_id=f"{plan.map_id}-x2",
        rooms=plan.rooms + copy_rooms,
        doors=plan.doors + copy_doors + (bridge_door,),
        labels=plan.labels + copy_labels,
        bounds=Rect(b.x, b.y, 2 * b.w + wt, b.h),
        wall_thickness=wt,
    )
    try:
        doubled.validate()
    except MapValidationError as exc:
        if new_id in exc.ids:
            raise MapValidationError(f"bridge segment not on the copies' shared boundary: {exc}", exc.ids) from exc
        raise
    return doubled


def east_edge_rooms(plan: FloorPlan) -> list[str]:
    """Rooms that can host a mirrored bridge, in natural id order."""
    out = [r.room_id for r in plan.rooms if any(abs(x.x1 - plan.bounds.x1) <= EPS for x in r.rectangles)]
    return sorted(out, key=natural_key)


# ------------------------------------------------------------------ labels

def _inset_point(room: Room, door: Door, wt: float) -> tuple[float, float]:
    """A point inside ``room`` just in front of ``door``: at most 2*wt away."""
    lo, hi = door.span
    mid = (lo + hi) / 2
    s = door.line
    best = None
    for r in room.rectangles:
        if door.vertical:
            a0, a1, near_lo, near_hi, depth = r.y, r.y1, r.x1, r.x, r.w
        else:
            a0, a1, near_lo, near_hi, depth = r.x, r.x1, r.y1, r.y, r.h
        if a0 > lo + EPS or a1 < hi - EPS:
            continue
        inset = min(wt, depth / 2)
        if near_lo <= s + EPS and s - near_lo <= wt + EPS:
            cand = near_lo - inset
        elif near_hi >= s - EPS and near_hi - s <= wt + EPS:
            cand = near_hi + inset
        else:
            continue
        if best is None or abs(cand - s) < abs(best - s):
            best = cand
    if best is None:
        raise MapValidationError(f"door {door.door_id!r} does not border room {room.room_id!r}", [door.door_id])
    return (best, mid) if door.vertical else (mid, best)


def apply_labeling(plan: FloorPlan, scheme: str, open_area_fraction: float = DEFAULT_OPEN_AREA_FRACTION) -> FloorPlan:
    """Replace all labels with the sparse or dense scheme.

    sparse: one ``center`` label per room, at the centroid of its largest
    rectangle. dense: the sparse label, one ``decision_point`` label in front
    of each of the room's doors, and an ``open_space`` label at the centroid
    of every rectangle larger than ``open_area_fraction`` of the map bounds.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown labeling scheme {scheme!r}")
    labels: list[Label] = []
    threshold = open_area_fraction * plan.bounds.area
    for room in plan.rooms:
        labels.append(Label(room.room_id, room.display_name, room.largest_rect.centroid, "center"))
        if scheme == "sparse":
            continue
        for door in sorted(plan.doors_of(room.room_id), key=lambda d: natural_key(d.door_id)):
            labels.append(Label(room.room_id, room.display_name, _inset_point(room, door, plan.wall_thickness), "decision_point"))
        for rect in room.rectangles:
            if rect.area > threshold:
                labels.append(Label(room.room_id, room.display_name, rect.centroid, "open_space"))
    return replace(plan, labels=tuple(labels))


# --------------------------------------------------------------- synthesis

def grid_map(rows: int, cols: int, seed: int = 0, *, room_size: float = 6, wall_thickness: float = 1,
             door_width: float = 2, extra_door_prob: float = 0.3, map_id: str | None = None) -> FloorPlan:
    """Rows x cols square rooms; a random spanning tree of doors plus extras.

    Rooms are named R<row>_<col>. The result is always connected.
    """
    rng = random.Random(seed)
    step = room_size + wall_thickness
    rooms = [
        Room(f"R{r}_{c}", f"R{r}_{c}", (Rect(c * step, r * step, room_size, room_size),))
        for r in range(rows)
        for c in range(cols)
    ]
    pairs = []
    for r in range(rows):
        for c in range(cols):
            if c + 1 < cols:
                pairs.append(((r, c), (r, c + 1)))
            if r + 1 < rows:
                pairs.append(((r, c), (r + 1, c)))
    rng.shuffle(pairs)
    parent = {(r, c): (r, c) for r in range(rows) for c in range(cols)}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    chosen = []
    for p, q in pairs:
        if find(p) != find(q):
            parent[find(p)] = find(q)
            chosen.append((p, q))
        elif rng.random() < extra_door_prob:
            chosen.append((p, q))
    chosen.sort()

    offset = (room_size - door_width) / 2
    doors = []
    for i, ((r0, c0), (r1, c1)) in enumerate(chosen, start=1):
        if r0 == r1:  # east-west neighbours share a vertical wall
            x = c0 * step + room_size + wall_thickness / 2
            y = r0 * step + offset
            seg = ((x, y), (x, y + door_width))
        else:
            y = r0 * step + room_size + wall_thickness / 2
            x = c0 * step + offset
            seg = ((x, y), (x + door_width, y))
        doors.append(Door(f"D{i}", (f"R{r0}_{c0}", f"R{r1}_{c1}"), seg, door_width))

    plan = FloorPlan(
        map_id=map_id or f"grid{rows}x{cols}-s{seed}",
        rooms=tuple(rooms),
        doors=tuple(doors),
        labels=(),
        bounds=Rect(0, 0, cols * step - wall_thickness, rows * step - wall_thickness),
        wall_thickness=wall_thickness,
    )
    return apply_labeling(plan, "sparse").validate()
