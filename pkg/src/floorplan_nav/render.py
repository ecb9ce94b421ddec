"""Labeled PNG rendering of a floor plan, the image half of a VLM prompt."""

from __future__ import annotations

import io

from PIL import Image, ImageDraw, ImageFont

from .floorplan import FloorPlan

BACKGROUND = (0, 0, 0)
ROOM_FILL = (255, 255, 255)
DOOR_FILL = (200, 60, 60)
LABEL_INK = (20, 20, 160)
DOOR_INK = (160, 20, 20)


def render_png(plan: FloorPlan, px_per_unit: int = 16, show_doors: bool = True, show_labels: bool = True) -> bytes:
    """Draw rooms white on black walls, doors in red with their ids, labels at anchors.

    Output bytes are deterministic for a given map and scale.
    """
    b = plan.bounds
    pad = plan.wall_thickness
    s = px_per_unit
    W = int(round((b.w + 2 * pad) * s))
    H = int(round((b.h + 2 * pad) * s))

    def px(x: float, y: float) -> tuple[int, int]:
        return (int(round((x - b.x + pad) * s)), int(round((y - b.y + pad) * s)))

    img = Image.new("RGB", (W, H), BACKGROUND)
    draw = ImageDraw.Draw(img)
    font = ImageFont.load_default()
    for room in plan.rooms:
        for r in room.rectangles:
            x0, y0 = px(r.x, r.y)
            x1, y1 = px(r.x1, r.y1)
            draw.rectangle([x0, y0, x1 - 1, y1 - 1], fill=ROOM_FILL)
    if show_doors:
        half = plan.wall_thickness / 2
        for d in plan.doors:
            lo, hi = d.span
            if d.vertical:
                box = [px(d.line - half, lo), px(d.line + half, hi)]
            else:
                box = [px(lo, d.line - half), px(hi, d.line + half)]
            (x0, y0), (x1, y1) = box
            draw.rectangle([x0, y0, max(x0, x1 - 1), max(y0, y1 - 1)], fill=DOOR_FILL)
            mx, my = px(*d.midpoint)
            draw.text((mx + 2, my + 2), d.door_id, fill=DOOR_INK, font=font)
    if show_labels:
        for lab in plan.labels:
            x, y = px(*lab.anchor)
            w = draw.textlength(lab.text, font=font)
            draw.text((x - w / 2, y - 5), lab.text, fill=LABEL_INK, font=font)
    buf = io.BytesIO()
    img.save(buf, format="PNG", optimize=False)
    return buf.getvalue()
