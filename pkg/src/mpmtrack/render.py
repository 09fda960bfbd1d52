"""Deterministic trajectory plots.

Each track gets a stable color from its id; interpolated points carry a
hollow marker and division links are drawn dotted from the mother's last
point to each daughter's first point. Identical inputs produce identical
image bytes.
"""

import colorsys

from PIL import Image, ImageDraw

from .tracking import TrackRegistry


def _color(track_id: int) -> tuple[int, int, int]:
    hue = (track_id * 0.6180339887498949) % 1.0
    r, g, b = colorsys.hsv_to_rgb(hue, 0.7, 0.8)
    return int(r * 255), int(g * 255), int(b * 255)


def _dotted(draw: ImageDraw.ImageDraw, a, b, fill, dash=3.0):
    x0, y0 = a
    x1, y1 = b
    length = ((x1 - x0) ** 2 + (y1 - y0) ** 2) ** 0.5
    if length < 1e-9:
        draw.point(a, fill=fill)
        return
    n = max(1, int(length / dash))
    for i in range(0, n + 1, 2):
        t0 = i / (n + 1)
        t1 = min(1.0, (i + 1) / (n + 1))
        draw.line(
            [
                (x0 + (x1 - x0) * t0, y0 + (y1 - y0) * t0),
                (x0 + (x1 - x0) * t1, y0 + (y1 - y0) * t1),
            ],
            fill=fill,
            width=1,
        )


def render_tracks(registry: TrackRegistry, width: int, height: int, path) -> None:
    img = Image.new("RGB", (width, height), (255, 255, 255))
    draw = ImageDraw.Draw(img)
    for tid in sorted(registry.trajectories):
        traj = registry.trajectories[tid]
        color = _color(tid)
        pts = [(pt.x, pt.y) for pt in sorted(traj.points, key=lambda p: p.frame)]
        if traj.parent_track is not None:
            mother = registry.trajectories.get(traj.parent_track)
            if mother is not None and mother.points:
                last = max(mother.points, key=lambda p: p.frame)
                _dotted(draw, (last.x, last.y), pts[0], fill=(128, 128, 128))
        if len(pts) >= 2:
            draw.line(pts, fill=color, width=1)
        first = pts[0]
        draw.ellipse(
            [first[0] - 1, first[1] - 1, first[0] + 1, first[1] + 1], fill=color
        )
        for pt in sorted(traj.points, key=lambda p: p.frame):
            if pt.interpolated:
                draw.rectangle(
                    [pt.x - 2, pt.y - 2, pt.x + 2, pt.y + 2], outline=color
                )
    img.save(path, format="PNG")
