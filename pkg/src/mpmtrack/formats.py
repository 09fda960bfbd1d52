"""On-disk formats.

Annotation tables and track tables are UTF-8 CSV with LF line endings and
decimals rendered at 9 significant digits. Fields are a binary container:
magic "MPM1", then width, height, frame_t, gap as little-endian uint32, then
height*width little-endian float32 triples (vx, vy, vt) in row-major order.
"""

import re
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .fields import Annotation, MpmField
from .tracking import TrackPoint, TrackRegistry, Trajectory

MPM_MAGIC = b"MPM1"

ANNOTATION_HEADER = "frame,cell_id,x,y,parent_id"
TRACK_HEADER = "track_id,frame,x,y,interpolated,parent_track"

_FIELD_NAME = re.compile(r"^mpm_(\d{5})_(\d{5})\.mpm$")


def fmt_float(v: float) -> str:
    return format(float(v), ".9g")


def _parse_int(text: str, what: str, path, row: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise FormatError(f"{path}:{row}: {what} is not an integer: {text!r}") from None


def _parse_float(text: str, what: str, path, row: int) -> float:
    try:
        v = float(text)
    except ValueError:
        raise FormatError(f"{path}:{row}: {what} is not a number: {text!r}") from None
    if not np.isfinite(v):
        raise FormatError(f"{path}:{row}: {what} must be finite: {text!r}")
    return v


def write_annotations(annotations: list[Annotation], path) -> None:
    rows = [ANNOTATION_HEADER]
    for a in sorted(annotations, key=lambda a: (a.frame, a.cell_id)):
        parent = "" if a.parent_id is None else str(a.parent_id)
        rows.append(f"{a.frame},{a.cell_id},{fmt_float(a.x)},{fmt_float(a.y)},{parent}")
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def read_annotations(path) -> list[Annotation]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != ANNOTATION_HEADER:
        raise FormatError(f"{path}:1: expected header {ANNOTATION_HEADER!r}")
    annotations = []
    for row, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 5:
            raise FormatError(f"{path}:{row}: expected 5 columns, got {len(parts)}")
        frame = _parse_int(parts[0], "frame", path, row)
        cell_id = _parse_int(parts[1], "cell_id", path, row)
        x = _parse_float(parts[2], "x", path, row)
        y = _parse_float(parts[3], "y", path, row)
        parent = None if parts[4] == "" else _parse_int(parts[4], "parent_id", path, row)
        try:
            annotations.append(Annotation(cell_id, frame, x, y, parent))
        except Exception as e:
            raise FormatError(f"{path}:{row}: {e}") from None
    return annotations


def write_tracks(registry: TrackRegistry, path) -> None:
    rows = [TRACK_HEADER]
    for tid in sorted(registry.trajectories):
        traj = registry.trajectories[tid]
        parent = "" if traj.parent_track is None else str(traj.parent_track)
        for pt in sorted(traj.points, key=lambda p: p.frame):
            rows.append(
                f"{tid},{pt.frame},{fmt_float(pt.x)},{fmt_float(pt.y)},"
                f"{1 if pt.interpolated else 0},{parent}"
            )
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def read_tracks(path) -> TrackRegistry:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != TRACK_HEADER:
        raise FormatError(f"{path}:1: expected header {TRACK_HEADER!r}")
    registry = TrackRegistry()
    seen: set[tuple[int, int]] = set()
    for row, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 6:
            raise FormatError(f"{path}:{row}: expected 6 columns, got {len(parts)}")
        tid = _parse_int(parts[0], "track_id", path, row)
        frame = _parse_int(parts[1], "frame", path, row)
        x = _parse_float(parts[2], "x", path, row)
        y = _parse_float(parts[3], "y", path, row)
        if parts[4] not in ("0", "1"):
            raise FormatError(f"{path}:{row}: interpolated must be 0 or 1, got {parts[4]!r}")
        parent = None if parts[5] == "" else _parse_int(parts[5], "parent_track", path, row)
        if (tid, frame) in seen:
            raise FormatError(f"{path}:{row}: duplicate point for track {tid} frame {frame}")
        seen.add((tid, frame))
        traj = registry.trajectories.get(tid)
        if traj is None:
            traj = Trajectory(tid, frame, [], parent_track=parent)
            registry.trajectories[tid] = traj
        elif traj.parent_track != parent:
            raise FormatError(f"{path}:{row}: track {tid} has conflicting parent values")
        traj.points.append(TrackPoint(frame, x, y, parts[4] == "1"))
    mothers = set()
    for traj in registry.trajectories.values():
        traj.points.sort(key=lambda p: p.frame)
        traj.birth_frame = traj.points[0].frame
        if traj.parent_track is not None:
            mothers.add(traj.parent_track)
    for tid, traj in registry.trajectories.items():
        traj.status = "closed" if tid in mothers else "active"
    registry.next_id = max(registry.trajectories, default=0) + 1
    return registry


def write_mpm(field: MpmField, path) -> None:
    if field.frame_t < 0:
        raise FormatError(f"frame_t must be >= 0 to serialize, got {field.frame_t}")
    header = MPM_MAGIC + struct.pack(
        "<IIII", field.width, field.height, field.frame_t, field.gap
    )
    payload = np.ascontiguousarray(field.vectors, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def read_mpm(path) -> MpmField:
    blob = Path(path).read_bytes()
    if len(blob) < 20 or blob[:4] != MPM_MAGIC:
        raise FormatError(f"{path}: not a field container (bad magic)")
    width, height, frame_t, gap = struct.unpack("<IIII", blob[4:20])
    expected = 20 + 12 * width * height
    if len(blob) != expected:
        raise FormatError(
            f"{path}: payload length {len(blob) - 20} does not match "
            f"{width}x{height} grid (expected {expected - 20})"
        )
    vectors = (
        np.frombuffer(blob, dtype="<f4", offset=20).reshape(height, width, 3).copy()
    )
    if gap < 1:
        raise FormatError(f"{path}: gap must be >= 1, got {gap}")
    return MpmField(width, height, frame_t, gap, vectors)


def field_path(directory, earlier: int, later: int) -> Path:
    return Path(directory) / f"mpm_{earlier:05d}_{later:05d}.mpm"


class FileProvider:
    """Serves fields from a directory of mpm_EEEEE_LLLLL.mpm files."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.available: dict[tuple[int, int], Path] = {}
        for p in sorted(self.directory.glob("mpm_*.mpm")):
            m = _FIELD_NAME.match(p.name)
            if m:
                self.available[(int(m.group(1)), int(m.group(2)))] = p

    def frame_range(self) -> tuple[int, int] | None:
        adjacent = [(e, l) for e, l in self.available if l == e + 1]
        if not adjacent:
            return None
        return min(e for e, _ in adjacent), max(l for _, l in adjacent)

    def get(self, earlier: int, later: int) -> MpmField | None:
        path = self.available.get((earlier, later))
        if path is None:
            return None
        return read_mpm(path)
