"""Trajectory building on motion-and-position fields.

Each frame pair is processed online: detect peaks on the field's likelihood
map, decode each detection's vector back to its source position at the
earlier frame, hill-climb that position on the earlier frame's map, and
associate with the track owning the reached peak. One detection per peak
extends a track; two mark a division; detections that reach no tracked peak
open new tracks. Tracks that miss a frame are kept for a while and can be
recovered across a gap, with the missing positions interpolated.
"""

import math
from dataclasses import dataclass, field as dc_field
from typing import Iterator, Mapping, Protocol

from .detection import Detection, DetectorConfig, peaks_of_smoothed, smooth
from .errors import ConfigError, NoMotionError, SequenceError
from .fields import Annotation, LikelihoodMap, MpmField, likelihood_of

_TINY = 1e-9


@dataclass
class TrackPoint:
    frame: int
    x: float
    y: float
    interpolated: bool = False


@dataclass
class Trajectory:
    """One tracked cell: consecutive per-frame points plus lineage."""

    track_id: int
    birth_frame: int
    points: list[TrackPoint]
    parent_track: int | None = None
    status: str = "active"  # active | terminated | closed

    @property
    def last_point(self) -> TrackPoint:
        return self.points[-1]

    @property
    def last_frame(self) -> int:
        return self.points[-1].frame


@dataclass
class TrackRegistry:
    """All trajectories of a run. Track ids are never reused.

    terminated holds (track_id, last_frame) for tracks that missed a frame
    and are still eligible for gap recovery.
    """

    trajectories: dict[int, Trajectory] = dc_field(default_factory=dict)
    next_id: int = 1
    terminated: list[tuple[int, int]] = dc_field(default_factory=list)
    division_overflow: int = 0

    def create(
        self,
        frame: int,
        x: float,
        y: float,
        parent_track: int | None = None,
    ) -> Trajectory:
        traj = Trajectory(
            track_id=self.next_id,
            birth_frame=frame,
            points=[TrackPoint(frame, x, y)],
            parent_track=parent_track,
        )
        self.trajectories[traj.track_id] = traj
        self.next_id += 1
        return traj

    def active(self) -> Iterator[Trajectory]:
        return (t for t in self.trajectories.values() if t.status == "active")

    def terminate(self, track_id: int) -> None:
        traj = self.trajectories[track_id]
        traj.status = "terminated"
        self.terminated.append((track_id, traj.last_frame))

    def drop_terminated_entry(self, track_id: int) -> None:
        self.terminated = [e for e in self.terminated if e[0] != track_id]

    def prune_terminated(self, current_frame: int, max_age: int) -> None:
        self.terminated = [
            e for e in self.terminated if current_frame - e[1] <= max_age
        ]


class MpmProvider(Protocol):
    """Source of fields for frame pairs; returns None when a pair is not
    available."""

    def get(self, earlier: int, later: int) -> MpmField | None: ...


@dataclass(frozen=True)
class TrackerConfig:
    q: int = 5  # largest frame gap scanned during recovery
    max_termination_age: int = 10
    zero_confidence_eps: float = 1e-3
    detector: DetectorConfig = dc_field(default_factory=DetectorConfig)

    def __post_init__(self):
        if self.q < 1:
            raise ConfigError(f"q must be >= 1, got {self.q}")
        if self.max_termination_age < self.q:
            raise ConfigError(
                f"max_termination_age {self.max_termination_age} below q={self.q}"
            )
        if not self.zero_confidence_eps > 0:
            raise ConfigError("zero_confidence_eps must be positive")


@dataclass
class DivisionEvent:
    mother: int
    daughters: tuple[tuple[int, Detection], tuple[int, Detection]]
    frame: int


@dataclass
class AssociationEvents:
    """Outcome of one frame's association pass."""

    frame: int
    continuations: list[tuple[int, Detection]] = dc_field(default_factory=list)
    new_tracks: list[tuple[int, Detection]] = dc_field(default_factory=list)
    divisions: list[DivisionEvent] = dc_field(default_factory=list)
    overflow: int = 0


@dataclass
class Recovery:
    track_id: int
    absorbed_track: int
    from_frame: int
    to_frame: int


def estimate_source(det: Detection, field: MpmField) -> tuple[float, float]:
    """Position at the earlier frame encoded by the vector under a detection.

    The stored triple is a scaled unit vector whose time component spans the
    frame gap, so rescaling by gap / vt recovers the full displacement.
    """
    vx, vy, vt = (float(c) for c in field.vectors[det.y, det.x])
    if math.sqrt(vx * vx + vy * vy + vt * vt) < _TINY or vt < _TINY:
        raise NoMotionError(
            f"no motion information at pixel ({det.x}, {det.y}) of frame {field.frame_t}"
        )
    return det.x + field.gap * vx / vt, det.y + field.gap * vy / vt


def climb(
    prev_likelihood: LikelihoodMap, start: tuple[float, float], eps: float
) -> tuple[int, int] | None:
    """Ascend the 8-neighborhood from start until no neighbor is larger.

    Returns the final (x, y) pixel, or None when the start lies a full pixel
    outside the grid or its value does not exceed eps. Starts less than one
    pixel outside are clamped onto the border.
    """
    x, y = start
    w, h = prev_likelihood.width, prev_likelihood.height
    if x <= -1 or x >= w or y <= -1 or y >= h:
        return None
    c = _clamp_pixel(x, w)
    r = _clamp_pixel(y, h)
    v = prev_likelihood.values
    if v[r, c] <= eps:
        return None
    while True:
        best_val = v[r, c]
        best = None
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                if dr == 0 and dc == 0:
                    continue
                rr, cc = r + dr, c + dc
                if 0 <= rr < h and 0 <= cc < w and v[rr, cc] > best_val:
                    best_val = v[rr, cc]
                    best = (rr, cc)
        if best is None:
            return (c, r)
        r, c = best


def _clamp_pixel(coord: float, size: int) -> int:
    return int(round(min(max(coord, 0.0), float(size - 1))))


def associate_frame(
    registry: TrackRegistry,
    detections: list[Detection],
    field: MpmField,
    prev_likelihood: LikelihoodMap,
    peak_to_track: Mapping[tuple[int, int], int],
    cfg: TrackerConfig,
) -> AssociationEvents:
    """Associate one frame's detections with the tracks of the previous one.

    detections must be ordered by descending confidence. peak_to_track maps
    the previous frame's detection pixels (x, y) to their track ids. Tracked
    peaks reached by exactly one detection continue; by two, the track closes
    into a division; by more, the two highest-confidence detections become
    the daughters and the rest open new tracks (counted in overflow). Tracks
    whose peak attracted no detection are terminated.
    """
    frame = field.frame_t
    hits: dict[tuple[int, int], list[int]] = {}
    role: list[tuple[str, int | None]] = []
    for i, det in enumerate(detections):
        target = None
        try:
            src = estimate_source(det, field)
        except NoMotionError:
            src = None
        if src is not None:
            peak = climb(prev_likelihood, src, cfg.zero_confidence_eps)
            if peak is not None and peak in peak_to_track:
                target = peak
        if target is None:
            role.append(("new", None))
        else:
            hits.setdefault(target, []).append(i)
            role.append(("hit", None))

    for peak, idxs in hits.items():
        tid = peak_to_track[peak]
        if len(idxs) == 1:
            role[idxs[0]] = ("continue", tid)
        else:
            # detection order is confidence order, so the first two win
            role[idxs[0]] = ("daughter", tid)
            role[idxs[1]] = ("daughter", tid)
            for i in idxs[2:]:
                role[i] = ("new", None)

    events = AssociationEvents(frame=frame)
    events.overflow = sum(max(0, len(idxs) - 2) for idxs in hits.values())
    registry.division_overflow += events.overflow
    daughters_of: dict[int, list[tuple[int, Detection]]] = {}
    continued: set[int] = set()
    for det, (kind, tid) in zip(detections, role):
        if kind == "continue":
            traj = registry.trajectories[tid]
            traj.points.append(TrackPoint(frame, float(det.x), float(det.y)))
            continued.add(tid)
            events.continuations.append((tid, det))
        elif kind == "daughter":
            child = registry.create(frame, float(det.x), float(det.y), parent_track=tid)
            daughters_of.setdefault(tid, []).append((child.track_id, det))
        else:
            child = registry.create(frame, float(det.x), float(det.y))
            events.new_tracks.append((child.track_id, det))

    for mother, pair in daughters_of.items():
        registry.trajectories[mother].status = "closed"
        events.divisions.append(DivisionEvent(mother, (pair[0], pair[1]), frame))

    for tid in peak_to_track.values():
        if tid not in continued and tid not in daughters_of:
            registry.terminate(tid)
    return events


def recover_terminated(
    registry: TrackRegistry,
    new_cells: list[tuple[int, Detection]],
    provider: MpmProvider,
    cfg: TrackerConfig,
    likelihood_store: Mapping[int, LikelihoodMap],
    frame: int,
) -> list[Recovery]:
    """Try to continue terminated tracks through the frame's new tracks.

    Terminated tracks are visited in ascending order of termination time.
    For a gap g <= q the provider is asked for the gap-spanning field; a new
    track whose decoded source climbs, on the stored likelihood map of the
    termination frame, exactly to the terminated track's endpoint peak is
    spliced onto it, with the skipped frames linearly interpolated. A spliced
    track that was a division daughter loses that registration: its sibling
    is folded back into the mother, which reverts to a plain continuation.
    """
    recoveries: list[Recovery] = []
    available: dict[int, Detection] = dict(new_cells)
    gap_fields: dict[int, MpmField | None] = {}
    for tid_term, f_term in sorted(registry.terminated, key=lambda e: (e[1], e[0])):
        if not available:
            break
        g = frame - f_term
        if g < 1 or g > cfg.q:
            continue
        prev_map = likelihood_store.get(f_term)
        if prev_map is None:
            continue
        if f_term not in gap_fields:
            gap_fields[f_term] = provider.get(f_term, frame)
        gap_field = gap_fields[f_term]
        if gap_field is None:
            continue
        traj = registry.trajectories[tid_term]
        endpoint = (int(round(traj.last_point.x)), int(round(traj.last_point.y)))
        for nid, det in list(available.items()):
            try:
                src = estimate_source(det, gap_field)
            except NoMotionError:
                continue
            if climb(prev_map, src, cfg.zero_confidence_eps) != endpoint:
                continue
            removed = _splice(registry, traj, nid, det, frame)
            for gone in removed:
                available.pop(gone, None)
            recoveries.append(Recovery(tid_term, nid, f_term, frame))
            break
    return recoveries


def _splice(
    registry: TrackRegistry, traj: Trajectory, new_id: int, det: Detection, frame: int
) -> list[int]:
    """Absorb a just-created track into a terminated one; returns the ids of
    the tracks removed from the registry."""
    absorbed = registry.trajectories[new_id]
    x0, y0 = traj.last_point.x, traj.last_point.y
    f0 = traj.last_frame
    g = frame - f0
    for k in range(1, g):
        traj.points.append(
            TrackPoint(
                f0 + k,
                x0 + k * (det.x - x0) / g,
                y0 + k * (det.y - y0) / g,
                interpolated=True,
            )
        )
    traj.points.append(TrackPoint(frame, float(det.x), float(det.y)))
    traj.status = "active"
    registry.drop_terminated_entry(traj.track_id)

    removed = [new_id]
    mother_id = absorbed.parent_track
    del registry.trajectories[new_id]
    if mother_id is not None and mother_id in registry.trajectories:
        # the absorbed track was a division daughter: undo the division
        mother = registry.trajectories[mother_id]
        siblings = [
            t
            for t in registry.trajectories.values()
            if t.parent_track == mother_id and t.birth_frame == frame
        ]
        if mother.status == "closed" and len(siblings) == 1:
            sibling = siblings[0]
            mother.points.extend(sibling.points)
            mother.status = "active"
            del registry.trajectories[sibling.track_id]
            removed.append(sibling.track_id)
        elif mother.status == "closed" and not siblings:
            mother.status = "terminated"
            registry.terminated.append((mother_id, mother.last_frame))
    return removed


def track_sequence(
    provider: MpmProvider,
    first_frame: int,
    last_frame: int,
    cfg: TrackerConfig | None = None,
    recover: bool = True,
) -> TrackRegistry:
    """Track every frame of [first_frame, last_frame] online.

    The registry is seeded from the peaks of the likelihood map of the first
    frame pair, placed at first_frame; each subsequent frame is detected,
    associated, and (optionally) gap-recovered before the next one is read.
    A missing adjacent field aborts the run.
    """
    if cfg is None:
        cfg = TrackerConfig()
    registry = TrackRegistry()
    if last_frame <= first_frame:
        return registry

    first_field = provider.get(first_frame, first_frame + 1)
    if first_field is None:
        raise SequenceError(f"no field for frames ({first_frame}, {first_frame + 1})")
    sm = smooth(likelihood_of(first_field), cfg.detector.smooth_sigma)
    seeds = peaks_of_smoothed(sm, cfg.detector, first_frame)
    for det in seeds:
        registry.create(first_frame, float(det.x), float(det.y))
    likelihood_store: dict[int, LikelihoodMap] = {first_frame: sm}
    peak_to_track = {
        (int(t.last_point.x), int(t.last_point.y)): t.track_id
        for t in registry.active()
    }

    for t in range(first_frame + 1, last_frame + 1):
        field = provider.get(t - 1, t)
        if field is None:
            raise SequenceError(f"no field for frames ({t - 1}, {t})")
        sm_t = smooth(likelihood_of(field), cfg.detector.smooth_sigma)
        detections = peaks_of_smoothed(sm_t, cfg.detector, t)
        events = associate_frame(
            registry, detections, field, likelihood_store[t - 1], peak_to_track, cfg
        )
        if recover:
            born = list(events.new_tracks)
            for div in events.divisions:
                born.extend(div.daughters)
            born.sort(key=lambda e: e[0])
            if born:
                recover_terminated(registry, born, provider, cfg, likelihood_store, t)
        registry.prune_terminated(t, cfg.max_termination_age)
        likelihood_store[t] = sm_t
        stale = t - cfg.max_termination_age - 1
        likelihood_store.pop(stale, None)
        peak_to_track = {
            (int(tr.last_point.x), int(tr.last_point.y)): tr.track_id
            for tr in registry.active()
            if tr.last_frame == t
        }
    return registry


def registry_from_annotations(annotations: list[Annotation]) -> TrackRegistry:
    """View an annotation set as a registry: one trajectory per cell_id."""
    registry = TrackRegistry()
    by_cell: dict[int, list[Annotation]] = {}
    parent: dict[int, int | None] = {}
    for a in annotations:
        by_cell.setdefault(a.cell_id, []).append(a)
        if a.parent_id is not None:
            parent[a.cell_id] = a.parent_id
    for cid in sorted(by_cell):
        rows = sorted(by_cell[cid], key=lambda a: a.frame)
        traj = Trajectory(
            track_id=cid,
            birth_frame=rows[0].frame,
            points=[TrackPoint(a.frame, a.x, a.y) for a in rows],
            parent_track=parent.get(cid),
        )
        registry.trajectories[cid] = traj
    has_child = {p for p in parent.values() if p is not None}
    for cid, traj in registry.trajectories.items():
        traj.status = "closed" if cid in has_child else "active"
    registry.next_id = max(by_cell, default=0) + 1
    return registry
