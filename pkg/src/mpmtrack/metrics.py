"""Detection and tracking quality scores.

Detections are matched per frame by a one-to-one assignment within a radius.
Association accuracy is the fraction of ground-truth frame-to-frame links
(including mother-to-daughter links) preserved by the predicted tracks; an
identity switch therefore costs both of the links it breaks. Target
effectiveness assigns each target the track covering most of its frames and
divides the covered frames by the target's total frames.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ConfigError
from .tracking import TrackRegistry

_FORBIDDEN = 1e9


@dataclass(frozen=True)
class DetectionMatchConfig:
    match_radius: float = 10.0
    greedy: bool = False  # nearest-first matching instead of optimal

    def __post_init__(self):
        if not self.match_radius > 0:
            raise ConfigError(f"match_radius must be positive, got {self.match_radius}")


@dataclass(frozen=True)
class DetectionScore:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class TrackingScore:
    """Tracking metrics with exact integer numerators and denominators."""

    association_accuracy: float
    target_effectiveness: float
    per_target: list[tuple[int, float]]
    assoc_true: int
    assoc_total: int
    covered_frames: int
    target_frames: int
    target_effectiveness_macro: float


def match_positions(
    truth: list[tuple[float, float]],
    pred: list[tuple[float, float]],
    cfg: DetectionMatchConfig,
) -> list[tuple[int, int]]:
    """Index pairs (truth_i, pred_j) of a one-to-one matching within
    match_radius; optimal (max matches, then min total distance) unless
    cfg.greedy."""
    if not truth or not pred:
        return []
    t = np.asarray(truth, dtype=np.float64)
    p = np.asarray(pred, dtype=np.float64)
    d = np.sqrt(((t[:, None, :] - p[None, :, :]) ** 2).sum(axis=2))
    if cfg.greedy:
        order = sorted(
            ((d[i, j], i, j) for i in range(len(t)) for j in range(len(p))
             if d[i, j] <= cfg.match_radius),
        )
        used_t, used_p, pairs = set(), set(), []
        for _, i, j in order:
            if i in used_t or j in used_p:
                continue
            used_t.add(i)
            used_p.add(j)
            pairs.append((i, j))
        return pairs
    cost = np.where(d <= cfg.match_radius, d, _FORBIDDEN)
    rows, cols = linear_sum_assignment(cost)
    return [(int(i), int(j)) for i, j in zip(rows, cols) if d[i, j] <= cfg.match_radius]


def match_detections(
    truth: list[tuple[float, float]],
    pred: list[tuple[float, float]],
    cfg: DetectionMatchConfig,
) -> DetectionScore:
    """Detection counts and precision/recall/f1 for one frame.

    With no predictions precision is 1; with no truth recall is 1; f1 is 0
    whenever either factor is 0.
    """
    tp = len(match_positions(truth, pred, cfg))
    fp = len(pred) - tp
    fn = len(truth) - tp
    precision = 1.0 if not pred else tp / len(pred)
    recall = 1.0 if not truth else tp / len(truth)
    f1 = 0.0 if precision == 0 or recall == 0 else 2 * precision * recall / (precision + recall)
    return DetectionScore(tp, fp, fn, precision, recall, f1)


def _points_by_frame(registry: TrackRegistry) -> dict[int, list[tuple[int, float, float]]]:
    out: dict[int, list[tuple[int, float, float]]] = {}
    for tid in sorted(registry.trajectories):
        for pt in registry.trajectories[tid].points:
            out.setdefault(pt.frame, []).append((tid, pt.x, pt.y))
    return out


def frame_assignment(
    truth: TrackRegistry, pred: TrackRegistry, cfg: DetectionMatchConfig
) -> dict[int, dict[int, int]]:
    """Per-frame map target_id -> predicted track id under the one-to-one
    position matching."""
    truth_pts = _points_by_frame(truth)
    pred_pts = _points_by_frame(pred)
    assigned: dict[int, dict[int, int]] = {}
    for f in sorted(set(truth_pts) | set(pred_pts)):
        trows = truth_pts.get(f, [])
        prows = pred_pts.get(f, [])
        pairs = match_positions(
            [(x, y) for _, x, y in trows], [(x, y) for _, x, y in prows], cfg
        )
        assigned[f] = {trows[i][0]: prows[j][0] for i, j in pairs}
    return assigned


def evaluate_tracking(
    truth: TrackRegistry, pred: TrackRegistry, cfg: DetectionMatchConfig | None = None
) -> TrackingScore:
    """Both tracking scores over a shared per-frame assignment."""
    if cfg is None:
        cfg = DetectionMatchConfig()
    assigned = frame_assignment(truth, pred, cfg)

    assoc_total = 0
    assoc_true = 0
    for tid in sorted(truth.trajectories):
        traj = truth.trajectories[tid]
        frames = sorted({pt.frame for pt in traj.points})
        present = set(frames)
        for f in frames:
            if f + 1 not in present:
                continue
            assoc_total += 1
            a = assigned.get(f, {}).get(tid)
            b = assigned.get(f + 1, {}).get(tid)
            if a is not None and a == b:
                assoc_true += 1
        if traj.parent_track is not None and traj.parent_track in truth.trajectories:
            mother = truth.trajectories[traj.parent_track]
            birth = frames[0]
            if mother.last_frame == birth - 1:
                assoc_total += 1
                a = assigned.get(birth - 1, {}).get(mother.track_id)
                b = assigned.get(birth, {}).get(tid)
                if a is not None and b is not None:
                    pred_traj = pred.trajectories.get(b)
                    if a == b or (pred_traj is not None and pred_traj.parent_track == a):
                        assoc_true += 1

    covered = 0
    total_frames = 0
    per_target: list[tuple[int, float]] = []
    for tid in sorted(truth.trajectories):
        frames = sorted({pt.frame for pt in truth.trajectories[tid].points})
        counts: dict[int, int] = {}
        for f in frames:
            p = assigned.get(f, {}).get(tid)
            if p is not None:
                counts[p] = counts.get(p, 0) + 1
        best = max(counts.values(), default=0)
        covered += best
        total_frames += len(frames)
        per_target.append((tid, best / len(frames) if frames else 1.0))

    aa = assoc_true / assoc_total if assoc_total else 1.0
    te = covered / total_frames if total_frames else 1.0
    macro = (
        sum(e for _, e in per_target) / len(per_target) if per_target else 1.0
    )
    return TrackingScore(
        association_accuracy=aa,
        target_effectiveness=te,
        per_target=per_target,
        assoc_true=assoc_true,
        assoc_total=assoc_total,
        covered_frames=covered,
        target_frames=total_frames,
        target_effectiveness_macro=macro,
    )


def association_accuracy(
    truth: TrackRegistry, pred: TrackRegistry, cfg: DetectionMatchConfig | None = None
) -> float:
    return evaluate_tracking(truth, pred, cfg).association_accuracy


def target_effectiveness(
    truth: TrackRegistry, pred: TrackRegistry, cfg: DetectionMatchConfig | None = None
) -> TrackingScore:
    return evaluate_tracking(truth, pred, cfg)
