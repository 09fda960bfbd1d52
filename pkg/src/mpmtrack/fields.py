"""Motion-and-position fields.

A field stores one 3-vector (vx, vy, vt) per pixel of the later frame of a
frame pair. The vector magnitude at a pixel is the cell-position likelihood
at that pixel; the vector direction points from the pixel to the position of
the cell at the earlier frame, with the time component equal to the frame
gap before normalization. Magnitudes over the grid therefore double as a
detection heatmap while directions carry the association.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InputError, PairError

# tolerance on the unit upper bound of stored vector magnitudes
NORM_EPS = 1e-6

_TINY = 1e-12


@dataclass(frozen=True)
class Annotation:
    """A point annotation: one cell at one frame, with optional lineage."""

    cell_id: int
    frame: int
    x: float
    y: float
    parent_id: int | None = None

    def __post_init__(self):
        if self.cell_id < 1:
            raise InputError(f"cell_id must be positive, got {self.cell_id}")
        if self.frame < 0:
            raise InputError(f"frame must be non-negative, got {self.frame}")
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise InputError(f"non-finite position for cell {self.cell_id}")
        if self.parent_id is not None and self.parent_id < 1:
            raise InputError(f"parent_id must be positive, got {self.parent_id}")


@dataclass(frozen=True)
class EncoderConfig:
    """Grid geometry plus the Gaussian parameters of the encoder.

    cutoff_radius defaults to 4 * sigma; outside it a cell writes exact
    zeros, which keeps every cell's footprint local.
    """

    width: int
    height: int
    sigma: float = 6.0
    cutoff_radius: float | None = None

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ConfigError(f"grid must be at least 1x1, got {self.width}x{self.height}")
        if not self.sigma > 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        if self.cutoff_radius is None:
            object.__setattr__(self, "cutoff_radius", 4.0 * self.sigma)
        if self.cutoff_radius < 2.0 * self.sigma:
            raise ConfigError(
                f"cutoff_radius {self.cutoff_radius} below 2*sigma={2 * self.sigma}"
            )


@dataclass
class MpmField:
    """Dense vector field for one frame pair (frame_t - gap, frame_t)."""

    width: int
    height: int
    frame_t: int
    gap: int
    vectors: np.ndarray  # (height, width, 3) float32, components (vx, vy, vt)

    def __post_init__(self):
        if self.gap < 1:
            raise InputError(f"gap must be >= 1, got {self.gap}")
        arr = np.asarray(self.vectors, dtype=np.float32)
        if arr.shape != (self.height, self.width, 3):
            raise InputError(
                f"vectors shape {arr.shape} does not match "
                f"(height, width, 3)=({self.height}, {self.width}, 3)"
            )
        arr.flags.writeable = False
        self.vectors = arr


@dataclass
class LikelihoodMap:
    """Scalar cell-position likelihood per pixel of one frame."""

    width: int
    height: int
    values: np.ndarray  # (height, width) float64

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.shape != (self.height, self.width):
            raise InputError(
                f"values shape {arr.shape} does not match "
                f"(height, width)=({self.height}, {self.width})"
            )
        arr.flags.writeable = False
        self.values = arr


def gaussian_weight(p: tuple[float, float], a: tuple[float, float], sigma: float) -> float:
    """exp(-d^2 / sigma^2) for the planar distance d between p and a.

    Note the denominator is sigma squared, not two sigma squared, so the
    weight falls to exp(-1) at distance sigma.
    """
    if not sigma > 0:
        raise ConfigError(f"sigma must be positive, got {sigma}")
    dx = a[0] - p[0]
    dy = a[1] - p[1]
    return math.exp(-(dx * dx + dy * dy) / (sigma * sigma))


def _snap(v: float) -> int:
    return int(round(v))


def _check_pair(a_t: Annotation, a_prev: Annotation, cfg: EncoderConfig, gap: int):
    if gap < 1:
        raise PairError(f"gap must be >= 1, got {gap}")
    if a_t.frame - a_prev.frame != gap:
        raise PairError(
            f"cell {a_t.cell_id}: frames {a_prev.frame}->{a_t.frame} "
            f"do not span the requested gap {gap}"
        )
    for a in (a_t, a_prev):
        if not (0 <= a.x <= cfg.width - 1 and 0 <= a.y <= cfg.height - 1):
            raise PairError(
                f"cell {a.cell_id} at ({a.x}, {a.y}) outside "
                f"{cfg.width}x{cfg.height} grid"
            )


def _stamp(a_t: Annotation, a_prev: Annotation, cfg: EncoderConfig, gap: int):
    """Window content for one cell: weights and weighted unit vectors.

    The Gaussian is centred on the annotation's nearest pixel so the
    likelihood attains exactly 1.0 there; directions use the exact
    sub-pixel position of the earlier annotation.
    """
    cy, cx = _snap(a_t.y), _snap(a_t.x)
    r = int(math.ceil(cfg.cutoff_radius))
    y0, y1 = max(0, cy - r), min(cfg.height - 1, cy + r)
    x0, x1 = max(0, cx - r), min(cfg.width - 1, cx + r)
    ys = np.arange(y0, y1 + 1, dtype=np.float64)
    xs = np.arange(x0, x1 + 1, dtype=np.float64)
    d2 = (ys[:, None] - cy) ** 2 + (xs[None, :] - cx) ** 2
    inside = d2 <= cfg.cutoff_radius**2
    w = np.where(inside, np.exp(-d2 / (cfg.sigma * cfg.sigma)), 0.0)
    vx = a_prev.x - xs[None, :] + np.zeros_like(d2)
    vy = a_prev.y - ys[:, None] + np.zeros_like(d2)
    norm = np.sqrt(vx * vx + vy * vy + float(gap) * float(gap))
    scale = w / norm  # norm >= gap >= 1, never zero
    vec = np.stack([vx * scale, vy * scale, float(gap) * scale], axis=2)
    return slice(y0, y1 + 1), slice(x0, x1 + 1), w, vec


def encode_individual(
    a_t: Annotation, a_prev: Annotation, cfg: EncoderConfig, gap: int = 1
) -> MpmField:
    """Field of a single cell: Gaussian magnitudes around the cell at the
    later frame, every vector pointing at the earlier position."""
    _check_pair(a_t, a_prev, cfg, gap)
    out = np.zeros((cfg.height, cfg.width, 3), dtype=np.float64)
    rows, cols, _, vec = _stamp(a_t, a_prev, cfg, gap)
    out[rows, cols] = vec
    return MpmField(cfg.width, cfg.height, a_t.frame, gap, out)


def encode_mpm(
    pairs: list[tuple[Annotation, Annotation]],
    cfg: EncoderConfig,
    gap: int = 1,
    frame_t: int | None = None,
) -> MpmField:
    """Aggregate field over all cells of a frame pair.

    Per pixel the vector of the individual field with the largest magnitude
    wins; magnitude ties resolve toward the smaller cell_id. Cells at the
    later frame must be unique; several of them may share one earlier
    position (a division).
    """
    ids = [a_t.cell_id for a_t, _ in pairs]
    if len(set(ids)) != len(ids):
        raise InputError("duplicate cell_id among the later-frame annotations")
    if frame_t is None:
        frame_t = pairs[0][0].frame if pairs else 0
    for a_t, a_prev in pairs:
        if a_t.frame != frame_t:
            raise PairError(
                f"cell {a_t.cell_id} annotated at frame {a_t.frame}, expected {frame_t}"
            )
        _check_pair(a_t, a_prev, cfg, gap)

    out = np.zeros((cfg.height, cfg.width, 3), dtype=np.float64)
    best = np.zeros((cfg.height, cfg.width), dtype=np.float64)
    for a_t, a_prev in sorted(pairs, key=lambda p: p[0].cell_id):
        rows, cols, w, vec = _stamp(a_t, a_prev, cfg, gap)
        sub_best = best[rows, cols]
        sub_out = out[rows, cols]
        win = w > sub_best  # strict: earlier (smaller) cell_id keeps ties
        sub_best[win] = w[win]
        sub_out[win] = vec[win]
    return MpmField(cfg.width, cfg.height, frame_t, gap, out)


def likelihood_of(field: MpmField) -> LikelihoodMap:
    """Per-pixel Euclidean magnitude of the field."""
    values = np.linalg.norm(field.vectors.astype(np.float64), axis=2)
    return LikelihoodMap(field.width, field.height, values)


def mpm_loss(c: MpmField, c_hat: MpmField) -> float:
    """Mean over pixels of squared vector error plus squared magnitude error.

    Zero exactly when the two fields agree pixel-wise; symmetric in its
    arguments.
    """
    if (c.width, c.height) != (c_hat.width, c_hat.height):
        raise InputError(
            f"field dimensions differ: {c.width}x{c.height} vs {c_hat.width}x{c_hat.height}"
        )
    a = c.vectors.astype(np.float64)
    b = c_hat.vectors.astype(np.float64)
    vec_term = ((a - b) ** 2).sum(axis=2)
    mag_term = (np.linalg.norm(a, axis=2) - np.linalg.norm(b, axis=2)) ** 2
    return float((vec_term + mag_term).mean())


def validate_annotations(
    annotations: list[Annotation],
    width: int | None = None,
    height: int | None = None,
) -> None:
    """Check identity uniqueness, grid bounds, and lineage consistency.

    A parent must exist and its last annotated frame must immediately
    precede the child's first annotated frame.
    """
    seen: set[tuple[int, int]] = set()
    frames_of: dict[int, list[int]] = {}
    parent_of: dict[int, int | None] = {}
    for a in annotations:
        key = (a.cell_id, a.frame)
        if key in seen:
            raise InputError(f"duplicate annotation for cell {a.cell_id} at frame {a.frame}")
        seen.add(key)
        if width is not None and not (0 <= a.x <= width - 1):
            raise InputError(f"cell {a.cell_id} x={a.x} outside grid width {width}")
        if height is not None and not (0 <= a.y <= height - 1):
            raise InputError(f"cell {a.cell_id} y={a.y} outside grid height {height}")
        frames_of.setdefault(a.cell_id, []).append(a.frame)
        prev = parent_of.get(a.cell_id)
        if prev is not None and a.parent_id is not None and prev != a.parent_id:
            raise InputError(f"cell {a.cell_id} has conflicting parent ids")
        if a.parent_id is not None:
            parent_of[a.cell_id] = a.parent_id
        else:
            parent_of.setdefault(a.cell_id, None)
    for cid, parent in parent_of.items():
        if parent is None:
            continue
        if parent not in frames_of:
            raise InputError(f"cell {cid} refers to unknown parent {parent}")
        if parent == cid:
            raise InputError(f"cell {cid} is its own parent")
        if max(frames_of[parent]) != min(frames_of[cid]) - 1:
            raise InputError(
                f"cell {cid} first appears at frame {min(frames_of[cid])} but its "
                f"parent {parent} ends at frame {max(frames_of[parent])}"
            )
