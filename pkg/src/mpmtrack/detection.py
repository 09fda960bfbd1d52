"""Cell detection: Gaussian smoothing of a likelihood map followed by
local-maximum extraction."""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ConfigError
from .fields import LikelihoodMap


@dataclass(frozen=True)
class DetectorConfig:
    smooth_sigma: float = 2.0
    peak_threshold: float = 0.3
    min_separation: int = 3

    def __post_init__(self):
        if self.smooth_sigma < 0:
            raise ConfigError(f"smooth_sigma must be >= 0, got {self.smooth_sigma}")
        if not 0 < self.peak_threshold < 1:
            raise ConfigError(f"peak_threshold must be in (0, 1), got {self.peak_threshold}")
        if self.min_separation < 1:
            raise ConfigError(f"min_separation must be >= 1, got {self.min_separation}")


@dataclass(frozen=True)
class Detection:
    """A detected cell: integer peak pixel plus its smoothed likelihood."""

    x: int
    y: int
    frame: int
    confidence: float


def smooth(map: LikelihoodMap, smooth_sigma: float) -> LikelihoodMap:
    """Separable Gaussian blur, kernel truncated at 3 sigma, reflect padding.

    sigma 0 is the identity.
    """
    if smooth_sigma < 0:
        raise ConfigError(f"smooth_sigma must be >= 0, got {smooth_sigma}")
    values = np.asarray(map.values, dtype=np.float64)
    radius = int(3.0 * smooth_sigma)
    if radius == 0:
        return LikelihoodMap(map.width, map.height, values.copy())
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (offsets / smooth_sigma) ** 2)
    kernel /= kernel.sum()
    out = ndimage.correlate1d(values, kernel, axis=0, mode="reflect")
    out = ndimage.correlate1d(out, kernel, axis=1, mode="reflect")
    return LikelihoodMap(map.width, map.height, out)


def peaks_of_smoothed(sm: LikelihoodMap, cfg: DetectorConfig, frame: int) -> list[Detection]:
    """Peaks of an already-smoothed map; see find_peaks for the contract."""
    v = sm.values
    s = cfg.min_separation
    neighborhood_max = ndimage.maximum_filter(v, size=2 * s + 1, mode="constant", cval=-1.0)
    cand = np.argwhere((v == neighborhood_max) & (v >= cfg.peak_threshold))
    peaks = []
    for py, px in cand:
        val = v[py, px]
        y0, x0 = max(0, py - s), max(0, px - s)
        win = v[y0 : py + s + 1, x0 : px + s + 1]
        eq = np.argwhere(win == val)
        # on a plateau only the lexicographically smallest (y, x) survives
        first = min((int(r) + y0, int(c) + x0) for r, c in eq)
        if first == (int(py), int(px)):
            peaks.append(Detection(int(px), int(py), frame, float(val)))
    peaks.sort(key=lambda d: (-d.confidence, d.y, d.x))
    return peaks


def find_peaks(map: LikelihoodMap, cfg: DetectorConfig, frame: int) -> list[Detection]:
    """Detect cells on a likelihood map.

    The map is smoothed with cfg.smooth_sigma; a pixel is a peak when its
    value is at least cfg.peak_threshold and strictly exceeds every other
    pixel of its (2*min_separation+1)^2 neighborhood, with equal-valued
    plateaus resolved to the smallest (y, x). Detections come back ordered
    by descending confidence, ties by (y, x).
    """
    return peaks_of_smoothed(smooth(map, cfg.smooth_sigma), cfg, frame)
