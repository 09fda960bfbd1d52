import math

import numpy as np
import pytest

from mpmtrack import (
    Annotation,
    ConfigError,
    DetectorConfig,
    EncoderConfig,
    LikelihoodMap,
    encode_mpm,
    find_peaks,
    likelihood_of,
)
from mpmtrack.detection import peaks_of_smoothed, smooth


def lmap(arr):
    arr = np.asarray(arr, dtype=np.float64)
    return LikelihoodMap(arr.shape[1], arr.shape[0], arr)


def brute_force_peaks(values, threshold, min_sep):
    """Reference maxima finder: literal definition, no vectorization.

    A pixel wins if its value is above threshold and no pixel in the
    (2*min_sep+1)^2 window beats it; plateau ties go to the smallest
    (y, x) inside the window.
    """
    h, w = values.shape
    out = []
    for y in range(h):
        for x in range(w):
            v = values[y, x]
            if v <= threshold:
                continue
            window = [
                (values[yy, xx], yy, xx)
                for yy in range(max(0, y - min_sep), min(h, y + min_sep + 1))
                for xx in range(max(0, x - min_sep), min(w, x + min_sep + 1))
            ]
            top = max(val for val, _, _ in window)
            if top > v:
                continue
            first = min((yy, xx) for val, yy, xx in window if val == v)
            if first == (y, x):
                out.append((x, y, v))
    out.sort(key=lambda t: (-t[2], t[1], t[0]))
    return out


class TestSmooth:
    def test_sigma_zero_identity(self):
        rng = np.random.default_rng(0)
        m = lmap(rng.uniform(0, 1, (12, 10)))
        out = smooth(m, 0.0)
        assert np.array_equal(out.values, m.values)

    def test_constant_preserved(self):
        m = lmap(np.full((20, 20), 0.7))
        out = smooth(m, 2.0)
        assert np.allclose(out.values, 0.7, atol=1e-12)

    def test_impulse_response_matches_kernel(self):
        sigma = 1.5
        radius = int(3.0 * sigma)
        xs = np.arange(-radius, radius + 1, dtype=np.float64)
        k = np.exp(-0.5 * (xs / sigma) ** 2)
        k /= k.sum()
        expected = np.outer(k, k)

        size = 41
        arr = np.zeros((size, size))
        arr[20, 20] = 1.0
        out = smooth(lmap(arr), sigma).values
        window = out[20 - radius : 20 + radius + 1, 20 - radius : 20 + radius + 1]
        assert np.allclose(window, expected, atol=1e-12)
        # nothing escapes the truncated kernel footprint
        mask = np.ones((size, size), dtype=bool)
        mask[20 - radius : 20 + radius + 1, 20 - radius : 20 + radius + 1] = False
        assert np.all(out[mask] == 0.0)

    def test_range_preserved(self):
        rng = np.random.default_rng(4)
        m = lmap(rng.uniform(0, 1, (30, 30)))
        out = smooth(m, 2.0).values
        assert out.min() >= 0.0 - 1e-12
        assert out.max() <= 1.0 + 1e-12


class TestFindPeaks:
    def cfg(self, **kw):
        return DetectorConfig(**kw)

    def test_single_blob(self):
        enc = EncoderConfig(width=40, height=40, sigma=3.0)
        f = encode_mpm([(Annotation(1, 1, 20, 17), Annotation(1, 0, 20, 17))], enc)
        dets = find_peaks(likelihood_of(f), self.cfg(), frame=1)
        assert len(dets) == 1
        assert dets[0].frame == 1
        assert math.hypot(dets[0].x - 20, dets[0].y - 17) <= 1.0

    def test_two_blobs_found_and_ordered(self):
        enc = EncoderConfig(width=80, height=80, sigma=3.0)
        pairs = [
            (Annotation(1, 1, 20, 20), Annotation(1, 0, 20, 20)),
            (Annotation(2, 1, 60, 55), Annotation(2, 0, 60, 55)),
        ]
        dets = find_peaks(likelihood_of(encode_mpm(pairs, enc)), self.cfg(), frame=1)
        assert len(dets) == 2
        assert dets[0].confidence >= dets[1].confidence
        found = sorted((round(d.x), round(d.y)) for d in dets)
        assert found == [(20, 20), (60, 55)]

    def test_all_zero(self):
        dets = find_peaks(lmap(np.zeros((16, 16))), self.cfg(), frame=0)
        assert dets == []

    def test_below_threshold_excluded(self):
        arr = np.zeros((16, 16))
        arr[8, 8] = 0.25
        dets = find_peaks(lmap(arr), self.cfg(smooth_sigma=0.0, peak_threshold=0.3), frame=0)
        assert dets == []
        dets = find_peaks(lmap(arr), self.cfg(smooth_sigma=0.0, peak_threshold=0.2), frame=0)
        assert len(dets) == 1

    def test_plateau_reports_smallest_yx(self):
        arr = np.zeros((20, 20))
        arr[9:12, 9:12] = 0.8  # 3x3 flat top
        dets = peaks_of_smoothed(lmap(arr), self.cfg(min_separation=3), frame=0)
        assert len(dets) == 1
        assert (dets[0].y, dets[0].x) == (9, 9)

    def test_matches_brute_force_on_random_maps(self):
        rng = np.random.default_rng(17)
        cfg = self.cfg(smooth_sigma=0.0, peak_threshold=0.3, min_separation=3)
        for _ in range(25):
            vals = rng.uniform(0, 1, (18, 15))
            # quantize to force some exact plateau ties
            vals = np.round(vals, 1)
            got = find_peaks(lmap(vals), cfg, frame=0)
            want = brute_force_peaks(vals, 0.3, 3)
            assert [(d.x, d.y) for d in got] == [(x, y) for x, y, _ in want]
            assert [d.confidence for d in got] == pytest.approx(
                [v for _, _, v in want]
            )

    def test_threshold_monotone(self):
        rng = np.random.default_rng(8)
        vals = rng.uniform(0, 1, (40, 40))
        counts = []
        for th in (0.1, 0.3, 0.5, 0.9):
            cfg = self.cfg(smooth_sigma=0.0, peak_threshold=th)
            counts.append(len(find_peaks(lmap(vals), cfg, frame=0)))
        assert counts == sorted(counts, reverse=True)

    def test_clean_field_complete_and_close(self):
        rng = np.random.default_rng(99)
        enc = EncoderConfig(width=128, height=128, sigma=6.0)
        det_cfg = self.cfg()
        for trial in range(10):
            pairs = []
            placed = []
            while len(placed) < 4:
                x = rng.uniform(30, 98)
                y = rng.uniform(30, 98)
                if all(math.hypot(x - px, y - py) >= 40 for px, py in placed):
                    placed.append((x, y))
                else:
                    placed = []
            for i, (x, y) in enumerate(placed, start=1):
                prev = Annotation(i, 0, x + rng.uniform(-2, 2), y + rng.uniform(-2, 2))
                pairs.append((Annotation(i, 1, x, y), prev))
            dets = find_peaks(likelihood_of(encode_mpm(pairs, enc)), det_cfg, frame=1)
            assert len(dets) == len(placed)
            for x, y in placed:
                d = min(math.hypot(det.x - x, det.y - y) for det in dets)
                assert d <= 1.0

    def test_deterministic(self):
        rng = np.random.default_rng(2)
        vals = rng.uniform(0, 1, (25, 25))
        a = find_peaks(lmap(vals), self.cfg(), frame=3)
        b = find_peaks(lmap(vals), self.cfg(), frame=3)
        assert a == b


class TestDetectorConfig:
    def test_threshold_bounds(self):
        with pytest.raises(ConfigError):
            DetectorConfig(peak_threshold=0.0)
        with pytest.raises(ConfigError):
            DetectorConfig(peak_threshold=1.0)

    def test_min_separation_positive(self):
        with pytest.raises(ConfigError):
            DetectorConfig(min_separation=0)

    def test_negative_sigma(self):
        with pytest.raises(ConfigError):
            DetectorConfig(smooth_sigma=-1.0)
