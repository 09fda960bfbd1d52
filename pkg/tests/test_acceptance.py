"""End-to-end acceptance suite.

Each test is one shipping criterion; the terminal summary prints one
ACCEPTANCE line per criterion (see conftest.py). Thresholds marked as
calibrated were measured on the frozen seed sets below and then pinned.
"""

import math
import time

import numpy as np

from mpmtrack import (
    Annotation,
    EncoderConfig,
    MpmField,
    NoiseConfig,
    SimConfig,
    degrade,
    encode_mpm,
    evaluate_tracking,
    find_peaks,
    likelihood_of,
    mpm_loss,
    oracle_provider,
    registry_from_annotations,
    simulate,
    track_sequence,
)
from mpmtrack.detection import DetectorConfig
from mpmtrack.formats import (
    read_annotations,
    read_mpm,
    read_tracks,
    write_annotations,
    write_mpm,
    write_tracks,
)
from mpmtrack.tracking import TrackPoint, Trajectory, TrackRegistry

from _metric_oracle import random_instance, reference_scores

GRID = 256
SIGMA = 6.0  # cutoff 24; min_separation 48 = 2 * cutoff; max_step 6 < cutoff


def clean_sim(seed, cells, n_frames=50, division_prob=0.0):
    return SimConfig(
        width=GRID,
        height=GRID,
        n_initial_cells=cells,
        n_frames=n_frames,
        step_sigma=2.0,
        max_step=6.0,
        division_prob=division_prob,
        min_separation=48.0,
        seed=seed,
    )


def encoder():
    return EncoderConfig(width=GRID, height=GRID, sigma=SIGMA)


def test_criterion_round_trip_clean():
    """100 clean simulated sequences track back to their ground truth
    exactly, within the time budget."""
    t0 = time.perf_counter()
    for seed in range(100):
        anns = simulate(clean_sim(seed, cells=5 + seed % 6))
        registry = track_sequence(oracle_provider(anns, encoder()), 0, 49)
        truth = registry_from_annotations(anns)
        score = evaluate_tracking(truth, registry)
        assert score.association_accuracy == 1.0, (seed, score.association_accuracy)
        assert score.target_effectiveness == 1.0, (seed, score.target_effectiveness)
    elapsed = time.perf_counter() - t0
    assert elapsed < 60.0, f"took {elapsed:.1f}s"


def test_criterion_division_handling():
    """Every ground-truth division is registered with correct parent links.

    Seeds are chosen so no division falls on the very first transition: a
    cell that exists only at frame 0 is never part of any observable tracker
    state, so its division cannot be attributed by any tracker.
    """
    total = matched = 0
    for seed in range(10):
        anns = simulate(clean_sim(seed, cells=6, division_prob=0.01))
        registry = track_sequence(oracle_provider(anns, encoder()), 0, 49)

        by_key = {(a.cell_id, a.frame): a for a in anns}
        births: dict[int, int] = {}
        parent: dict[int, int] = {}
        for a in anns:
            births[a.cell_id] = min(births.get(a.cell_id, a.frame), a.frame)
            if a.parent_id is not None:
                parent[a.cell_id] = a.parent_id
        divisions: dict[tuple[int, int], list[int]] = {}
        for cid, m in parent.items():
            divisions.setdefault((m, births[cid]), []).append(cid)
        assert divisions, f"seed {seed} produced no divisions"
        assert all(b >= 2 for _, b in divisions), f"seed {seed} divides at frame 1"

        def track_at(x, y, frame):
            for t in registry.trajectories.values():
                for p in t.points:
                    if p.frame == frame and math.hypot(p.x - x, p.y - y) <= 1.0:
                        return t
            return None

        for (m, b), kids in divisions.items():
            total += 1
            assert len(kids) == 2
            found = [track_at(by_key[(c, b)].x, by_key[(c, b)].y, b) for c in kids]
            if any(t is None or t.parent_track is None for t in found):
                continue
            mothers = {t.parent_track for t in found}
            if len(mothers) != 1:
                continue
            pm = registry.trajectories[next(iter(mothers))]
            ma = by_key[(m, b - 1)]
            pt = next((p for p in pm.points if p.frame == b - 1), None)
            if pt is not None and math.hypot(pt.x - ma.x, pt.y - ma.y) <= 1.0:
                matched += 1

        n_pred = sum(
            1
            for t in registry.trajectories.values()
            if t.parent_track is not None
        )
        assert n_pred == 2 * len(divisions), (seed, n_pred, len(divisions))
    assert matched == total, f"only {matched}/{total} divisions registered"
    assert total >= 15  # the seed set must actually exercise divisions


def test_criterion_interpolation_recovery():
    """Gap recovery lifts target effectiveness to >= 0.98 on dropped
    detections and beats the recovery-disabled tracker strictly.

    Threshold calibrated on this exact seed set: enabled 3617/3650
    (0.99096), disabled 1389/3650 (0.38055); losses are confined to drops at
    the first or last frames, which no tracker can interpolate across.
    """
    on_cov = on_tot = off_cov = off_tot = 0
    for seed in range(10):
        anns = simulate(clean_sim(seed, cells=6 + seed % 4))
        noise = NoiseConfig(drop_prob=0.1, max_consecutive_drops=2, seed=seed)
        truth = registry_from_annotations(anns)
        for recover in (True, False):
            provider = degrade(oracle_provider(anns, encoder()), noise)
            registry = track_sequence(provider, 0, 49, recover=recover)
            score = evaluate_tracking(truth, registry)
            if recover:
                on_cov += score.covered_frames
                on_tot += score.target_frames
            else:
                off_cov += score.covered_frames
                off_tot += score.target_frames
    te_on = on_cov / on_tot
    te_off = off_cov / off_tot
    assert te_off < te_on, (te_off, te_on)
    assert te_on >= 0.98, f"enabled run scored {te_on:.5f} = {on_cov}/{on_tot}"


def test_criterion_loss_properties():
    """The field loss is exactly zero on identical fields and matches the
    single-pixel hand cases."""
    rng = np.random.default_rng(123)
    for k in range(50):
        h, w = int(rng.integers(2, 24)), int(rng.integers(2, 24))
        vec = rng.uniform(-0.6, 0.6, (h, w, 3)).astype(np.float32)
        f = MpmField(w, h, 1, 1, vec)
        assert mpm_loss(f, f) <= 1e-12

    unit_x = MpmField(1, 1, 1, 1, np.array([[[1.0, 0.0, 0.0]]], dtype=np.float32))
    unit_y = MpmField(1, 1, 1, 1, np.array([[[0.0, 1.0, 0.0]]], dtype=np.float32))
    zero = MpmField(1, 1, 1, 1, np.zeros((1, 1, 3), dtype=np.float32))
    assert mpm_loss(unit_x, unit_y) == 2.0
    assert mpm_loss(unit_x, zero) == 2.0


def test_criterion_metric_oracle_equivalence():
    """Both tracking scores agree with an exhaustive reference implementation
    to exact rational equality on 200 fuzzed instances, plus the golden
    switch fixtures."""
    rng = np.random.default_rng(777)
    for k in range(200):
        truth, pred = random_instance(rng)
        got = evaluate_tracking(truth, pred)
        want = reference_scores(truth, pred, radius=10.0)
        assert got.assoc_true == want["assoc_true"], k
        assert got.assoc_total == want["assoc_total"], k
        assert got.covered_frames == want["covered"], k
        assert got.target_frames == want["total_frames"], k

    def registry_of(tracks):
        reg = TrackRegistry()
        for tid, pts in tracks.items():
            pts = sorted(pts)
            reg.trajectories[tid] = Trajectory(
                tid, pts[0][0], [TrackPoint(f, float(x), float(y)) for f, x, y in pts]
            )
        reg.next_id = max(tracks, default=0) + 1
        return reg

    # a track that switches to the wrong cell at the last frame: 2 of 4 links hold
    truth = registry_of(
        {1: [(f, 0, 0) for f in range(3)], 2: [(f, 30, 0) for f in range(3)]}
    )
    swapped = registry_of(
        {
            7: [(0, 0, 0), (1, 0, 0), (2, 30, 0)],
            8: [(0, 30, 0), (1, 30, 0), (2, 0, 0)],
        }
    )
    assert evaluate_tracking(truth, swapped).association_accuracy == 0.5

    # a track replaced mid-way: the best single track covers half the target
    truth = registry_of({1: [(f, 10, 10) for f in range(4)]})
    split = registry_of(
        {5: [(0, 10, 10), (1, 10, 10)], 6: [(2, 10, 10), (3, 10, 10)]}
    )
    assert evaluate_tracking(truth, split).target_effectiveness == 0.5


def test_criterion_detection_properties():
    """On clean fields every annotation yields exactly one peak within one
    pixel, and raising the threshold never adds peaks."""
    rng = np.random.default_rng(4242)
    enc = encoder()
    det = DetectorConfig()
    maps = []
    for k in range(100):
        n = 4 + k % 5
        placed: list[tuple[float, float]] = []
        while len(placed) < n:
            x = float(rng.uniform(30, GRID - 31))
            y = float(rng.uniform(30, GRID - 31))
            if all(math.hypot(x - px, y - py) >= 48.0 for px, py in placed):
                placed.append((x, y))
            elif rng.random() < 0.05:
                placed.clear()
        pairs = []
        for i, (x, y) in enumerate(placed, start=1):
            px = x + float(rng.uniform(-4, 4))
            py = y + float(rng.uniform(-4, 4))
            pairs.append((Annotation(i, 1, x, y), Annotation(i, 0, px, py)))
        lik = likelihood_of(encode_mpm(pairs, enc))
        dets = find_peaks(lik, det, frame=1)
        assert len(dets) == n, (k, len(dets), n)
        for x, y in placed:
            nearest = min(math.hypot(d.x - x, d.y - y) for d in dets)
            assert nearest <= 1.0, (k, nearest)
        if k < 10:
            maps.append(lik)

    for lik in maps:
        counts = [
            len(find_peaks(lik, DetectorConfig(peak_threshold=th), frame=0))
            for th in (0.1, 0.3, 0.5, 0.9)
        ]
        assert counts == sorted(counts, reverse=True), counts


def test_criterion_format_round_trips(tmp_path):
    """All three on-disk formats are write -> read -> write byte-stable."""
    rng = np.random.default_rng(99)

    for k in range(20):
        anns = []
        for i in range(1, int(rng.integers(1, 15)) + 1):
            parent = int(rng.integers(1, i)) if i > 1 and rng.random() < 0.3 else None
            anns.append(
                Annotation(
                    i,
                    int(rng.integers(0, 40)),
                    float(rng.uniform(0, 400)),
                    float(rng.uniform(0, 400)),
                    parent,
                )
            )
        p1 = tmp_path / f"ann_{k}a.csv"
        p2 = tmp_path / f"ann_{k}b.csv"
        write_annotations(anns, p1)
        write_annotations(read_annotations(p1), p2)
        assert p1.read_bytes() == p2.read_bytes(), k

    for k in range(20):
        reg = TrackRegistry()
        for tid in range(1, int(rng.integers(1, 7)) + 1):
            birth = int(rng.integers(0, 12))
            pts = [
                TrackPoint(
                    birth + j,
                    float(rng.uniform(0, 300)),
                    float(rng.uniform(0, 300)),
                    bool(rng.random() < 0.25),
                )
                for j in range(int(rng.integers(1, 8)))
            ]
            parent = int(rng.integers(1, tid)) if tid > 1 and rng.random() < 0.3 else None
            reg.trajectories[tid] = Trajectory(tid, birth, pts, parent_track=parent)
        p1 = tmp_path / f"trk_{k}a.csv"
        p2 = tmp_path / f"trk_{k}b.csv"
        write_tracks(reg, p1)
        write_tracks(read_tracks(p1), p2)
        assert p1.read_bytes() == p2.read_bytes(), k

    for k in range(20):
        w, h = int(rng.integers(2, 40)), int(rng.integers(2, 40))
        gap = int(rng.integers(1, 4))
        frame_t = gap + int(rng.integers(0, 20))
        vec = rng.normal(0, 0.4, (h, w, 3)).astype(np.float32)
        field = MpmField(w, h, frame_t, gap, vec)
        p1 = tmp_path / f"f_{k}a.mpm"
        p2 = tmp_path / f"f_{k}b.mpm"
        write_mpm(field, p1)
        write_mpm(read_mpm(p1), p2)
        assert p1.read_bytes() == p2.read_bytes(), k
