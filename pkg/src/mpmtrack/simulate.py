"""Synthetic cell sequences and controlled degradation of encoded fields.

simulate() produces annotations by clamped Gaussian random walks with
pairwise-separation rejection sampling; divisions replace a cell by two
daughters placed symmetrically around it. oracle_provider() re-encodes any
requested frame pair from those annotations, pairing each cell at the later
frame with its own (or its nearest ancestor's) position at the earlier
frame. degrade() injects detection drops, vector noise, and clutter blobs,
each stream keyed by (seed, purpose, frame pair) so results do not depend on
request order.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, GenerationError
from .fields import Annotation, EncoderConfig, MpmField, encode_mpm
from .tracking import MpmProvider

_PLACE_TRIES = 2000
_WALK_TRIES = 50
_DIV_TRIES = 72

# stream tags for the keyed generators
_S_DROPS = 1
_S_NOISE = 2
_S_CLUTTER = 3


@dataclass(frozen=True)
class SimConfig:
    width: int = 256
    height: int = 256
    n_initial_cells: int = 10
    n_frames: int = 50
    step_sigma: float = 2.0
    max_step: float = 6.0
    division_prob: float = 0.0
    min_separation: float = 48.0
    boundary_margin: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ConfigError("grid must be at least 1x1")
        if self.n_initial_cells < 0 or self.n_frames < 1:
            raise ConfigError("need n_initial_cells >= 0 and n_frames >= 1")
        if self.step_sigma < 0 or self.max_step < 0:
            raise ConfigError("step parameters must be >= 0")
        if not 0 <= self.division_prob <= 1:
            raise ConfigError(f"division_prob must be in [0, 1], got {self.division_prob}")
        if self.min_separation < 0 or self.boundary_margin < 0:
            raise ConfigError("separation and margin must be >= 0")


@dataclass(frozen=True)
class NoiseConfig:
    drop_prob: float = 0.0
    max_consecutive_drops: int = 2
    vector_noise_sigma: float = 0.0
    clutter_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.drop_prob <= 1:
            raise ConfigError(f"drop_prob must be in [0, 1], got {self.drop_prob}")
        if self.max_consecutive_drops < 0:
            raise ConfigError("max_consecutive_drops must be >= 0")
        if self.vector_noise_sigma < 0 or self.clutter_rate < 0:
            raise ConfigError("noise magnitudes must be >= 0")


def _keyed_rng(*entropy: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def _inside(p, cfg: SimConfig) -> bool:
    m = cfg.boundary_margin
    return m <= p[0] <= cfg.width - 1 - m and m <= p[1] <= cfg.height - 1 - m


def _clear_of(p, others, min_separation: float, skip=()) -> bool:
    for cid, q in others.items():
        if cid in skip:
            continue
        if math.hypot(p[0] - q[0], p[1] - q[1]) < min_separation:
            return False
    return True


def simulate(cfg: SimConfig) -> list[Annotation]:
    """Generate an annotated sequence; deterministic for a given seed.

    Raises GenerationError when the initial cells cannot be packed. A
    division or move that cannot be placed after bounded retries is skipped
    (the cell stays put), never invalidating the packing.
    """
    rng = np.random.default_rng(cfg.seed)
    positions: dict[int, tuple[float, float]] = {}
    parent: dict[int, int] = {}
    for cid in range(1, cfg.n_initial_cells + 1):
        for _ in range(_PLACE_TRIES):
            p = (
                float(rng.uniform(cfg.boundary_margin, cfg.width - 1 - cfg.boundary_margin)),
                float(rng.uniform(cfg.boundary_margin, cfg.height - 1 - cfg.boundary_margin)),
            )
            if _clear_of(p, positions, cfg.min_separation):
                positions[cid] = p
                break
        else:
            raise GenerationError(
                f"could not place {cfg.n_initial_cells} cells at separation "
                f"{cfg.min_separation} in a {cfg.width}x{cfg.height} grid"
            )
    next_id = cfg.n_initial_cells + 1

    annotations: list[Annotation] = []

    def record(frame: int):
        for cid in sorted(positions):
            x, y = positions[cid]
            annotations.append(Annotation(cid, frame, x, y, parent.get(cid)))

    record(0)
    for frame in range(1, cfg.n_frames):
        for cid in sorted(positions):
            pos = positions[cid]
            if rng.random() < cfg.division_prob:
                placed = False
                for _ in range(_DIV_TRIES):
                    theta = rng.uniform(0.0, 2.0 * math.pi)
                    u = (math.cos(theta), math.sin(theta))
                    half = cfg.min_separation / 2.0
                    d1 = (pos[0] + half * u[0], pos[1] + half * u[1])
                    d2 = (pos[0] - half * u[0], pos[1] - half * u[1])
                    if (
                        _inside(d1, cfg)
                        and _inside(d2, cfg)
                        and _clear_of(d1, positions, cfg.min_separation, skip={cid})
                        and _clear_of(d2, positions, cfg.min_separation, skip={cid})
                    ):
                        del positions[cid]
                        for d in (d1, d2):
                            positions[next_id] = d
                            parent[next_id] = cid
                            next_id += 1
                        placed = True
                        break
                if placed:
                    continue
            for _ in range(_WALK_TRIES):
                step = rng.normal(0.0, cfg.step_sigma, 2)
                norm = math.hypot(step[0], step[1])
                if norm > cfg.max_step > 0:
                    step *= cfg.max_step / norm
                p = (pos[0] + float(step[0]), pos[1] + float(step[1]))
                if _inside(p, cfg) and _clear_of(p, positions, cfg.min_separation, skip={cid}):
                    positions[cid] = p
                    break
            # all retries rejected: the cell keeps its previous position
        record(frame)
    return annotations


class OracleProvider:
    """Encodes ground-truth fields for any in-range frame pair on demand."""

    def __init__(self, annotations: list[Annotation], encoder_cfg: EncoderConfig):
        self.cfg = encoder_cfg
        self.by_frame: dict[int, dict[int, tuple[float, float]]] = {}
        self.parent: dict[int, int | None] = {}
        for a in annotations:
            self.by_frame.setdefault(a.frame, {})[a.cell_id] = (a.x, a.y)
            if a.parent_id is not None:
                self.parent[a.cell_id] = a.parent_id
        self.first = min(self.by_frame, default=0)
        self.last = max(self.by_frame, default=-1)

    def _ancestor_at(self, cell_id: int, frame: int) -> int | None:
        cid: int | None = cell_id
        while cid is not None:
            if cid in self.by_frame.get(frame, {}):
                return cid
            cid = self.parent.get(cid)
        return None

    def pairs_for(self, earlier: int, later: int) -> list[tuple[Annotation, Annotation]]:
        pairs = []
        for cid in sorted(self.by_frame.get(later, {})):
            src = self._ancestor_at(cid, earlier)
            if src is None:
                continue
            x, y = self.by_frame[later][cid]
            sx, sy = self.by_frame[earlier][src]
            pairs.append(
                (Annotation(cid, later, x, y), Annotation(src, earlier, sx, sy))
            )
        return pairs

    def get(self, earlier: int, later: int) -> MpmField | None:
        if later <= earlier or earlier < self.first or later > self.last:
            return None
        return encode_mpm(
            self.pairs_for(earlier, later), self.cfg, gap=later - earlier, frame_t=later
        )


def oracle_provider(annotations: list[Annotation], encoder_cfg: EncoderConfig) -> OracleProvider:
    return OracleProvider(annotations, encoder_cfg)


class DegradedOracleProvider:
    """Oracle fields with per-cell detection drops, vector noise, and
    clutter blobs layered on top."""

    def __init__(
        self,
        base: OracleProvider,
        noise: NoiseConfig,
        drops: set[tuple[int, int]] | None = None,
    ):
        self.base = base
        self.noise = noise
        self.drops = self._drop_schedule() if drops is None else set(drops)

    def _drop_schedule(self) -> set[tuple[int, int]]:
        """Random (cell_id, frame) misses, capped per consecutive run.

        Each cell draws from its own keyed stream so the schedule does not
        depend on which fields get requested.
        """
        dropped: set[tuple[int, int]] = set()
        if self.noise.drop_prob <= 0:
            return dropped
        frames_of: dict[int, list[int]] = {}
        for f, cells in self.base.by_frame.items():
            for cid in cells:
                frames_of.setdefault(cid, []).append(f)
        for cid in sorted(frames_of):
            rng = _keyed_rng(self.noise.seed, _S_DROPS, cid)
            run = 0
            for f in sorted(frames_of[cid]):
                r = rng.random()
                if r < self.noise.drop_prob and run < self.noise.max_consecutive_drops:
                    dropped.add((cid, f))
                    run += 1
                else:
                    run = 0
        return dropped

    def get(self, earlier: int, later: int) -> MpmField | None:
        probe = self.base.get(earlier, later)
        if probe is None:
            return None
        pairs = [
            p for p in self.base.pairs_for(earlier, later)
            if (p[0].cell_id, later) not in self.drops
        ]
        cfg = self.base.cfg
        gap = later - earlier
        field = encode_mpm(pairs, cfg, gap=gap, frame_t=later)
        if self.noise.vector_noise_sigma <= 0 and self.noise.clutter_rate <= 0:
            return field
        vectors = field.vectors.astype(np.float64)
        if self.noise.vector_noise_sigma > 0:
            rng = _keyed_rng(self.noise.seed, _S_NOISE, earlier, later)
            vectors = vectors + rng.normal(
                0.0, self.noise.vector_noise_sigma, vectors.shape
            )
            norms = np.linalg.norm(vectors, axis=2, keepdims=True)
            over = norms > 1.0
            vectors = np.where(over, vectors / np.maximum(norms, 1e-12), vectors)
        if self.noise.clutter_rate > 0:
            rng = _keyed_rng(self.noise.seed, _S_CLUTTER, earlier, later)
            vectors = _add_clutter(vectors, cfg, self.noise.clutter_rate, rng)
        return MpmField(cfg.width, cfg.height, later, gap, vectors)


def _add_clutter(
    vectors: np.ndarray, cfg: EncoderConfig, rate: float, rng: np.random.Generator
) -> np.ndarray:
    """Spurious Gaussian blobs with random unit directions, merged by
    maximum magnitude."""
    out = vectors.copy()
    mags = np.linalg.norm(out, axis=2)
    r = int(math.ceil(cfg.cutoff_radius))
    for _ in range(int(rng.poisson(rate))):
        cx = int(rng.integers(0, cfg.width))
        cy = int(rng.integers(0, cfg.height))
        u = rng.normal(0.0, 1.0, 3)
        norm = float(np.linalg.norm(u))
        if norm < 1e-9:
            u = np.array([0.0, 0.0, 1.0])
            norm = 1.0
        u = u / norm
        y0, y1 = max(0, cy - r), min(cfg.height - 1, cy + r)
        x0, x1 = max(0, cx - r), min(cfg.width - 1, cx + r)
        ys = np.arange(y0, y1 + 1, dtype=np.float64)
        xs = np.arange(x0, x1 + 1, dtype=np.float64)
        d2 = (ys[:, None] - cy) ** 2 + (xs[None, :] - cx) ** 2
        w = np.where(d2 <= cfg.cutoff_radius**2, np.exp(-d2 / (cfg.sigma**2)), 0.0)
        sub = out[y0 : y1 + 1, x0 : x1 + 1]
        sub_m = mags[y0 : y1 + 1, x0 : x1 + 1]
        win = w > sub_m
        sub[win] = (w[win, None] * u[None, :])
        sub_m[win] = w[win]
    return out


def degrade(provider: OracleProvider, noise: NoiseConfig) -> MpmProvider:
    """Wrap an annotation-backed provider with the configured degradation."""
    if not isinstance(provider, OracleProvider):
        raise ConfigError("degrade requires an annotation-backed oracle provider")
    return DegradedOracleProvider(provider, noise)
