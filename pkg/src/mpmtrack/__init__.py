"""Cell tracking on motion-and-position vector fields.

The pipeline: encode point annotations of frame pairs into dense vector
fields whose magnitudes localize cells and whose directions associate them
backward in time; detect peaks; associate detections into trajectories with
division handling and gap recovery; score the result.
"""

from .detection import Detection, DetectorConfig, find_peaks, smooth
from .errors import (
    ConfigError,
    FormatError,
    GenerationError,
    InputError,
    MpmError,
    NoMotionError,
    PairError,
    SequenceError,
)
from .fields import (
    Annotation,
    EncoderConfig,
    LikelihoodMap,
    MpmField,
    encode_individual,
    encode_mpm,
    gaussian_weight,
    likelihood_of,
    mpm_loss,
    validate_annotations,
)
from .metrics import (
    DetectionMatchConfig,
    DetectionScore,
    TrackingScore,
    association_accuracy,
    evaluate_tracking,
    match_detections,
    match_positions,
    target_effectiveness,
)
from .simulate import (
    NoiseConfig,
    SimConfig,
    degrade,
    oracle_provider,
    simulate,
)
from .tracking import (
    AssociationEvents,
    MpmProvider,
    TrackPoint,
    TrackRegistry,
    TrackerConfig,
    Trajectory,
    associate_frame,
    climb,
    estimate_source,
    recover_terminated,
    registry_from_annotations,
    track_sequence,
)

__all__ = [
    "Annotation",
    "AssociationEvents",
    "ConfigError",
    "Detection",
    "DetectionMatchConfig",
    "DetectionScore",
    "DetectorConfig",
    "EncoderConfig",
    "FormatError",
    "GenerationError",
    "InputError",
    "LikelihoodMap",
    "MpmError",
    "MpmField",
    "MpmProvider",
    "NoMotionError",
    "NoiseConfig",
    "PairError",
    "SequenceError",
    "SimConfig",
    "TrackPoint",
    "TrackRegistry",
    "TrackerConfig",
    "TrackingScore",
    "Trajectory",
    "associate_frame",
    "association_accuracy",
    "climb",
    "degrade",
    "encode_individual",
    "encode_mpm",
    "estimate_source",
    "evaluate_tracking",
    "find_peaks",
    "gaussian_weight",
    "likelihood_of",
    "match_detections",
    "match_positions",
    "mpm_loss",
    "oracle_provider",
    "recover_terminated",
    "registry_from_annotations",
    "simulate",
    "smooth",
    "target_effectiveness",
    "track_sequence",
    "validate_annotations",
]
