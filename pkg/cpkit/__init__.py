"""
cpkit - close-pass toolkit for camera-equipped bicycles
Geometry, criteria, scenario simulation, log ingestion and evaluation
for detecting vehicles that overtake cyclists too closely.
"""

__version__ = "1.0.0"
__author__ = "cpkit developers"

from .criteria import (
    CpVerdict,
    CriteriaConfig,
    SpeedZone,
    classify_detection,
    label_pass_event,
    required_clearance,
    scene_label,
)
from .errors import (
    AlignmentError,
    BehindCameraError,
    ConfigError,
    CpkitError,
    InvalidArgumentError,
    MetricError,
    SchemaError,
    UnsortedStreamError,
)
from .evaluation import (
    ConfusionMatrix,
    MetricsReport,
    Outcome,
    TimeWindow,
    dataset_stats,
    evaluate_run,
    match_event,
    roc_auc,
    scene_metrics,
)
from .geometry import (
    CameraIntrinsics,
    Category,
    ImagePoint25D,
    ObjectState,
    RigGeometry,
    TrafficSide,
    backproject,
    longitudinal_overlap,
    on_passing_side,
    passing_distance,
    project,
)
from .simulator import (
    NoiseModel,
    PassingEvent,
    Scenario,
    ScenarioConfig,
    generate_batch,
    ground_truth_events,
    perturb,
    sample_scenario,
    simulate,
)

__all__ = [
    "AlignmentError",
    "BehindCameraError",
    "CameraIntrinsics",
    "Category",
    "ConfigError",
    "ConfusionMatrix",
    "CpVerdict",
    "CpkitError",
    "CriteriaConfig",
    "ImagePoint25D",
    "InvalidArgumentError",
    "MetricError",
    "MetricsReport",
    "NoiseModel",
    "ObjectState",
    "Outcome",
    "PassingEvent",
    "RigGeometry",
    "Scenario",
    "ScenarioConfig",
    "SchemaError",
    "SpeedZone",
    "TimeWindow",
    "TrafficSide",
    "UnsortedStreamError",
    "backproject",
    "classify_detection",
    "dataset_stats",
    "evaluate_run",
    "generate_batch",
    "ground_truth_events",
    "label_pass_event",
    "longitudinal_overlap",
    "match_event",
    "on_passing_side",
    "passing_distance",
    "perturb",
    "project",
    "required_clearance",
    "roc_auc",
    "sample_scenario",
    "scene_label",
    "scene_metrics",
    "simulate",
]
