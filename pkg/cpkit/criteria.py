"""
Close-pass criteria
The per-detection decision function and the road-rule labels derived from it
"""
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .errors import InvalidArgumentError
from .geometry import (
    ObjectState,
    RigGeometry,
    TrafficSide,
    lateral_offset,
    longitudinal_overlap,
    on_passing_side,
    passing_distance,
)


@dataclass(frozen=True)
class SpeedZone:
    """Posted speed limit of a road segment; ``None`` means the sign could not be read"""
    limit_kmh: Optional[float]

    def __post_init__(self):
        if self.limit_kmh is not None and not self.limit_kmh > 0:
            raise InvalidArgumentError(f"limit_kmh must be positive, got {self.limit_kmh}")

    @classmethod
    def unknown(cls) -> 'SpeedZone':
        return cls(None)

    @property
    def is_known(self) -> bool:
        return self.limit_kmh is not None

    @property
    def label(self) -> str:
        if self.limit_kmh is None:
            return 'unknown'
        return f"{self.limit_kmh:g}"


@dataclass(frozen=True)
class CriteriaConfig:
    rig: RigGeometry = field(default_factory=RigGeometry)
    traffic_side: TrafficSide = TrafficSide.LEFT_HAND
    clearance_low_m: float = 1.0
    clearance_high_m: float = 1.5
    zone_boundary_kmh: float = 60.0

    def __post_init__(self):
        object.__setattr__(self, 'traffic_side', TrafficSide(self.traffic_side))
        if not 0 < self.clearance_low_m <= self.clearance_high_m:
            raise InvalidArgumentError(
                f"need 0 < clearance_low_m <= clearance_high_m, got "
                f"{self.clearance_low_m} and {self.clearance_high_m}")
        if not self.zone_boundary_kmh > 0:
            raise InvalidArgumentError(f"zone_boundary_kmh must be positive, got {self.zone_boundary_kmh}")

    def to_dict(self) -> dict:
        return {
            'd_ch': self.rig.d_ch,
            'l_b': self.rig.l_b,
            'traffic_side': self.traffic_side.value,
            'clearance_low_m': self.clearance_low_m,
            'clearance_high_m': self.clearance_high_m,
            'zone_boundary_kmh': self.zone_boundary_kmh,
        }


@dataclass(frozen=True)
class CpVerdict:
    """
    Per-criterion breakdown of one detection

    For motor vehicles ``clearance_violated`` is ``clearance_m < required_clearance_m``.
    Other road users are never close passes: their clearance is still reported,
    but every criterion flag is False.
    """
    is_cp: bool
    clearance_m: float
    clearance_violated: bool
    overlapping: bool
    on_side: bool
    required_clearance_m: float

    @property
    def failed_only_clearance(self) -> bool:
        return not self.clearance_violated and self.overlapping and self.on_side


def required_clearance(zone: SpeedZone, cfg: CriteriaConfig) -> float:
    """Minimum legal passing distance for a speed zone

    Unreadable zones are treated as above the boundary.
    """
    if zone.limit_kmh is not None and zone.limit_kmh <= cfg.zone_boundary_kmh:
        return cfg.clearance_low_m
    return cfg.clearance_high_m


def classify_detection(obj: ObjectState, zone: SpeedZone, cfg: CriteriaConfig) -> CpVerdict:
    """Apply the clearance, overlap and passing-side criteria to one detection"""
    required = required_clearance(zone, cfg)
    clearance = passing_distance(lateral_offset(obj.d_r, cfg.traffic_side), obj.width_m, cfg.rig)
    if not obj.is_motor_vehicle:
        return CpVerdict(
            is_cp=False,
            clearance_m=clearance,
            clearance_violated=False,
            overlapping=False,
            on_side=False,
            required_clearance_m=required,
        )

    violated = clearance < required
    overlapping = longitudinal_overlap(obj.d_f, obj.length_m, cfg.rig)
    on_side = on_passing_side(obj.d_r, cfg.traffic_side)
    return CpVerdict(
        is_cp=violated and overlapping and on_side,
        clearance_m=clearance,
        clearance_violated=violated,
        overlapping=overlapping,
        on_side=on_side,
        required_clearance_m=required,
    )


def label_pass_event(lateral_distance_m: float, zone: SpeedZone, cfg: CriteriaConfig) -> bool:
    """Road-rule label of a sensor-measured pass: True when the pass is illegal"""
    if not lateral_distance_m >= 0:
        raise InvalidArgumentError(f"lateral_distance_m must be non-negative, got {lateral_distance_m}")
    return lateral_distance_m < required_clearance(zone, cfg)


def scene_label(verdicts: Iterable[CpVerdict]) -> bool:
    """A clip is positive when any of its detections is a close pass"""
    return any(v.is_cp for v in verdicts)
