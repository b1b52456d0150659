"""
Shared fixtures for the cpkit test suite
"""
import pytest

from cpkit.criteria import CpVerdict, CriteriaConfig, SpeedZone
from cpkit.geometry import CameraIntrinsics, Category, ObjectState
from cpkit.ingest import VerdictRecord


def make_object(**overrides) -> ObjectState:
    """A car beside the camera unless told otherwise"""
    fields = dict(
        object_id='v000',
        category=Category.CAR,
        width_m=1.8,
        height_m=1.5,
        length_m=4.2,
        d_f=0.0,
        d_r=2.0,
    )
    fields.update(overrides)
    return ObjectState(**fields)


def make_verdict(t: float, violated: bool = True, overlapping: bool = True, on_side: bool = True,
                 clearance_m: float = 0.5, required_m: float = 1.0, clip_id: str = 'clip',
                 object_id: str = 'v000', frame: int = 0) -> VerdictRecord:
    """A verdict record at time ``t``; a close pass unless a criterion is switched off"""
    return VerdictRecord(
        clip_id=clip_id,
        frame=frame,
        t=t,
        object_id=object_id,
        category=Category.CAR,
        verdict=CpVerdict(
            is_cp=violated and overlapping and on_side,
            clearance_m=clearance_m,
            clearance_violated=violated,
            overlapping=overlapping,
            on_side=on_side,
            required_clearance_m=required_m,
        ),
    )


@pytest.fixture
def criteria() -> CriteriaConfig:
    return CriteriaConfig()


@pytest.fixture
def zone60() -> SpeedZone:
    return SpeedZone(60)


@pytest.fixture
def intrinsics() -> CameraIntrinsics:
    return CameraIntrinsics(fx=1000, fy=1000, cx=800, cy=450, image_width_px=1600, image_height_px=900)
