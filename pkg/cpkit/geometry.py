"""
Geometry Module
Camera-relative 3D geometry for a forward-facing bicycle camera

Axes are camera-centered: x to the right, y down, z forward. An object's
forward distance ``d_f`` is z, its right distance ``d_r`` is x and its
vertical offset ``d_v`` is -y of the 3D box center.
"""
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple, Union

import numpy as np

from .errors import BehindCameraError, InvalidArgumentError

Point3D = Tuple[float, float, float]


class Category(str, Enum):
    CAR = 'car'
    TRUCK = 'truck'
    BUS = 'bus'
    MOTORCYCLE = 'motorcycle'
    BICYCLE = 'bicycle'
    PEDESTRIAN = 'pedestrian'
    OTHER = 'other'

    @classmethod
    def parse(cls, value: Union[str, 'Category']) -> 'Category':
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise InvalidArgumentError(f"Unknown category: {value!r}")


MOTOR_VEHICLES = frozenset({Category.CAR, Category.TRUCK, Category.BUS, Category.MOTORCYCLE})


class TrafficSide(str, Enum):
    """Side of the road motor traffic keeps to; overtaking happens on the other side"""
    LEFT_HAND = 'left_hand'
    RIGHT_HAND = 'right_hand'


@dataclass(frozen=True)
class ObjectState:
    """A detected or simulated road user at one instant"""
    object_id: str
    category: Category
    width_m: float
    height_m: float
    length_m: float
    d_f: float
    d_r: float
    d_v: float = 0.0
    yaw_rad: float = 0.0
    t: float = 0.0
    speed_mps: Optional[float] = None
    confidence: Optional[float] = None

    def __post_init__(self):
        if not isinstance(self.category, Category):
            object.__setattr__(self, 'category', Category.parse(self.category))
        for name in ('width_m', 'height_m', 'length_m'):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"{name} must be positive, got {getattr(self, name)}")
        if not self.t >= 0:
            raise InvalidArgumentError(f"t must be non-negative, got {self.t}")
        if self.confidence is not None and not 0.0 <= self.confidence <= 1.0:
            raise InvalidArgumentError(f"confidence must be in [0, 1], got {self.confidence}")

    @property
    def center(self) -> Point3D:
        """Box center as (x_right, y_down, z_forward)"""
        return (self.d_r, -self.d_v, self.d_f)

    @property
    def is_motor_vehicle(self) -> bool:
        return self.category in MOTOR_VEHICLES


@dataclass(frozen=True)
class RigGeometry:
    """Bicycle rig dimensions: camera-to-handlebar offset and bicycle length"""
    d_ch: float = 0.5
    l_b: float = 1.8

    def __post_init__(self):
        if not self.d_ch >= 0:
            raise InvalidArgumentError(f"d_ch must be non-negative, got {self.d_ch}")
        if not self.l_b > 0:
            raise InvalidArgumentError(f"l_b must be positive, got {self.l_b}")


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole camera intrinsics in pixels"""
    fx: float = 1000.0
    fy: float = 1000.0
    cx: float = 800.0
    cy: float = 450.0
    image_width_px: int = 1600
    image_height_px: int = 900

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidArgumentError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (isinstance(self.image_width_px, int) and isinstance(self.image_height_px, int)):
            raise InvalidArgumentError("image size must be integer pixels")
        if self.image_width_px <= 0 or self.image_height_px <= 0:
            raise InvalidArgumentError("image size must be positive")
        if not 0 <= self.cx < self.image_width_px:
            raise InvalidArgumentError(f"cx={self.cx} outside image width {self.image_width_px}")
        if not 0 <= self.cy < self.image_height_px:
            raise InvalidArgumentError(f"cy={self.cy} outside image height {self.image_height_px}")

    @property
    def matrix(self) -> np.ndarray:
        """The 3x3 intrinsic matrix K"""
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class ImagePoint25D:
    """Image position of a 3D center plus its depth"""
    u: float
    v: float
    depth_m: float

    def __post_init__(self):
        if not self.depth_m > 0:
            raise InvalidArgumentError(f"depth_m must be positive, got {self.depth_m}")


def passing_distance(d_r: float, width_m: float, rig: RigGeometry) -> float:
    """Lateral clearance between the handlebar edge and the vehicle's near side

    Negative when the vehicle body overlaps the handlebar line.
    """
    if not width_m > 0:
        raise InvalidArgumentError(f"width_m must be positive, got {width_m}")
    return d_r - width_m / 2 - rig.d_ch


def longitudinal_overlap(d_f: float, length_m: float, rig: RigGeometry) -> bool:
    """Whether a vehicle is alongside the bicycle (closed interval test)"""
    if not length_m > 0:
        raise InvalidArgumentError(f"length_m must be positive, got {length_m}")
    return -length_m / 2 - rig.l_b <= d_f <= length_m / 2


def on_passing_side(d_r: float, traffic_side: TrafficSide = TrafficSide.LEFT_HAND) -> bool:
    if TrafficSide(traffic_side) is TrafficSide.LEFT_HAND:
        return d_r >= 0
    return d_r <= 0


def lateral_offset(d_r: float, traffic_side: TrafficSide = TrafficSide.LEFT_HAND) -> float:
    """Right distance mirrored so that the passing side is always positive"""
    return d_r if TrafficSide(traffic_side) is TrafficSide.LEFT_HAND else -d_r


def project(point: Point3D, K: CameraIntrinsics) -> ImagePoint25D:
    z = point[2]
    if not z > 0:
        raise BehindCameraError(f"point is not in front of the camera (z={z})", z_forward_m=z)
    uvw = K.matrix @ np.asarray(point, dtype=float)
    return ImagePoint25D(u=float(uvw[0] / uvw[2]), v=float(uvw[1] / uvw[2]), depth_m=float(z))


def backproject(p: ImagePoint25D, K: CameraIntrinsics) -> Point3D:
    """Lift a 2.5D image point back into camera coordinates"""
    if not p.depth_m > 0:
        raise InvalidArgumentError(f"depth_m must be positive, got {p.depth_m}")
    z = p.depth_m
    return ((p.u - K.cx) * z / K.fx, (p.v - K.cy) * z / K.fy, z)


def in_fov(obj: ObjectState, K: CameraIntrinsics) -> bool:
    """Whether the object's projected center lands inside the image

    Uses the center only; a partly visible box with its center off-frame counts as out.
    """
    if not obj.d_f > 0:
        return False
    p = project(obj.center, K)
    return 0 <= p.u < K.image_width_px and 0 <= p.v < K.image_height_px


def allocentric_yaw(d_r: float, d_f: float, heading_rad: float = 0.0) -> float:
    """Object heading relative to the viewing ray, wrapped to [-pi, pi)"""
    angle = heading_rad - math.atan2(d_r, d_f)
    return (angle + math.pi) % (2 * math.pi) - math.pi
