"""
Overtaking Scenario Simulator
Constant-velocity overtaking scenarios in the bicycle's camera frame,
with a detector noise model, field-of-view truncation and sensor-style
ground truth
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from .criteria import CriteriaConfig, SpeedZone, label_pass_event
from .errors import ConfigError, InvalidArgumentError
from .geometry import (
    CameraIntrinsics,
    Category,
    ObjectState,
    allocentric_yaw,
    in_fov,
    lateral_offset,
    longitudinal_overlap,
    on_passing_side,
    passing_distance,
)
from .rng import SeededRNG, scenario_seed
from .units import kmh_to_mps

logger = logging.getLogger(__name__)

# overtaking speed cap where the speed sign could not be read
UNKNOWN_ZONE_SPEED_CAP_KMH = 100.0
MIN_DIMENSION_M = 0.01
# the overtaker starts strictly behind the bike
MIN_OVERTAKER_GAP_M = 0.1


@dataclass(frozen=True)
class Range:
    """Closed interval sampled uniformly"""
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ConfigError(f"empty range [{self.lo}, {self.hi}]")

    def to_list(self) -> List[float]:
        return [self.lo, self.hi]


@dataclass(frozen=True)
class CatalogEntry:
    """Vehicle class with its size distributions"""
    category: Category
    width_m: Range
    height_m: Range
    length_m: Range

    def __post_init__(self):
        object.__setattr__(self, 'category', Category.parse(self.category))
        for name in ('width_m', 'height_m', 'length_m'):
            if not getattr(self, name).lo > 0:
                raise ConfigError(f"{self.category.value} {name} must be positive", key=name)

    def to_dict(self) -> dict:
        return {
            'category': self.category.value,
            'width_m': self.width_m.to_list(),
            'height_m': self.height_m.to_list(),
            'length_m': self.length_m.to_list(),
        }


def _nominal(category: Category, width: float, height: float, length: float) -> CatalogEntry:
    return CatalogEntry(category, Range(width, width), Range(height, height), Range(length, length))


DEFAULT_CATALOG: Tuple[CatalogEntry, ...] = (
    _nominal(Category.CAR, 1.8, 1.5, 4.2),
    _nominal(Category.TRUCK, 2.5, 3.2, 8.0),
    _nominal(Category.BUS, 2.5, 3.1, 12.0),
    _nominal(Category.MOTORCYCLE, 0.8, 1.4, 2.2),
)


@dataclass(frozen=True)
class NoiseModel:
    """Zero-mean Gaussian regression error plus per-frame missed detections"""
    sigma_d_r_m: float = 0.0
    sigma_d_f_m: float = 0.0
    sigma_w_m: float = 0.0
    sigma_l_m: float = 0.0
    dropout_prob: float = 0.0

    def __post_init__(self):
        for name in ('sigma_d_r_m', 'sigma_d_f_m', 'sigma_w_m', 'sigma_l_m'):
            if not getattr(self, name) >= 0:
                raise ConfigError(f"{name} must be non-negative", key=name)
        if not 0.0 <= self.dropout_prob <= 1.0:
            raise ConfigError("dropout_prob must be in [0, 1]", key='dropout_prob')

    def to_dict(self) -> dict:
        return {
            'sigma_d_r_m': self.sigma_d_r_m,
            'sigma_d_f_m': self.sigma_d_f_m,
            'sigma_w_m': self.sigma_w_m,
            'sigma_l_m': self.sigma_l_m,
            'dropout_prob': self.dropout_prob,
        }


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    n_vehicles: Range = Range(1, 3)
    bike_speed_mps: Range = Range(4.0, 7.0)
    # None: sampled between half the zone limit and the zone limit
    vehicle_speed_mps: Optional[Range] = None
    lateral_pass_distance_m: Range = Range(0.3, 2.0)
    initial_gap_m: Range = Range(0.0, 8.0)
    zones_kmh: Tuple[Optional[float], ...] = (50.0, 60.0, 80.0)
    frame_rate_hz: float = 25.0
    clip_len_frames: int = 50
    camera_height_m: float = 1.2
    min_overtake_margin_mps: float = 1.0
    vehicle_catalog: Tuple[CatalogEntry, ...] = DEFAULT_CATALOG
    noise: NoiseModel = field(default_factory=NoiseModel)
    intrinsics: CameraIntrinsics = field(default_factory=CameraIntrinsics)

    def __post_init__(self):
        if not 0 <= self.seed <= 2 ** 64 - 1:
            raise ConfigError("seed must be a 64-bit unsigned integer", key='seed')
        if not (int(self.n_vehicles.lo) == self.n_vehicles.lo and self.n_vehicles.lo >= 1):
            raise ConfigError("n_vehicles must be a range of positive integers", key='n_vehicles')
        if not self.bike_speed_mps.lo >= 0:
            raise ConfigError("bike_speed_mps must be non-negative", key='bike_speed_mps')
        if self.vehicle_speed_mps is not None and not self.vehicle_speed_mps.lo >= 0:
            raise ConfigError("vehicle_speed_mps must be non-negative", key='vehicle_speed_mps')
        if not self.lateral_pass_distance_m.lo >= 0:
            raise ConfigError("lateral_pass_distance_m must be non-negative", key='lateral_pass_distance_m')
        if not self.initial_gap_m.lo >= 0:
            raise ConfigError("initial_gap_m is a distance behind the bike and must be non-negative",
                              key='initial_gap_m')
        if not self.zones_kmh:
            raise ConfigError("at least one speed zone is required", key='zones_kmh')
        for limit in self.zones_kmh:
            SpeedZone(limit)
        if not self.frame_rate_hz > 0:
            raise ConfigError("frame_rate_hz must be positive", key='frame_rate_hz')
        if not (isinstance(self.clip_len_frames, int) and self.clip_len_frames >= 2):
            raise ConfigError("clip_len_frames must be an integer >= 2", key='clip_len_frames')
        if not self.vehicle_catalog:
            raise ConfigError("vehicle catalog is empty", key='vehicle_catalog')

    def to_dict(self) -> dict:
        return {
            'seed': self.seed,
            'n_vehicles': [int(self.n_vehicles.lo), int(self.n_vehicles.hi)],
            'bike_speed_mps': self.bike_speed_mps.to_list(),
            'vehicle_speed_mps': self.vehicle_speed_mps.to_list() if self.vehicle_speed_mps else None,
            'lateral_pass_distance_m': self.lateral_pass_distance_m.to_list(),
            'initial_gap_m': self.initial_gap_m.to_list(),
            'zones_kmh': ['unknown' if z is None else z for z in self.zones_kmh],
            'frame_rate_hz': self.frame_rate_hz,
            'clip_len_frames': self.clip_len_frames,
            'camera_height_m': self.camera_height_m,
            'min_overtake_margin_mps': self.min_overtake_margin_mps,
            'vehicle_catalog': [entry.to_dict() for entry in self.vehicle_catalog],
            'noise': self.noise.to_dict(),
            'intrinsics': {
                'fx': self.intrinsics.fx,
                'fy': self.intrinsics.fy,
                'cx': self.intrinsics.cx,
                'cy': self.intrinsics.cy,
                'image_width_px': self.intrinsics.image_width_px,
                'image_height_px': self.intrinsics.image_height_px,
            },
        }


@dataclass(frozen=True)
class VehicleTrack:
    """Straight constant-velocity trajectory of one vehicle"""
    vehicle_id: str
    category: Category
    width_m: float
    height_m: float
    length_m: float
    d_f0: float
    d_r: float
    d_v: float
    speed_mps: float
    clearance_m: float


@dataclass(frozen=True)
class Scenario:
    config: ScenarioConfig
    clip_id: str
    bike_speed_mps: float
    zone: SpeedZone
    vehicles: Tuple[VehicleTrack, ...]

    @property
    def discretization_bound_m(self) -> float:
        """Largest distance any vehicle travels relative to the bike in half a frame"""
        rel = max(abs(v.speed_mps - self.bike_speed_mps) for v in self.vehicles)
        return rel / (2 * self.config.frame_rate_hz)


@dataclass(frozen=True)
class Frame:
    index: int
    t: float
    objects: Tuple[ObjectState, ...] = ()


FrameLog = List[Frame]
DetectionLog = List[Frame]


@dataclass(frozen=True)
class PassingEvent:
    """A recorded pass: when it happened, how close, and whether it was illegal"""
    vehicle_id: str
    t_c: float
    lateral_distance_m: float
    zone: SpeedZone
    is_cp: bool
    category: Category = Category.OTHER
    clip_id: str = ''

    def __post_init__(self):
        if not self.lateral_distance_m >= 0:
            raise InvalidArgumentError(f"lateral_distance_m must be non-negative, got {self.lateral_distance_m}")


def clip_id_for_seed(seed: int) -> str:
    return f"sim-{seed:020d}"


def _vehicle_speed_range(cfg: ScenarioConfig, zone: SpeedZone) -> Range:
    if cfg.vehicle_speed_mps is not None:
        return cfg.vehicle_speed_mps
    cap_kmh = zone.limit_kmh if zone.is_known else UNKNOWN_ZONE_SPEED_CAP_KMH
    cap = kmh_to_mps(cap_kmh)
    return Range(cap / 2, cap)


def sample_scenario(cfg: ScenarioConfig, criteria: Optional[CriteriaConfig] = None) -> Scenario:
    """Draw one scenario; a pure function of the config and its seed

    Right distances are back-solved from the sampled clearance with the
    criteria rig, mirrored to the left under right-hand traffic.
    """
    criteria = criteria or CriteriaConfig()
    if not cfg.vehicle_catalog:
        raise ConfigError("vehicle catalog is empty", key='vehicle_catalog')

    rng = SeededRNG(cfg.seed, 'scenario')
    n = rng.integers(int(cfg.n_vehicles.lo), int(cfg.n_vehicles.hi))
    bike_speed = rng.uniform(cfg.bike_speed_mps.lo, cfg.bike_speed_mps.hi)
    zone = SpeedZone(cfg.zones_kmh[rng.choice_index(len(cfg.zones_kmh))])
    speeds = _vehicle_speed_range(cfg, zone)

    vehicles = []
    for i in range(n):
        entry = cfg.vehicle_catalog[rng.choice_index(len(cfg.vehicle_catalog))]
        width = rng.uniform(entry.width_m.lo, entry.width_m.hi)
        height = rng.uniform(entry.height_m.lo, entry.height_m.hi)
        length = rng.uniform(entry.length_m.lo, entry.length_m.hi)
        clearance = rng.uniform(cfg.lateral_pass_distance_m.lo, cfg.lateral_pass_distance_m.hi)
        speed = rng.uniform(speeds.lo, speeds.hi)
        gap = rng.uniform(cfg.initial_gap_m.lo, cfg.initial_gap_m.hi)
        if i == 0:
            # the first vehicle always overtakes
            speed = max(speed, bike_speed + cfg.min_overtake_margin_mps)
            gap = max(gap, MIN_OVERTAKER_GAP_M)
        vehicles.append(VehicleTrack(
            vehicle_id=f"v{i:03d}",
            category=entry.category,
            width_m=width,
            height_m=height,
            length_m=length,
            d_f0=-gap,
            d_r=lateral_offset(clearance + width / 2 + criteria.rig.d_ch, criteria.traffic_side),
            d_v=height / 2 - cfg.camera_height_m,
            speed_mps=speed,
            clearance_m=clearance,
        ))

    scenario = Scenario(
        config=cfg,
        clip_id=clip_id_for_seed(cfg.seed),
        bike_speed_mps=bike_speed,
        zone=zone,
        vehicles=tuple(vehicles),
    )
    logger.debug(f"Sampled {scenario.clip_id}: {n} vehicles, zone {zone.label}, bike {bike_speed:.2f} m/s")
    return scenario


def simulate(s: Scenario) -> FrameLog:
    """Roll out the scenario frame by frame without noise"""
    cfg = s.config
    frames = []
    for k in range(cfg.clip_len_frames):
        t = k / cfg.frame_rate_hz
        objects = []
        for v in s.vehicles:
            d_f = v.d_f0 + (v.speed_mps - s.bike_speed_mps) * t
            objects.append(ObjectState(
                object_id=v.vehicle_id,
                category=v.category,
                width_m=v.width_m,
                height_m=v.height_m,
                length_m=v.length_m,
                d_f=d_f,
                d_r=v.d_r,
                d_v=v.d_v,
                yaw_rad=allocentric_yaw(v.d_r, d_f),
                t=t,
                speed_mps=v.speed_mps,
            ))
        frames.append(Frame(index=k, t=t, objects=tuple(objects)))
    return frames


def ground_truth_events(frames: FrameLog, cfg: CriteriaConfig, zone: SpeedZone,
                        clip_id: str = '') -> List[PassingEvent]:
    """Sensor-style passing events, one per vehicle that comes alongside

    The capture time is the overlap frame with the smallest |d_f|; the earliest wins ties.
    """
    abeam: Dict[str, ObjectState] = {}
    order: List[str] = []
    for frame in frames:
        for obj in frame.objects:
            if not on_passing_side(obj.d_r, cfg.traffic_side):
                continue
            if not longitudinal_overlap(obj.d_f, obj.length_m, cfg.rig):
                continue
            best = abeam.get(obj.object_id)
            if best is None:
                order.append(obj.object_id)
                abeam[obj.object_id] = obj
            elif abs(obj.d_f) < abs(best.d_f):
                abeam[obj.object_id] = obj

    events = []
    for object_id in order:
        obj = abeam[object_id]
        # a body reaching into the rig counts as a zero-distance pass
        clearance = max(passing_distance(lateral_offset(obj.d_r, cfg.traffic_side), obj.width_m, cfg.rig), 0.0)
        is_cp = obj.is_motor_vehicle and label_pass_event(clearance, zone, cfg)
        events.append(PassingEvent(
            vehicle_id=object_id,
            t_c=obj.t,
            lateral_distance_m=clearance,
            zone=zone,
            is_cp=is_cp,
            category=obj.category,
            clip_id=clip_id,
        ))
    events.sort(key=lambda e: (e.t_c, e.vehicle_id))
    return events


def perturb(frames: FrameLog, noise: NoiseModel, seed: int) -> DetectionLog:
    """Detector-like copy of a frame log

    Every (frame, object) consumes the same draws whatever the sigmas, so logs
    perturbed with the same seed at different noise levels stay paired.
    """
    states = [obj for frame in frames for obj in frame.objects]
    gen = SeededRNG(seed, 'noise').generator
    dropped = gen.random(len(states)) < noise.dropout_prob
    eps = gen.standard_normal((len(states), 4))
    sigmas = (noise.sigma_d_r_m, noise.sigma_d_f_m, noise.sigma_w_m, noise.sigma_l_m)

    out = []
    i = 0
    for frame in frames:
        kept = []
        for obj in frame.objects:
            if not dropped[i]:
                kept.append(_perturb_state(obj, eps[i], sigmas))
            i += 1
        out.append(Frame(index=frame.index, t=frame.t, objects=tuple(kept)))
    return out


def _perturb_state(obj: ObjectState, eps: np.ndarray, sigmas: Sequence[float]) -> ObjectState:
    s_r, s_f, s_w, s_l = sigmas
    if not any(sigmas):
        return obj
    width = obj.width_m + s_w * float(eps[2]) if s_w else obj.width_m
    length = obj.length_m + s_l * float(eps[3]) if s_l else obj.length_m
    return replace(
        obj,
        d_r=obj.d_r + s_r * float(eps[0]),
        d_f=obj.d_f + s_f * float(eps[1]),
        width_m=max(width, MIN_DIMENSION_M),
        length_m=max(length, MIN_DIMENSION_M),
    )


def truncate_fov(frames: FrameLog, K: CameraIntrinsics) -> FrameLog:
    """Drop states whose center is not visible to the forward camera"""
    return [
        Frame(index=f.index, t=f.t, objects=tuple(o for o in f.objects if in_fov(o, K)))
        for f in frames
    ]


@dataclass(frozen=True)
class SimulationResult:
    scenario: Scenario
    frames: FrameLog
    detections: Optional[DetectionLog]
    events: List[PassingEvent]

    @property
    def clip_id(self) -> str:
        return self.scenario.clip_id


def run_scenario(cfg: ScenarioConfig, criteria: CriteriaConfig,
                 add_noise: bool = False, truncate: bool = False) -> SimulationResult:
    """Sample, roll out and label one scenario; optionally derive a detection log"""
    scenario = sample_scenario(cfg, criteria)
    frames = simulate(scenario)
    events = ground_truth_events(frames, criteria, scenario.zone, clip_id=scenario.clip_id)
    detections = None
    if add_noise or truncate:
        detections = perturb(frames, cfg.noise, cfg.seed) if add_noise else frames
        if truncate:
            detections = truncate_fov(detections, cfg.intrinsics)
    return SimulationResult(scenario=scenario, frames=frames, detections=detections, events=events)


def generate_batch(base: ScenarioConfig, criteria: CriteriaConfig, count: int,
                   threads: int = 1, add_noise: bool = False, truncate: bool = False,
                   progress: bool = True) -> List[SimulationResult]:
    """Run ``count`` scenarios seeded ``base.seed + i``; results are ordered by seed"""
    if count < 0:
        raise InvalidArgumentError(f"count must be non-negative, got {count}")
    configs = [replace(base, seed=scenario_seed(base.seed, i)) for i in range(count)]

    def work(cfg: ScenarioConfig) -> SimulationResult:
        return run_scenario(cfg, criteria, add_noise=add_noise, truncate=truncate)

    bar = tqdm(total=count, desc='Simulating', unit='scenario', disable=None if progress else True)
    results = []
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        # map() yields in submission order
        for result in pool.map(work, configs):
            results.append(result)
            bar.update(1)
    bar.close()
    logger.info(f"Simulated {count} scenarios from base seed {base.seed} with {threads} threads")
    return results


def per_vehicle_labels(frames: Iterable[Frame], verdict_of) -> Dict[str, bool]:
    """Disjunction of per-frame decisions for each object id"""
    labels: Dict[str, bool] = {}
    for frame in frames:
        for obj in frame.objects:
            labels[obj.object_id] = labels.get(obj.object_id, False) or verdict_of(obj)
    return labels
