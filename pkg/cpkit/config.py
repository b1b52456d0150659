"""
Configuration loading
JSON config files mapped onto the frozen config dataclasses
"""
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Mapping, Optional, Sequence

from .criteria import CriteriaConfig
from .errors import ConfigError, CpkitError
from .geometry import CameraIntrinsics, RigGeometry, TrafficSide
from .simulator import CatalogEntry, NoiseModel, Range, ScenarioConfig

logger = logging.getLogger(__name__)

THREADS_ENV = 'CPKIT_THREADS'
LOG_LEVEL_ENV = 'CPKIT_LOG_LEVEL'

CONFIG_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'config')
DEFAULT_SCENARIO_CONFIG = os.path.join(CONFIG_DIR, 'scenario_config.json')
DEFAULT_CRITERIA_CONFIG = os.path.join(CONFIG_DIR, 'criteria_config.json')


def load_config(config_path: str) -> Dict[str, Any]:
    """Load configuration from JSON file"""
    if not os.path.exists(config_path):
        raise ConfigError(f"Configuration file not found: {config_path}")
    try:
        with open(config_path, 'r', encoding='utf-8') as f:
            config = json.load(f)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ConfigError(f"Invalid JSON in configuration file {config_path}: {e}")
    if not isinstance(config, dict):
        raise ConfigError(f"Configuration file {config_path} must hold a JSON object")
    logger.info(f"Configuration loaded from {config_path}")
    return config


def save_config(config: Mapping[str, Any], config_path: str) -> None:
    """Save configuration to JSON file with stable key order"""
    directory = os.path.dirname(os.path.abspath(config_path))
    os.makedirs(directory, exist_ok=True)
    with open(config_path, 'w', encoding='utf-8', newline='\n') as f:
        json.dump(config, f, indent=2, sort_keys=True, ensure_ascii=False)
        f.write('\n')
    logger.info(f"Configuration saved to {config_path}")


def _reject_unknown(data: Mapping[str, Any], allowed: Sequence[str], section: str) -> None:
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"Unknown {section} key(s): {', '.join(unknown)}", key=unknown[0])


def _section(data: Mapping[str, Any], key: str) -> Mapping[str, Any]:
    value = data.get(key, {})
    if not isinstance(value, dict):
        raise ConfigError(f"'{key}' must be an object", key=key)
    return value


def _range(value: Any, key: str) -> Range:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return Range(float(value), float(value))
    if (not isinstance(value, (list, tuple)) or len(value) != 2
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)):
        raise ConfigError(f"'{key}' must be a [min, max] pair of numbers", key=key)
    try:
        return Range(value[0], value[1])
    except ConfigError as e:
        raise ConfigError(f"'{key}': {e.message}", key=key)


def _float(value: Any, key: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"'{key}' must be a number, got {value!r}", key=key)
    return float(value)


def _int(value: Any, key: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"'{key}' must be an integer, got {value!r}", key=key)
    return value


def _zone_limit(value: Any) -> Optional[float]:
    if value == 'unknown' or value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"speed zone must be a number or 'unknown', got {value!r}", key='zones_kmh')
    return float(value)


def rig_from_dict(data: Mapping[str, Any]) -> RigGeometry:
    _reject_unknown(data, ('d_ch', 'l_b'), 'rig')
    defaults = RigGeometry()
    return _build(
        RigGeometry,
        d_ch=_float(data.get('d_ch', defaults.d_ch), 'd_ch'),
        l_b=_float(data.get('l_b', defaults.l_b), 'l_b'),
    )


def criteria_config_from_dict(data: Mapping[str, Any]) -> CriteriaConfig:
    allowed = ('d_ch', 'l_b', 'traffic_side', 'clearance_low_m', 'clearance_high_m', 'zone_boundary_kmh')
    _reject_unknown(data, allowed, 'criteria')
    defaults = CriteriaConfig()
    rig = rig_from_dict({k: data[k] for k in ('d_ch', 'l_b') if k in data})
    side = data.get('traffic_side', defaults.traffic_side.value)
    if side not in {s.value for s in TrafficSide}:
        raise ConfigError(f"traffic_side must be left_hand or right_hand, got {side!r}", key='traffic_side')
    return _build(
        CriteriaConfig,
        rig=rig,
        traffic_side=TrafficSide(side),
        clearance_low_m=_float(data.get('clearance_low_m', defaults.clearance_low_m), 'clearance_low_m'),
        clearance_high_m=_float(data.get('clearance_high_m', defaults.clearance_high_m), 'clearance_high_m'),
        zone_boundary_kmh=_float(data.get('zone_boundary_kmh', defaults.zone_boundary_kmh), 'zone_boundary_kmh'),
    )


def noise_model_from_dict(data: Mapping[str, Any]) -> NoiseModel:
    allowed = ('sigma_d_r_m', 'sigma_d_f_m', 'sigma_w_m', 'sigma_l_m', 'dropout_prob')
    _reject_unknown(data, allowed, 'noise')
    return _build(NoiseModel, **{k: _float(data[k], k) for k in allowed if k in data})


def intrinsics_from_dict(data: Mapping[str, Any]) -> CameraIntrinsics:
    allowed = ('fx', 'fy', 'cx', 'cy', 'image_width_px', 'image_height_px')
    _reject_unknown(data, allowed, 'intrinsics')
    kwargs: Dict[str, Any] = {}
    for key in allowed:
        if key in data:
            kwargs[key] = _int(data[key], key) if key.startswith('image_') else _float(data[key], key)
    return _build(CameraIntrinsics, **kwargs)


def catalog_entry_from_dict(data: Mapping[str, Any]) -> CatalogEntry:
    _reject_unknown(data, ('category', 'width_m', 'height_m', 'length_m'), 'vehicle_catalog entry')
    for key in ('category', 'width_m', 'height_m', 'length_m'):
        if key not in data:
            raise ConfigError(f"vehicle_catalog entry lacks '{key}'", key=key)
    return _build(
        CatalogEntry,
        category=data['category'],
        width_m=_range(data['width_m'], 'width_m'),
        height_m=_range(data['height_m'], 'height_m'),
        length_m=_range(data['length_m'], 'length_m'),
    )


SCENARIO_KEYS = ('seed', 'n_vehicles', 'bike_speed_mps', 'vehicle_speed_mps', 'lateral_pass_distance_m',
                 'initial_gap_m', 'zones_kmh', 'frame_rate_hz', 'clip_len_frames', 'camera_height_m',
                 'min_overtake_margin_mps', 'vehicle_catalog', 'noise', 'intrinsics')


def scenario_config_from_dict(data: Mapping[str, Any]) -> ScenarioConfig:
    """Build a ScenarioConfig; missing keys keep their defaults, unknown keys are errors"""
    _reject_unknown(data, SCENARIO_KEYS, 'scenario')
    kwargs: Dict[str, Any] = {}
    for key in ('n_vehicles', 'bike_speed_mps', 'lateral_pass_distance_m', 'initial_gap_m'):
        if key in data:
            kwargs[key] = _range(data[key], key)
    if data.get('vehicle_speed_mps') is not None:
        kwargs['vehicle_speed_mps'] = _range(data['vehicle_speed_mps'], 'vehicle_speed_mps')
    if 'seed' in data:
        if isinstance(data['seed'], bool) or not isinstance(data['seed'], int):
            raise ConfigError("seed must be an integer", key='seed')
        kwargs['seed'] = data['seed']
    if 'zones_kmh' in data:
        zones = data['zones_kmh']
        if not isinstance(zones, list):
            zones = [zones]
        kwargs['zones_kmh'] = tuple(_zone_limit(z) for z in zones)
    for key in ('frame_rate_hz', 'camera_height_m', 'min_overtake_margin_mps'):
        if key in data:
            kwargs[key] = _float(data[key], key)
    if 'clip_len_frames' in data:
        if isinstance(data['clip_len_frames'], bool) or not isinstance(data['clip_len_frames'], int):
            raise ConfigError("clip_len_frames must be an integer", key='clip_len_frames')
        kwargs['clip_len_frames'] = data['clip_len_frames']
    if 'vehicle_catalog' in data:
        if not isinstance(data['vehicle_catalog'], list):
            raise ConfigError("vehicle_catalog must be a list", key='vehicle_catalog')
        kwargs['vehicle_catalog'] = tuple(catalog_entry_from_dict(e) for e in data['vehicle_catalog'])
    if 'noise' in data:
        kwargs['noise'] = noise_model_from_dict(_section(data, 'noise'))
    if 'intrinsics' in data:
        kwargs['intrinsics'] = intrinsics_from_dict(_section(data, 'intrinsics'))
    return _build(ScenarioConfig, **kwargs)


def _build(cls, **kwargs):
    """Construct a config dataclass, reporting invariant failures as ConfigError"""
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (CpkitError, TypeError, ValueError) as e:
        raise ConfigError(f"Invalid {cls.__name__}: {getattr(e, 'message', e)}")


def thread_count(requested: Optional[int] = None) -> int:
    """Worker threads: the request capped by CPKIT_THREADS, defaulting to the CPU count"""
    cap_text = os.environ.get(THREADS_ENV)
    cap = os.cpu_count() or 1
    if cap_text:
        try:
            cap = int(cap_text)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {cap_text!r}", key=THREADS_ENV)
        if cap < 1:
            raise ConfigError(f"{THREADS_ENV} must be >= 1, got {cap}", key=THREADS_ENV)
    return max(1, min(requested, cap)) if requested else cap


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved parameters of one command, echoed into its manifest"""
    command: str
    inputs: Dict[str, Any] = field(default_factory=dict)
    outputs: Dict[str, Any] = field(default_factory=dict)
    parameters: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self, version: str) -> Dict[str, Any]:
        return {
            'tool': 'cpkit',
            'version': version,
            'command': self.command,
            'inputs': dict(self.inputs),
            'outputs': dict(self.outputs),
            'parameters': dict(self.parameters),
        }
