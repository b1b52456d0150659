"""
Tests for configuration loading
"""
import json

import pytest

from cpkit.config import (
    DEFAULT_CRITERIA_CONFIG,
    DEFAULT_SCENARIO_CONFIG,
    RunConfig,
    criteria_config_from_dict,
    load_config,
    save_config,
    scenario_config_from_dict,
    thread_count,
)
from cpkit.errors import ConfigError
from cpkit.geometry import Category, TrafficSide
from cpkit.simulator import Range, ScenarioConfig


def test_default_configs_load():
    cfg = scenario_config_from_dict(load_config(DEFAULT_SCENARIO_CONFIG))
    assert cfg.frame_rate_hz == 25.0 and cfg.clip_len_frames == 50
    assert cfg.zones_kmh == (50.0, 60.0, 80.0)
    assert cfg.vehicle_speed_mps is None
    assert [e.category for e in cfg.vehicle_catalog] == [Category.CAR, Category.TRUCK, Category.BUS,
                                                         Category.MOTORCYCLE]
    criteria = criteria_config_from_dict(load_config(DEFAULT_CRITERIA_CONFIG))
    assert criteria.rig.d_ch == 0.5 and criteria.rig.l_b == 1.8
    assert criteria.traffic_side is TrafficSide.LEFT_HAND


def test_empty_dict_gives_defaults():
    assert scenario_config_from_dict({}) == ScenarioConfig()
    assert criteria_config_from_dict({}).to_dict() == {
        'd_ch': 0.5, 'l_b': 1.8, 'traffic_side': 'left_hand',
        'clearance_low_m': 1.0, 'clearance_high_m': 1.5, 'zone_boundary_kmh': 60.0,
    }


def test_unknown_keys_are_rejected():
    with pytest.raises(ConfigError) as exc:
        scenario_config_from_dict({'seed': 1, 'wheather': 'rain'})
    assert exc.value.key == 'wheather'
    with pytest.raises(ConfigError):
        scenario_config_from_dict({'noise': {'sigma_x': 0.1}})
    with pytest.raises(ConfigError):
        criteria_config_from_dict({'speed_boundary': 60})


def test_invalid_values_are_config_errors():
    for data in (
        {'seed': -1},
        {'seed': 'abc'},
        {'lateral_pass_distance_m': [2.0, 1.0]},
        {'lateral_pass_distance_m': [1.0]},
        {'frame_rate_hz': 'fast'},
        {'zones_kmh': [50, -30]},
        {'clip_len_frames': 2.5},
        {'intrinsics': {'cx': 5000}},
        {'vehicle_catalog': [{'category': 'car', 'width_m': 1.8, 'height_m': 1.5}]},
        {'noise': {'dropout_prob': 2}},
    ):
        with pytest.raises(ConfigError):
            scenario_config_from_dict(data)
    with pytest.raises(ConfigError):
        criteria_config_from_dict({'traffic_side': 'middle'})
    with pytest.raises(ConfigError):
        criteria_config_from_dict({'clearance_low_m': 2.0})


def test_ranges_and_zones():
    cfg = scenario_config_from_dict({
        'lateral_pass_distance_m': 0.7,
        'n_vehicles': [2, 2],
        'zones_kmh': [30, 'unknown'],
        'vehicle_speed_mps': [8, 12],
    })
    assert cfg.lateral_pass_distance_m == Range(0.7, 0.7)
    assert cfg.n_vehicles == Range(2, 2)
    assert cfg.zones_kmh == (30.0, None)
    assert cfg.vehicle_speed_mps == Range(8.0, 12.0)


def test_scenario_config_round_trips_through_dict():
    cfg = scenario_config_from_dict(load_config(DEFAULT_SCENARIO_CONFIG))
    assert scenario_config_from_dict(cfg.to_dict()) == cfg


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / 'missing.json'))
    bad = tmp_path / 'bad.json'
    bad.write_text('{"seed": ', encoding='utf-8')
    with pytest.raises(ConfigError):
        load_config(str(bad))
    listed = tmp_path / 'list.json'
    listed.write_text('[1, 2]', encoding='utf-8')
    with pytest.raises(ConfigError):
        load_config(str(listed))
    latin1 = tmp_path / 'latin1.json'
    latin1.write_bytes(b'{"zones_kmh": "\xe9"}')
    with pytest.raises(ConfigError):
        load_config(str(latin1))


def test_save_config_is_stable(tmp_path):
    path = tmp_path / 'nested' / 'out.json'
    save_config({'b': 1, 'a': [1, 2]}, str(path))
    assert path.read_text(encoding='utf-8') == '{\n  "a": [\n    1,\n    2\n  ],\n  "b": 1\n}\n'
    assert json.loads(path.read_text(encoding='utf-8')) == {'a': [1, 2], 'b': 1}


def test_thread_count(monkeypatch):
    monkeypatch.setenv('CPKIT_THREADS', '2')
    assert thread_count() == 2
    assert thread_count(8) == 2
    assert thread_count(1) == 1
    monkeypatch.setenv('CPKIT_THREADS', 'many')
    with pytest.raises(ConfigError):
        thread_count()
    monkeypatch.setenv('CPKIT_THREADS', '0')
    with pytest.raises(ConfigError):
        thread_count()
    monkeypatch.delenv('CPKIT_THREADS')
    assert thread_count() >= 1


def test_run_config_manifest():
    run = RunConfig(command='simulate', inputs={'config': 'c.json'}, parameters={'seed': 3})
    assert run.to_dict('1.0.0') == {
        'tool': 'cpkit', 'version': '1.0.0', 'command': 'simulate',
        'inputs': {'config': 'c.json'}, 'outputs': {}, 'parameters': {'seed': 3},
    }
