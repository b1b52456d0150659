"""
Tests for log readers and writers
"""
import json

import pytest

from cpkit.criteria import CriteriaConfig, SpeedZone, classify_detection, required_clearance
from cpkit.errors import InvalidArgumentError, SchemaError
from cpkit.geometry import Category
from cpkit.ingest import (
    DETECTION_FIELDS,
    PASS_LOG_FIELDS,
    VerdictRecord,
    parse_speed_limit,
    read_detection_records,
    read_detections,
    read_events,
    read_pass_log,
    read_verdicts,
    read_zone_map,
    write_detections,
    write_events,
    write_report,
    write_verdicts,
    write_zone_map,
)
from cpkit.simulator import ScenarioConfig, generate_batch

from .conftest import make_object, make_verdict

HEADER = {'cpkit_schema': 1, 'kind': 'detections', 'clips': ['c1']}


def detection_row(**overrides):
    row = {'clip_id': 'c1', 'frame': 0, 't': 0.0, 'object_id': 'v000', 'category': 'car',
           'w': 1.8, 'h': 1.5, 'l': 4.2, 'd_f': 0.0, 'd_r': 2.0, 'd_v': -0.45, 'yaw': 0.0, 'confidence': 0.9}
    row.update(overrides)
    return row


def write_lines(path, *objects):
    path.write_text(''.join(json.dumps(o) + '\n' for o in objects), encoding='utf-8')
    return str(path)


def write_csv(path, header, *rows):
    path.write_text('\n'.join([','.join(header)] + [','.join(map(str, r)) for r in rows]) + '\n', encoding='utf-8')
    return str(path)


def test_empty_detection_file(tmp_path):
    path = tmp_path / 'empty.cplog'
    path.write_text('', encoding='utf-8')
    assert read_detections(str(path)) == {}


def test_header_only_detection_file_keeps_declared_clips(tmp_path):
    path = write_lines(tmp_path / 'd.cplog', {'cpkit_schema': 1, 'kind': 'detections', 'clips': ['a', 'b']})
    assert read_detections(path) == {'a': [], 'b': []}


def test_detection_with_negative_width(tmp_path):
    path = write_lines(tmp_path / 'd.cplog', HEADER, detection_row(w=-1))
    with pytest.raises(SchemaError) as exc:
        read_detections(path)
    assert exc.value.line == 2
    assert exc.value.field == 'w'
    assert "line 2" in str(exc.value)


def test_detection_missing_field(tmp_path):
    row = detection_row()
    del row['d_r']
    path = write_lines(tmp_path / 'd.cplog', HEADER, row)
    with pytest.raises(SchemaError) as exc:
        read_detections(path)
    assert exc.value.field == 'd_r'


def test_detection_errors_are_collected(tmp_path):
    path = tmp_path / 'd.cplog'
    path.write_text('\n'.join([
        json.dumps(HEADER),
        json.dumps(detection_row(frame=0)),
        '{not json',
        json.dumps(detection_row(frame=1, category='spaceship')),
        json.dumps(detection_row(frame=0)),
    ]) + '\n', encoding='utf-8')
    with pytest.raises(SchemaError) as exc:
        read_detections(str(path))
    assert [(e.line, e.field) for e in exc.value.errors] == [(3, None), (4, 'category'), (5, 'object_id')]
    assert "2 more errors" in str(exc.value)


def test_detection_header_is_checked(tmp_path):
    path = write_lines(tmp_path / 'd.cplog', detection_row())
    with pytest.raises(SchemaError) as exc:
        read_detections(path)
    assert exc.value.field == 'cpkit_schema'

    path = write_lines(tmp_path / 'v.cplog', {'cpkit_schema': 2, 'kind': 'detections', 'clips': []})
    with pytest.raises(SchemaError):
        read_detections(path)

    path = write_lines(tmp_path / 'x.cplog', {'cpkit_schema': 1, 'kind': 'verdicts', 'clips': []})
    with pytest.raises(SchemaError) as exc:
        read_detections(path)
    assert exc.value.field == 'kind'


def test_detection_log_round_trip(tmp_path):
    cfg = ScenarioConfig(seed=77)
    results = generate_batch(cfg, CriteriaConfig(), 3, add_noise=True, progress=False)
    logs = {r.clip_id: r.frames for r in results}
    logs['sim-empty'] = []
    path = str(tmp_path / 'frames.cplog')
    n = write_detections(logs, path)
    assert n == sum(len(f.objects) for frames in logs.values() for f in frames)

    back = read_detections(path)
    assert sorted(back) == sorted(logs)
    assert back['sim-empty'] == []
    for clip_id, frames in logs.items():
        assert [f.index for f in back[clip_id]] == [f.index for f in frames]
        for original, parsed in zip(frames, back[clip_id]):
            for a, b in zip(original.objects, parsed.objects):
                assert a.object_id == b.object_id and a.category is b.category
                for name in ('width_m', 'height_m', 'length_m', 'd_f', 'd_r', 'd_v', 'yaw_rad', 't'):
                    assert getattr(b, name) == pytest.approx(getattr(a, name), abs=1e-9)
                assert b.confidence == 1.0


def test_detection_records_are_flat_and_sorted(tmp_path):
    path = write_lines(tmp_path / 'd.cplog', HEADER,
                       detection_row(frame=1, t=0.04, object_id='v001'),
                       detection_row(frame=0, object_id='v001'),
                       detection_row(frame=0, object_id='v000'))
    clips, records = read_detection_records(path)
    assert clips == ['c1']
    assert [r.key for r in records] == [('c1', 0, 'v000'), ('c1', 0, 'v001'), ('c1', 1, 'v001')]
    assert set(records[0].to_dict()) == set(DETECTION_FIELDS)


def test_verdict_log_round_trip(tmp_path, criteria, zone60):
    records = [
        VerdictRecord('c1', k, k * 0.04, 'v000', Category.CAR,
                      classify_detection(make_object(d_r=2.0, d_f=-6.0 + k), zone60, criteria))
        for k in (3, 0, 2, 1)
    ]
    path = str(tmp_path / 'verdicts.cplog')
    assert write_verdicts({'c1': records, 'c2': []}, path) == 4
    streams = read_verdicts(path)
    assert sorted(streams) == ['c1', 'c2']
    assert [r.frame for r in streams['c1']] == [0, 1, 2, 3]
    by_frame = {r.frame: r for r in records}
    for r in streams['c1']:
        assert r.is_cp == by_frame[r.frame].is_cp
        assert r.verdict.clearance_m == pytest.approx(by_frame[r.frame].verdict.clearance_m, abs=1e-9)


def test_verdict_flags_must_agree(tmp_path):
    row = make_verdict(1.0).to_dict()
    row['is_cp'] = False
    path = write_lines(tmp_path / 'v.cplog', {'cpkit_schema': 1, 'kind': 'verdicts', 'clips': ['clip']}, row)
    with pytest.raises(SchemaError) as exc:
        read_verdicts(path)
    assert exc.value.field == 'is_cp'


def test_read_pass_log(tmp_path):
    path = write_csv(tmp_path / 'passes.csv', PASS_LOG_FIELDS,
                     ('clip7', '12.40', '0.85', '60', 'car'),
                     ('clip8', '3.0', '1.2', 'unknown', 'truck'))
    first, second = read_pass_log(path)
    assert (first.clip_id, first.t_c, first.lateral_distance_m, first.speed_limit_kmh, first.vehicle_category) \
        == ('clip7', 12.4, 0.85, 60.0, 'car')
    assert second.speed_limit_kmh is None
    assert required_clearance(second.zone, CriteriaConfig()) == 1.5


def test_header_only_pass_log(tmp_path):
    assert read_pass_log(write_csv(tmp_path / 'passes.csv', PASS_LOG_FIELDS)) == []


def test_pass_log_errors(tmp_path):
    path = write_csv(tmp_path / 'passes.csv', PASS_LOG_FIELDS,
                     ('clip1', '1.0', '-0.2', '60', 'car'),
                     ('clip2', 'noon', '1.0', '60', 'car'),
                     ('clip3', '2.0', '1.0', 'fast', 'car'))
    with pytest.raises(SchemaError) as exc:
        read_pass_log(path)
    assert [(e.line, e.field) for e in exc.value.errors] == [
        (2, 'lateral_distance_m'), (3, 't_c'), (4, 'speed_limit_kmh')]


def test_pass_log_missing_column(tmp_path):
    path = write_csv(tmp_path / 'passes.csv', ('clip_id', 't_c', 'lateral_distance_m'), ('c', '1', '1'))
    with pytest.raises(SchemaError) as exc:
        read_pass_log(path)
    assert exc.value.field == 'speed_limit_kmh'


def test_undecodable_detection_log(tmp_path):
    path = tmp_path / 'latin1.cplog'
    good = json.dumps(detection_row()).encode('utf-8')
    bad = json.dumps(detection_row(frame=1, t=0.04)).encode('utf-8').replace(b'v000', b'v\xe900')
    path.write_bytes(json.dumps(HEADER).encode('utf-8') + b'\n' + good + b'\n' + bad + b'\n')
    with pytest.raises(SchemaError) as exc:
        read_detections(str(path))
    assert [e.line for e in exc.value.errors] == [3]


def test_undecodable_log_header(tmp_path):
    path = tmp_path / 'latin1.cplog'
    path.write_bytes(b'{"cpkit_schema": 1, "kind": "detections", "clips": ["caf\xe9"]}\n')
    with pytest.raises(SchemaError) as exc:
        read_detections(str(path))
    assert exc.value.line == 1


def test_undecodable_pass_log(tmp_path):
    path = tmp_path / 'passes.csv'
    path.write_bytes(','.join(PASS_LOG_FIELDS).encode('utf-8') + b'\nclip1,1.0,0.5,60,car\nclip\xe9,2.0,0.5,60,car\n')
    with pytest.raises(SchemaError) as exc:
        read_pass_log(str(path))
    assert exc.value.line == 3


def test_nul_byte_in_pass_log(tmp_path):
    path = write_csv(tmp_path / 'passes.csv', PASS_LOG_FIELDS, ('clip1', '1.0\x00', '0.5', '60', 'car'))
    with pytest.raises(SchemaError) as exc:
        read_pass_log(path)
    assert exc.value.line == 2


def test_undecodable_zone_map(tmp_path):
    path = tmp_path / 'zones.json'
    path.write_bytes(b'{"a": 50,\n "b": "30 \xe9"}')
    with pytest.raises(SchemaError) as exc:
        read_zone_map(str(path))
    assert exc.value.line == 2


def test_parse_speed_limit():
    assert parse_speed_limit('50') == 50.0
    assert parse_speed_limit(' 80 km/h ') == 80.0
    assert parse_speed_limit('30 mph') == pytest.approx(48.28032)
    assert parse_speed_limit('25 m/s') == pytest.approx(90.0)
    assert parse_speed_limit('unknown') is None
    assert parse_speed_limit('') is None
    with pytest.raises(ValueError):
        parse_speed_limit('0')
    with pytest.raises(InvalidArgumentError):
        parse_speed_limit('50 furlongs')


def test_event_log_round_trip(tmp_path):
    results = generate_batch(ScenarioConfig(seed=21, zones_kmh=(50.0, None)), CriteriaConfig(), 6, progress=False)
    events = [e for r in results for e in r.events]
    path = str(tmp_path / 'events.csv')
    assert write_events(events, path) == len(events)
    back = read_events(path)
    expected = sorted(events, key=lambda e: (e.clip_id, e.t_c, e.vehicle_id))
    assert [(e.clip_id, e.vehicle_id, e.is_cp, e.zone, e.category) for e in back] \
        == [(e.clip_id, e.vehicle_id, e.is_cp, e.zone, e.category) for e in expected]
    for a, b in zip(expected, back):
        assert b.t_c == pytest.approx(a.t_c, abs=1e-9)
        assert b.lateral_distance_m == pytest.approx(a.lateral_distance_m, abs=1e-9)


def test_event_log_bad_flag(tmp_path):
    path = write_csv(tmp_path / 'events.csv', PASS_LOG_FIELDS + ('vehicle_id', 'is_cp'),
                     ('c', '1.0', '0.5', '50', 'car', 'v000', 'maybe'))
    with pytest.raises(SchemaError) as exc:
        read_events(path)
    assert exc.value.field == 'is_cp'


def test_zone_map_round_trip(tmp_path):
    path = str(tmp_path / 'zones.json')
    zones = {'a': SpeedZone(50), 'b': SpeedZone.unknown()}
    write_zone_map(zones, path)
    assert read_zone_map(path) == zones


def test_zone_map_rejects_bad_limits(tmp_path):
    path = tmp_path / 'zones.json'
    path.write_text(json.dumps({'a': -10}), encoding='utf-8')
    with pytest.raises(SchemaError) as exc:
        read_zone_map(str(path))
    assert exc.value.field == 'a'


def test_write_report(tmp_path):
    path = tmp_path / 'report.jsonl'
    write_report([{'name': 'run', 'accuracy': 1.0}], str(path))
    header, row = [json.loads(line) for line in path.read_text(encoding='utf-8').splitlines()]
    assert header == {'cpkit_schema': 1, 'kind': 'report', 'clips': []}
    assert row == {'name': 'run', 'accuracy': 1.0}
