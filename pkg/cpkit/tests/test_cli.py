"""
End-to-end tests for the cpkit command line
"""
import json
import os
import time

import pytest

from cpkit.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, EXIT_SCHEMA, main
from cpkit.config import DEFAULT_SCENARIO_CONFIG, save_config
from cpkit.criteria import SpeedZone
from cpkit.geometry import Category
from cpkit.ingest import (
    PASS_LOG_FIELDS,
    read_detections,
    read_events,
    read_verdicts,
    write_events,
    write_verdicts,
)
from cpkit.simulator import PassingEvent

from .conftest import make_verdict

SIM_OUTPUTS = ('frames.cplog', 'events.csv', 'zones.json', 'manifest.json')


def simulate(out_dir, *extra, count=5, seed=42):
    return main(['--log-level', 'WARNING', 'simulate', DEFAULT_SCENARIO_CONFIG, str(out_dir),
                 '--seed', str(seed), '--count', str(count), '--no-progress', *extra])


def read_bytes(directory, name):
    with open(os.path.join(directory, name), 'rb') as f:
        return f.read()


def test_simulate_writes_outputs(tmp_path):
    assert simulate(tmp_path / 'run') == EXIT_OK
    out = tmp_path / 'run'
    for name in SIM_OUTPUTS:
        assert (out / name).exists()
    logs = read_detections(str(out / 'frames.cplog'))
    assert sorted(logs) == [f"sim-{seed:020d}" for seed in range(42, 47)]
    manifest = json.loads((out / 'manifest.json').read_text(encoding='utf-8'))
    assert manifest['command'] == 'simulate'
    assert manifest['parameters']['seed'] == 42 and manifest['parameters']['count'] == 5
    assert not (out / 'detections.cplog').exists()


def test_simulate_count_zero(tmp_path):
    assert simulate(tmp_path / 'run', count=0) == EXIT_OK
    assert read_detections(str(tmp_path / 'run' / 'frames.cplog')) == {}
    assert read_events(str(tmp_path / 'run' / 'events.csv')) == []
    assert json.loads((tmp_path / 'run' / 'zones.json').read_text(encoding='utf-8')) == {}


def test_simulate_is_byte_identical(tmp_path):
    assert simulate(tmp_path / 'a', '--noise', '--threads', '1') == EXIT_OK
    assert simulate(tmp_path / 'b', '--noise', '--threads', '3') == EXIT_OK
    for name in SIM_OUTPUTS + ('detections.cplog',):
        assert read_bytes(tmp_path / 'a', name) == read_bytes(tmp_path / 'b', name), name


@pytest.mark.slow
def test_simulate_full_scale_determinism(tmp_path):
    start = time.perf_counter()
    assert simulate(tmp_path / 'a', count=10_000, seed=0) == EXIT_OK
    assert time.perf_counter() - start < 60.0
    assert simulate(tmp_path / 'b', count=10_000, seed=0) == EXIT_OK
    for name in SIM_OUTPUTS:
        assert read_bytes(tmp_path / 'a', name) == read_bytes(tmp_path / 'b', name), name


def test_simulate_rejects_bad_config(tmp_path):
    config = tmp_path / 'bad.json'
    save_config({'seed': 1, 'colour': 'red'}, str(config))
    code = main(['simulate', str(config), str(tmp_path / 'out'), '--no-progress'])
    assert code == EXIT_CONFIG
    assert main(['simulate', str(tmp_path / 'missing.json'), str(tmp_path / 'out')]) == EXIT_CONFIG


def test_unknown_flag_is_a_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(['simulate', str(tmp_path), '--sed', '3'])
    assert exc.value.code == 2


def test_detect_reproduces_ground_truth(tmp_path):
    out = tmp_path / 'run'
    assert simulate(out, count=20, seed=7) == EXIT_OK
    verdicts_path = str(out / 'verdicts.cplog')
    code = main(['detect', str(out / 'frames.cplog'), '--zone-map', str(out / 'zones.json'), '--out', verdicts_path])
    assert code == EXIT_OK
    streams = read_verdicts(verdicts_path)
    events = read_events(str(out / 'events.csv'))
    labels = {}
    for clip_id, stream in streams.items():
        for r in stream:
            key = (clip_id, r.object_id)
            labels[key] = labels.get(key, False) or r.is_cp
    for event in events:
        assert labels[(event.clip_id, event.vehicle_id)] == event.is_cp
    event_keys = {(e.clip_id, e.vehicle_id) for e in events}
    assert not any(v for k, v in labels.items() if k not in event_keys)
    assert os.path.exists(verdicts_path + '.manifest.json')


def test_detect_empty_log(tmp_path):
    log = tmp_path / 'empty.cplog'
    log.write_text('', encoding='utf-8')
    out = tmp_path / 'verdicts.cplog'
    assert main(['detect', str(log), '--out', str(out)]) == EXIT_OK
    assert read_verdicts(str(out)) == {}


def test_detect_missing_zone_uses_high_threshold(tmp_path, caplog):
    out = tmp_path / 'run'
    assert simulate(out, count=1, seed=3) == EXIT_OK
    verdicts_path = tmp_path / 'verdicts.cplog'
    with caplog.at_level('WARNING', logger='cpkit'):
        assert main(['detect', str(out / 'frames.cplog'), '--out', str(verdicts_path)]) == EXIT_OK
    assert 'No speed zone' in caplog.text
    for stream in read_verdicts(str(verdicts_path)).values():
        assert all(r.verdict.required_clearance_m == 1.5 for r in stream)


def test_detect_respects_criteria_flags(tmp_path):
    out = tmp_path / 'run'
    assert simulate(out, count=2, seed=3) == EXIT_OK
    verdicts_path = tmp_path / 'verdicts.cplog'
    code = main(['detect', str(out / 'frames.cplog'), '--out', str(verdicts_path),
                 '--clearance-low', '0.8', '--clearance-high', '0.9'])
    assert code == EXIT_OK
    for stream in read_verdicts(str(verdicts_path)).values():
        assert {r.verdict.required_clearance_m for r in stream} <= {0.8, 0.9}


def test_detect_schema_error_exit_code(tmp_path):
    log = tmp_path / 'bad.cplog'
    log.write_text('{"kind": "detections"}\n', encoding='utf-8')
    assert main(['detect', str(log), '--out', str(tmp_path / 'v.cplog')]) == EXIT_SCHEMA


def test_undecodable_detection_log_exit_code(tmp_path):
    log = tmp_path / 'latin1.cplog'
    log.write_bytes(b'{"cpkit_schema": 1, "kind": "detections", "clips": ["a"]}\n{"clip_id": "caf\xe9"}\n')
    assert main(['detect', str(log), '--out', str(tmp_path / 'v.cplog')]) == EXIT_SCHEMA


def test_missing_input_is_an_io_error(tmp_path):
    assert main(['detect', str(tmp_path / 'nope.cplog'), '--out', str(tmp_path / 'v.cplog')]) == EXIT_IO


def _events_and_verdicts(tmp_path, shift=0.0):
    events = [
        PassingEvent('v000', 2.0, 0.6, SpeedZone(50), True, Category.CAR, 'a'),
        PassingEvent('v000', 1.0, 1.6, SpeedZone(50), False, Category.BUS, 'b'),
        PassingEvent('v001', 4.0, 0.4, SpeedZone(80), True, Category.TRUCK, 'c'),
    ]
    streams = {
        'a': [make_verdict(2.0 + shift, clip_id='a')],
        'b': [make_verdict(1.0 + shift, violated=False, clearance_m=1.6, clip_id='b')],
        'c': [make_verdict(4.0 + shift, clip_id='c', object_id='v001')],
    }
    events_path = str(tmp_path / 'events.csv')
    verdicts_path = str(tmp_path / f"shift{shift:g}.cplog")
    write_events(events, events_path)
    write_verdicts(streams, verdicts_path)
    return events_path, verdicts_path


def test_evaluate_perfect_and_shifted(tmp_path, capsys):
    events_path, perfect = _events_and_verdicts(tmp_path)
    _, shifted = _events_and_verdicts(tmp_path, shift=2.0)
    report = str(tmp_path / 'report.jsonl')
    code = main(['evaluate', perfect, shifted, '--events', events_path, '--out', report])
    assert code == EXIT_OK
    assert 'shift0' in capsys.readouterr().out

    with open(report, encoding='utf-8') as f:
        header, first, second = [json.loads(line) for line in f]
    assert header['kind'] == 'report'
    assert first['name'] == 'shift0' and second['name'] == 'shift2'
    assert first['scene']['accuracy'] == 1.0
    assert first['instance']['error_breakdown']['TruePositive'] == 2
    assert second['instance']['error_breakdown']['OutTime'] == 2
    assert second['window'] == {'pre': 0.4, 'post': 1.2}


def test_evaluate_window_flags(tmp_path):
    events_path, shifted = _events_and_verdicts(tmp_path, shift=2.0)
    report = str(tmp_path / 'report.jsonl')
    assert main(['evaluate', shifted, '--events', events_path, '--window-post', '2.5', '--out', report]) == EXIT_OK
    with open(report, encoding='utf-8') as f:
        row = [json.loads(line) for line in f][1]
    assert row['instance']['error_breakdown']['TruePositive'] == 2


def test_evaluate_alignment_error(tmp_path):
    events_path, _ = _events_and_verdicts(tmp_path)
    partial = str(tmp_path / 'partial.cplog')
    write_verdicts({'a': [make_verdict(2.0, clip_id='a')]}, partial)
    assert main(['evaluate', partial, '--events', events_path]) == EXIT_SCHEMA


def _pass_log(tmp_path, rows):
    path = tmp_path / 'passes.csv'
    path.write_text('\n'.join([','.join(PASS_LOG_FIELDS)] + [','.join(r) for r in rows]) + '\n', encoding='utf-8')
    return str(path)


def test_stats_empty_log(tmp_path, capsys):
    assert main(['stats', _pass_log(tmp_path, [])]) == EXIT_OK
    assert 'zone_kmh' in capsys.readouterr().out


def test_stats_undecodable_pass_log_exit_code(tmp_path):
    path = tmp_path / 'latin1.csv'
    path.write_bytes(','.join(PASS_LOG_FIELDS).encode('utf-8') + b'\nclip\xe9,1.0,0.8,50,car\n')
    assert main(['stats', str(path)]) == EXIT_SCHEMA


def test_stats_nul_byte_exit_code(tmp_path):
    assert main(['stats', _pass_log(tmp_path, [('c1', '1.0', '0.8\x00', '50', 'car')])]) == EXIT_SCHEMA


def test_stats_mixed_zones(tmp_path, capsys):
    rows = [
        ('c1', '1.0', '0.8', '50', 'car'),
        ('c2', '2.0', '1.2', '50', 'truck'),
        ('c3', '3.0', '1.4', '80', 'car'),
        ('c4', '4.0', '1.7', 'unknown', 'bus'),
        ('c5', '5.0', '0.5', '30 mph', 'car'),
    ]
    out = str(tmp_path / 'stats.json')
    assert main(['stats', _pass_log(tmp_path, rows), '--no-histogram', '--out', out]) == EXIT_OK
    table = capsys.readouterr().out.splitlines()
    assert len(table) == 2 + 4
    with open(out, encoding='utf-8') as f:
        zones = json.load(f)['zones']
    assert [z['zone'] for z in zones] == ['48.2803', '50', '80', 'unknown']
    assert [(z['positives'], z['negatives']) for z in zones] == [(1, 0), (1, 1), (1, 0), (0, 1)]


def test_stats_balance_and_detections(tmp_path, capsys):
    run = tmp_path / 'run'
    assert simulate(run, count=2, seed=5) == EXIT_OK
    rows = [('c1', '1.0', '0.8', '50', 'car')] + [(f"n{i}", '1.0', '2.5', '50', 'car') for i in range(5)]
    out = str(tmp_path / 'stats.json')
    code = main(['stats', _pass_log(tmp_path, rows), '--balance', '1', '--detections', str(run / 'frames.cplog'),
                 '--out', out])
    assert code == EXIT_OK
    with open(out, encoding='utf-8') as f:
        data = json.load(f)
    assert data['zones'][0]['count'] == 2
    assert data['categories']
    assert 'category' in capsys.readouterr().out
