"""
Log Ingestion Module
Readers and writers for detection logs, verdict logs, pass logs, event logs and zone maps

Detection and verdict logs are JSON Lines with a schema header on the first
line; pass and event logs are CSV with a mandatory header row.
"""
import csv
import io
import json
import logging
import math
import os
import re
from dataclasses import dataclass
from typing import Any, Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

from .criteria import CpVerdict, SpeedZone
from .errors import CpkitError, InvalidArgumentError, SchemaError
from .geometry import Category, ObjectState
from .simulator import Frame, FrameLog, PassingEvent
from .units import convert

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
FLOAT_DIGITS = 9

DETECTION_FIELDS = ('clip_id', 'frame', 't', 'object_id', 'category',
                    'w', 'h', 'l', 'd_f', 'd_r', 'd_v', 'yaw', 'confidence')
VERDICT_FIELDS = ('clip_id', 'frame', 't', 'object_id', 'category', 'is_cp', 'clearance_m',
                  'clearance_violated', 'overlapping', 'on_side', 'required_clearance_m')
PASS_LOG_FIELDS = ('clip_id', 't_c', 'lateral_distance_m', 'speed_limit_kmh', 'vehicle_category')
EVENT_FIELDS = PASS_LOG_FIELDS + ('vehicle_id', 'is_cp')


@dataclass(frozen=True)
class DetectionRecord:
    """One detected object in one frame of one clip"""
    clip_id: str
    frame: int
    t: float
    object_id: str
    category: Category
    w: float
    h: float
    l: float  # noqa: E741
    d_f: float
    d_r: float
    d_v: float
    yaw: float
    confidence: float

    @property
    def key(self) -> Tuple[str, int, str]:
        return (self.clip_id, self.frame, self.object_id)

    def to_state(self) -> ObjectState:
        return ObjectState(
            object_id=self.object_id,
            category=self.category,
            width_m=self.w,
            height_m=self.h,
            length_m=self.l,
            d_f=self.d_f,
            d_r=self.d_r,
            d_v=self.d_v,
            yaw_rad=self.yaw,
            t=self.t,
            confidence=self.confidence,
        )

    @classmethod
    def from_state(cls, clip_id: str, frame: int, obj: ObjectState) -> 'DetectionRecord':
        return cls(
            clip_id=clip_id,
            frame=frame,
            t=obj.t,
            object_id=obj.object_id,
            category=obj.category,
            w=obj.width_m,
            h=obj.height_m,
            l=obj.length_m,
            d_f=obj.d_f,
            d_r=obj.d_r,
            d_v=obj.d_v,
            yaw=obj.yaw_rad,
            confidence=1.0 if obj.confidence is None else obj.confidence,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            'clip_id': self.clip_id,
            'frame': self.frame,
            't': _num(self.t),
            'object_id': self.object_id,
            'category': self.category.value,
            'w': _num(self.w),
            'h': _num(self.h),
            'l': _num(self.l),
            'd_f': _num(self.d_f),
            'd_r': _num(self.d_r),
            'd_v': _num(self.d_v),
            'yaw': _num(self.yaw),
            'confidence': _num(self.confidence),
        }


@dataclass(frozen=True)
class VerdictRecord:
    """Criteria verdict of one detection, located in its clip"""
    clip_id: str
    frame: int
    t: float
    object_id: str
    category: Category
    verdict: CpVerdict

    @property
    def is_cp(self) -> bool:
        return self.verdict.is_cp

    def to_dict(self) -> Dict[str, Any]:
        v = self.verdict
        return {
            'clip_id': self.clip_id,
            'frame': self.frame,
            't': _num(self.t),
            'object_id': self.object_id,
            'category': self.category.value,
            'is_cp': v.is_cp,
            'clearance_m': _num(v.clearance_m),
            'clearance_violated': v.clearance_violated,
            'overlapping': v.overlapping,
            'on_side': v.on_side,
            'required_clearance_m': _num(v.required_clearance_m),
        }


@dataclass(frozen=True)
class PassLogRecord:
    """A lateral-distance sensor reading of a passing vehicle"""
    clip_id: str
    t_c: float
    lateral_distance_m: float
    speed_limit_kmh: Optional[float]
    vehicle_category: str

    def __post_init__(self):
        if not self.lateral_distance_m >= 0:
            raise InvalidArgumentError(f"lateral_distance_m must be non-negative, got {self.lateral_distance_m}")

    @property
    def zone(self) -> SpeedZone:
        return SpeedZone(self.speed_limit_kmh)


def _num(value: float) -> float:
    return round(float(value), FLOAT_DIGITS)


def _fmt(value: float) -> str:
    return repr(_num(value))


# --- JSON Lines plumbing -------------------------------------------------------

def _write_jsonl(path: str, kind: str, clips: Sequence[str], rows: Sequence[Dict[str, Any]],
                 extra_header: Optional[Dict[str, Any]] = None) -> None:
    header: Dict[str, Any] = {'cpkit_schema': SCHEMA_VERSION, 'kind': kind, 'clips': list(clips)}
    if extra_header:
        header.update(extra_header)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(json.dumps(header, allow_nan=False) + '\n')
        for row in rows:
            f.write(json.dumps(row, allow_nan=False) + '\n')


def _decode_line(raw: bytes, path: str, line: int) -> str:
    try:
        return raw.decode('utf-8')
    except UnicodeDecodeError as e:
        raise SchemaError(f"invalid UTF-8 at byte {e.start}", path=path, line=line)


def _decode_file(raw: bytes, path: str) -> str:
    try:
        return raw.decode('utf-8')
    except UnicodeDecodeError as e:
        raise SchemaError("file is not valid UTF-8", path=path, line=raw.count(b'\n', 0, e.start) + 1)


def _read_jsonl(path: str, kind: str, errors: List[SchemaError]) -> Tuple[List[str], Iterator[Tuple[int, Dict[str, Any]]]]:
    """Parse the header eagerly and return the clip list plus a row iterator"""
    with open(path, 'rb') as f:
        lines = f.read().splitlines()

    if not lines or not any(line.strip() for line in lines):
        return [], iter(())

    try:
        header = json.loads(_decode_line(lines[0], path, 1))
    except json.JSONDecodeError as e:
        raise SchemaError(f"header is not valid JSON: {e.msg}", path=path, line=1)
    if not isinstance(header, dict) or 'cpkit_schema' not in header:
        raise SchemaError("missing cpkit_schema header", path=path, line=1, field='cpkit_schema')
    if header['cpkit_schema'] != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema version {header['cpkit_schema']!r}",
                          path=path, line=1, field='cpkit_schema')
    if header.get('kind', kind) != kind:
        raise SchemaError(f"expected a {kind} log, found {header.get('kind')!r}", path=path, line=1, field='kind')
    clips = header.get('clips', [])
    if not isinstance(clips, list) or not all(isinstance(c, str) for c in clips):
        raise SchemaError("clips must be a list of strings", path=path, line=1, field='clips')

    def rows() -> Iterator[Tuple[int, Dict[str, Any]]]:
        for line_no, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            try:
                row = json.loads(_decode_line(line, path, line_no))
            except SchemaError as e:
                errors.append(e)
                continue
            except json.JSONDecodeError as e:
                errors.append(SchemaError(f"invalid JSON: {e.msg}", path=path, line=line_no))
                continue
            if not isinstance(row, dict):
                errors.append(SchemaError("record is not a JSON object", path=path, line=line_no))
                continue
            yield line_no, row

    return list(clips), rows()


def _raise_collected(errors: List[SchemaError]) -> None:
    if errors:
        first = errors[0]
        raise SchemaError(first.message, path=first.path, line=first.line, field=first.field, errors=errors)


class _RowParser:
    """Field accessors that report the offending field"""

    def __init__(self, row: Mapping[str, Any], path: str, line: int):
        self.row = row
        self.path = path
        self.line = line

    def _get(self, name: str) -> Any:
        if name not in self.row or self.row[name] is None:
            raise SchemaError("missing required field", path=self.path, line=self.line, field=name)
        return self.row[name]

    def fail(self, name: str, message: str) -> SchemaError:
        return SchemaError(message, path=self.path, line=self.line, field=name)

    def string(self, name: str) -> str:
        value = self._get(name)
        if not isinstance(value, (str, int)) or isinstance(value, bool):
            raise self.fail(name, f"expected a string, got {value!r}")
        return str(value)

    def integer(self, name: str, minimum: Optional[int] = None) -> int:
        value = self._get(name)
        if isinstance(value, bool) or not isinstance(value, int):
            raise self.fail(name, f"expected an integer, got {value!r}")
        if minimum is not None and value < minimum:
            raise self.fail(name, f"must be >= {minimum}, got {value}")
        return value

    def number(self, name: str, check: Optional[Callable[[float], bool]] = None, rule: str = '') -> float:
        value = self._get(name)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise self.fail(name, f"expected a number, got {value!r}")
        value = float(value)
        if not math.isfinite(value):
            raise self.fail(name, f"must be finite, got {value}")
        if check is not None and not check(value):
            raise self.fail(name, f"{rule}, got {value}")
        return value

    def boolean(self, name: str) -> bool:
        value = self._get(name)
        if not isinstance(value, bool):
            raise self.fail(name, f"expected true or false, got {value!r}")
        return value

    def category(self, name: str) -> Category:
        try:
            return Category.parse(self.string(name))
        except InvalidArgumentError as e:
            raise self.fail(name, e.message)


def _positive(x: float) -> bool:
    return x > 0


def _non_negative(x: float) -> bool:
    return x >= 0


def _unit(x: float) -> bool:
    return 0.0 <= x <= 1.0


# --- detection logs ------------------------------------------------------------

def _parse_detection(p: _RowParser) -> DetectionRecord:
    return DetectionRecord(
        clip_id=p.string('clip_id'),
        frame=p.integer('frame', minimum=0),
        t=p.number('t', _non_negative, 'must be >= 0'),
        object_id=p.string('object_id'),
        category=p.category('category'),
        w=p.number('w', _positive, 'must be > 0'),
        h=p.number('h', _positive, 'must be > 0'),
        l=p.number('l', _positive, 'must be > 0'),
        d_f=p.number('d_f'),
        d_r=p.number('d_r'),
        d_v=p.number('d_v'),
        yaw=p.number('yaw'),
        confidence=p.number('confidence', _unit, 'must be in [0, 1]'),
    )


def read_detection_records(path: str) -> Tuple[List[str], List[DetectionRecord]]:
    """Read a detection log as flat records plus its declared clip list"""
    errors: List[SchemaError] = []
    clips, rows = _read_jsonl(path, 'detections', errors)
    records: List[DetectionRecord] = []
    seen: Dict[Tuple[str, int, str], int] = {}
    for line_no, row in rows:
        try:
            record = _parse_detection(_RowParser(row, path, line_no))
        except SchemaError as e:
            errors.append(e)
            continue
        if record.key in seen:
            errors.append(SchemaError(f"duplicate record for {record.key}, first at line {seen[record.key]}",
                                      path=path, line=line_no, field='object_id'))
            continue
        seen[record.key] = line_no
        records.append(record)
    _raise_collected(errors)
    records.sort(key=lambda r: r.key)
    logger.info(f"Read {len(records)} detection records from {path}")
    return clips, records


def read_detections(path: str) -> Dict[str, FrameLog]:
    """Read a detection log into per-clip frame logs

    Clips declared in the header but without records map to an empty log.
    """
    clips, records = read_detection_records(path)
    grouped: Dict[str, Dict[int, List[DetectionRecord]]] = {clip: {} for clip in clips}
    for record in records:
        grouped.setdefault(record.clip_id, {}).setdefault(record.frame, []).append(record)

    logs: Dict[str, FrameLog] = {}
    for clip_id in sorted(grouped):
        frames = grouped[clip_id]
        logs[clip_id] = [
            Frame(index=index, t=frames[index][0].t, objects=tuple(r.to_state() for r in frames[index]))
            for index in sorted(frames)
        ]
    return logs


def detection_records(logs: Mapping[str, FrameLog]) -> List[DetectionRecord]:
    records = [
        DetectionRecord.from_state(clip_id, frame.index, obj)
        for clip_id, frames in logs.items()
        for frame in frames
        for obj in frame.objects
    ]
    records.sort(key=lambda r: r.key)
    return records


def write_detections(logs: Mapping[str, FrameLog], path: str) -> int:
    """Write per-clip frame logs; returns the number of records written"""
    records = detection_records(logs)
    _write_jsonl(path, 'detections', sorted(logs), [r.to_dict() for r in records])
    logger.info(f"Wrote {len(records)} detection records for {len(logs)} clips to {path}")
    return len(records)


# --- verdict logs --------------------------------------------------------------

def _parse_verdict(p: _RowParser) -> VerdictRecord:
    violated = p.boolean('clearance_violated')
    overlapping = p.boolean('overlapping')
    on_side = p.boolean('on_side')
    is_cp = p.boolean('is_cp')
    category = p.category('category')
    if is_cp != (violated and overlapping and on_side):
        raise p.fail('is_cp', "is_cp disagrees with the criterion flags")
    return VerdictRecord(
        clip_id=p.string('clip_id'),
        frame=p.integer('frame', minimum=0),
        t=p.number('t', _non_negative, 'must be >= 0'),
        object_id=p.string('object_id'),
        category=category,
        verdict=CpVerdict(
            is_cp=is_cp,
            clearance_m=p.number('clearance_m'),
            clearance_violated=violated,
            overlapping=overlapping,
            on_side=on_side,
            required_clearance_m=p.number('required_clearance_m', _positive, 'must be > 0'),
        ),
    )


def read_verdicts(path: str) -> Dict[str, List[VerdictRecord]]:
    """Read a verdict log into per-clip, time-sorted verdict streams"""
    errors: List[SchemaError] = []
    clips, rows = _read_jsonl(path, 'verdicts', errors)
    streams: Dict[str, List[VerdictRecord]] = {clip: [] for clip in clips}
    for line_no, row in rows:
        try:
            record = _parse_verdict(_RowParser(row, path, line_no))
        except SchemaError as e:
            errors.append(e)
            continue
        streams.setdefault(record.clip_id, []).append(record)
    _raise_collected(errors)
    for stream in streams.values():
        stream.sort(key=lambda r: (r.t, r.frame, r.object_id))
    logger.info(f"Read verdicts for {len(streams)} clips from {path}")
    return {clip: streams[clip] for clip in sorted(streams)}


def write_verdicts(streams: Mapping[str, Sequence[VerdictRecord]], path: str) -> int:
    records = sorted((r for stream in streams.values() for r in stream),
                     key=lambda r: (r.clip_id, r.frame, r.object_id))
    _write_jsonl(path, 'verdicts', sorted(streams), [r.to_dict() for r in records])
    logger.info(f"Wrote {len(records)} verdicts for {len(streams)} clips to {path}")
    return len(records)


# --- pass logs and event logs ----------------------------------------------------

_SPEED_LIMIT = re.compile(r'^([0-9]+(?:\.[0-9]*)?)\s*([a-z/]*)$')


def parse_speed_limit(text: str) -> Optional[float]:
    """Parse a speed-limit cell into km/h; ``None`` for an unreadable sign"""
    cleaned = (text or '').strip().lower()
    if cleaned in ('', 'unknown', 'na', 'n/a'):
        return None
    match = _SPEED_LIMIT.match(cleaned)
    if not match:
        raise ValueError(f"unreadable speed limit {text!r}")
    value = convert(float(match.group(1)), match.group(2) or 'km/h', 'km/h')
    if not value > 0:
        raise ValueError(f"speed limit must be positive, got {text!r}")
    return value


def _read_csv(path: str, required: Sequence[str]) -> List[Tuple[int, Dict[str, str]]]:
    with open(path, 'rb') as f:
        text = _decode_file(f.read(), path)
    reader = csv.DictReader(io.StringIO(text, newline=''))
    try:
        if reader.fieldnames is None:
            raise SchemaError("missing header row", path=path, line=1)
        fields = [name.strip() for name in reader.fieldnames]
        missing = [name for name in required if name not in fields]
        if missing:
            raise SchemaError(f"header lacks required columns: {', '.join(missing)}",
                              path=path, line=1, field=missing[0])
        rows = []
        for row in reader:
            cleaned = {(k or '').strip(): (v or '').strip() for k, v in row.items() if k is not None}
            if not any(cleaned.values()):
                continue
            rows.append((reader.line_num, cleaned))
    except csv.Error as e:
        raise SchemaError(f"malformed CSV: {e}", path=path, line=reader.line_num or 1)
    return rows


def _parse_pass_row(row: Dict[str, str], path: str, line: int) -> PassLogRecord:
    clip_id = row['clip_id']
    if not clip_id:
        raise SchemaError("empty clip_id", path=path, line=line, field='clip_id')
    try:
        t_c = float(row['t_c'])
        if not (math.isfinite(t_c) and t_c >= 0):
            raise ValueError
    except ValueError:
        raise SchemaError(f"unparsable time {row['t_c']!r}", path=path, line=line, field='t_c')
    try:
        distance = float(row['lateral_distance_m'])
    except ValueError:
        raise SchemaError(f"unparsable distance {row['lateral_distance_m']!r}",
                          path=path, line=line, field='lateral_distance_m')
    if not (math.isfinite(distance) and distance >= 0):
        raise SchemaError(f"lateral distance must be non-negative, got {distance}",
                          path=path, line=line, field='lateral_distance_m')
    try:
        limit = parse_speed_limit(row['speed_limit_kmh'])
    except (ValueError, CpkitError):
        raise SchemaError(f"unparsable speed limit {row['speed_limit_kmh']!r}",
                          path=path, line=line, field='speed_limit_kmh')
    return PassLogRecord(
        clip_id=clip_id,
        t_c=t_c,
        lateral_distance_m=distance,
        speed_limit_kmh=limit,
        vehicle_category=row['vehicle_category'].lower() or Category.OTHER.value,
    )


def read_pass_log(path: str) -> List[PassLogRecord]:
    """Read a sensor pass log; unknown speed limits become unreadable zones"""
    rows = _read_csv(path, PASS_LOG_FIELDS)
    errors: List[SchemaError] = []
    records = []
    for line, row in rows:
        try:
            records.append(_parse_pass_row(row, path, line))
        except SchemaError as e:
            errors.append(e)
    _raise_collected(errors)
    logger.info(f"Read {len(records)} passing records from {path}")
    return records


def read_events(path: str) -> List[PassingEvent]:
    """Read a ground-truth event log written by :func:`write_events`"""
    rows = _read_csv(path, EVENT_FIELDS)
    errors: List[SchemaError] = []
    events = []
    for line, row in rows:
        try:
            record = _parse_pass_row(row, path, line)
            flag = row['is_cp'].lower()
            if flag not in ('true', 'false'):
                raise SchemaError(f"is_cp must be true or false, got {row['is_cp']!r}",
                                  path=path, line=line, field='is_cp')
            try:
                category = Category.parse(record.vehicle_category)
            except InvalidArgumentError:
                category = Category.OTHER
            events.append(PassingEvent(
                vehicle_id=row['vehicle_id'],
                t_c=record.t_c,
                lateral_distance_m=record.lateral_distance_m,
                zone=record.zone,
                is_cp=flag == 'true',
                category=category,
                clip_id=record.clip_id,
            ))
        except SchemaError as e:
            errors.append(e)
    _raise_collected(errors)
    events.sort(key=lambda e: (e.clip_id, e.t_c, e.vehicle_id))
    logger.info(f"Read {len(events)} passing events from {path}")
    return events


def write_events(events: Sequence[PassingEvent], path: str) -> int:
    ordered = sorted(events, key=lambda e: (e.clip_id, e.t_c, e.vehicle_id))
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(EVENT_FIELDS)
        for e in ordered:
            writer.writerow([
                e.clip_id,
                _fmt(e.t_c),
                _fmt(e.lateral_distance_m),
                'unknown' if e.zone.limit_kmh is None else _fmt(e.zone.limit_kmh),
                e.category.value,
                e.vehicle_id,
                'true' if e.is_cp else 'false',
            ])
    logger.info(f"Wrote {len(ordered)} passing events to {path}")
    return len(ordered)


# --- zone maps and reports -------------------------------------------------------

def read_zone_map(path: str) -> Dict[str, SpeedZone]:
    """Read ``{clip_id: limit_kmh | "unknown"}``"""
    with open(path, 'rb') as f:
        text = _decode_file(f.read(), path)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(f"invalid JSON: {e.msg}", path=path, line=e.lineno)
    if not isinstance(data, dict):
        raise SchemaError("zone map must be a JSON object", path=path, line=1)
    zones = {}
    for clip_id, value in data.items():
        try:
            if isinstance(value, bool):
                raise ValueError(value)
            limit = parse_speed_limit(value) if isinstance(value, str) else float(value)
            zones[clip_id] = SpeedZone(limit)
        except (ValueError, TypeError, CpkitError):
            raise SchemaError(f"invalid speed limit {value!r} for clip {clip_id}", path=path, field=clip_id)
    return zones


def write_zone_map(zones: Mapping[str, SpeedZone], path: str) -> None:
    data = {clip: ('unknown' if zone.limit_kmh is None else zone.limit_kmh) for clip, zone in sorted(zones.items())}
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write('\n')


def write_report(reports: Sequence[Dict[str, Any]], path: str) -> None:
    """Write evaluation reports as a JSON Lines file with a schema header"""
    _write_jsonl(path, 'report', [], list(reports))
