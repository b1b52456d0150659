"""
Evaluation of close-pass detection pipelines: time-window matching of
detections to recorded passes, scene- and instance-level metrics, the
error-type breakdown and dataset statistics.
"""
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Mapping, Optional, Protocol, Sequence, Tuple

import numpy as np
from sklearn.metrics import confusion_matrix, roc_auc_score

from .criteria import CpVerdict, CriteriaConfig, SpeedZone, label_pass_event, scene_label
from .errors import AlignmentError, InvalidArgumentError, MetricError, UnsortedStreamError
from .ingest import PassLogRecord
from .rng import SeededRNG
from .simulator import FrameLog, PassingEvent

logger = logging.getLogger(__name__)

HISTOGRAM_BIN_M = 0.1
HISTOGRAM_MAX_M = 5.0


class TimedVerdict(Protocol):
    t: float
    object_id: str
    verdict: CpVerdict


class Outcome(str, Enum):
    TRUE_POSITIVE = 'TruePositive'
    OUT_RIGHT = 'OutRight'
    OUT_FORWARD = 'OutForward'
    OUT_TIME = 'OutTime'
    NOT_DETECTED = 'NotDetected'


@dataclass(frozen=True)
class TimeWindow:
    """Open interval (t_c - pre, t_c + post) in which a detection matches a pass"""
    pre: float = 0.4
    post: float = 1.2

    def __post_init__(self):
        if not (self.pre >= 0 and self.post >= 0):
            raise InvalidArgumentError(f"window bounds must be non-negative, got pre={self.pre}, post={self.post}")

    def bounds(self, t_c: float) -> Tuple[float, float]:
        return (t_c - self.pre, t_c + self.post)

    def contains(self, t: float, t_c: float) -> bool:
        lo, hi = self.bounds(t_c)
        return lo < t < hi


@dataclass(frozen=True)
class EventOutcome:
    event: PassingEvent
    outcome: Outcome
    matched_t: Optional[float] = None


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise InvalidArgumentError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @classmethod
    def from_labels(cls, pred: Sequence[bool], truth: Sequence[bool]) -> 'ConfusionMatrix':
        if len(pred) != len(truth):
            raise MetricError(f"prediction and truth lengths differ: {len(pred)} != {len(truth)}")
        if len(pred) == 0:
            return cls()
        tn, fp, fn, tp = confusion_matrix(np.asarray(truth, dtype=bool), np.asarray(pred, dtype=bool),
                                          labels=[False, True]).ravel()
        return cls(tp=int(tp), fp=int(fp), tn=int(tn), fn=int(fn))

    def to_dict(self) -> Dict[str, int]:
        return {'tp': self.tp, 'fp': self.fp, 'tn': self.tn, 'fn': self.fn}


@dataclass(frozen=True)
class MetricsReport:
    """
    Classification metrics with their confusion matrix

    Ratios with a zero denominator are reported as 0 and listed in ``undefined``.
    """
    accuracy: float
    precision: float
    recall: float
    f1: float
    confusion: ConfusionMatrix
    auc: Optional[float] = None
    error_breakdown: Dict[Outcome, int] = field(default_factory=dict)
    undefined: Tuple[str, ...] = ()

    @classmethod
    def from_confusion(cls, cm: ConfusionMatrix, auc: Optional[float] = None,
                       error_breakdown: Optional[Dict[Outcome, int]] = None) -> 'MetricsReport':
        undefined = []

        def ratio(name: str, num: int, den: int) -> float:
            if den == 0:
                undefined.append(name)
                return 0.0
            return num / den

        accuracy = ratio('accuracy', cm.tp + cm.tn, cm.total)
        precision = ratio('precision', cm.tp, cm.tp + cm.fp)
        recall = ratio('recall', cm.tp, cm.tp + cm.fn)
        if precision + recall > 0:
            f1 = 2 * precision * recall / (precision + recall)
        else:
            f1 = 0.0
            undefined.append('f1')
        return cls(
            accuracy=accuracy,
            precision=precision,
            recall=recall,
            f1=f1,
            confusion=cm,
            auc=auc,
            error_breakdown=dict(error_breakdown or {}),
            undefined=tuple(undefined),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            'accuracy': self.accuracy,
            'precision': self.precision,
            'recall': self.recall,
            'f1': self.f1,
            'auc': self.auc,
            'confusion': self.confusion.to_dict(),
            'error_breakdown': {k.value: v for k, v in self.error_breakdown.items()},
            'undefined': list(self.undefined),
        }


def _check_sorted(verdicts: Sequence[TimedVerdict]) -> None:
    for i in range(1, len(verdicts)):
        if verdicts[i].t < verdicts[i - 1].t:
            raise UnsortedStreamError(
                f"verdict stream is not time-sorted at index {i} "
                f"({verdicts[i].t} after {verdicts[i - 1].t})", index=i)


def _nearest(items: Sequence[TimedVerdict], t_c: float) -> TimedVerdict:
    # min() keeps the first of equally near items, i.e. the earliest
    return min(items, key=lambda r: abs(r.t - t_c))


def _vehicle_stream(verdicts: Sequence[TimedVerdict], vehicle_id: str) -> Sequence[TimedVerdict]:
    """Verdicts of the event's vehicle, or the whole clip when no detection carries its id"""
    own = [r for r in verdicts if r.object_id == vehicle_id]
    return own if own else verdicts


def match_event(verdicts: Sequence[TimedVerdict], event: PassingEvent,
                window: TimeWindow = TimeWindow()) -> EventOutcome:
    """
    Classify how a clip's detections relate to one recorded pass

    Only detections of the passing vehicle count when the stream carries its
    id; otherwise every detection in the clip does.
    Precedence: TruePositive > OutTime > OutRight > OutForward > NotDetected.
    Misses are attributed to the in-window detection on the passing side
    nearest to the capture time.
    """
    _check_sorted(verdicts)
    verdicts = _vehicle_stream(verdicts, event.vehicle_id)
    positives = [r for r in verdicts if r.verdict.is_cp]
    inside = [r for r in positives if window.contains(r.t, event.t_c)]
    if inside:
        return EventOutcome(event, Outcome.TRUE_POSITIVE, _nearest(inside, event.t_c).t)
    if positives:
        return EventOutcome(event, Outcome.OUT_TIME, _nearest(positives, event.t_c).t)

    candidates = [r for r in verdicts if r.verdict.on_side and window.contains(r.t, event.t_c)]
    if not candidates:
        return EventOutcome(event, Outcome.NOT_DETECTED)
    nearest = _nearest(candidates, event.t_c).verdict
    if nearest.failed_only_clearance:
        return EventOutcome(event, Outcome.OUT_RIGHT)
    if not nearest.overlapping:
        return EventOutcome(event, Outcome.OUT_FORWARD)
    return EventOutcome(event, Outcome.NOT_DETECTED)


def scene_metrics(pred: Sequence[bool], truth: Sequence[bool]) -> MetricsReport:
    """Clip-level metrics from aligned prediction and truth labels"""
    return MetricsReport.from_confusion(ConfusionMatrix.from_labels(pred, truth))


def roc_auc(scores: Sequence[float], truth: Sequence[bool]) -> float:
    """Area under the ROC curve, ties counted half

    Infinite scores rank below or above every finite one and tie among themselves.
    """
    if len(scores) != len(truth):
        raise MetricError(f"scores and truth lengths differ: {len(scores)} != {len(truth)}")
    s = np.asarray(scores, dtype=float)
    y = np.asarray(truth, dtype=bool)
    if np.isnan(s).any():
        raise MetricError("scores contain NaN")
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == len(y):
        raise MetricError("AUC needs at least one positive and one negative")
    finite = s[np.isfinite(s)]
    lo, hi = (finite.min(), finite.max()) if finite.size else (0.0, 0.0)
    s = np.where(s == -np.inf, np.nextafter(lo, -np.inf), np.where(s == np.inf, np.nextafter(hi, np.inf), s))
    return float(roc_auc_score(y, s))


def error_breakdown(outcomes: Sequence[EventOutcome]) -> Dict[Outcome, int]:
    counts = Counter(o.outcome for o in outcomes)
    return {kind: counts.get(kind, 0) for kind in Outcome}


def clip_score(verdicts: Sequence[TimedVerdict]) -> float:
    """Clearance margin of a clip: required clearance minus the tightest candidate clearance

    Clips without an overlapping vehicle on the passing side score -inf.
    """
    margins = [r.verdict.required_clearance_m - r.verdict.clearance_m
               for r in verdicts if r.verdict.overlapping and r.verdict.on_side]
    return max(margins) if margins else -math.inf


@dataclass(frozen=True)
class RunEvaluation:
    """Scene- and instance-level evaluation of one verdict log"""
    name: str
    scene: MetricsReport
    instance: MetricsReport
    outcomes: Tuple[EventOutcome, ...]
    n_clips: int
    n_events: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            'name': self.name,
            'n_clips': self.n_clips,
            'n_events': self.n_events,
            'n_cp_events': len(self.outcomes),
            'scene': self.scene.to_dict(),
            'instance': self.instance.to_dict(),
        }


def evaluate_run(streams: Mapping[str, Sequence[TimedVerdict]], events: Sequence[PassingEvent],
                 window: TimeWindow = TimeWindow(), name: str = 'run') -> RunEvaluation:
    """
    Evaluate per-clip verdict streams against ground-truth passes

    Every clip with events must have a verdict stream; clips without events
    are scene-level negatives.
    """
    by_clip: Dict[str, List[PassingEvent]] = {}
    for e in events:
        by_clip.setdefault(e.clip_id, []).append(e)
    missing = sorted(set(by_clip) - set(streams))
    if missing:
        raise AlignmentError(f"{len(missing)} clips have events but no verdicts", missing=missing)

    clips = sorted(streams)
    scene_pred = [scene_label(r.verdict for r in streams[c]) for c in clips]
    scene_truth = [any(e.is_cp for e in by_clip.get(c, ())) for c in clips]
    auc = None
    if any(scene_truth) and not all(scene_truth):
        auc = roc_auc([clip_score(streams[c]) for c in clips], scene_truth)
    scene = MetricsReport.from_confusion(ConfusionMatrix.from_labels(scene_pred, scene_truth), auc=auc)

    outcomes: List[EventOutcome] = []
    inst_pred: List[bool] = []
    inst_truth: List[bool] = []
    for clip in clips:
        stream = streams[clip]
        _check_sorted(stream)
        for event in by_clip.get(clip, ()):
            inst_truth.append(event.is_cp)
            inst_pred.append(any(r.verdict.is_cp and window.contains(r.t, event.t_c)
                                 for r in _vehicle_stream(stream, event.vehicle_id)))
            if event.is_cp:
                outcomes.append(match_event(stream, event, window))

    breakdown = error_breakdown(outcomes)
    instance = MetricsReport.from_confusion(ConfusionMatrix.from_labels(inst_pred, inst_truth),
                                            error_breakdown=breakdown)
    logger.info(f"Evaluated {name}: {len(clips)} clips, {len(inst_truth)} events, "
                f"{len(outcomes)} close passes")
    return RunEvaluation(
        name=name,
        scene=scene,
        instance=instance,
        outcomes=tuple(outcomes),
        n_clips=len(clips),
        n_events=len(inst_truth),
    )


# --- dataset statistics --------------------------------------------------------

@dataclass(frozen=True)
class ZoneSummary:
    """Passing-distance statistics of one speed zone"""
    zone: SpeedZone
    count: int
    mean: float
    std: float
    median: float
    q1: float
    q3: float
    minimum: float
    maximum: float
    histogram: Tuple[int, ...]
    positives: int
    negatives: int
    categories: Dict[str, int]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'zone': self.zone.label,
            'count': self.count,
            'mean': self.mean,
            'std': self.std,
            'median': self.median,
            'q1': self.q1,
            'q3': self.q3,
            'min': self.minimum,
            'max': self.maximum,
            'positives': self.positives,
            'negatives': self.negatives,
            'categories': dict(self.categories),
            'histogram_bin_m': HISTOGRAM_BIN_M,
            'histogram': list(self.histogram),
        }


def _zone_key(zone: SpeedZone) -> Tuple[int, float]:
    return (1, 0.0) if zone.limit_kmh is None else (0, zone.limit_kmh)


def distance_histogram(distances: Sequence[float]) -> Tuple[int, ...]:
    """Counts per 0.1 m bin over [0, 5] m; longer distances land in the last bin"""
    bins = int(round(HISTOGRAM_MAX_M / HISTOGRAM_BIN_M))
    clipped = np.clip(np.asarray(distances, dtype=float), 0.0, HISTOGRAM_MAX_M)
    counts, _ = np.histogram(clipped, bins=bins, range=(0.0, HISTOGRAM_MAX_M))
    return tuple(int(c) for c in counts)


def dataset_stats(pass_log: Sequence[PassLogRecord], cfg: CriteriaConfig = CriteriaConfig()) -> List[ZoneSummary]:
    """Per-zone passing-distance summaries, known zones ascending, unknown last"""
    groups: Dict[SpeedZone, List[PassLogRecord]] = {}
    for record in pass_log:
        groups.setdefault(record.zone, []).append(record)

    summaries = []
    for zone in sorted(groups, key=_zone_key):
        records = groups[zone]
        d = np.array([r.lateral_distance_m for r in records], dtype=float)
        positives = sum(label_pass_event(r.lateral_distance_m, zone, cfg) for r in records)
        q1, median, q3 = np.percentile(d, [25, 50, 75])
        summaries.append(ZoneSummary(
            zone=zone,
            count=len(records),
            mean=float(d.mean()),
            std=float(d.std()),
            median=float(median),
            q1=float(q1),
            q3=float(q3),
            minimum=float(d.min()),
            maximum=float(d.max()),
            histogram=distance_histogram(d),
            positives=int(positives),
            negatives=len(records) - int(positives),
            categories=dict(sorted(Counter(r.vehicle_category for r in records).items())),
        ))
    return summaries


def balanced_subset(pass_log: Sequence[PassLogRecord], cfg: CriteriaConfig = CriteriaConfig(),
                    seed: int = 0) -> List[PassLogRecord]:
    """All illegal passes plus an equally sized seeded sample of legal ones, in input order"""
    labels = [label_pass_event(r.lateral_distance_m, r.zone, cfg) for r in pass_log]
    negatives = [i for i, positive in enumerate(labels) if not positive]
    n_pos = len(labels) - len(negatives)
    gen = SeededRNG(seed, 'balance').generator
    take = min(n_pos, len(negatives))
    chosen = set(gen.choice(negatives, size=take, replace=False).tolist()) if take else set()
    return [r for i, r in enumerate(pass_log) if labels[i] or i in chosen]


@dataclass(frozen=True)
class CategorySummary:
    category: str
    count: int
    mean_d_f: float
    mean_abs_d_r: float
    min_distance: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            'category': self.category,
            'count': self.count,
            'mean_d_f': self.mean_d_f,
            'mean_abs_d_r': self.mean_abs_d_r,
            'min_distance': self.min_distance,
        }


def detection_stats(logs: Mapping[str, FrameLog]) -> List[CategorySummary]:
    """Per-category counts and camera distances of detected objects"""
    by_category: Dict[str, List[Tuple[float, float]]] = {}
    for frames in logs.values():
        for frame in frames:
            for obj in frame.objects:
                by_category.setdefault(obj.category.value, []).append((obj.d_f, obj.d_r))
    summaries = []
    for category in sorted(by_category):
        arr = np.array(by_category[category], dtype=float)
        summaries.append(CategorySummary(
            category=category,
            count=len(arr),
            mean_d_f=float(arr[:, 0].mean()),
            mean_abs_d_r=float(np.abs(arr[:, 1]).mean()),
            min_distance=float(np.hypot(arr[:, 0], arr[:, 1]).min()),
        ))
    return summaries


# --- text rendering ------------------------------------------------------------

def format_table(headers: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    """Aligned-column text table"""
    def cell(value: Any) -> str:
        if isinstance(value, float):
            return f"{value:.4f}"
        if value is None:
            return '-'
        return str(value)

    text_rows = [[cell(v) for v in row] for row in rows]
    widths = [len(h) for h in headers]
    for row in text_rows:
        widths = [max(w, len(c)) for w, c in zip(widths, row)]
    lines = ['  '.join(h.ljust(w) for h, w in zip(headers, widths)).rstrip(),
             '  '.join('-' * w for w in widths)]
    lines += ['  '.join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(row, widths))).rstrip()
              for row in text_rows]
    return '\n'.join(lines)


def format_runs(runs: Sequence[RunEvaluation]) -> str:
    metric_rows = []
    for run in runs:
        for level, report in (('scene', run.scene), ('instance', run.instance)):
            cm = report.confusion
            metric_rows.append([run.name, level, report.accuracy, report.precision, report.recall,
                                report.f1, report.auc, cm.tp, cm.fp, cm.tn, cm.fn])
    metrics = format_table(['run', 'level', 'accuracy', 'precision', 'recall', 'f1', 'auc',
                            'tp', 'fp', 'tn', 'fn'], metric_rows)
    error_rows = [[kind.value] + [run.instance.error_breakdown.get(kind, 0) for run in runs] for kind in Outcome]
    error_rows.append(['total'] + [sum(run.instance.error_breakdown.values()) for run in runs])
    errors = format_table(['outcome'] + [run.name for run in runs], error_rows)
    return metrics + '\n\n' + errors


def format_zone_summaries(summaries: Sequence[ZoneSummary]) -> str:
    rows = [[s.zone.label, s.count, s.mean, s.std, s.median, s.q1, s.q3, s.positives, s.negatives]
            for s in summaries]
    return format_table(['zone_kmh', 'count', 'mean_m', 'std_m', 'median_m', 'q1_m', 'q3_m',
                         'positive', 'negative'], rows)


def format_histogram(summary: ZoneSummary, width: int = 40) -> str:
    """Text bar chart of a zone's passing-distance histogram"""
    peak = max(summary.histogram) if summary.histogram else 0
    lines = [f"zone {summary.zone.label} km/h (n={summary.count})"]
    last = max((i for i, c in enumerate(summary.histogram) if c), default=-1)
    for i in range(last + 1):
        count = summary.histogram[i]
        bar = '#' * (round(width * count / peak) if peak else 0)
        lo = i * HISTOGRAM_BIN_M
        lines.append(f"  {lo:4.1f}-{lo + HISTOGRAM_BIN_M:4.1f} m {count:6d} {bar}")
    return '\n'.join(lines)


def format_category_summaries(summaries: Sequence[CategorySummary]) -> str:
    rows = [[s.category, s.count, s.mean_d_f, s.mean_abs_d_r, s.min_distance] for s in summaries]
    return format_table(['category', 'count', 'mean_d_f_m', 'mean_abs_d_r_m', 'min_dist_m'], rows)