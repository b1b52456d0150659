#!/usr/bin/env python3
"""
cpkit command line
Subcommands: simulate | detect | evaluate | stats
"""
import argparse
import logging
import os
import sys
from typing import Any, Dict, List, Optional, Sequence

from . import __version__
from .config import (
    DEFAULT_CRITERIA_CONFIG,
    DEFAULT_SCENARIO_CONFIG,
    LOG_LEVEL_ENV,
    RunConfig,
    criteria_config_from_dict,
    load_config,
    save_config,
    scenario_config_from_dict,
    thread_count,
)
from .criteria import CriteriaConfig, SpeedZone, classify_detection
from .errors import AlignmentError, ConfigError, CpkitError, SchemaError
from .evaluation import (
    TimeWindow,
    balanced_subset,
    dataset_stats,
    detection_stats,
    evaluate_run,
    format_category_summaries,
    format_histogram,
    format_runs,
    format_zone_summaries,
)
from .ingest import (
    VerdictRecord,
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
from .simulator import generate_batch

logger = logging.getLogger('cpkit')

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_SCHEMA = 3
EXIT_IO = 4

LOG_LEVELS = ('DEBUG', 'INFO', 'WARNING', 'ERROR')


def _add_criteria_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group('criteria')
    group.add_argument('--criteria-config', metavar='PATH',
                       help=f"criteria JSON config (default: {DEFAULT_CRITERIA_CONFIG} if present)")
    group.add_argument('--d-ch', type=float, help='camera-to-handlebar offset in meters (default 0.5)')
    group.add_argument('--l-b', type=float, help='bicycle length in meters (default 1.8)')
    group.add_argument('--traffic-side', choices=['left_hand', 'right_hand'],
                       help='side motor traffic keeps to (default left_hand)')
    group.add_argument('--clearance-low', type=float, help='required clearance at or below the zone boundary (1.0)')
    group.add_argument('--clearance-high', type=float, help='required clearance above the zone boundary (1.5)')
    group.add_argument('--zone-boundary', type=float, help='speed-zone boundary in km/h (60)')


def resolve_criteria(args: argparse.Namespace) -> CriteriaConfig:
    """Criteria config from file, then flags on top"""
    data: Dict[str, Any] = {}
    if args.criteria_config:
        data.update(load_config(args.criteria_config))
    elif os.path.exists(DEFAULT_CRITERIA_CONFIG):
        data.update(load_config(DEFAULT_CRITERIA_CONFIG))
    overrides = {
        'd_ch': args.d_ch,
        'l_b': args.l_b,
        'traffic_side': args.traffic_side,
        'clearance_low_m': args.clearance_low,
        'clearance_high_m': args.clearance_high,
        'zone_boundary_kmh': args.zone_boundary,
    }
    data.update({k: v for k, v in overrides.items() if v is not None})
    return criteria_config_from_dict(data)


def write_manifest(path: str, run: RunConfig) -> None:
    save_config(run.to_dict(__version__), path)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='cpkit',
        description='Close-pass detection toolkit: simulate overtakes, apply the criteria, evaluate detectors.',
        allow_abbrev=False,
    )
    parser.add_argument('--version', action='version', version=f"cpkit {__version__}")
    parser.add_argument('--log-level', default=os.environ.get(LOG_LEVEL_ENV, 'INFO').upper(), type=str.upper,
                        choices=LOG_LEVELS,
                        help=f"stderr log level (default from {LOG_LEVEL_ENV} or INFO)")
    sub = parser.add_subparsers(dest='command', required=True, metavar='COMMAND')

    sim = sub.add_parser('simulate', help='generate overtaking scenarios and ground truth',
                         allow_abbrev=False)
    sim.add_argument('config_path', nargs='?', default=DEFAULT_SCENARIO_CONFIG,
                     help='scenario JSON config (default: config/scenario_config.json)')
    sim.add_argument('out_dir', help='output directory')
    sim.add_argument('--seed', type=int, help='base seed; scenario i uses seed + i (default: config seed)')
    sim.add_argument('--count', type=int, default=1, help='number of scenarios (default 1)')
    sim.add_argument('--threads', type=int, help='worker threads, capped by CPKIT_THREADS')
    sim.add_argument('--noise', action='store_true', help='also write detections.cplog with the config noise model')
    sim.add_argument('--truncate-fov', action='store_true',
                     help='also write detections.cplog keeping only objects inside the camera view')
    sim.add_argument('--no-progress', action='store_true', help='hide the progress bar')
    _add_criteria_flags(sim)

    det = sub.add_parser('detect', help='apply the close-pass criteria to a detection log', allow_abbrev=False)
    det.add_argument('detections_path', help='detection log (.cplog)')
    det.add_argument('--zone-map', metavar='PATH', help='JSON map of clip id to speed limit in km/h')
    det.add_argument('-o', '--out', default='verdicts.cplog', help='verdict log to write (default verdicts.cplog)')
    _add_criteria_flags(det)

    ev = sub.add_parser('evaluate', help='score verdict logs against ground-truth events', allow_abbrev=False)
    ev.add_argument('verdicts_paths', nargs='+', metavar='VERDICTS', help='one or more verdict logs')
    ev.add_argument('--events', required=True, metavar='PATH', help='ground-truth events.csv')
    ev.add_argument('--window-pre', type=float, default=0.4, help='seconds before t_c a detection may match (0.4)')
    ev.add_argument('--window-post', type=float, default=1.2, help='seconds after t_c a detection may match (1.2)')
    ev.add_argument('-o', '--out', metavar='PATH', help='also write the report as JSON Lines')

    st = sub.add_parser('stats', help='summarize a pass log per speed zone', allow_abbrev=False)
    st.add_argument('pass_log_path', help='pass log CSV (events.csv is accepted too)')
    st.add_argument('--balance', type=int, metavar='SEED',
                    help='keep all illegal passes and an equal seeded sample of legal ones')
    st.add_argument('--detections', metavar='PATH', help='also summarize a detection log per category')
    st.add_argument('--no-histogram', action='store_true', help='skip the per-zone histograms')
    st.add_argument('-o', '--out', metavar='PATH', help='also write the summaries as JSON')
    _add_criteria_flags(st)
    return parser


def cmd_simulate(args: argparse.Namespace) -> int:
    data = load_config(args.config_path)
    if args.seed is not None:
        data['seed'] = args.seed
    cfg = scenario_config_from_dict(data)
    if args.count < 0:
        raise ConfigError(f"--count must be non-negative, got {args.count}", key='count')
    criteria = resolve_criteria(args)
    threads = thread_count(args.threads)

    results = generate_batch(cfg, criteria, args.count, threads=threads, add_noise=args.noise,
                             truncate=args.truncate_fov, progress=not args.no_progress)

    os.makedirs(args.out_dir, exist_ok=True)
    frames_path = os.path.join(args.out_dir, 'frames.cplog')
    events_path = os.path.join(args.out_dir, 'events.csv')
    zones_path = os.path.join(args.out_dir, 'zones.json')
    outputs = {'frames': frames_path, 'events': events_path, 'zones': zones_path}

    write_detections({r.clip_id: r.frames for r in results}, frames_path)
    n_events = write_events([e for r in results for e in r.events], events_path)
    write_zone_map({r.clip_id: r.scenario.zone for r in results}, zones_path)
    if args.noise or args.truncate_fov:
        outputs['detections'] = os.path.join(args.out_dir, 'detections.cplog')
        write_detections({r.clip_id: r.detections for r in results}, outputs['detections'])

    write_manifest(os.path.join(args.out_dir, 'manifest.json'), RunConfig(
        command='simulate',
        inputs={'config': os.path.basename(args.config_path)},
        outputs={k: os.path.basename(v) for k, v in outputs.items()},
        parameters={
            'seed': cfg.seed,
            'count': args.count,
            'noise': args.noise,
            'truncate_fov': args.truncate_fov,
            'scenario': cfg.to_dict(),
            'criteria': criteria.to_dict(),
        },
    ))
    n_cp = sum(e.is_cp for r in results for e in r.events)
    print(f"{args.count} scenarios, {n_events} passing events ({n_cp} close passes) written to {args.out_dir}")
    return EXIT_OK


def cmd_detect(args: argparse.Namespace) -> int:
    criteria = resolve_criteria(args)
    logs = read_detections(args.detections_path)
    zones = read_zone_map(args.zone_map) if args.zone_map else {}

    streams: Dict[str, List[VerdictRecord]] = {}
    for clip_id, frames in logs.items():
        zone = zones.get(clip_id)
        if zone is None:
            logger.warning(f"No speed zone for clip {clip_id}; using the above-"
                           f"{criteria.zone_boundary_kmh:g} km/h threshold")
            zone = SpeedZone.unknown()
        streams[clip_id] = [
            VerdictRecord(
                clip_id=clip_id,
                frame=frame.index,
                t=obj.t,
                object_id=obj.object_id,
                category=obj.category,
                verdict=classify_detection(obj, zone, criteria),
            )
            for frame in frames
            for obj in frame.objects
        ]
    n = write_verdicts(streams, args.out)
    write_manifest(args.out + '.manifest.json', RunConfig(
        command='detect',
        inputs={'detections': args.detections_path, 'zone_map': args.zone_map},
        outputs={'verdicts': args.out},
        parameters={'criteria': criteria.to_dict()},
    ))
    n_cp = sum(r.is_cp for s in streams.values() for r in s)
    n_clips = sum(any(r.is_cp for r in s) for s in streams.values())
    print(f"{n} verdicts over {len(streams)} clips: {n_cp} close-pass detections in {n_clips} clips")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    window = TimeWindow(pre=args.window_pre, post=args.window_post)
    events = read_events(args.events)
    runs = []
    for path in args.verdicts_paths:
        name = os.path.splitext(os.path.basename(path))[0]
        runs.append(evaluate_run(read_verdicts(path), events, window, name=name))

    print(format_runs(runs))
    if args.out:
        rows = [{**run.to_dict(), 'window': {'pre': window.pre, 'post': window.post}} for run in runs]
        write_report(rows, args.out)
        write_manifest(args.out + '.manifest.json', RunConfig(
            command='evaluate',
            inputs={'verdicts': list(args.verdicts_paths), 'events': args.events},
            outputs={'report': args.out},
            parameters={'window_pre': window.pre, 'window_post': window.post},
        ))
    return EXIT_OK


def cmd_stats(args: argparse.Namespace) -> int:
    criteria = resolve_criteria(args)
    records = read_pass_log(args.pass_log_path)
    if args.balance is not None:
        records = balanced_subset(records, criteria, seed=args.balance)
        logger.info(f"Balanced subset keeps {len(records)} records")
    summaries = dataset_stats(records, criteria)

    print(format_zone_summaries(summaries))
    if not args.no_histogram:
        for summary in summaries:
            print()
            print(format_histogram(summary))
    output: Dict[str, Any] = {'zones': [s.to_dict() for s in summaries]}
    if args.detections:
        categories = detection_stats(read_detections(args.detections))
        print()
        print(format_category_summaries(categories))
        output['categories'] = [c.to_dict() for c in categories]
    if args.out:
        save_config(output, args.out)
    return EXIT_OK


COMMANDS = {
    'simulate': cmd_simulate,
    'detect': cmd_detect,
    'evaluate': cmd_evaluate,
    'stats': cmd_stats,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.log_level not in LOG_LEVELS:
        parser.error(f"{LOG_LEVEL_ENV} must be one of {', '.join(LOG_LEVELS)}, got {args.log_level!r}")
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
        stream=sys.stderr,
    )
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except (SchemaError, AlignmentError) as e:
        if isinstance(e, SchemaError):
            for error in e.errors:
                logger.error(str(error))
        else:
            logger.error(str(e))
        return EXIT_SCHEMA
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return EXIT_IO
    except CpkitError as e:
        logger.error(str(e))
        return EXIT_ERROR


if __name__ == '__main__':
    sys.exit(main())
