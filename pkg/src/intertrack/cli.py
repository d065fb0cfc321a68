"""Command-line interface.

Subcommands:
    track    detection file(s) -> trajectory file(s) via the full pipeline
    refine   existing tracker output -> recombined and optionally
             interpolated/smoothed output
    eval     ground truth + prediction -> CLEAR and identity metrics
    synth    scenario description (JSON) -> ground-truth and detection files

Configuration precedence, lowest to highest: built-in defaults, a key=value
config file (--config), the INTERTRACK_SEED / INTERTRACK_WORKERS environment
variables, explicit flags.  When the input path is a directory every *.txt
inside is treated as one sequence and sequences are processed in parallel
worker processes; results are written by the parent so output stays
deterministic.

Exit codes: 0 success, 1 runtime failure (I/O, malformed data), 2 bad usage
or configuration.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from . import hierarchy, metrics, mot_io, synth
from .model import (
    ConfigError,
    HierarchySchedule,
    Strategy,
    TrackerConfig,
    validate_config,
)
from .refine import (
    Trajectory,
    gaussian_smooth,
    interpolate,
    split_at_discontinuities,
)

log = logging.getLogger(__name__)

ENV_SEED = "INTERTRACK_SEED"
ENV_WORKERS = "INTERTRACK_WORKERS"

_BOOLS = {"true": True, "yes": True, "on": True, "1": True,
          "false": False, "no": False, "off": False, "0": False}


# ---------------------------------------------------------------------------
# Configuration assembly
# ---------------------------------------------------------------------------


def _parse_bool(raw: str, key: str) -> bool:
    try:
        return _BOOLS[raw.strip().lower()]
    except KeyError:
        raise ConfigError([f"{key}: expected a boolean, got {raw!r}"]) from None


def _parse_bounds(raw: str, key: str) -> tuple[int, ...]:
    try:
        return tuple(int(tok) for tok in raw.replace(" ", "").split(",") if tok)
    except ValueError:
        raise ConfigError([f"{key}: expected comma-separated integers, got {raw!r}"]) from None


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(TrackerConfig)}
# The schedule is configured through three scalar keys instead of the field.
_SCHEDULE_KEYS = ("strategy", "stage_bounds", "final_overlap")


def read_config_file(path: Path) -> dict:
    """Parse `key = value` lines (# comments allowed) into override values.

    Keys are TrackerConfig field names plus strategy / stage_bounds /
    final_overlap for the hierarchy schedule.
    """
    overrides: dict = {}
    problems = []
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"{path}:{lineno}: expected key = value, got {line!r}")
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        if key == "strategy":
            if value not in ("interval", "window"):
                problems.append(f"{path}:{lineno}: strategy must be interval or window")
            else:
                overrides["strategy"] = Strategy(value)
        elif key == "stage_bounds":
            overrides["stage_bounds"] = _parse_bounds(value, key)
        elif key == "final_overlap":
            overrides["final_overlap"] = int(value)
        elif key in _FIELD_TYPES and key != "schedule":
            kind = _FIELD_TYPES[key]
            if kind == "bool":
                overrides[key] = _parse_bool(value, key)
            elif kind == "int":
                overrides[key] = int(value)
            else:
                overrides[key] = float(value)
        else:
            problems.append(f"{path}:{lineno}: unknown config key {key!r}")
    if problems:
        raise ConfigError(problems)
    return overrides


def _schedule_from(overrides: dict) -> Optional[HierarchySchedule]:
    strategy = overrides.get("strategy")
    bounds = overrides.get("stage_bounds")
    final_overlap = overrides.get("final_overlap")
    if strategy is None and bounds is None and final_overlap is None:
        return None
    strategy = strategy or Strategy.INTERVAL
    if bounds is None:
        if strategy is Strategy.WINDOW:
            return HierarchySchedule.default_window()
        if final_overlap is None:
            return HierarchySchedule.default_interval()
        bounds = tuple(s.bound for s in HierarchySchedule.default_interval().stages[:-1])
    overlap = final_overlap
    if overlap is None:
        overlap = 5 if strategy is Strategy.INTERVAL else 0
    return HierarchySchedule.from_bounds(bounds, overlap, strategy)


def build_config(args: argparse.Namespace) -> TrackerConfig:
    """Merge defaults, config file, environment, and flags into a config."""
    overrides: dict = {}
    if getattr(args, "config", None):
        overrides.update(read_config_file(args.config))
    env_seed = os.environ.get(ENV_SEED)
    if env_seed is not None:
        try:
            overrides["rng_seed"] = int(env_seed)
        except ValueError:
            raise ConfigError([f"{ENV_SEED} must be an integer, got {env_seed!r}"])
    flag_map = [
        ("match_threshold", "match_threshold"),
        ("score_high", "score_high"),
        ("score_low", "score_low"),
        ("cc_threshold", "cc_threshold"),
        ("ci_width_threshold", "ci_width_threshold"),
        ("ci_scaling_factor", "ci_scaling_factor"),
        ("interp_max_gap", "interpolation_max_gap"),
        ("smoothing_sigma", "smoothing_sigma"),
        ("seed", "rng_seed"),
    ]
    for attr, field_name in flag_map:
        value = getattr(args, attr, None)
        if value is not None:
            overrides[field_name] = value
    if getattr(args, "use_hm_iou", None):
        overrides["use_hm_iou"] = True
    for flag, field_name in [("no_ci", "enable_ci"), ("no_cc", "enable_cc"),
                             ("no_cm", "enable_cm")]:
        if getattr(args, flag, None):
            overrides[field_name] = False
    if getattr(args, "strategy", None):
        overrides["strategy"] = Strategy(args.strategy)
    if getattr(args, "stage_bounds", None):
        overrides["stage_bounds"] = _parse_bounds(args.stage_bounds, "--stage-bounds")
    if getattr(args, "final_overlap", None) is not None:
        overrides["final_overlap"] = args.final_overlap
    schedule = _schedule_from(overrides)
    field_values = {k: v for k, v in overrides.items() if k not in _SCHEDULE_KEYS}
    if schedule is not None:
        field_values["schedule"] = schedule
    cfg = dataclasses.replace(TrackerConfig(), **field_values)
    return validate_config(cfg)


def _resolve_workers(args: argparse.Namespace) -> int:
    if getattr(args, "workers", None) is not None:
        value = args.workers
    else:
        raw = os.environ.get(ENV_WORKERS)
        if raw is None:
            return 1
        try:
            value = int(raw)
        except ValueError:
            raise ConfigError([f"{ENV_WORKERS} must be an integer, got {raw!r}"])
    if value < 1:
        raise ConfigError([f"worker count must be >= 1, got {value}"])
    return value


# ---------------------------------------------------------------------------
# I/O helpers
# ---------------------------------------------------------------------------


def _class_filter(args) -> Optional[tuple[str, ...]]:
    raw = getattr(args, "class_filter", None)
    if not raw:
        return None
    return tuple(tok for tok in raw.split(",") if tok)


def read_detections(path: Path, fmt: str,
                    class_filter: Optional[Sequence[str]] = None):
    if fmt == "kitti":
        return [det for _, det in mot_io.read_kitti_tracking(path, class_filter)]
    return mot_io.read_mot_detections(path)


def read_tracks(path: Path, fmt: str,
                class_filter: Optional[Sequence[str]] = None) -> list[Trajectory]:
    if fmt == "mot":
        return mot_io.read_mot_tracks(path)
    grouped: dict[int, list] = {}
    for tid, det in mot_io.read_kitti_tracking(path, class_filter):
        grouped.setdefault(tid, []).append(det)
    tracks = []
    for tid in sorted(grouped):
        entries = sorted(grouped[tid], key=lambda d: d.frame)
        frames = [d.frame for d in entries]
        if len(set(frames)) != len(frames):
            raise ValueError(f"{path}: track {tid} repeats a frame")
        tracks.append(Trajectory(track_id=tid, entries=tuple(entries)))
    return tracks


def write_tracks(trajectories, path: Path, fmt: str) -> None:
    if fmt == "kitti":
        mot_io.write_kitti_tracking(trajectories, path)
    else:
        mot_io.write_mot_results(trajectories, path)


def _sequence_jobs(in_path: Path, out_path: Optional[Path]) -> list[tuple[str, Path, Optional[Path]]]:
    """Expand (input, output) paths into per-sequence jobs.

    A directory input maps every contained *.txt to a same-named file in the
    output directory; a file input is a single job.
    """
    if in_path.is_dir():
        files = sorted(p for p in in_path.iterdir()
                       if p.is_file() and p.suffix == ".txt")
        if not files:
            raise FileNotFoundError(f"no *.txt sequence files in {in_path}")
        jobs = []
        for f in files:
            out = None
            if out_path is not None:
                out_path.mkdir(parents=True, exist_ok=True)
                out = out_path / f.name
            jobs.append((f.stem, f, out))
        return jobs
    if not in_path.exists():
        raise FileNotFoundError(f"no such file: {in_path}")
    return [(in_path.stem, in_path, out_path)]


def _postprocess(trajectories, cfg: TrackerConfig, interp: bool, smooth: bool):
    out = []
    for traj in trajectories:
        if interp:
            traj = interpolate(traj, cfg.interpolation_max_gap)
        if smooth:
            traj = gaussian_smooth(traj, cfg.smoothing_sigma)
        out.append(traj)
    return out


def _camera_text(profile) -> str:
    if profile is None:
        return "off"
    kind = "moving" if profile.moving else "static"
    return f"{kind} (mean adjacent IoU {profile.mean_match_iou:.3f})"


def _summary_lines(name: str, result: hierarchy.RunResult, n_input: int) -> list[str]:
    lines = [f"{name}: {len(result.trajectories)} trajectories"
             f" from {n_input} detections"]
    for cls in result.per_class:
        chain = " -> ".join(str(c) for c in cls.counts)
        lines.append(f"  class {cls.class_id}: levels {chain}"
                     f"; camera {_camera_text(cls.camera)}")
    return lines


def _dump_payload(result: hierarchy.RunResult) -> dict:
    classes = {}
    for cls in result.per_class:
        camera = None
        if cls.camera is not None:
            camera = {"moving": cls.camera.moving,
                      "mean_match_iou": cls.camera.mean_match_iou}
        classes[str(cls.class_id)] = {
            "counts": list(cls.counts),
            "camera": camera,
            "levels": [{"label": lv.label, "count": lv.tracklet_count,
                        "tracklets": [[list(pair) for pair in member]
                                      for member in lv.members]}
                       for lv in cls.levels],
        }
    return {"classes": classes}


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _track_job(job) -> tuple[str, list[Trajectory], list[str], dict, int]:
    name, src, cfg, fmt, class_filter, interp, smooth = job
    dets = read_detections(src, fmt, class_filter)
    result = hierarchy.run_detailed(dets, cfg)
    trajs = _postprocess(result.trajectories, cfg, interp, smooth)
    return (name, trajs, _summary_lines(name, result, len(dets)),
            _dump_payload(result), len(dets))


def _refine_job(job) -> tuple[str, list[Trajectory], list[str], dict, int]:
    name, src, cfg, fmt, class_filter, interp, smooth = job
    tracks = read_tracks(src, fmt, class_filter)
    tracklets = split_at_discontinuities(tracks) if tracks else []
    result = hierarchy.associate_tracklets(tracklets, cfg)
    trajs = _postprocess(result.trajectories, cfg, interp, smooth)
    n_input = sum(len(t.entries) for t in tracks)
    return (name, trajs, _summary_lines(name, result, n_input),
            _dump_payload(result), n_input)


def _run_jobs(worker, jobs, workers: int):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(worker, jobs))
    return [worker(job) for job in jobs]


def _run_pipeline(args, worker, in_path: Path, out_path: Path) -> int:
    cfg = build_config(args)
    workers = _resolve_workers(args)
    class_filter = _class_filter(args)
    jobs = []
    for name, src, dst in _sequence_jobs(in_path, out_path):
        jobs.append(((name, src, cfg, args.format, class_filter,
                      args.interp, args.smooth), dst))
    results = _run_jobs(worker, [job for job, _ in jobs], workers)
    dump: dict = {}
    for (job, dst), (name, trajs, summary, payload, _) in zip(jobs, results):
        if dst is not None:
            write_tracks(trajs, dst, args.format)
        for line in summary:
            print(line)
        dump[name] = payload
    if getattr(args, "dump_hierarchy", None):
        args.dump_hierarchy.parent.mkdir(parents=True, exist_ok=True)
        args.dump_hierarchy.write_text(
            json.dumps(dump, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return 0


def cmd_track(args: argparse.Namespace) -> int:
    return _run_pipeline(args, _track_job, args.det, args.out)


def cmd_refine(args: argparse.Namespace) -> int:
    return _run_pipeline(args, _refine_job, args.in_path, args.out)


def cmd_eval(args: argparse.Namespace) -> int:
    class_filter = _class_filter(args)
    gt_jobs = _sequence_jobs(args.gt, None)
    pred_jobs = _sequence_jobs(args.pred, None)
    if args.gt.is_dir() != args.pred.is_dir():
        raise ValueError("--gt and --pred must both be files or both directories")
    if args.gt.is_dir():
        gt_by_name = {name: path for name, path, _ in gt_jobs}
        pred_by_name = {name: path for name, path, _ in pred_jobs}
        names = sorted(set(gt_by_name) & set(pred_by_name))
        if not names:
            raise ValueError("no sequence names shared between --gt and --pred")
        pairs = {name: (read_tracks(gt_by_name[name], args.format, class_filter),
                        read_tracks(pred_by_name[name], args.format, class_filter))
                 for name in names}
        report = metrics.evaluate_sequences(pairs, args.iou_threshold)
    else:
        report = metrics.evaluate(
            read_tracks(args.gt, args.format, class_filter),
            read_tracks(args.pred, args.format, class_filter),
            args.iou_threshold)
    if args.kv:
        for line in metrics.report_kv_lines(report):
            print(line)
    else:
        print(metrics.format_report(report))
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    spec = synth.spec_from_json(args.spec)
    seed = args.seed
    if seed is None:
        env_seed = os.environ.get(ENV_SEED)
        if env_seed is not None:
            try:
                seed = int(env_seed)
            except ValueError:
                raise ConfigError([f"{ENV_SEED} must be an integer, got {env_seed!r}"])
    if seed is not None:
        spec = dataclasses.replace(spec, seed=seed)
    gt_path, det_path = synth.write_scenario(spec, args.out_dir)
    print(f"wrote {gt_path}")
    print(f"wrote {det_path}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    grp = p.add_argument_group("tracker configuration")
    grp.add_argument("--config", type=Path, metavar="FILE",
                     help="key = value config file (TrackerConfig fields)")
    grp.add_argument("--strategy", choices=["interval", "window"],
                     help="hierarchy scheduling strategy")
    grp.add_argument("--stage-bounds", dest="stage_bounds", metavar="N,N,...",
                     help="per-level gap bounds (interval) or window sizes")
    grp.add_argument("--final-overlap", dest="final_overlap", type=int,
                     help="overlap frames admitted by an extra final level")
    grp.add_argument("--match-threshold", dest="match_threshold", type=float)
    grp.add_argument("--score-high", dest="score_high", type=float)
    grp.add_argument("--score-low", dest="score_low", type=float)
    grp.add_argument("--cc-threshold", dest="cc_threshold", type=float)
    grp.add_argument("--ci-width-threshold", dest="ci_width_threshold", type=float)
    grp.add_argument("--ci-scaling-factor", dest="ci_scaling_factor", type=float)
    grp.add_argument("--use-hm-iou", dest="use_hm_iou", action="store_true",
                     default=None, help="multiply in the vertical-interval IoU")
    grp.add_argument("--no-ci", dest="no_ci", action="store_true", default=None,
                     help="disable small-box expansion")
    grp.add_argument("--no-cc", dest="no_cc", action="store_true", default=None,
                     help="disable camera-movement compensation")
    grp.add_argument("--no-cm", dest="no_cm", action="store_true", default=None,
                     help="disable the motion-consistent second pass")
    grp.add_argument("--interp-max-gap", dest="interp_max_gap", type=int)
    grp.add_argument("--smoothing-sigma", dest="smoothing_sigma", type=float)
    grp.add_argument("--seed", type=int, help=f"overrides ${ENV_SEED}")
    grp.add_argument("--workers", type=int,
                     help=f"parallel sequence workers; overrides ${ENV_WORKERS}")


def _add_io_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=["mot", "kitti"], default="mot")
    p.add_argument("--class-filter", dest="class_filter", metavar="NAME,...",
                   help="keep only these class names (kitti input)")
    p.add_argument("--interp", action="store_true",
                   help="fill trajectory gaps by linear interpolation")
    p.add_argument("--smooth", action="store_true",
                   help="smooth box centers and sizes with a Gaussian kernel")
    p.add_argument("--dump-hierarchy", dest="dump_hierarchy", type=Path,
                   metavar="FILE", help="write per-level tracklet snapshots (JSON)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="intertrack",
        description="Hierarchical multi-object tracking over detection files.")
    parser.add_argument("--verbose", action="store_true",
                        help="log progress at INFO level")
    sub = parser.add_subparsers(dest="command", required=True)

    p_track = sub.add_parser("track", help="associate detections into trajectories")
    p_track.add_argument("--det", type=Path, required=True,
                         help="detection file or directory of sequences")
    p_track.add_argument("--out", type=Path, required=True,
                         help="output file or directory")
    _add_io_flags(p_track)
    _add_config_flags(p_track)
    p_track.set_defaults(func=cmd_track)

    p_refine = sub.add_parser("refine",
                              help="recombine and polish existing tracker output")
    p_refine.add_argument("--in", dest="in_path", type=Path, required=True,
                          help="tracker result file or directory")
    p_refine.add_argument("--out", type=Path, required=True)
    _add_io_flags(p_refine)
    _add_config_flags(p_refine)
    p_refine.set_defaults(func=cmd_refine)

    p_eval = sub.add_parser("eval", help="score predictions against ground truth")
    p_eval.add_argument("--gt", type=Path, required=True)
    p_eval.add_argument("--pred", type=Path, required=True)
    p_eval.add_argument("--format", choices=["mot", "kitti"], default="mot")
    p_eval.add_argument("--class-filter", dest="class_filter", metavar="NAME,...")
    p_eval.add_argument("--iou-threshold", dest="iou_threshold", type=float,
                        default=0.5)
    p_eval.add_argument("--kv", action="store_true",
                        help="print machine-readable key=value lines")
    p_eval.set_defaults(func=cmd_eval)

    p_synth = sub.add_parser("synth", help="generate a synthetic scenario")
    p_synth.add_argument("--spec", type=Path, required=True,
                         help="scenario description (JSON)")
    p_synth.add_argument("--out-dir", dest="out_dir", type=Path, required=True)
    p_synth.add_argument("--seed", type=int, help=f"overrides ${ENV_SEED}")
    p_synth.set_defaults(func=cmd_synth)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
