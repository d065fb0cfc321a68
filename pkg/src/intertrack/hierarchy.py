"""The hierarchical association engine.

Detections become singleton tracklets which are merged level by level, each
level admitting pairs separated by a larger temporal gap (1, 5, 10, ...
frames by default; the final level also tolerates a few overlapping frames
so doubly-tracked segments can be joined).  The first level is special: it
runs frame-by-frame, can exploit per-detection motion histories from a
preliminary static pass (the two-pass scheme that untangles crossing
targets), absorbs low-confidence detections into tracklet endpoints, and
feeds the detection-only camera-movement estimate that stabilizes all later
levels.  A window-scheduled variant (non-overlapping temporal windows per
level) is included as the ablation baseline.

Every pass is deterministic: tracklets are kept in (t_min, t_max, id) order,
ids are never reused, and matching ties are broken toward low indices.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import camera as camera_mod
from .assignment import solve
from .geometry import SimilarityKernel, stack_boxes
from .model import (
    Detection,
    Strategy,
    Tracklet,
    TrackerConfig,
    validate_config,
)
from .motion import Direction, FitCache, chain_predictors, pair_similarity
from .refine import Provenance, Trajectory, from_tracklet, resolve_overlap

log = logging.getLogger(__name__)

Similarity = Callable[[Tracklet, Tracklet], float]


# ---------------------------------------------------------------------------
# State and trace types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HierarchyState:
    """Tracklet population between levels, with the count history N_1..N_l."""
    level: int
    tracklets: tuple[Tracklet, ...]
    counts: tuple[int, ...]
    next_tid: int

    @staticmethod
    def initial(tracklets: Sequence[Tracklet], next_tid: int) -> "HierarchyState":
        ordered = _ordered(tracklets)
        return HierarchyState(level=1, tracklets=tuple(ordered),
                              counts=(len(ordered),), next_tid=next_tid)

    def advanced(self, tracklets: Sequence[Tracklet], next_tid: int) -> "HierarchyState":
        return HierarchyState(level=self.level + 1,
                              tracklets=tuple(_ordered(tracklets)),
                              counts=self.counts + (len(tracklets),),
                              next_tid=next_tid)


@dataclass(frozen=True)
class LevelTrace:
    label: str
    tracklet_count: int
    members: tuple[tuple[tuple[int, int], ...], ...]  # per tracklet: (frame, det_id)


@dataclass(frozen=True)
class ClassRunResult:
    class_id: int
    tracklets: tuple[Tracklet, ...]
    counts: tuple[int, ...]
    levels: tuple[LevelTrace, ...]
    camera: Optional[camera_mod.CameraProfile]


@dataclass(frozen=True)
class RunResult:
    trajectories: list[Trajectory]
    per_class: tuple[ClassRunResult, ...]


def _ordered(tracklets: Iterable[Tracklet]) -> list[Tracklet]:
    return sorted(tracklets, key=lambda t: (t.t_min, t.t_max, t.tid))


def _snapshot(label: str, tracklets: Sequence[Tracklet]) -> LevelTrace:
    members = tuple(tuple((e.frame, e.det_id) for e in t.entries) for t in tracklets)
    return LevelTrace(label=label, tracklet_count=len(tracklets), members=members)


# ---------------------------------------------------------------------------
# Generic association machinery
# ---------------------------------------------------------------------------


def _matches_to_paths(matches: Sequence[tuple[int, int]]) -> list[list[int]]:
    """Chain up matching links (i earlier -> j later) into merge paths."""
    succ = dict(matches)
    has_pred = {j for _, j in matches}
    paths = []
    for start in sorted(succ):
        if start in has_pred:
            continue
        path = [start]
        node = start
        while node in succ:
            node = succ[node]
            path.append(node)
        paths.append(path)
    return paths


def _merge_round(tracklets: list[Tracklet], matches: Sequence[tuple[int, int]],
                 next_tid: int, max_overlap: int) -> tuple[list[Tracklet], int]:
    paths = _matches_to_paths(matches)
    consumed = {idx for path in paths for idx in path}
    merged = [t for k, t in enumerate(tracklets) if k not in consumed]
    for path in paths:
        acc = tracklets[path[0]]
        for idx in path[1:]:
            acc = resolve_overlap(acc, tracklets[idx], next_tid, max_overlap)
        merged.append(acc)
        next_tid += 1
    return _ordered(merged), next_tid


def _interval_admissible(dt_bound: int, overlap_allowance: int,
                         a: Tracklet, b: Tracklet) -> bool:
    if a.class_id != b.class_id:
        return False
    if (a.t_min, a.t_max, a.tid) >= (b.t_min, b.t_max, b.tid):
        return False
    gap = b.t_min - a.t_max
    if 0 < gap <= dt_bound:
        return True
    return overlap_allowance > 0 and -overlap_allowance <= gap <= 0


def hierarchy_pass(state: HierarchyState, dt_bound: int, overlap_allowance: int,
                   similarity: Similarity, gate: float) -> HierarchyState:
    """One interval-scheduled level: admit pairs with gap in (0, dt_bound]
    (plus a bounded overlap on the final level) and merge until fixpoint."""
    tracklets = list(state.tracklets)
    next_tid = state.next_tid
    while True:
        count = len(tracklets)
        scores = None
        pairs = []
        for i in range(count):
            for j in range(count):
                if i != j and _interval_admissible(dt_bound, overlap_allowance,
                                                   tracklets[i], tracklets[j]):
                    pairs.append((i, j))
        if pairs:
            scores = np.full((count, count), -np.inf)
            for i, j in pairs:
                scores[i, j] = similarity(tracklets[i], tracklets[j])
            matches = solve(scores, gate)
        else:
            matches = []
        if not matches:
            return state.advanced(tracklets, next_tid)
        tracklets, next_tid = _merge_round(tracklets, matches, next_tid,
                                           overlap_allowance)


def _window_groups(tracklets: Sequence[Tracklet], window_size: int) -> list[list[int]]:
    groups: dict[int, list[int]] = {}
    for k, t in enumerate(tracklets):
        w_lo = (t.t_min - 1) // window_size
        w_hi = (t.t_max - 1) // window_size
        if w_lo == w_hi:  # straddling tracklets sit this level out
            groups.setdefault(w_lo, []).append(k)
    return [groups[w] for w in sorted(groups)]


def window_strategy_pass(state: HierarchyState, window_size: int,
                         similarity: Similarity, gate: float) -> HierarchyState:
    """One window-scheduled level: tracklets may merge only when both lie
    entirely inside the same window of the given size."""
    tracklets = list(state.tracklets)
    next_tid = state.next_tid
    while True:
        all_matches: list[tuple[int, int]] = []
        for group in _window_groups(tracklets, window_size):
            if len(group) < 2:
                continue
            scores = np.full((len(group), len(group)), -np.inf)
            any_pair = False
            for a_pos, i in enumerate(group):
                for b_pos, j in enumerate(group):
                    if i != j and _interval_admissible(window_size, 0,
                                                       tracklets[i], tracklets[j]):
                        scores[a_pos, b_pos] = similarity(tracklets[i], tracklets[j])
                        any_pair = True
            if not any_pair:
                continue
            for a_pos, b_pos in solve(scores, gate):
                all_matches.append((group[a_pos], group[b_pos]))
        if not all_matches:
            return state.advanced(tracklets, next_tid)
        tracklets, next_tid = _merge_round(tracklets, all_matches, next_tid, 0)


# ---------------------------------------------------------------------------
# First level: frame-adjacent chaining, motion second pass, low-score rescue
# ---------------------------------------------------------------------------


def _by_frame(detections: Iterable[Detection]) -> dict[int, list[Detection]]:
    grouped: dict[int, list[Detection]] = {}
    for det in detections:
        grouped.setdefault(det.frame, []).append(det)
    for frame in grouped:
        grouped[frame].sort(key=lambda d: d.det_id)
    return grouped


def _links_to_chains(detections_in_order: Sequence[Detection],
                     link: dict[int, Detection],
                     has_pred: set[int]) -> list[list[Detection]]:
    chains = []
    for det in detections_in_order:
        if det.det_id in has_pred:
            continue
        chain = [det]
        while chain[-1].det_id in link:
            chain.append(link[chain[-1].det_id])
        chains.append(chain)
    return chains


def adjacent_pass(detections: Sequence[Detection], kernel: SimilarityKernel,
                  gate: float) -> list[list[Detection]]:
    """Static frame-to-next-frame chaining of detections.

    Matches each frame against the following one with the configured kernel
    and links the Hungarian matches into chains; every chain covers a run of
    consecutive frames.
    """
    grouped = _by_frame(detections)
    link: dict[int, Detection] = {}
    has_pred: set[int] = set()
    for t in sorted(grouped):
        rows = grouped.get(t)
        cols = grouped.get(t + 1)
        if not rows or not cols:
            continue
        scores = kernel.matrix(stack_boxes([d.box for d in rows]),
                               stack_boxes([d.box for d in cols]))
        for i, j in solve(scores, gate):
            link[rows[i].det_id] = cols[j]
            has_pred.add(cols[j].det_id)
    ordered = sorted(detections, key=lambda d: (d.frame, d.det_id))
    return _links_to_chains(ordered, link, has_pred)


def consistent_motion_pass(preliminary_chains: Sequence[Sequence[Detection]],
                           detections: Sequence[Detection], cfg: TrackerConfig,
                           kernel: SimilarityKernel) -> list[list[Detection]]:
    """Re-run the frame-adjacent association with motion-informed similarity.

    Each detection carries the Kalman state accumulated along its
    preliminary chain: candidates in the next frame are compared against the
    forward prediction of the earlier detection, and the earlier box against
    the backward prediction of the candidate, averaging the two kernel
    values.  Detections with single-entry histories predict their own box,
    which reduces to the static similarity.  Preliminary links are
    discarded; only the second-pass links survive.
    """
    fwd: dict[int, object] = {}
    bwd: dict[int, object] = {}
    for chain in preliminary_chains:
        for det, pred in zip(chain, chain_predictors(chain, cfg, Direction.FORWARD)):
            fwd[det.det_id] = pred
        for det, pred in zip(chain, chain_predictors(chain, cfg, Direction.BACKWARD)):
            bwd[det.det_id] = pred
    grouped = _by_frame(detections)
    link: dict[int, Detection] = {}
    has_pred: set[int] = set()
    for t in sorted(grouped):
        rows = grouped.get(t)
        cols = grouped.get(t + 1)
        if not rows or not cols:
            continue
        fwd_boxes = stack_boxes([fwd[d.det_id].at(t + 1) for d in rows])
        bwd_boxes = stack_boxes([bwd[d.det_id].at(t) for d in cols])
        row_boxes = stack_boxes([d.box for d in rows])
        col_boxes = stack_boxes([d.box for d in cols])
        scores = 0.5 * (kernel.matrix(fwd_boxes, col_boxes)
                        + kernel.matrix(row_boxes, bwd_boxes))
        for i, j in solve(scores, gate=cfg.match_threshold):
            link[rows[i].det_id] = cols[j]
            has_pred.add(cols[j].det_id)
    ordered = sorted(detections, key=lambda d: (d.frame, d.det_id))
    return _links_to_chains(ordered, link, has_pred)


def byte_recovery(state: HierarchyState, low_score_detections: Sequence[Detection],
                  kernel: SimilarityKernel, gate: float) -> HierarchyState:
    """Absorb low-confidence detections into temporally adjacent tracklet
    endpoints; leftovers are dropped and never start a trajectory."""
    if not low_score_detections:
        return state
    tracklets = list(state.tracklets)
    next_tid = state.next_tid
    low_by_frame = _by_frame(low_score_detections)
    for t in sorted(low_by_frame):
        lows = low_by_frame[t]
        candidates: list[tuple[int, Detection]] = []  # (tracklet index, endpoint)
        for k, trk in enumerate(tracklets):
            if trk.t_max == t - 1:
                candidates.append((k, trk.last))
            elif trk.t_min == t + 1:
                candidates.append((k, trk.first))
        candidates = [(k, e) for k, e in candidates
                      if tracklets[k].class_id == lows[0].class_id]
        if not candidates:
            continue
        scores = kernel.matrix(stack_boxes([e.box for _, e in candidates]),
                               stack_boxes([d.box for d in lows]))
        for i, j in solve(scores, gate):
            k = candidates[i][0]
            extended = list(tracklets[k].entries) + [lows[j]]
            tracklets[k] = Tracklet.build(next_tid, extended)
            next_tid += 1
    return HierarchyState(level=state.level, tracklets=tuple(_ordered(tracklets)),
                          counts=state.counts, next_tid=next_tid)


# ---------------------------------------------------------------------------
# Full pipelines
# ---------------------------------------------------------------------------


def _renumber(detections: Iterable[Detection]) -> list[Detection]:
    """Internal copies with unique sequential det_ids in stable input order."""
    ordered = sorted(detections,
                     key=lambda d: (d.frame, d.det_id, d.box.cx, d.box.cy, d.score))
    return [dataclasses.replace(d, det_id=k + 1) for k, d in enumerate(ordered)]


def _chain_matches(chains: Sequence[Sequence[Detection]]
                   ) -> dict[int, list[tuple[Detection, Detection]]]:
    """Frame-adjacent matched pairs implied by the chains, keyed by frame."""
    pairs: dict[int, list[tuple[Detection, Detection]]] = {}
    for chain in chains:
        for a, b in zip(chain, chain[1:]):
            pairs.setdefault(a.frame, []).append((a, b))
    return pairs


def _intra_tracklet_matches(tracklets: Sequence[Tracklet]
                            ) -> dict[int, list[tuple[Detection, Detection]]]:
    pairs: dict[int, list[tuple[Detection, Detection]]] = {}
    for trk in tracklets:
        for a, b in zip(trk.entries, trk.entries[1:]):
            if b.frame == a.frame + 1:
                pairs.setdefault(a.frame, []).append((a, b))
    return pairs


def _stage_label(index: int, bound: int, overlap: int, strategy: Strategy) -> str:
    if strategy is Strategy.WINDOW:
        return f"level-{index} (window {bound})"
    if overlap:
        return f"level-{index} (gap {bound}, overlap {overlap})"
    return f"level-{index} (gap {bound})"


class _ClassEngine:
    """Runs the full pipeline for the detections of a single class."""

    def __init__(self, cfg: TrackerConfig, class_id: int):
        self.cfg = cfg
        self.class_id = class_id
        self.kernel = SimilarityKernel(cfg)
        self.levels: list[LevelTrace] = []

    def run_detections(self, detections: Sequence[Detection]) -> ClassRunResult:
        cfg = self.cfg
        high = [d for d in detections if d.score >= cfg.score_high]
        low = [d for d in detections
               if cfg.score_low <= d.score < cfg.score_high]
        if not high:
            return ClassRunResult(self.class_id, (), (0,), tuple(self.levels), None)
        frames = [d.frame for d in detections]
        frame_range = (min(frames), max(frames))

        chains = adjacent_pass(high, self.kernel, cfg.match_threshold)
        profile = None
        if cfg.enable_cc:
            profile = camera_mod.estimate(_chain_matches(chains),
                                          cfg.cc_threshold, frame_range)
            if profile.moving:
                high = camera_mod.stabilize(high, profile)
                low = camera_mod.stabilize(low, profile)
                chains = adjacent_pass(high, self.kernel, cfg.match_threshold)
        if cfg.enable_cm and cfg.schedule.strategy is Strategy.INTERVAL:
            chains = consistent_motion_pass(chains, high, cfg, self.kernel)

        singleton_count = len(high)
        if cfg.schedule.strategy is Strategy.WINDOW:
            state = self._window_levels(high, low, singleton_count)
        else:
            state = self._interval_levels(chains, low, singleton_count)

        tracklets = state.tracklets
        if profile is not None and profile.moving:
            tracklets = tuple(self._destabilized(t, profile) for t in tracklets)
        return ClassRunResult(self.class_id, tracklets, state.counts,
                              tuple(self.levels), profile)

    def _interval_levels(self, chains, low, singleton_count) -> HierarchyState:
        cfg = self.cfg
        tracklets = [Tracklet.build(tid, chain)
                     for tid, chain in enumerate(chains, start=1)]
        state = HierarchyState(level=1, tracklets=tuple(_ordered(tracklets)),
                               counts=(singleton_count, len(tracklets)),
                               next_tid=len(chains) + 1)
        singles = sorted((d for chain in chains for d in chain),
                         key=lambda d: (d.frame, d.det_id))
        self.levels.append(LevelTrace(
            "singletons", singleton_count,
            tuple(((d.frame, d.det_id),) for d in singles)))
        stage0 = cfg.schedule.stages[0]
        self.levels.append(_snapshot(
            _stage_label(1, stage0.bound, stage0.overlap, Strategy.INTERVAL),
            state.tracklets))
        state = byte_recovery(state, low, self.kernel, cfg.match_threshold)
        if low:
            self.levels.append(_snapshot("low-score recovery", state.tracklets))
        return self._remaining_stages(state)

    def _window_levels(self, high, low, singleton_count) -> HierarchyState:
        cfg = self.cfg
        singletons = [Tracklet.build(tid, [d]) for tid, d in enumerate(high, start=1)]
        state = HierarchyState.initial(singletons, next_tid=len(singletons) + 1)
        self.levels.append(_snapshot("singletons", state.tracklets))
        cache = FitCache(cfg)
        sim = lambda a, b: pair_similarity(a, b, self.kernel, cfg, cache)
        for k, stage in enumerate(cfg.schedule.stages, start=1):
            state = window_strategy_pass(state, stage.bound, sim, cfg.match_threshold)
            if k == 1:
                state = byte_recovery(state, low, self.kernel, cfg.match_threshold)
            self.levels.append(_snapshot(
                _stage_label(k, stage.bound, 0, Strategy.WINDOW), state.tracklets))
        return state

    def _remaining_stages(self, state: HierarchyState) -> HierarchyState:
        cfg = self.cfg
        cache = FitCache(cfg)
        sim = lambda a, b: pair_similarity(a, b, self.kernel, cfg, cache)
        for k, stage in enumerate(cfg.schedule.stages[1:], start=2):
            state = hierarchy_pass(state, stage.bound, stage.overlap, sim,
                                   cfg.match_threshold)
            self.levels.append(_snapshot(
                _stage_label(k, stage.bound, stage.overlap, Strategy.INTERVAL),
                state.tracklets))
        return state

    def run_tracklets(self, tracklets: Sequence[Tracklet]) -> ClassRunResult:
        """Associate pre-formed tracklets (the recombination mode)."""
        cfg = self.cfg
        if not tracklets:
            return ClassRunResult(self.class_id, (), (0,), tuple(self.levels), None)
        profile = None
        work = list(tracklets)
        frames = [f for t in work for f in (t.t_min, t.t_max)]
        frame_range = (min(frames), max(frames))
        if cfg.enable_cc:
            profile = camera_mod.estimate(_intra_tracklet_matches(work),
                                          cfg.cc_threshold, frame_range)
            if profile.moving:
                work = [Tracklet.build(t.tid, camera_mod.stabilize(t.entries, profile))
                        for t in work]
        state = HierarchyState.initial(work, next_tid=max(t.tid for t in work) + 1)
        self.levels.append(_snapshot("input tracklets", state.tracklets))
        cache = FitCache(cfg)
        sim = lambda a, b: pair_similarity(a, b, self.kernel, cfg, cache)
        if cfg.schedule.strategy is Strategy.WINDOW:
            for k, stage in enumerate(cfg.schedule.stages, start=1):
                state = window_strategy_pass(state, stage.bound, sim,
                                             cfg.match_threshold)
                self.levels.append(_snapshot(
                    _stage_label(k, stage.bound, 0, Strategy.WINDOW),
                    state.tracklets))
        else:
            for k, stage in enumerate(cfg.schedule.stages, start=1):
                state = hierarchy_pass(state, stage.bound, stage.overlap, sim,
                                       cfg.match_threshold)
                self.levels.append(_snapshot(
                    _stage_label(k, stage.bound, stage.overlap, Strategy.INTERVAL),
                    state.tracklets))
        out = state.tracklets
        if profile is not None and profile.moving:
            out = tuple(self._destabilized(t, profile) for t in out)
        return ClassRunResult(self.class_id, out, state.counts,
                              tuple(self.levels), profile)

    @staticmethod
    def _destabilized(tracklet: Tracklet, profile) -> Tracklet:
        return Tracklet.build(tracklet.tid,
                              camera_mod.destabilize(tracklet.entries, profile))


def _results_to_trajectories(results: Sequence[ClassRunResult],
                             provenance: Provenance) -> list[Trajectory]:
    ranked = []
    for res in results:
        for t in res.tracklets:
            ranked.append((t.t_min, t.t_max, res.class_id, t.tid, t))
    ranked.sort(key=lambda r: r[:4])
    return [from_tracklet(t, track_id=k + 1, provenance=provenance)
            for k, (_, _, _, _, t) in enumerate(ranked)]


def run_detailed(detections: Iterable[Detection], cfg: TrackerConfig) -> RunResult:
    """Track one sequence: BYTE split, camera handling, all hierarchy levels.

    Multi-class input is partitioned and tracked per class; output track ids
    are assigned over the combined result in (t_min, t_max, class) order.
    """
    validate_config(cfg)
    dets = _renumber(detections)
    if not dets:
        return RunResult(trajectories=[], per_class=())
    by_class: dict[int, list[Detection]] = {}
    for d in dets:
        by_class.setdefault(d.class_id, []).append(d)
    results = []
    for class_id in sorted(by_class):
        engine = _ClassEngine(cfg, class_id)
        result = engine.run_detections(by_class[class_id])
        log.debug("class %d: tracklet counts per level %s", class_id, result.counts)
        results.append(result)
    return RunResult(
        trajectories=_results_to_trajectories(results, Provenance.NATIVE),
        per_class=tuple(results))


def run(detections: Iterable[Detection], cfg: TrackerConfig) -> list[Trajectory]:
    return run_detailed(detections, cfg).trajectories


def associate_tracklets(tracklets: Sequence[Tracklet], cfg: TrackerConfig) -> RunResult:
    """Hierarchically associate pre-formed tracklets (recombination mode).

    Camera estimation uses the frame-adjacent pairs inside the input
    tracklets; there is no score partition here — every input detection is
    kept.
    """
    validate_config(cfg)
    if not tracklets:
        return RunResult(trajectories=[], per_class=())
    # Fitting is memoized by tracklet id, so ids must be unique here.
    fresh = [Tracklet.build(k + 1, list(t.entries)) for k, t in
             enumerate(sorted(tracklets, key=lambda t: (t.t_min, t.t_max, t.tid)))]
    by_class: dict[int, list[Tracklet]] = {}
    for t in fresh:
        by_class.setdefault(t.class_id, []).append(t)
    results = []
    for class_id in sorted(by_class):
        engine = _ClassEngine(cfg, class_id)
        results.append(engine.run_tracklets(by_class[class_id]))
    return RunResult(
        trajectories=_results_to_trajectories(results, Provenance.RECOMBINED),
        per_class=tuple(results))
