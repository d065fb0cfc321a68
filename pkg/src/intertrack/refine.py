"""Trajectory post-processing and the split step of the recombination mode.

An external tracker's output (or this engine's own) is refined by splitting
every trajectory at frame discontinuities, re-associating the pieces with
the hierarchical engine, then optionally filling small gaps by linear
interpolation and smoothing the box sequence with a Gaussian kernel.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .model import BoundingBox, Detection, Tracklet


class Provenance(enum.Enum):
    NATIVE = "native"
    RECOMBINED = "recombined"


@dataclass(frozen=True)
class Trajectory:
    """Final per-identity sequence of boxes over frames."""
    track_id: int
    entries: tuple[Detection, ...]
    provenance: Provenance = Provenance.NATIVE

    def __post_init__(self):
        if not self.entries:
            raise ValueError("trajectory needs at least one entry")
        frames = [e.frame for e in self.entries]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ValueError("trajectory frames must be strictly increasing")

    @property
    def t_min(self) -> int:
        return self.entries[0].frame

    @property
    def t_max(self) -> int:
        return self.entries[-1].frame

    @property
    def class_id(self) -> int:
        return self.entries[0].class_id

    def __len__(self) -> int:
        return len(self.entries)


def from_tracklet(tracklet: Tracklet, track_id: int,
                  provenance: Provenance = Provenance.NATIVE) -> Trajectory:
    return Trajectory(track_id=track_id, entries=tracklet.entries,
                      provenance=provenance)


def split_at_discontinuities(trajectories: Iterable[Trajectory]) -> list[Tracklet]:
    """Cut each trajectory into maximal runs of consecutive frames.

    Frame list [1,2,4,5,6] becomes the runs [1,2] and [4,5,6].  Tracklet ids
    are reassigned sequentially in (track_id, time) order, so the result is
    deterministic and ids carry no history.
    """
    tracklets = []
    next_id = 1
    for traj in sorted(trajectories, key=lambda t: t.track_id):
        run: list[Detection] = []
        for det in traj.entries:
            if run and det.frame != run[-1].frame + 1:
                tracklets.append(Tracklet.build(next_id, run))
                next_id += 1
                run = []
            run.append(det)
        tracklets.append(Tracklet.build(next_id, run))
        next_id += 1
    return tracklets


def resolve_overlap(a: Tracklet, b: Tracklet, new_tid: int,
                    max_overlap: int = 5) -> Tracklet:
    """Merge two matched tracklets whose spans may overlap by a few frames.

    For a frame claimed by both, the higher-confidence detection wins; ties
    go to the tracklet that starts earlier, then to the smaller det_id.  An
    overlap beyond max_overlap means the engine admitted an illegal pair and
    is treated as a bug, not a data condition.
    """
    if b.t_min < a.t_min:
        a, b = b, a
    overlap = a.t_max - b.t_min + 1
    if overlap > max_overlap:
        raise ValueError(
            f"tracklets overlap by {overlap} frames (allowed {max_overlap})")
    chosen: dict[int, Detection] = {det.frame: det for det in a.entries}
    same_start = a.t_min == b.t_min
    for det in b.entries:
        rival = chosen.get(det.frame)
        if rival is None:
            chosen[det.frame] = det
        elif det.score > rival.score:
            chosen[det.frame] = det
        elif det.score == rival.score and same_start and det.det_id < rival.det_id:
            # Equal scores normally fall to the earlier-starting tracklet
            # (`a` after the swap above); when both start together the
            # smaller det_id decides.
            chosen[det.frame] = det
    return Tracklet.build(new_tid, list(chosen.values()))


def interpolate(trajectory: Trajectory, max_gap: int) -> Trajectory:
    """Fill internal frame gaps of up to max_gap missing frames linearly.

    Inserted detections carry the mean of the bracketing scores, are flagged
    as interpolated, and never extend the trajectory beyond its ends.
    """
    if max_gap <= 0 or len(trajectory) < 2:
        return trajectory
    out: list[Detection] = [trajectory.entries[0]]
    for prev, nxt in zip(trajectory.entries, trajectory.entries[1:]):
        missing = nxt.frame - prev.frame - 1
        if 1 <= missing <= max_gap:
            pb, nb = prev.box, nxt.box
            span = nxt.frame - prev.frame
            for k in range(1, missing + 1):
                a = k / span
                box = BoundingBox(
                    pb.cx + a * (nb.cx - pb.cx),
                    pb.cy + a * (nb.cy - pb.cy),
                    pb.w + a * (nb.w - pb.w),
                    pb.h + a * (nb.h - pb.h),
                )
                out.append(Detection(
                    frame=prev.frame + k, box=box,
                    score=0.5 * (prev.score + nxt.score),
                    class_id=prev.class_id, det_id=-1, interpolated=True))
        out.append(nxt)
    return Trajectory(track_id=trajectory.track_id, entries=tuple(out),
                      provenance=trajectory.provenance)


def gaussian_smooth(trajectory: Trajectory, sigma: float) -> Trajectory:
    """Smooth cx, cy, w, h with a normalized Gaussian kernel of radius 2*sigma.

    The kernel is truncated and renormalized near the ends, so a constant
    signal passes through unchanged.  Assumes a uniform frame grid (run
    interpolate first); frames and scores are untouched, sizes are clamped to
    stay positive.
    """
    radius = int(np.ceil(2 * sigma))
    n = len(trajectory)
    if sigma <= 0 or radius == 0 or n < 2:
        return trajectory
    values = np.array([[e.box.cx, e.box.cy, e.box.w, e.box.h]
                       for e in trajectory.entries])
    offsets = np.arange(-radius, radius + 1)
    base = np.exp(-0.5 * (offsets / sigma) ** 2)
    smoothed = np.empty_like(values)
    for i in range(n):
        lo = max(0, i - radius)
        hi = min(n, i + radius + 1)
        w = base[lo - i + radius:hi - i + radius]
        smoothed[i] = (w[:, None] * values[lo:hi]).sum(axis=0) / w.sum()
    entries = []
    for e, row in zip(trajectory.entries, smoothed):
        box = BoundingBox(row[0], row[1], max(row[2], 1.0), max(row[3], 1.0))
        entries.append(e.with_box(box))
    return Trajectory(track_id=trajectory.track_id, entries=tuple(entries),
                      provenance=trajectory.provenance)
