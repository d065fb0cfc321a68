"""Core value types shared by the whole tracker, plus the run configuration."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, NamedTuple, Sequence


class ConfigError(ValueError):
    """Raised by validate_config with one message per violated field."""

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("invalid config: " + "; ".join(self.problems))


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in center+size form (pixels)."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box sides must be positive, got w={self.w}, h={self.h}")

    @property
    def left(self) -> float:
        return self.cx - self.w / 2

    @property
    def top(self) -> float:
        return self.cy - self.h / 2

    @property
    def right(self) -> float:
        return self.cx + self.w / 2

    @property
    def bottom(self) -> float:
        return self.cy + self.h / 2

    @property
    def area(self) -> float:
        return self.w * self.h

    @classmethod
    def from_ltwh(cls, left: float, top: float, w: float, h: float) -> "BoundingBox":
        return cls(left + w / 2, top + h / 2, w, h)

    @classmethod
    def from_corners(cls, x1: float, y1: float, x2: float, y2: float) -> "BoundingBox":
        return cls((x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1)

    def as_ltwh(self) -> tuple[float, float, float, float]:
        return (self.left, self.top, self.w, self.h)

    def as_corners(self) -> tuple[float, float, float, float]:
        return (self.left, self.top, self.right, self.bottom)

    def expanded(self, ratio: float) -> "BoundingBox":
        """Scale width and height by `ratio` about the fixed center."""
        return BoundingBox(self.cx, self.cy, self.w * ratio, self.h * ratio)

    def translated(self, dx: float, dy: float) -> "BoundingBox":
        return BoundingBox(self.cx + dx, self.cy + dy, self.w, self.h)


@dataclass(frozen=True)
class Detection:
    """One detector output box at one frame; the atomic tracking input."""

    frame: int
    box: BoundingBox
    score: float
    class_id: int = 0
    det_id: int = -1
    interpolated: bool = False

    def __post_init__(self):
        if self.frame < 1:
            raise ValueError(f"frame index must be >= 1, got {self.frame}")
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score must be in [0, 1], got {self.score}")

    def with_box(self, box: BoundingBox) -> "Detection":
        return replace(self, box=box)


@dataclass(frozen=True)
class Tracklet:
    """A frame-sorted run of detections of one target; the association unit.

    Entries are strictly increasing in frame and share one class id. Use
    Tracklet.build() to construct from unordered detections.
    """

    tid: int
    entries: tuple[Detection, ...]

    def __post_init__(self):
        if not self.entries:
            raise ValueError("tracklet must contain at least one detection")
        frames = [d.frame for d in self.entries]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ValueError("tracklet entries must be strictly increasing in frame")
        cls = self.entries[0].class_id
        if any(d.class_id != cls for d in self.entries):
            raise ValueError("tracklet entries must share one class id")

    @classmethod
    def build(cls, tid: int, detections: Iterable[Detection]) -> "Tracklet":
        """Sort detections by frame and wrap them; duplicate frames rejected."""
        ordered = sorted(detections, key=lambda d: d.frame)
        return cls(tid, tuple(ordered))

    @property
    def t_min(self) -> int:
        return self.entries[0].frame

    @property
    def t_max(self) -> int:
        return self.entries[-1].frame

    @property
    def first(self) -> Detection:
        return self.entries[0]

    @property
    def last(self) -> Detection:
        return self.entries[-1]

    @property
    def class_id(self) -> int:
        return self.entries[0].class_id

    @cached_property
    def by_frame(self) -> dict[int, Detection]:
        return {d.frame: d for d in self.entries}

    def __len__(self) -> int:
        return len(self.entries)


class Strategy(enum.Enum):
    """How association passes are scheduled across hierarchy levels."""

    INTERVAL = "interval"
    WINDOW = "window"


class Stage(NamedTuple):
    """One hierarchy level: a frame bound plus an overlap allowance.

    For the interval strategy `bound` is the maximum admissible tracklet
    gap; for the window strategy it is the window size. `overlap` frames of
    tracklet overlap are admitted only in the final stage.
    """

    bound: int
    overlap: int = 0


@dataclass(frozen=True)
class HierarchySchedule:
    stages: tuple[Stage, ...]
    strategy: Strategy = Strategy.INTERVAL

    @classmethod
    def default_interval(cls) -> "HierarchySchedule":
        # Gap bounds 1..30 plus a final stage that re-admits the 30-frame
        # bound while tolerating up to 5 frames of tracklet overlap.
        bounds = (1, 5, 10, 15, 20, 30)
        stages = tuple(Stage(b, 0) for b in bounds) + (Stage(30, 5),)
        return cls(stages, Strategy.INTERVAL)

    @classmethod
    def default_window(cls) -> "HierarchySchedule":
        return cls(tuple(Stage(2 ** k, 0) for k in range(1, 8)), Strategy.WINDOW)

    @classmethod
    def from_bounds(
        cls,
        bounds: Sequence[int],
        final_overlap: int = 0,
        strategy: Strategy = Strategy.INTERVAL,
    ) -> "HierarchySchedule":
        stages = [Stage(int(b), 0) for b in bounds]
        if final_overlap > 0:
            stages.append(Stage(int(bounds[-1]), int(final_overlap)))
        return cls(tuple(stages), strategy)

    def problems(self) -> list[str]:
        out = []
        if not self.stages:
            out.append("schedule must contain at least one stage")
            return out
        if any(s.bound < 1 for s in self.stages):
            out.append("stage bounds must be >= 1")
        if any(b.bound < a.bound for a, b in zip(self.stages, self.stages[1:])):
            out.append("stage bounds must be non-decreasing")
        if any(s.overlap < 0 for s in self.stages):
            out.append("overlap allowances must be >= 0")
        if any(s.overlap > 0 for s in self.stages[:-1]):
            out.append("only the final stage may allow overlap")
        return out


@dataclass(frozen=True)
class TrackerConfig:
    """All tunables of the tracking pipeline.

    Defaults follow the reference operating point: match gate 0.2, small-box
    expansion below width 64 with scaling factor 0.2, camera-movement gate
    0.65, and the 7-stage interval schedule ending in a 5-frame-overlap merge
    pass.
    """

    match_threshold: float = 0.2
    ci_width_threshold: float = 64.0
    ci_scaling_factor: float = 0.2
    cc_threshold: float = 0.65
    score_high: float = 0.6
    score_low: float = 0.1
    use_hm_iou: bool = False
    enable_ci: bool = True
    enable_cc: bool = True
    enable_cm: bool = True
    schedule: HierarchySchedule = field(default_factory=HierarchySchedule.default_interval)
    interpolation_max_gap: int = 20
    smoothing_sigma: float = 5.0
    kf_position_weight: float = 1.0 / 20.0
    kf_velocity_weight: float = 1.0 / 160.0
    rng_seed: int = 0


def validate_config(cfg: TrackerConfig) -> TrackerConfig:
    """Return cfg unchanged if every invariant holds, else raise ConfigError.

    All violations are collected so the error lists every bad field at once.
    """
    problems = []
    if not (0.0 < cfg.match_threshold < 1.0):
        problems.append(f"match_threshold must be in (0, 1), got {cfg.match_threshold}")
    if not cfg.ci_width_threshold > 0:
        problems.append(f"ci_width_threshold must be > 0, got {cfg.ci_width_threshold}")
    if not cfg.ci_scaling_factor > 0:
        problems.append(f"ci_scaling_factor must be > 0, got {cfg.ci_scaling_factor}")
    if not (0.0 <= cfg.cc_threshold <= 1.0):
        problems.append(f"cc_threshold must be in [0, 1], got {cfg.cc_threshold}")
    if not (0.0 <= cfg.score_low <= cfg.score_high <= 1.0):
        problems.append(
            "scores must satisfy 0 <= score_low <= score_high <= 1, got "
            f"low={cfg.score_low}, high={cfg.score_high}"
        )
    if cfg.interpolation_max_gap < 0:
        problems.append(f"interpolation_max_gap must be >= 0, got {cfg.interpolation_max_gap}")
    if cfg.smoothing_sigma < 0:
        problems.append(f"smoothing_sigma must be >= 0, got {cfg.smoothing_sigma}")
    if not cfg.kf_position_weight > 0 or not cfg.kf_velocity_weight > 0:
        problems.append("Kalman noise weights must be > 0")
    problems.extend(cfg.schedule.problems())
    if problems:
        raise ConfigError(problems)
    return cfg
