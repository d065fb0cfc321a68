"""Box-overlap similarity kernels: IoU, height-modulated IoU, and the
small-box expansion variant that equalizes IoU sensitivity across target
sizes.

Scalar functions operate on BoundingBox values; the *_matrix functions are
broadcasting equivalents over (n, 4) arrays of [cx, cy, w, h] rows and
must agree with the scalar path pointwise.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable

import numpy as np

from .model import BoundingBox, TrackerConfig


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes; 0 when disjoint."""
    iw = min(a.right, b.right) - max(a.left, b.left)
    if iw <= 0:
        return 0.0
    ih = min(a.bottom, b.bottom) - max(a.top, b.top)
    if ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def height_iou(a: BoundingBox, b: BoundingBox) -> float:
    """1-D IoU of the vertical extents [top, bottom] of the two boxes."""
    inter = min(a.bottom, b.bottom) - max(a.top, b.top)
    if inter <= 0:
        return 0.0
    union = max(a.bottom, b.bottom) - min(a.top, b.top)
    return inter / union


def hm_iou(a: BoundingBox, b: BoundingBox) -> float:
    """Height-modulated IoU: 2-D IoU damped by the vertical-interval IoU."""
    return iou(a, b) * height_iou(a, b)


def expansion_ratio(w_i: float, w_j: float, width_threshold: float, scaling: float) -> float:
    """Shared expansion ratio for a pair of small boxes.

    Geometric mean of per-box factors exp(scaling * threshold / width); the
    ratio is 1 at scaling 0 and grows as either box narrows.
    """
    return math.exp(0.5 * scaling * (width_threshold / w_i + width_threshold / w_j))


def consistent_iou(a: BoundingBox, b: BoundingBox, cfg: TrackerConfig) -> float:
    """Base kernel on concentrically expanded copies of two small boxes.

    Both widths must fall below cfg.ci_width_threshold for the expansion to
    apply; otherwise the raw base kernel is used. The base kernel is plain
    IoU, or height-modulated IoU when cfg.use_hm_iou is set.
    """
    base = hm_iou if cfg.use_hm_iou else iou
    thr = cfg.ci_width_threshold
    if a.w < thr and b.w < thr:
        r = expansion_ratio(a.w, b.w, thr, cfg.ci_scaling_factor)
        return base(a.expanded(r), b.expanded(r))
    return base(a, b)


# ---------------------------------------------------------------------------
# Array forms. Boxes are float arrays of shape (n, 4) = [cx, cy, w, h].
# ---------------------------------------------------------------------------


def stack_boxes(boxes: Iterable[BoundingBox]) -> np.ndarray:
    return np.array([[b.cx, b.cy, b.w, b.h] for b in boxes], dtype=np.float64).reshape(-1, 4)


def _corners(boxes: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    half_w = boxes[:, 2] / 2
    half_h = boxes[:, 3] / 2
    return (boxes[:, 0] - half_w, boxes[:, 1] - half_h,
            boxes[:, 0] + half_w, boxes[:, 1] + half_h)


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU, shape (len(a), len(b))."""
    al, at, ar, ab = _corners(a)
    bl, bt, br, bb = _corners(b)
    iw = np.minimum(ar[:, None], br[None, :]) - np.maximum(al[:, None], bl[None, :])
    ih = np.minimum(ab[:, None], bb[None, :]) - np.maximum(at[:, None], bt[None, :])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    area_a = (a[:, 2] * a[:, 3])[:, None]
    area_b = (b[:, 2] * b[:, 3])[None, :]
    return inter / (area_a + area_b - inter)


def height_iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    at = a[:, 1] - a[:, 3] / 2
    ab = a[:, 1] + a[:, 3] / 2
    bt = b[:, 1] - b[:, 3] / 2
    bb = b[:, 1] + b[:, 3] / 2
    inter = np.minimum(ab[:, None], bb[None, :]) - np.maximum(at[:, None], bt[None, :])
    union = np.maximum(ab[:, None], bb[None, :]) - np.minimum(at[:, None], bt[None, :])
    return np.clip(inter, 0, None) / union


def hm_iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return iou_matrix(a, b) * height_iou_matrix(a, b)


def consistent_iou_matrix(a: np.ndarray, b: np.ndarray, cfg: TrackerConfig) -> np.ndarray:
    """Pairwise consistent-IoU; expansion applied only where both widths are
    below the threshold, raw kernel elsewhere."""
    base = hm_iou_matrix if cfg.use_hm_iou else iou_matrix
    raw = base(a, b)
    thr = cfg.ci_width_threshold
    small = (a[:, 2][:, None] < thr) & (b[:, 2][None, :] < thr)
    if not small.any():
        return raw
    ratio = np.exp(0.5 * cfg.ci_scaling_factor
                   * (thr / a[:, 2][:, None] + thr / b[:, 2][None, :]))
    # Expanded boxes share centers, so only sizes change per pair; evaluate
    # the kernel on per-pair expanded corner coordinates.
    a_hw = (a[:, 2][:, None] * ratio) / 2
    a_hh = (a[:, 3][:, None] * ratio) / 2
    b_hw = (b[:, 2][None, :] * ratio) / 2
    b_hh = (b[:, 3][None, :] * ratio) / 2
    acx, acy = a[:, 0][:, None], a[:, 1][:, None]
    bcx, bcy = b[:, 0][None, :], b[:, 1][None, :]
    iw = np.minimum(acx + a_hw, bcx + b_hw) - np.maximum(acx - a_hw, bcx - b_hw)
    ih = np.minimum(acy + a_hh, bcy + b_hh) - np.maximum(acy - a_hh, bcy - b_hh)
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    expanded = inter / (4 * a_hw * a_hh + 4 * b_hw * b_hh - inter)
    if cfg.use_hm_iou:
        vi = np.minimum(acy + a_hh, bcy + b_hh) - np.maximum(acy - a_hh, bcy - b_hh)
        vu = np.maximum(acy + a_hh, bcy + b_hh) - np.minimum(acy - a_hh, bcy - b_hh)
        expanded = expanded * (np.clip(vi, 0, None) / vu)
    return np.where(small, expanded, raw)


class SimilarityKernel:
    """The configured box-similarity function, in scalar and matrix form.

    Wraps the choice of base kernel (IoU vs height-modulated IoU) and
    whether small-box expansion is active, so callers never re-read config.
    """

    def __init__(self, cfg: TrackerConfig):
        self.cfg = cfg
        if cfg.enable_ci:
            self._pair: Callable[[BoundingBox, BoundingBox], float] = (
                lambda a, b: consistent_iou(a, b, cfg))
            self._matrix = lambda a, b: consistent_iou_matrix(a, b, cfg)
        elif cfg.use_hm_iou:
            self._pair = hm_iou
            self._matrix = hm_iou_matrix
        else:
            self._pair = iou
            self._matrix = iou_matrix

    def pair(self, a: BoundingBox, b: BoundingBox) -> float:
        return self._pair(a, b)

    def matrix(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        if len(a) == 0 or len(b) == 0:
            return np.zeros((len(a), len(b)))
        return self._matrix(a, b)
