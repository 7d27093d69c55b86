"""Hierarchical threshold ladder and per-level pseudo-masks.

A ladder interpolates m thresholds linearly between an eroding (high)
and dilating (low) pair; binarizing one refined heatmap at every rung
yields a nested stack of masks, one per level. Comparison is
threshold-inclusive (``>=``) so a heatmap exactly at a rung binarizes
deterministically.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .heatmap import AttentionHeatmap


@dataclass(frozen=True)
class ThresholdLadder:
    t_low: float
    t_high: float
    m: int
    thresholds: tuple = field(init=False)

    def __post_init__(self):
        if self.m < 2:
            raise ValidationError(f"the multi-level scheme needs m >= 2 levels, got {self.m}")
        if not 0.0 < self.t_low < 1.0 or not 0.0 < self.t_high < 1.0:
            raise ValidationError("thresholds must lie strictly inside (0, 1)")
        if self.t_low >= self.t_high:
            raise ValidationError(
                f"t_low must be < t_high, got ({self.t_low}, {self.t_high})")
        step = (self.t_high - self.t_low) / (self.m - 1)
        object.__setattr__(
            self, "thresholds",
            tuple(self.t_low + k * step for k in range(self.m)))


def make_ladder(t_low: float, t_high: float, m: int) -> ThresholdLadder:
    """Thresholds t_low + k*(t_high - t_low)/(m-1), k = 0..m-1."""
    return ThresholdLadder(t_low, t_high, m)


@dataclass
class PseudoMaskStack:
    """m binary masks for one image, nested: masks[j] within masks[k] for j > k."""

    image_id: str
    masks: list

    def __post_init__(self):
        if not self.masks:
            raise ValidationError("a pseudo-mask stack needs at least one level")
        shape = np.asarray(self.masks[0]).shape
        for k, mask in enumerate(self.masks):
            m_arr = np.asarray(mask)
            if m_arr.shape != shape:
                raise ValidationError(
                    f"level {k} mask shape {m_arr.shape} differs from level 0 {shape}")
            if k and np.any(np.asarray(self.masks[k]).astype(bool)
                            & ~np.asarray(self.masks[k - 1]).astype(bool)):
                raise ValidationError(
                    f"level {k} mask is not nested inside level {k - 1}")

    @property
    def m(self) -> int:
        return len(self.masks)


def binarize_at(heatmap: AttentionHeatmap, thresholds) -> list:
    """Binary masks (uint8 {0,1}) at each threshold, in the given order."""
    values = heatmap.values
    return [(values >= t).astype(np.uint8) for t in thresholds]


def binarize_stack(heatmap: AttentionHeatmap, ladder: ThresholdLadder,
                   image_id: str = "") -> PseudoMaskStack:
    """Threshold a refined heatmap at every rung of the ladder.

    Nesting holds by construction: a higher threshold can only shrink
    the foreground. An empty highest-level mask is legal; callers decide
    how to supervise such images.
    """
    return PseudoMaskStack(image_id, binarize_at(heatmap, ladder.thresholds))


def mask_level_filename(image_id: str, level: int) -> str:
    return f"{image_id}.level{level}.png"


def save_mask_png(path, mask) -> None:
    """8-bit single-channel file, 0 = background, 255 = foreground."""
    from PIL import Image

    arr = (np.asarray(mask) > 0).astype(np.uint8) * 255
    Image.fromarray(arr, mode="L").save(path)


def load_mask_png(path) -> np.ndarray:
    from PIL import Image

    arr = np.asarray(Image.open(path).convert("L"))
    return (arr >= 128).astype(np.uint8)
