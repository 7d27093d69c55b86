"""Attention heatmaps: Gaussian splatting of fixations, max-normalized.

Each fixation contributes an isotropic Gaussian kernel; the raw field is
divided by its global maximum so the strongest attention peak is exactly
1. Kernels are truncated at ``TRUNCATION_SIGMAS`` standard deviations,
bounding the dropped tail at exp(-8) ~= 3.4e-4 of the peak.

On disk a heatmap is a small binary array file: magic ``GZHM``, a
version byte, little-endian uint32 width and height, then row-major
float32 values. Refined (CRF) heatmaps reuse the format under a
``.crf`` suffix.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ParseError, ValidationError
from .gaze import GazeSequence

TRUNCATION_SIGMAS = 4.0

_MAGIC = b"GZHM"
_VERSION = 1


def default_sigma(width: int) -> float:
    """Kernel width tied to tracker error over the display geometry: 1/24 of image width."""
    return width / 24.0


@dataclass
class AttentionHeatmap:
    """Per-pixel attention intensity in [0, 1] for one image."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise ValidationError("heatmap values must be 2-D")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def raw_attention_field(seq: GazeSequence, sigma: float, weighting: str = "duration") -> np.ndarray:
    """Unnormalized splat field (float64), exposed for monotonicity checks."""
    if sigma <= 0:
        raise ValidationError(f"sigma must be > 0, got {sigma}")
    if weighting not in ("uniform", "duration"):
        raise ValidationError(f"weighting must be 'uniform' or 'duration', got {weighting!r}")
    if not seq.samples:
        raise ValidationError("no gaze data: cannot render a heatmap from an empty sequence")

    pos = seq.positions()
    if weighting == "duration":
        weights = seq.durations()
    else:
        weights = np.ones(len(seq.samples), dtype=np.float64)

    field = np.zeros((seq.height, seq.width), dtype=np.float64)
    radius = TRUNCATION_SIGMAS * sigma
    inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma)
    kernels.splat_add(field, pos[:, 0].copy(), pos[:, 1].copy(),
                      np.ascontiguousarray(weights), inv_two_sigma2, radius)
    return field


def render_heatmap(seq: GazeSequence, sigma: float | None = None,
                   weighting: str = "duration") -> AttentionHeatmap:
    """Render the max-normalized attention heatmap for one sequence."""
    if sigma is None:
        sigma = default_sigma(seq.width)
    field = raw_attention_field(seq, sigma, weighting)
    peak = field.max()
    if peak <= 0:
        raise ValidationError("no gaze data: all fixation weights are zero")
    return AttentionHeatmap((field / peak).astype(np.float32))


def save_heatmap(path, heatmap: AttentionHeatmap) -> None:
    values = np.ascontiguousarray(heatmap.values, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<BII", _VERSION, heatmap.width, heatmap.height))
        fh.write(values.tobytes())


def load_heatmap(path) -> AttentionHeatmap:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ParseError(f"{path}: not a heatmap file (bad magic {magic!r})")
        version, width, height = struct.unpack("<BII", fh.read(9))
        if version != _VERSION:
            raise ParseError(f"{path}: unsupported heatmap version {version}")
        data = fh.read(4 * width * height)
        if len(data) != 4 * width * height:
            raise ParseError(f"{path}: truncated heatmap payload")
    values = np.frombuffer(data, dtype="<f4").reshape(height, width)
    return AttentionHeatmap(values.copy())


def export_heatmap_png(path, heatmap: AttentionHeatmap) -> None:
    """8-bit grayscale dump for eyeballing."""
    from PIL import Image

    gray = np.clip(heatmap.values * 255.0, 0, 255).astype(np.uint8)
    Image.fromarray(gray, mode="L").save(path)
