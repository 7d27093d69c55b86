"""Fully-connected CRF refinement of attention heatmaps.

Exact O(N^2) mean-field inference for binary labels with two Gaussian
pairwise kernels (appearance and smoothness) under Potts compatibility.
Each kernel is symmetrically normalized by its per-pixel degree, as in
the standard dense-CRF mean-field implementation, so message magnitudes
stay commensurate with the unaries at any image size. Updates are
synchronous: every pixel reads the previous iteration's marginals.

Exact message passing is intended for desk-scale images (the kernel
matrix is N x N); the seam for a fast approximate filter is
``kernels.crf_build_kernel``, which is the only place pairwise
potentials are materialized.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ShapeError, ValidationError
from .heatmap import AttentionHeatmap, render_heatmap

# refine_pipeline works on [0, 1] float images; the appearance kernel's
# theta_beta is quoted on the conventional 0-255 intensity scale.
INTENSITY_SCALE = 255.0

# Exact message passing materializes an N x N float64 matrix. Cap it so a
# paper-scale image (224 x 224 -> 20 GB) fails fast with advice instead of
# exhausting memory. Override with GAZESEG_CRF_MAX_GB.
_DEFAULT_MATRIX_GB = 4.0


def _matrix_budget_bytes() -> float:
    raw = os.environ.get("GAZESEG_CRF_MAX_GB", "")
    return float(raw) * 2**30 if raw else _DEFAULT_MATRIX_GB * 2**30


@dataclass(frozen=True)
class CrfParams:
    n_iters: int = 5
    w_app: float = 4.0
    theta_alpha: float = 30.0
    theta_beta: float = 13.0
    w_smooth: float = 3.0
    theta_gamma: float = 3.0
    unary_clamp: float = 0.01

    def __post_init__(self):
        if self.n_iters < 0:
            raise ValidationError("n_iters must be >= 0")
        for name in ("theta_alpha", "theta_beta", "theta_gamma"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be > 0")
        if self.w_app < 0 or self.w_smooth < 0:
            raise ValidationError("kernel weights must be >= 0")
        if not 0.0 < self.unary_clamp < 0.5:
            raise ValidationError("unary_clamp must be in (0, 0.5)")


def heatmap_to_unary(heatmap: AttentionHeatmap, eps: float) -> np.ndarray:
    """Two-class negative-log-probability field from a heatmap.

    Channel 0 is foreground, channel 1 background:
    ``-log(clamp(h, eps, 1-eps))`` and ``-log(clamp(1-h, eps, 1-eps))``.
    """
    if not 0.0 < eps < 0.5:
        raise ValidationError(f"clamp eps must be in (0, 0.5), got {eps}")
    h = heatmap.values.astype(np.float64)
    fg = np.clip(h, eps, 1.0 - eps)
    bg = np.clip(1.0 - h, eps, 1.0 - eps)
    return np.stack([-np.log(fg), -np.log(bg)], axis=-1)


def _softmax2(logits):
    m = logits.max(axis=-1, keepdims=True)
    e = np.exp(logits - m)
    return e / e.sum(axis=-1, keepdims=True)


def mean_field_refine(image, unary, params: CrfParams) -> np.ndarray:
    """Refined foreground-probability map in [0, 1].

    `image` carries the appearance-kernel intensity in the same units as
    ``params.theta_beta``; `unary` is the (H, W, 2) negative-log field.
    With ``n_iters=0`` (or both kernel weights zero) this reduces to the
    per-pixel normalized exponentiated unaries.
    """
    image = np.asarray(image, dtype=np.float64)
    unary = np.asarray(unary, dtype=np.float64)
    if image.ndim != 2 or unary.shape != image.shape + (2,):
        raise ShapeError(
            f"image {image.shape} and unary {unary.shape} dimensions do not match")
    height, width = image.shape
    n = height * width

    neg_u = -unary.reshape(n, 2)
    q = _softmax2(neg_u)
    if params.n_iters > 0 and (params.w_app > 0 or params.w_smooth > 0):
        need = 8.0 * n * n
        if need > _matrix_budget_bytes():
            raise ValidationError(
                f"{height}x{width} needs a {need / 2**30:.1f} GB kernel matrix; "
                "exact mean field is meant for desk-scale images. Downscale the "
                "input, raise GAZESEG_CRF_MAX_GB, or plug an approximate filter "
                "in at kernels.crf_build_kernel."
            )
        kmat = kernels.crf_build_kernel(
            np.ascontiguousarray(image.reshape(n)), height, width,
            1.0 / (2.0 * params.theta_alpha ** 2),
            1.0 / (2.0 * params.theta_beta ** 2),
            1.0 / (2.0 * params.theta_gamma ** 2),
            params.w_app, params.w_smooth)
        for _ in range(params.n_iters):
            msg = kmat @ q
            q = _softmax2(neg_u - msg[:, ::-1])  # Potts: penalty from the opposite label
    return q[:, 0].reshape(height, width)


def refine_heatmap(image, heat: AttentionHeatmap, params: CrfParams | None = None) -> AttentionHeatmap:
    """heatmap_to_unary -> mean_field_refine, re-max-normalized.

    `image` is a [0, 1] float image; intensities are rescaled to 0-255
    for the appearance kernel (see ``INTENSITY_SCALE``).
    """
    params = params or CrfParams()
    unary = heatmap_to_unary(heat, params.unary_clamp)
    marginal = mean_field_refine(np.asarray(image, dtype=np.float64) * INTENSITY_SCALE,
                                 unary, params)
    peak = marginal.max()
    if peak <= 0:
        raise ValidationError("refined marginal collapsed to zero everywhere")
    return AttentionHeatmap((marginal / peak).astype(np.float32))


def refine_pipeline(image, seq, sigma=None, params: CrfParams | None = None) -> AttentionHeatmap:
    """render_heatmap then refine_heatmap, for one fixation sequence."""
    return refine_heatmap(image, render_heatmap(seq, sigma), params)
