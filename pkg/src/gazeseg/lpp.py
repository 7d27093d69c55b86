"""Local pixel propagation (LPP).

Smooths a per-pixel feature map by aggregating each neighborhood with
softmax weights over clamped cosine similarities: features that agree
with their surroundings are reinforced, outliers are pulled toward the
local consensus. Neighborhoods are clipped at borders (the softmax
renormalizes over surviving taps) and the zero vector has cosine 0 with
everything by convention.

The operator is differentiable; ``propagate_backward`` provides the
exact gradient for use inside training losses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ValidationError


@dataclass(frozen=True)
class NeighborhoodSpec:
    """Square tap pattern: odd `window`, `dilation` pixels between taps."""

    window: int = 3
    dilation: int = 1
    include_center: bool = True

    def __post_init__(self):
        if self.window < 1 or self.window % 2 == 0:
            raise ValidationError(f"window must be odd and >= 1, got {self.window}")
        if self.dilation < 1:
            raise ValidationError(f"dilation must be >= 1, got {self.dilation}")
        if self.window == 1 and not self.include_center:
            raise ValidationError("window 1 without the center pixel leaves no taps")

    @property
    def span(self) -> int:
        return (self.window - 1) * self.dilation + 1


def tap_offsets(spec: NeighborhoodSpec) -> np.ndarray:
    """(T, 2) array of (dy, dx) tap offsets."""
    half = (spec.window - 1) // 2
    offs = [(dy * spec.dilation, dx * spec.dilation)
            for dy in range(-half, half + 1)
            for dx in range(-half, half + 1)
            if spec.include_center or (dy, dx) != (0, 0)]
    return np.array(offs, dtype=np.int64).reshape(-1, 2)


def _check_spec(phi, spec):
    # Border clipping keeps oversized windows well defined (the softmax
    # renormalizes over surviving taps), so the only rejected geometry is
    # one where a corner pixel would be left with an empty neighborhood.
    height, width = phi.shape[:2]
    if not spec.include_center and spec.dilation >= max(height, width):
        raise ValidationError(
            f"no in-bounds taps for a corner pixel: dilation {spec.dilation} "
            f"without a center tap on a {height}x{width} map")


def propagate(phi: np.ndarray, spec: NeighborhoodSpec | None = None) -> np.ndarray:
    """Propagated feature map, same (H, W, D) shape as the input."""
    spec = spec or NeighborhoodSpec()
    phi = np.asarray(phi)
    if phi.ndim != 3:
        raise ValidationError("feature map must be (H, W, D)")
    if not np.isfinite(phi).all():
        raise ValidationError("feature map contains non-finite values")
    _check_spec(phi, spec)
    out, _, _ = kernels.lpp_forward(np.ascontiguousarray(phi), tap_offsets(spec))
    return out


def propagate_with_cache(phi: np.ndarray, spec: NeighborhoodSpec):
    """Forward pass that keeps what the backward pass needs.

    Skips the finite-values check; training code monitors loss
    finiteness instead.
    """
    _check_spec(phi, spec)
    offsets = tap_offsets(spec)
    out, alpha, sim = kernels.lpp_forward(np.ascontiguousarray(phi), offsets)
    return out, (phi, alpha, sim, offsets)


def propagate_backward(cache, grad_out: np.ndarray) -> np.ndarray:
    """Gradient of the propagated map w.r.t. the input features."""
    phi, alpha, sim, offsets = cache
    return kernels.lpp_backward(np.ascontiguousarray(phi),
                                np.ascontiguousarray(grad_out), alpha, sim, offsets)
