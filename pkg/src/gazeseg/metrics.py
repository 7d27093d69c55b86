"""Dice evaluation and memorization-dynamics diagnostics.

The memorization diagnostic tracks what a network does on the pixels where
the pseudo-mask disagrees with ground truth: agreement with ground truth
there ("early learning") means the network generalizes past the label
noise, while agreement with the pseudo-mask ("overfitting") means it is
memorizing the noise. On that wrong-pixel set the two references are exact
complements, so the two curves pull against each other.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError

__all__ = [
    "MemorizationPoint",
    "dice",
    "wrong_pixel_set",
    "memorization_metrics",
    "evaluate_ensemble",
]


@dataclass(frozen=True)
class MemorizationPoint:
    iteration: int
    early_learning: float
    overfitting: float


def _as_binary(mask: np.ndarray) -> np.ndarray:
    return np.asarray(mask).astype(bool)


def dice(pred: np.ndarray, gt: np.ndarray) -> float:
    """2|A∩B| / (|A|+|B|), with the both-empty case defined as 1.0."""
    a = _as_binary(pred)
    b = _as_binary(gt)
    if a.shape != b.shape:
        raise ShapeError(f"mask shapes differ: {a.shape} vs {b.shape}")
    denom = int(a.sum()) + int(b.sum())
    if denom == 0:
        return 1.0
    inter = int(np.logical_and(a, b).sum())
    return 2.0 * inter / denom


def wrong_pixel_set(pseudo: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """Flat indices of pixels where the pseudo-mask disagrees with gt."""
    a = _as_binary(pseudo)
    b = _as_binary(gt)
    if a.shape != b.shape:
        raise ShapeError(f"mask shapes differ: {a.shape} vs {b.shape}")
    return np.flatnonzero(a.ravel() != b.ravel())


def memorization_metrics(pred: np.ndarray, pseudo: np.ndarray, gt: np.ndarray):
    """Dice of pred vs gt and pred vs pseudo, restricted to the wrong set.

    Returns (early_learning, overfitting), or None when the pseudo-mask has
    no wrong pixels (both quantities are undefined there).
    """
    s = wrong_pixel_set(pseudo, gt)
    if s.size == 0:
        return None
    p = _as_binary(pred).ravel()[s]
    g = _as_binary(gt).ravel()[s]
    n = _as_binary(pseudo).ravel()[s]
    return dice(p, g), dice(p, n)


def evaluate_ensemble(predict_fn, images, gt_masks, per_level_fns=None):
    """Mean Dice of an ensemble (and optionally each level) over a dataset.

    predict_fn maps one image to a binary mask; per_level_fns is an optional
    list of such callables, one per level. Images whose gt entry is None are
    skipped with a warning. Returns a dict with 'ensemble', 'per_level'
    (list, or None), 'n_evaluated' and 'n_skipped'.
    """
    if len(images) == 0:
        raise ShapeError("evaluation set is empty")
    if len(images) != len(gt_masks):
        raise ShapeError(
            f"got {len(images)} images but {len(gt_masks)} ground-truth masks"
        )
    ens_scores = []
    level_scores = [[] for _ in (per_level_fns or [])]
    n_skipped = 0
    for img, gt in zip(images, gt_masks):
        if gt is None:
            n_skipped += 1
            continue
        ens_scores.append(dice(predict_fn(img), gt))
        for k, fn in enumerate(per_level_fns or []):
            level_scores[k].append(dice(fn(img), gt))
    if n_skipped:
        warnings.warn(
            f"skipped {n_skipped} image(s) with no ground-truth mask",
            stacklevel=2,
        )
    if not ens_scores:
        raise ShapeError("no image in the evaluation set has a ground-truth mask")
    result = {
        "ensemble": float(np.mean(ens_scores)),
        "per_level": [float(np.mean(s)) for s in level_scores] if per_level_fns else None,
        "n_evaluated": len(ens_scores),
        "n_skipped": n_skipped,
    }
    return result
