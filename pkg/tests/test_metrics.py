"""Dice, wrong-pixel sets and the memorization diagnostics."""

import numpy as np
import pytest

from gazeseg.errors import ShapeError
from gazeseg.metrics import (
    dice,
    evaluate_ensemble,
    memorization_metrics,
    wrong_pixel_set,
)

from oracles import dice_reference


def test_dice_identical_masks():
    m = np.array([[1, 0], [1, 1]], dtype=bool)
    assert dice(m, m) == 1.0


def test_dice_disjoint_masks():
    a = np.array([1, 1, 0, 0], dtype=bool)
    b = np.array([0, 0, 1, 1], dtype=bool)
    assert dice(a, b) == 0.0


def test_dice_hand_example():
    a = np.array([1, 1, 0, 0], dtype=bool)
    b = np.array([1, 0, 0, 0], dtype=bool)
    assert dice(a, b) == pytest.approx(2.0 / 3.0)


def test_dice_both_empty_is_one():
    z = np.zeros((3, 3), dtype=bool)
    assert dice(z, z) == 1.0


def test_dice_one_empty_is_zero():
    z = np.zeros(4, dtype=bool)
    o = np.array([1, 0, 0, 0], dtype=bool)
    assert dice(z, o) == 0.0
    assert dice(o, z) == 0.0


def test_dice_symmetry_and_self_identity():
    rng = np.random.default_rng(0)
    for _ in range(50):
        a = rng.random((6, 7)) < rng.random()
        b = rng.random((6, 7)) < rng.random()
        assert dice(a, b) == dice(b, a)
        assert dice(a, a) == 1.0


def test_dice_matches_set_reference():
    rng = np.random.default_rng(1)
    for _ in range(200):
        shape = tuple(rng.integers(1, 9, size=2))
        a = rng.random(shape) < rng.random()
        b = rng.random(shape) < rng.random()
        assert dice(a, b) == dice_reference(a, b)


def test_dice_shape_mismatch():
    with pytest.raises(ShapeError):
        dice(np.zeros((2, 2), bool), np.zeros((2, 3), bool))


def test_dice_accepts_nonboolean_input():
    assert dice(np.array([1.0, 0.0]), np.array([True, False])) == 1.0


# -- wrong pixel set ---------------------------------------------------------


def test_wrong_set_empty_when_equal():
    m = np.array([[1, 0], [0, 1]], dtype=bool)
    assert wrong_pixel_set(m, m).size == 0


def test_wrong_set_full_when_complement():
    m = np.array([1, 0, 1], dtype=bool)
    np.testing.assert_array_equal(wrong_pixel_set(~m, m), [0, 1, 2])


def test_wrong_set_hand_example():
    pseudo = np.array([1, 1, 0, 0], dtype=bool)
    gt = np.array([1, 0, 0, 1], dtype=bool)
    np.testing.assert_array_equal(wrong_pixel_set(pseudo, gt), [1, 3])


def test_wrong_set_uses_flat_indices():
    pseudo = np.array([[1, 1], [0, 0]], dtype=bool)
    gt = np.array([[1, 0], [0, 1]], dtype=bool)
    np.testing.assert_array_equal(wrong_pixel_set(pseudo, gt), [1, 3])


# -- memorization metrics ----------------------------------------------------


def test_memorization_hand_example():
    # S = {1, 3}; gt|S = (0, 1), pseudo|S = (1, 0), pred|S = (1, 1)
    pseudo = np.array([1, 1, 0, 0], dtype=bool)
    gt = np.array([1, 0, 0, 1], dtype=bool)
    pred = np.array([1, 1, 0, 1], dtype=bool)
    early, over = memorization_metrics(pred, pseudo, gt)
    assert early == pytest.approx(2.0 / 3.0)
    assert over == pytest.approx(2.0 / 3.0)


def test_memorization_pred_matches_gt():
    pseudo = np.array([1, 1, 0, 0], dtype=bool)
    gt = np.array([1, 0, 0, 1], dtype=bool)
    early, over = memorization_metrics(gt, pseudo, gt)
    assert early == 1.0
    # on S the pseudo-mask is the complement of gt, so matching gt exactly
    # (with gt|S neither empty nor all of S) zeroes the overlap with pseudo
    assert over == 0.0


def test_memorization_pred_matches_pseudo():
    pseudo = np.array([1, 1, 0, 0], dtype=bool)
    gt = np.array([1, 0, 0, 1], dtype=bool)
    _, over = memorization_metrics(pseudo, pseudo, gt)
    assert over == 1.0


def test_memorization_clean_labels_marker():
    gt = np.array([1, 0, 1], dtype=bool)
    assert memorization_metrics(gt, gt.copy(), gt) is None


def test_memorization_values_bounded():
    rng = np.random.default_rng(2)
    for _ in range(50):
        gt = rng.random((5, 5)) < 0.5
        pseudo = rng.random((5, 5)) < 0.5
        pred = rng.random((5, 5)) < 0.5
        out = memorization_metrics(pred, pseudo, gt)
        if out is None:
            continue
        early, over = out
        assert 0.0 <= early <= 1.0
        assert 0.0 <= over <= 1.0


# -- ensemble evaluation -------------------------------------------------------


def test_evaluate_single_perfect_image():
    gt = np.array([[1, 0], [0, 0]], dtype=bool)
    out = evaluate_ensemble(lambda img: gt, [np.zeros((2, 2))], [gt])
    assert out["ensemble"] == 1.0
    assert out["n_evaluated"] == 1
    assert out["n_skipped"] == 0
    assert out["per_level"] is None


def test_evaluate_mean_over_images():
    gt = np.ones((2, 2), dtype=bool)
    images = [np.zeros((2, 2)), np.ones((2, 2))]
    # predict returns the image itself as a mask: dice 0.0 then 1.0
    out = evaluate_ensemble(lambda img: img.astype(bool), images, [gt, gt])
    assert out["ensemble"] == pytest.approx(0.5)


def test_evaluate_per_level_lengths():
    gt = np.ones((2, 2), dtype=bool)
    fns = [lambda img: gt, lambda img: ~gt, lambda img: gt]
    out = evaluate_ensemble(lambda img: gt, [np.zeros((2, 2))], [gt], per_level_fns=fns)
    assert len(out["per_level"]) == 3
    assert out["per_level"] == [1.0, 0.0, 1.0]


def test_evaluate_skips_missing_gt_with_warning():
    gt = np.ones((2, 2), dtype=bool)
    images = [np.zeros((2, 2))] * 3
    with pytest.warns(UserWarning, match="skipped 2"):
        out = evaluate_ensemble(lambda img: gt, images, [None, gt, None])
    assert out["n_evaluated"] == 1
    assert out["n_skipped"] == 2


def test_evaluate_empty_set_rejected():
    with pytest.raises(ShapeError):
        evaluate_ensemble(lambda img: img, [], [])
    with pytest.raises(ShapeError), pytest.warns(UserWarning):
        evaluate_ensemble(lambda img: img, [np.zeros((2, 2))], [None])
    with pytest.raises(ShapeError):
        evaluate_ensemble(lambda img: img, [np.zeros((2, 2))], [])
