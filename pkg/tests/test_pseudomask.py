import numpy as np
import pytest

from gazeseg.errors import ValidationError
from gazeseg.heatmap import AttentionHeatmap
from gazeseg.pseudomask import (
    PseudoMaskStack,
    binarize_at,
    binarize_stack,
    load_mask_png,
    make_ladder,
    mask_level_filename,
    save_mask_png,
)


# -- ladder --------------------------------------------------------------


def test_ladder_two_levels_endpoints():
    ladder = make_ladder(0.3, 0.6, 2)
    assert list(ladder.thresholds) == [0.3, 0.6]
    assert ladder.m == 2


def test_ladder_linear_interpolation():
    ladder = make_ladder(0.2, 0.8, 4)
    np.testing.assert_allclose(ladder.thresholds, [0.2, 0.4, 0.6, 0.8], atol=1e-12)


def test_ladder_interior_formula():
    ladder = make_ladder(0.25, 0.55, 5)
    for k, t in enumerate(ladder.thresholds):
        assert t == pytest.approx(0.25 + k * (0.55 - 0.25) / 4)
    assert list(ladder.thresholds) == sorted(ladder.thresholds)


def test_ladder_degenerate_pair_rejected():
    with pytest.raises(ValidationError):
        make_ladder(0.5, 0.5, 2)
    with pytest.raises(ValidationError):
        make_ladder(0.6, 0.3, 2)


def test_ladder_m_below_two_rejected():
    with pytest.raises(ValidationError):
        make_ladder(0.3, 0.6, 1)


def test_ladder_thresholds_must_be_probabilities():
    with pytest.raises(ValidationError):
        make_ladder(0.0, 0.6, 2)
    with pytest.raises(ValidationError):
        make_ladder(0.3, 1.0, 2)


# -- binarization ----------------------------------------------------------


def test_uniform_one_heatmap_all_foreground():
    heat = AttentionHeatmap(np.ones((4, 4), dtype=np.float32))
    stack = binarize_stack(heat, make_ladder(0.3, 0.6, 3))
    for mask in stack.masks:
        assert np.all(mask == 1)


def test_hand_computed_2x2_example():
    heat = AttentionHeatmap(np.array([[0.25, 0.45], [0.65, 0.95]], dtype=np.float32))
    stack = binarize_stack(heat, make_ladder(0.3, 0.6, 2))
    np.testing.assert_array_equal(stack.masks[0], [[0, 1], [1, 1]])
    np.testing.assert_array_equal(stack.masks[1], [[0, 0], [1, 1]])


def test_threshold_comparison_is_inclusive():
    heat = AttentionHeatmap(np.full((3, 3), 0.6, dtype=np.float32))
    stack = binarize_stack(heat, make_ladder(0.3, 0.6, 2))
    assert np.all(stack.masks[1] == 1)


def test_nesting_on_random_heatmaps():
    rng = np.random.default_rng(0)
    for _ in range(20):
        heat = AttentionHeatmap(rng.random((12, 9)).astype(np.float32))
        m = int(rng.integers(2, 5))
        lo = float(rng.uniform(0.05, 0.45))
        hi = float(rng.uniform(lo + 0.1, 0.95))
        stack = binarize_stack(heat, make_ladder(lo, hi, m))
        for k in range(1, m):
            assert np.all(stack.masks[k] <= stack.masks[k - 1])


def test_level0_area_at_least_top_level_area():
    rng = np.random.default_rng(1)
    heat = AttentionHeatmap(rng.random((16, 16)).astype(np.float32))
    stack = binarize_stack(heat, make_ladder(0.2, 0.7, 4))
    assert stack.masks[0].sum() >= stack.masks[-1].sum()


def test_idempotent_rethresholding():
    rng = np.random.default_rng(2)
    heat = AttentionHeatmap(rng.random((8, 8)).astype(np.float32))
    stack = binarize_stack(heat, make_ladder(0.3, 0.6, 2))
    for mask in stack.masks:
        again = binarize_at(AttentionHeatmap(mask.astype(np.float32)), [0.5])[0]
        np.testing.assert_array_equal(again, mask)


def test_empty_top_level_allowed():
    heat = AttentionHeatmap(np.full((4, 4), 0.4, dtype=np.float32))
    stack = binarize_stack(heat, make_ladder(0.3, 0.6, 2))
    assert stack.masks[1].sum() == 0  # no error: background supervision remains


def test_stack_carries_image_id_and_m():
    heat = AttentionHeatmap(np.ones((2, 2), dtype=np.float32))
    stack = binarize_stack(heat, make_ladder(0.3, 0.6, 3), image_id="img42")
    assert stack.image_id == "img42"
    assert stack.m == 3


def test_stack_nesting_validated_on_construction():
    a = np.zeros((2, 2), dtype=np.uint8)
    b = np.ones((2, 2), dtype=np.uint8)
    with pytest.raises(ValidationError):
        PseudoMaskStack(image_id="bad", masks=[a, b])  # level 1 not nested in level 0


def test_binarize_at_multiple_thresholds():
    heat = AttentionHeatmap(np.array([[0.1, 0.5, 0.9]], dtype=np.float32))
    masks = binarize_at(heat, [0.25, 0.75])
    np.testing.assert_array_equal(masks[0], [[0, 1, 1]])
    np.testing.assert_array_equal(masks[1], [[0, 0, 1]])


# -- persistence ------------------------------------------------------------


def test_mask_png_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    mask = (rng.random((9, 13)) > 0.5).astype(np.uint8)
    path = tmp_path / "m.png"
    save_mask_png(path, mask)
    back = load_mask_png(path)
    np.testing.assert_array_equal(back, mask)
    assert back.dtype == np.uint8
    assert set(np.unique(back)).issubset({0, 1})


def test_mask_png_encodes_255(tmp_path):
    from PIL import Image

    mask = np.array([[0, 1]], dtype=np.uint8)
    path = tmp_path / "m.png"
    save_mask_png(path, mask)
    raw = np.asarray(Image.open(path))
    np.testing.assert_array_equal(raw, [[0, 255]])


def test_mask_level_filename():
    assert mask_level_filename("img00042", 1) == "img00042.level1.png"
