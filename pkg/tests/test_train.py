"""Co-training losses, steps, full runs, checkpoints and ensemble inference."""

import math
from dataclasses import replace
from types import SimpleNamespace

import numpy as np
import pytest

from gazeseg.errors import GazeSegError, ShapeError, ValidationError
from gazeseg.lpp import NeighborhoodSpec, propagate_backward, propagate_with_cache
from gazeseg.nn import ModelConfig, build_network
from gazeseg.nn.optim import Adam
from gazeseg.pseudomask import PseudoMaskStack, make_ladder
from gazeseg.seeding import derive_seed, rng_for
from gazeseg.train import (
    LevelEnsemble,
    RunLog,
    TrainConfig,
    TrainDataset,
    consistency_from_probs,
    ensemble_predict,
    fit,
    fit_baseline,
    loss_consistency,
    loss_supervision,
    predict_mask,
    restore_ensemble,
    train_step,
)

from oracles import fd_gradient, jitter_params, relative_error

TINY = ModelConfig(depth=1, base_channels=4, feature_dim=4)


def _tiny_dataset(n=6, size=8, m=2, seed=0, with_gt=True):
    """Random images with nested blob pseudo-masks (level 1 inside level 0)."""
    rng = np.random.default_rng(seed)
    images, stacks, gts = [], [], []
    for i in range(n):
        images.append(rng.uniform(size=(size, size)).astype(np.float32))
        y, x = rng.integers(1, size - 4, size=2)
        levels = []
        mask = np.zeros((size, size), dtype=bool)
        mask[y : y + 4, x : x + 4] = True
        for k in range(m):
            levels.append(mask.copy())
            mask = mask.copy()
            mask[y + m - k, :] = False  # peel one row per level, keeps nesting
        stacks.append(PseudoMaskStack(image_id=f"img{i}", masks=levels))
        gt = levels[0].copy()
        gt[y, :] = False  # gt differs from every level: wrong set non-empty
        gts.append(gt)
    return images, stacks, (gts if with_gt else None)


def _probs(fg):
    """Stack a foreground-probability map into a (..., 2) [bg, fg] map."""
    fg = np.asarray(fg, dtype=np.float64)
    return np.stack([1.0 - fg, fg], axis=-1)


# -- supervision loss ---------------------------------------------------------


def test_ce_near_certain_correct_is_near_zero():
    mask = np.array([[1, 0], [0, 1]], dtype=bool)
    p = _probs(np.where(mask, 1.0 - 1e-7, 1e-7))
    assert loss_supervision(p, mask) == pytest.approx(1e-7, rel=1e-3)


def test_ce_uniform_is_log_two():
    mask = np.array([[1, 0], [1, 1]], dtype=bool)
    p = np.full((2, 2, 2), 0.5)
    assert loss_supervision(p, mask) == pytest.approx(math.log(2.0), rel=1e-12)


def test_ce_two_pixel_hand_example():
    p = _probs(np.array([0.8, 0.4]))
    mask = np.array([1, 0], dtype=bool)
    expected = -(math.log(0.8) + math.log(0.6)) / 2.0
    assert loss_supervision(p, mask) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(0.3670, abs=5e-5)


def test_ce_clamped_away_from_infinity():
    p = _probs(np.array([0.0]))  # probability 0 on the correct class
    loss = loss_supervision(p, np.array([1], dtype=bool))
    assert math.isfinite(loss)
    assert loss == pytest.approx(-math.log(1e-7), rel=1e-9)


def test_ce_sum_reduction():
    p = np.full((3, 2), 0.5)
    mask = np.zeros(3, dtype=bool)
    assert loss_supervision(p, mask, per_pixel=False) == pytest.approx(
        3 * math.log(2.0)
    )


def test_ce_shape_mismatch():
    with pytest.raises(ShapeError):
        loss_supervision(np.full((2, 2, 2), 0.5), np.zeros((3, 2), dtype=bool))
    with pytest.raises(ShapeError):
        loss_supervision(np.full((2, 2, 3), 0.5), np.zeros((2, 2), dtype=bool))


# -- consistency loss ---------------------------------------------------------


def test_consistency_identical_one_hot_is_minus_one():
    p = _probs(np.array([[1.0, 0.0], [0.0, 1.0]]))
    assert consistency_from_probs(p, p.copy()) == -1.0


def test_consistency_disagreeing_one_hot_is_zero():
    p = _probs(np.array([[1.0, 0.0], [0.0, 1.0]]))
    q = _probs(1.0 - np.array([[1.0, 0.0], [0.0, 1.0]]))
    assert consistency_from_probs(p, q) == 0.0


def test_consistency_bounded():
    rng = np.random.default_rng(0)
    for _ in range(20):
        a = _probs(rng.uniform(size=(5, 4)))
        b = _probs(rng.uniform(size=(5, 4)))
        v = consistency_from_probs(a, b)
        assert -1.0 <= v <= 0.0


def test_consistency_shape_mismatch():
    with pytest.raises(ShapeError):
        consistency_from_probs(np.full((2, 2, 2), 0.5), np.full((3, 2, 2), 0.5))
    with pytest.raises(ShapeError):
        consistency_from_probs(np.full((2, 3), 0.5), np.full((2, 3), 0.5))


def test_loss_consistency_composes_propagation_and_classifier():
    net = build_network(TINY, seed=1)
    rng = np.random.default_rng(1)
    phi = rng.uniform(size=(4, 4, 4)).astype(np.float32)
    p_peer = _probs(rng.uniform(size=(4, 4))).astype(np.float32)
    spec = NeighborhoodSpec()
    prop, _ = propagate_with_cache(phi, spec)
    expected = consistency_from_probs(net.classify(prop), p_peer)
    assert loss_consistency(phi, net, p_peer, spec) == pytest.approx(
        expected, rel=1e-6
    )


def test_consistency_gradient_matches_finite_differences():
    # d loss_consistency / d phi on a 4x4, D=3 toy instance
    net = build_network(
        ModelConfig(depth=1, base_channels=2, feature_dim=3), seed=2,
        dtype=np.float64,
    )
    jitter_params(net, seed=3)
    rng = np.random.default_rng(4)
    phi = rng.normal(size=(4, 4, 3))
    p_peer = _probs(rng.uniform(size=(4, 4)))
    spec = NeighborhoodSpec()

    prop, cache = propagate_with_cache(phi, spec)
    p_hat = net.classify(prop[None])  # classifier grads expect a batch axis
    dp_hat = -p_peer[None] / p_hat[..., 0].size
    dprop, _ = net.classify_backward(prop[None], p_hat, dp_hat)
    analytic = propagate_backward(cache, dprop[0])

    numeric = fd_gradient(
        lambda v: loss_consistency(v, net, p_peer, spec), phi
    )
    assert relative_error(analytic, numeric) < 1e-4


# -- train_step ----------------------------------------------------------------


def _make_ensemble(m=2, lam=3.0, seed=0, iters=10, **kw):
    cfg = TrainConfig(m=m, lam=lam, iters=iters, batch_size=2, seed=seed, **kw)
    ladder = make_ladder(0.3, 0.6, m)
    nets = [
        build_network(TINY, derive_seed(seed, f"level-{i}-init")) for i in range(m)
    ]
    return LevelEnsemble(nets, ladder, cfg), [Adam(lr=cfg.lr) for _ in range(m)]


def _batch(seed=0, b=2, size=8, m=2):
    rng = np.random.default_rng(seed)
    xb = rng.uniform(size=(b, size, size, 1)).astype(np.float32)
    masks = [rng.uniform(size=(b, size, size)) < 0.4 for _ in range(m)]
    return xb, masks


def test_step_records_match_start_of_step_losses():
    ens, opts = _make_ensemble(m=2, lam=3.0)
    xb, masks = _batch()
    expected = []
    for i, net in enumerate(ens.networks):
        phi, p = net.forward(xb)
        peer = ens.networks[1 - i].forward(xb)[1]
        ce = loss_supervision(p, masks[i])
        cons = loss_consistency(phi, net, peer, ens.config.lpp_spec)
        expected.append((ce, cons))
    records = train_step(ens, opts, xb, masks, iteration=0)
    assert [r["level"] for r in records] == [0, 1]
    for r, (ce, cons) in zip(records, expected):
        assert r["ce_loss"] == pytest.approx(ce, rel=1e-6)
        assert r["cons_loss"] == pytest.approx(cons, rel=1e-5)
        # for m = 2 the peer multiplier lam/(m-1) is exactly lam
        assert r["total_loss"] == pytest.approx(
            r["ce_loss"] + 3.0 * r["cons_loss"], rel=1e-12
        )


def test_step_cons_is_mean_over_peers_for_m3():
    ens, opts = _make_ensemble(m=3, lam=2.0)
    xb, masks = _batch(m=3)
    probs = [net.forward(xb)[1] for net in ens.networks]
    phi0 = ens.networks[0].forward(xb)[0]
    cons01 = loss_consistency(phi0, ens.networks[0], probs[1], ens.config.lpp_spec)
    cons02 = loss_consistency(phi0, ens.networks[0], probs[2], ens.config.lpp_spec)
    records = train_step(ens, opts, xb, masks, iteration=0)
    assert records[0]["cons_loss"] == pytest.approx(
        (cons01 + cons02) / 2.0, rel=1e-5
    )


def test_step_deterministic_bit_exact():
    xb, masks = _batch(seed=5)
    params = []
    for _ in range(2):
        ens, opts = _make_ensemble(seed=6)
        train_step(ens, opts, xb, masks, iteration=0)
        params.append([dict(n.params) for n in ens.networks])
    for pa, pb in zip(params[0], params[1]):
        for name in pa:
            np.testing.assert_array_equal(pa[name], pb[name])


def test_frozen_level_parameters_do_not_move():
    ens, opts = _make_ensemble(lam=3.0)
    xb, masks = _batch()
    before = {k: v.copy() for k, v in ens.networks[1].params.items()}
    train_step(ens, opts, xb, masks, iteration=0, freeze_levels={1})
    for name, v in before.items():
        np.testing.assert_array_equal(ens.networks[1].params[name], v)
    # the unfrozen level did move
    moved = build_network(TINY, derive_seed(0, "level-0-init"))
    assert any(
        not np.array_equal(ens.networks[0].params[n], moved.params[n])
        for n in moved.params
    )


def test_peer_update_is_start_of_step_synchronous():
    # level 1's update must be identical whether or not level 0 updates in
    # the same step, because peers are snapshot at the start of the step
    xb, masks = _batch(seed=7)
    results = []
    for freeze in (frozenset(), frozenset({0})):
        ens, opts = _make_ensemble(seed=8, lam=3.0)
        train_step(ens, opts, xb, masks, iteration=0, freeze_levels=freeze)
        results.append({k: v.copy() for k, v in ens.networks[1].params.items()})
    for name in results[0]:
        np.testing.assert_array_equal(results[0][name], results[1][name])


def test_step_rejects_wrong_mask_level_count():
    ens, opts = _make_ensemble(m=2)
    xb, masks = _batch(m=3)
    with pytest.raises(ShapeError):
        train_step(ens, opts, xb, masks, iteration=0)


def test_non_finite_loss_aborts_with_diagnostic_record():
    ens, opts = _make_ensemble()
    ens.networks[0].params["g_b"][:] = np.nan
    xb, masks = _batch()
    with pytest.raises(GazeSegError, match="non-finite loss") as excinfo:
        train_step(ens, opts, xb, masks, iteration=4)
    record = excinfo.value.record
    assert record["event"] == "non_finite_loss"
    assert record["iter"] == 4 and record["level"] == 0


# -- fit ------------------------------------------------------------------------


def test_fit_bookkeeping_and_eval_records():
    images, stacks, gts = _tiny_dataset(n=6)
    dataset = TrainDataset(images, stacks, gt_masks=gts)
    cfg = TrainConfig(m=2, lam=3.0, iters=50, batch_size=2, seed=0, eval_interval=25)
    ens, log = fit(
        dataset, make_ladder(0.3, 0.6, 2), TINY, cfg,
        eval_images=images[:2], eval_masks=gts[:2], memo_subset=4,
    )
    losses = log.loss_records()
    assert len(losses) == 50 * 2
    assert {r["level"] for r in losses} == {0, 1}
    evals = log.eval_records()
    assert [r["iter"] for r in evals] == [25, 50]
    for r in evals:
        assert len(r["per_level_dice"]) == 2
        assert 0.0 <= r["ensemble_dice"] <= 1.0
        assert 0.0 <= r["early_learning"] <= 1.0
        assert 0.0 <= r["overfitting"] <= 1.0


def test_fit_loss_decreases_over_three_seeds():
    for seed in range(3):
        images, stacks, gts = _tiny_dataset(n=6, seed=seed)
        dataset = TrainDataset(images, stacks)
        cfg = TrainConfig(m=2, lam=3.0, iters=50, batch_size=2, seed=seed)
        _, log = fit(dataset, make_ladder(0.3, 0.6, 2), TINY, cfg)
        totals = [r["total_loss"] for r in log.loss_records()]
        head = float(np.mean(totals[: 10 * 2]))  # first 10 iters, both levels
        tail = float(np.mean(totals[-10 * 2 :]))
        assert tail < head, f"seed {seed}: {tail} !< {head}"


def test_fit_lambda_zero_levels_evolve_independently():
    images, stacks, _ = _tiny_dataset(n=6, with_gt=False)
    cfg = TrainConfig(m=2, lam=0.0, iters=10, batch_size=2, seed=3)
    ladder = make_ladder(0.3, 0.6, 2)
    ens_a, _ = fit(TrainDataset(images, stacks), ladder, TINY, cfg)
    # empty every level-1 mask; level 0's trajectory must not notice
    stacks_b = [
        PseudoMaskStack(
            image_id=s.image_id,
            masks=[s.masks[0], np.zeros_like(np.asarray(s.masks[1]))],
        )
        for s in stacks
    ]
    ens_b, _ = fit(TrainDataset(images, stacks_b), ladder, TINY, cfg)
    for name in ens_a.networks[0].params:
        np.testing.assert_array_equal(
            ens_a.networks[0].params[name], ens_b.networks[0].params[name]
        )
    assert any(
        not np.array_equal(ens_a.networks[1].params[n], ens_b.networks[1].params[n])
        for n in ens_a.networks[1].params
    )


def test_fit_lambda_zero_level0_matches_ce_only_baseline():
    # with lam = 0 each level is an independent CE-only training; level 0
    # must replay bit-exact as a single-network run on the level-0 masks
    images, stacks, _ = _tiny_dataset(n=6, with_gt=False)
    cfg = TrainConfig(m=2, lam=0.0, iters=10, batch_size=2, seed=4)
    ens, _ = fit(TrainDataset(images, stacks), make_ladder(0.3, 0.6, 2), TINY, cfg)
    net, _ = fit_baseline(
        images, [s.masks[0] for s in stacks], None, TINY, cfg
    )
    assert net.params.keys() == ens.networks[0].params.keys()
    for name in net.params:
        np.testing.assert_array_equal(net.params[name], ens.networks[0].params[name])


def test_fit_checkpoint_resume_bit_exact(tmp_path):
    images, stacks, _ = _tiny_dataset(n=6, with_gt=False)
    ladder = make_ladder(0.3, 0.6, 2)
    cfg = TrainConfig(
        m=2, lam=3.0, iters=20, batch_size=2, seed=5, checkpoint_interval=10
    )
    dir_a = tmp_path / "full"
    ens_a, _ = fit(TrainDataset(images, stacks), ladder, TINY, cfg, out_dir=dir_a)
    ens_b, _ = fit(
        TrainDataset(images, stacks), ladder, TINY, cfg,
        resume_from=dir_a / "checkpoint_000010.npz",
    )
    for na, nb in zip(ens_a.networks, ens_b.networks):
        for name in na.params:
            np.testing.assert_array_equal(na.params[name], nb.params[name])


def test_restore_ensemble_round_trip(tmp_path):
    images, stacks, _ = _tiny_dataset(n=4, with_gt=False)
    ladder = make_ladder(0.3, 0.6, 2)
    cfg = TrainConfig(m=2, lam=3.0, iters=5, batch_size=2, seed=6)
    ens, _ = fit(
        TrainDataset(images, stacks), ladder, TINY, cfg, out_dir=tmp_path
    )
    back = restore_ensemble(tmp_path / "checkpoint_final.npz", ladder, TINY, cfg)
    for na, nb in zip(ens.networks, back.networks):
        for name in na.params:
            np.testing.assert_array_equal(na.params[name], nb.params[name])


def test_fit_ladder_level_mismatch():
    images, stacks, _ = _tiny_dataset(n=4, with_gt=False)
    cfg = TrainConfig(m=2, iters=1)
    with pytest.raises(ValidationError):
        fit(TrainDataset(images, stacks), make_ladder(0.3, 0.6, 3), TINY, cfg)


def test_dataset_validation():
    images, stacks, gts = _tiny_dataset(n=4)
    with pytest.raises(ValidationError):
        TrainDataset([], [])
    with pytest.raises(ValidationError):
        TrainDataset(images, stacks[:2])
    with pytest.raises(ValidationError):
        TrainDataset(images, stacks, gt_masks=gts[:1])


# -- config and log --------------------------------------------------------------


def test_train_config_validation():
    with pytest.raises(ValidationError):
        TrainConfig(m=1)
    with pytest.raises(ValidationError):
        TrainConfig(lam=-0.1)
    with pytest.raises(ValidationError):
        TrainConfig(iters=0)
    with pytest.raises(ValidationError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValidationError):
        TrainConfig(optimizer="rmsprop")


def test_train_config_large_lambda_warns():
    with pytest.warns(UserWarning, match="degenerate"):
        TrainConfig(lam=7.5)


def test_train_config_dict_round_trip():
    cfg = TrainConfig(
        m=3, lam=2.5, iters=100, batch_size=4, optimizer="sgd", seed=9,
        lpp_spec=NeighborhoodSpec(window=5, dilation=2, include_center=False),
    )
    d = cfg.to_dict()
    assert d["lambda"] == 2.5  # serialized under the paper-facing name
    assert TrainConfig.from_dict(d) == cfg


def test_runlog_round_trip(tmp_path):
    log = RunLog()
    log.append({"iter": 0, "level": 0, "ce_loss": 0.5})
    log.append({"event": "eval", "iter": 10, "ensemble_dice": 0.75})
    text = log.to_jsonl()
    assert text.count("\n") == 2
    assert '"ce_loss":0.5' in text  # compact separators, sorted keys
    path = tmp_path / "runlog.jsonl"
    log.save(path)
    back = RunLog.load(path)
    assert back.records == log.records
    assert len(back.loss_records()) == 1
    assert len(back.eval_records()) == 1


# -- inference --------------------------------------------------------------------


class _StubNet:
    def __init__(self, fg):
        self._p = _probs(fg).astype(np.float32)

    def forward(self, x):
        return None, self._p[None]


def test_ensemble_of_identical_networks_equals_single():
    cfg = TrainConfig(m=2, iters=1)
    nets = [build_network(TINY, seed=30) for _ in range(2)]
    ens = LevelEnsemble(nets, make_ladder(0.3, 0.6, 2), cfg)
    image = np.random.default_rng(30).uniform(size=(8, 8)).astype(np.float32)
    probs, mask = ensemble_predict(ens, image)
    _, p_single = nets[0].forward(image[None, :, :, None])
    np.testing.assert_array_equal(probs, p_single[0].astype(np.float64))
    np.testing.assert_array_equal(mask, predict_mask(nets[0], image))


def test_ensemble_mean_hand_example():
    ens = SimpleNamespace(networks=[_StubNet([[0.9]]), _StubNet([[0.5]])])
    probs, mask = ensemble_predict(ens, np.zeros((1, 1)))
    np.testing.assert_allclose(probs[0, 0], [0.3, 0.7], atol=1e-7)
    assert mask[0, 0] == 1


def test_ensemble_tie_goes_to_background():
    ens = SimpleNamespace(networks=[_StubNet([[0.5]]), _StubNet([[0.5]])])
    _, mask = ensemble_predict(ens, np.zeros((1, 1)))
    assert mask[0, 0] == 0


def test_ensemble_prediction_order_invariant():
    a, b, c = _StubNet([[0.9, 0.2]]), _StubNet([[0.4, 0.8]]), _StubNet([[0.1, 0.5]])
    p1, m1 = ensemble_predict(SimpleNamespace(networks=[a, b, c]), np.zeros((1, 2)))
    p2, m2 = ensemble_predict(SimpleNamespace(networks=[c, a, b]), np.zeros((1, 2)))
    np.testing.assert_allclose(p1, p2, atol=1e-12)
    np.testing.assert_array_equal(m1, m2)


def test_ensemble_probabilities_sum_to_one():
    cfg = TrainConfig(m=2, iters=1)
    nets = [build_network(TINY, seed=s) for s in (40, 41)]
    ens = LevelEnsemble(nets, make_ladder(0.3, 0.6, 2), cfg)
    image = np.random.default_rng(42).uniform(size=(8, 8)).astype(np.float32)
    probs, _ = ensemble_predict(ens, image)
    np.testing.assert_allclose(probs.sum(axis=-1), 1.0, atol=1e-6)


def test_predict_rejects_multichannel_image():
    net = build_network(TINY, seed=50)
    with pytest.raises(ShapeError):
        predict_mask(net, np.zeros((8, 8, 3)))
