"""One-seed pilot of the synthetic end-to-end experiment.

Generates the full synthetic corpus, builds pseudo-masks, trains the
three arms (m=2 lam=3, m=2 lam=0, single-level fixed-threshold) for one
seed and prints test Dice plus the memorization series. Used to size the
acceptance experiment; not part of the test suite.
"""

import json
import sys
import time

import numpy as np

from gazeseg import backend
from gazeseg.crf import CrfParams, refine_heatmap
from gazeseg.gaze import (
    ShapeConfig,
    SimulatorConfig,
    generate_synthetic_dataset,
    simulate_gaze,
)
from gazeseg.heatmap import render_heatmap
from gazeseg.metrics import dice
from gazeseg.nn import ModelConfig
from gazeseg.pseudomask import binarize_at, binarize_stack, make_ladder
from gazeseg.seeding import derive_seed, rng_for
from gazeseg.train import (
    TrainConfig,
    TrainDataset,
    ensemble_predict,
    fit,
    fit_baseline,
    predict_mask,
)

SEED = sys.argv[1] if len(sys.argv) > 1 else "0"
ITERS = int(sys.argv[2]) if len(sys.argv) > 2 else 1500
THETA_ALPHA = float(sys.argv[3]) if len(sys.argv) > 3 else 12.0
CRF_ITERS = int(sys.argv[4]) if len(sys.argv) > 4 else 5
N_TEST = int(sys.argv[5]) if len(sys.argv) > 5 else 40
FLIP = bool(int(sys.argv[6])) if len(sys.argv) > 6 else True
N_IMAGES = 200
SIZE = 64

t0 = time.time()
print(f"backend={backend.BACKEND} seed={SEED} iters={ITERS} "
      f"theta_alpha={THETA_ALPHA} crf_iters={CRF_ITERS} "
      f"n_test={N_TEST} flip={FLIP}", flush=True)

pairs = generate_synthetic_dataset(
    N_IMAGES, SIZE, ShapeConfig(n_distractors=3), seed=11
)
ladder = make_ladder(0.3, 0.6, 2)
params = CrfParams(theta_alpha=THETA_ALPHA, w_app=2.0, w_smooth=1.0,
                   n_iters=CRF_ITERS)

refined = []
stacks = []
for i, (img, gt) in enumerate(pairs):
    seq = simulate_gaze(
        gt,
        SimulatorConfig(distractor_rate=0.15, n_scan_fixations=10,
                        n_cover_fixations=90,
                        seed=derive_seed(11, f"gaze-{i}")),
        image_id=f"img{i:05d}",
    )
    heat = render_heatmap(seq, sigma=3.5, weighting="uniform")
    ref = refine_heatmap(img, heat, params)
    refined.append(ref)
    stacks.append(binarize_stack(ref, ladder, image_id=f"img{i:05d}"))
print(f"masks built {time.time()-t0:.0f}s", flush=True)

# pseudo-mask quality vs gt
for k in range(2):
    ds = [dice(stacks[i].masks[k], pairs[i][1]) for i in range(N_IMAGES)]
    print(f"pseudo level{k} dice vs gt: {np.mean(ds):.3f}")
mid = [binarize_at(refined[i], [0.45])[0] for i in range(N_IMAGES)]
print(f"pseudo mid(0.45) dice vs gt: {np.mean([dice(mid[i], pairs[i][1]) for i in range(N_IMAGES)]):.3f}")

perm = rng_for(777, "eval-split").permutation(N_IMAGES)
test_idx, train_idx = perm[:N_TEST], perm[N_TEST:]
images = [pairs[i][0] for i in train_idx]
gts = [pairs[i][1] for i in train_idx]
tr_stacks = [stacks[i] for i in train_idx]
test_images = [pairs[i][0] for i in test_idx]
test_gts = [pairs[i][1] for i in test_idx]

mc = ModelConfig(depth=2, base_channels=8, feature_dim=8)
base_cfg = dict(
    m=2, iters=ITERS, batch_size=4, optimizer="adam", lr=4e-4,
    seed=SEED, eval_interval=100, flip_augment=FLIP,
)

def test_dice_ens(ens):
    return float(np.mean([dice(ensemble_predict(ens, im)[1], gt)
                          for im, gt in zip(test_images, test_gts)]))

def test_dice_net(net):
    return float(np.mean([dice(predict_mask(net, im), gt)
                          for im, gt in zip(test_images, test_gts)]))

def memo_series(log):
    return [(r["iter"], round(r.get("overfitting", float("nan")), 4),
             round(r.get("early_learning", float("nan")), 4))
            for r in log.eval_records()]

seeds = [int(s) for s in str(SEED).split("+")]
for seed in seeds:
    base_cfg["seed"] = seed
    results = {}
    for lam in (3.0, 0.0):
        t1 = time.time()
        ds = TrainDataset(images, tr_stacks, gt_masks=gts)
        ens, log = fit(ds, ladder, mc, TrainConfig(lam=lam, **base_cfg), memo_subset=32)
        d = test_dice_ens(ens)
        results[f"lam{lam:g}"] = d
        print(f"seed={seed} lam={lam:g}: test dice {d:.4f}  ({time.time()-t1:.0f}s)",
              flush=True)
        print("  memo (iter, overfit, early):", memo_series(log), flush=True)

    t1 = time.time()
    base_masks = [binarize_at(refined[i], [0.45])[0] for i in train_idx]
    net, log = fit_baseline(
        images, base_masks, gts, mc, TrainConfig(lam=0.0, **base_cfg), memo_subset=32
    )
    d = test_dice_net(net)
    results["baseline"] = d
    print(f"seed={seed} baseline: test dice {d:.4f}  ({time.time()-t1:.0f}s)",
          flush=True)
    print("  memo:", memo_series(log), flush=True)
    print(json.dumps({"seed": seed, **results}))

print(f"total {time.time()-t0:.0f}s")
