"""Command-line pipeline orchestration.

Subcommands wire the library end to end against a run directory:

  simulate  synthetic images + gt masks + fixation file (with manifest)
  masks     fixations -> heatmaps -> CRF refinement -> pseudo-mask stacks
  train     multi-level co-training runs (checkpoints + JSONL run log)
  eval      per-level + ensemble Dice reports, optional multi-seed summary
  plot      loss / Dice / memorization curves and sweep summaries

Everything derived is cached under <output.dir>: dataset/ (simulate),
derived/ (masks; sidecar .meta.json files key each artifact by input
hashes + stage params), runs/<name>/ (train; config snapshot, runlog,
checkpoints). Exit code 0 on success; failures print one machine-readable
JSON line to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import dataclasses
import glob
import hashlib
import io
import json
import os
import sys
import warnings

import numpy as np

from . import config as cfgmod
from .crf import refine_heatmap
from .errors import GazeSegError, ValidationError
from .gaze import (
    SimulatorConfig,
    generate_synthetic_dataset,
    parse_fixation_file_with_report,
    parse_geometry,
    rescale_sequence,
    simulate_gaze,
    write_fixation_file,
)
from .heatmap import load_heatmap, render_heatmap, save_heatmap
from .metrics import evaluate_ensemble
from .nn import build_network
from .pseudomask import (
    PseudoMaskStack,
    binarize_stack,
    load_mask_png,
    mask_level_filename,
    save_mask_png,
)
from .seeding import derive_seed
from .train import (
    TrainDataset,
    ensemble_predict,
    fit,
    predict_mask,
    restore_ensemble,
)

__all__ = ["main", "cmd_simulate", "cmd_masks", "cmd_train", "cmd_eval", "cmd_plot"]


# -- hashing / cache helpers --------------------------------------------------


def _sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _key_json(key: dict) -> str:
    return json.dumps(key, sort_keys=True, separators=(",", ":"))


def _up_to_date(artifacts, meta_path, key: dict) -> bool:
    if not all(os.path.exists(p) for p in artifacts):
        return False
    if not os.path.exists(meta_path):
        return False
    try:
        with open(meta_path, encoding="utf-8") as fh:
            return fh.read() == _key_json(key)
    except OSError:
        return False


def _write_meta(meta_path, key: dict) -> None:
    with open(meta_path, "w", encoding="utf-8") as fh:
        fh.write(_key_json(key))


def _dataset_root(cfg) -> str:
    return os.path.join(cfg.output_dir, "dataset")


def _derived_root(cfg) -> str:
    return os.path.join(cfg.output_dir, "derived")


def _runs_root(cfg) -> str:
    return os.path.join(cfg.output_dir, "runs")


# -- dataset loading ----------------------------------------------------------


def _load_image_gray(path, resolution=None) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        im = im.convert("L")
        if resolution is not None and im.size != (resolution, resolution):
            im = im.resize((resolution, resolution), Image.BILINEAR)
        arr = np.asarray(im, dtype=np.float32) / 255.0
    return arr


def _load_mask_resized(path, resolution=None) -> np.ndarray:
    from PIL import Image

    if resolution is None:
        return load_mask_png(path)
    with Image.open(path) as im:
        im = im.convert("L").resize((resolution, resolution), Image.NEAREST)
        return (np.asarray(im) >= 128).astype(np.uint8)


def _load_dataset(cfg):
    """Resolve the configured dataset into ids, images, sequences and gt.

    Returns a dict with sorted image_ids, per-id image arrays (float32
    [0, 1]), per-id source file paths, per-id GazeSequence (missing ids
    are simply absent), per-id gt mask or None, and the parse report.
    """
    ds = cfg.dataset
    if ds["kind"] == "synthetic":
        root = _dataset_root(cfg)
        img_dir = os.path.join(root, "images")
        fix_path = os.path.join(root, "fixations.csv")
        if not os.path.isdir(img_dir) or not os.path.exists(fix_path):
            raise ValidationError(
                f"no dataset at {root}; run the simulate command first"
            )
        paths = sorted(glob.glob(os.path.join(img_dir, "*.png")))
        gt_dir = os.path.join(root, "gt")
        geometry = None
        resolution = None
    else:
        paths = sorted(
            p
            for pattern in ("*.png", "*.jpg", "*.jpeg", "*.bmp", "*.tif", "*.tiff")
            for p in glob.glob(os.path.join(ds["images_dir"], pattern))
        )
        fix_path = ds["fixations"]
        if not os.path.exists(fix_path):
            raise ValidationError(f"fixation file not found: {fix_path}")
        gt_dir = ds.get("gt_dir") or ""
        geometry = None
        if ds.get("geometry"):
            with open(ds["geometry"], encoding="utf-8") as fh:
                geometry = parse_geometry(fh.read())
        resolution = ds.get("resolution")
    if not paths:
        raise ValidationError("dataset contains no images")

    ids = [os.path.splitext(os.path.basename(p))[0] for p in paths]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate image ids (same stem, different files)")
    id_to_path = dict(zip(ids, paths))

    from PIL import Image

    native_sizes = {}
    for i, p in id_to_path.items():
        with Image.open(p) as im:
            native_sizes[i] = im.size  # (w, h)

    with open(fix_path, encoding="utf-8") as fh:
        sequences, report = parse_fixation_file_with_report(
            fh, geometry, native_sizes
        )
    seq_by_id = {}
    for seq in sequences:
        if seq.image_id in id_to_path:
            if resolution is not None:
                seq = rescale_sequence(seq, resolution, resolution)
            seq_by_id[seq.image_id] = seq

    images = {i: _load_image_gray(p, resolution) for i, p in id_to_path.items()}

    gt = {}
    for i in ids:
        gp = os.path.join(gt_dir, f"{i}.png") if gt_dir else ""
        gt[i] = _load_mask_resized(gp, resolution) if gp and os.path.exists(gp) else None

    return {
        "ids": ids,
        "paths": id_to_path,
        "images": images,
        "sequences": seq_by_id,
        "gt": gt,
        "parse_report": report,
        "resolution": resolution,
    }


def _eval_split(cfg, ids):
    """Deterministic train/eval id split, shared across training seeds."""
    frac = cfg.eval["split"]
    n_eval = int(round(frac * len(ids)))
    if n_eval == 0:
        return list(ids), []
    if n_eval >= len(ids):
        raise ValidationError(
            f"eval split {frac} leaves no training images (n={len(ids)})"
        )
    rng = np.random.default_rng(derive_seed(cfg.eval["split_seed"], "eval-split"))
    perm = rng.permutation(len(ids))
    eval_ids = sorted(ids[k] for k in perm[:n_eval])
    train_ids = [i for i in ids if i not in set(eval_ids)]
    return train_ids, eval_ids


# -- simulate -----------------------------------------------------------------


def cmd_simulate(cfg, force: bool = False) -> dict:
    """Generate the synthetic dataset + gaze and write it with a manifest."""
    ds = cfg.dataset
    if ds["kind"] != "synthetic":
        raise ValidationError("simulate requires a synthetic dataset config")
    root = _dataset_root(cfg)
    if os.path.isdir(root) and os.listdir(root) and not force:
        raise ValidationError(
            f"{root} already exists and is not empty; pass --force to overwrite"
        )
    img_dir = os.path.join(root, "images")
    gt_dir = os.path.join(root, "gt")
    os.makedirs(img_dir, exist_ok=True)
    os.makedirs(gt_dir, exist_ok=True)

    from PIL import Image

    pairs = generate_synthetic_dataset(
        ds["n_images"], ds["image_size"], seed=ds["seed"]
    )
    sequences = []
    files: dict[str, str] = {}
    for idx, (image, mask) in enumerate(pairs):
        image_id = f"img{idx:05d}"
        img_path = os.path.join(img_dir, f"{image_id}.png")
        Image.fromarray(np.round(image * 255.0).astype(np.uint8), mode="L").save(img_path)
        gt_path = os.path.join(gt_dir, f"{image_id}.png")
        save_mask_png(gt_path, mask)
        sim = SimulatorConfig(
            n_scan_fixations=ds["n_scan_fixations"],
            n_cover_fixations=ds["n_cover_fixations"],
            jitter_sigma=ds["jitter_sigma"],
            distractor_rate=ds["distractor_rate"],
            seed=derive_seed(ds["seed"], f"gaze-{image_id}"),
        )
        sequences.append(simulate_gaze(mask, sim, image_id))
        files[f"images/{image_id}.png"] = _sha256_file(img_path)
        files[f"gt/{image_id}.png"] = _sha256_file(gt_path)

    fix_path = os.path.join(root, "fixations.csv")
    with open(fix_path, "w", encoding="utf-8") as fh:
        write_fixation_file(sequences, fh)
    files["fixations.csv"] = _sha256_file(fix_path)

    manifest = {
        "params": {
            "n_images": ds["n_images"],
            "image_size": ds["image_size"],
            "distractor_rate": ds["distractor_rate"],
            "n_scan_fixations": ds["n_scan_fixations"],
            "n_cover_fixations": ds["n_cover_fixations"],
            "jitter_sigma": ds["jitter_sigma"],
            "seed": ds["seed"],
        },
        "files": files,
    }
    manifest_path = os.path.join(root, "manifest.json")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    print(f"[simulate] wrote {ds['n_images']} images to {root}")
    return {"n_images": ds["n_images"], "dataset_dir": root, "manifest": manifest_path}


# -- masks --------------------------------------------------------------------


def _seq_digest(seq) -> str:
    buf = io.StringIO()
    write_fixation_file([seq], buf)
    return _sha256_bytes(buf.getvalue().encode())


def cmd_masks(cfg) -> dict:
    """Per image: heatmap, CRF refinement, threshold-ladder pseudo-masks.

    Each stage is cached: an artifact is skipped when its sidecar meta
    matches the hashes of its inputs and the stage parameters. Images with
    no fixation rows are reported and skipped, the rest proceed.
    """
    data = _load_dataset(cfg)
    derived = _derived_root(cfg)
    hm_dir = os.path.join(derived, "heatmaps")
    crf_dir = os.path.join(derived, "refined")
    pm_dir = os.path.join(derived, "pseudomasks")
    for d in (hm_dir, crf_dir, pm_dir):
        os.makedirs(d, exist_ok=True)

    hm_params = {"sigma": cfg.heatmap["sigma"], "weighting": cfg.heatmap["weighting"]}
    crf_params = dataclasses.asdict(cfg.crf)
    ladder_params = {
        "t_low": cfg.ladder.t_low,
        "t_high": cfg.ladder.t_high,
        "m": cfg.ladder.m,
    }

    failures = []
    hits = {"heatmap": 0, "refined": 0, "masks": 0}
    recomputed = {"heatmap": 0, "refined": 0, "masks": 0}
    for image_id in data["ids"]:
        seq = data["sequences"].get(image_id)
        if seq is None:
            failures.append(image_id)
            continue

        heat_path = os.path.join(hm_dir, f"{image_id}.heat")
        hm_key = {"fixations": _seq_digest(seq), "params": hm_params}
        if _up_to_date([heat_path], heat_path + ".meta.json", hm_key):
            hits["heatmap"] += 1
            heat = load_heatmap(heat_path)
        else:
            heat = render_heatmap(seq, cfg.heatmap["sigma"], cfg.heatmap["weighting"])
            save_heatmap(heat_path, heat)
            _write_meta(heat_path + ".meta.json", hm_key)
            recomputed["heatmap"] += 1

        refined_path = os.path.join(crf_dir, f"{image_id}.heat.crf")
        crf_key = {
            "heatmap": _sha256_file(heat_path),
            "image": _sha256_file(data["paths"][image_id]),
            "resolution": data["resolution"],
            "params": crf_params,
        }
        if _up_to_date([refined_path], refined_path + ".meta.json", crf_key):
            hits["refined"] += 1
            refined = load_heatmap(refined_path)
        else:
            refined = refine_heatmap(data["images"][image_id], heat, cfg.crf)
            save_heatmap(refined_path, refined)
            _write_meta(refined_path + ".meta.json", crf_key)
            recomputed["refined"] += 1

        mask_paths = [
            os.path.join(pm_dir, mask_level_filename(image_id, k))
            for k in range(cfg.ladder.m)
        ]
        pm_meta = os.path.join(pm_dir, f"{image_id}.meta.json")
        pm_key = {"refined": _sha256_file(refined_path), "ladder": ladder_params}
        if _up_to_date(mask_paths, pm_meta, pm_key):
            hits["masks"] += 1
        else:
            stack = binarize_stack(refined, cfg.ladder, image_id)
            for path, mask in zip(mask_paths, stack.masks):
                save_mask_png(path, mask)
            # nesting check on what was actually written
            written = [load_mask_png(p) for p in mask_paths]
            for j in range(1, len(written)):
                if not np.all(written[j] <= written[j - 1]):
                    raise GazeSegError(
                        f"pseudo-mask nesting violated for {image_id} at level {j}"
                    )
            _write_meta(pm_meta, pm_key)
            recomputed["masks"] += 1

    report = {
        "n_images": len(data["ids"]),
        "n_processed": len(data["ids"]) - len(failures),
        "failures": failures,
        "cache_hits": hits,
        "recomputed": recomputed,
    }
    report_path = os.path.join(derived, "masks_report.json")
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    print(
        f"[masks] processed {report['n_processed']}/{report['n_images']} images "
        f"(cache hits {hits}, recomputed {recomputed}, {len(failures)} failures)"
    )
    return {**report, "report_path": report_path}


def _load_stacks(cfg, ids):
    pm_dir = os.path.join(_derived_root(cfg), "pseudomasks")
    stacks = []
    for image_id in ids:
        masks = []
        for k in range(cfg.ladder.m):
            path = os.path.join(pm_dir, mask_level_filename(image_id, k))
            if not os.path.exists(path):
                raise ValidationError(
                    f"missing pseudo-mask {path}; run the masks command first"
                )
            masks.append(load_mask_png(path))
        stacks.append(PseudoMaskStack(image_id=image_id, masks=masks))
    return stacks


# -- train --------------------------------------------------------------------


_PAPER_RECIPE = {
    "iters": 15000,
    "batch_size": 8,
    "m": 2,
    "lambda": 3.0,
    "resolution": 224,
    "flip_augment": True,
}
_PAPER_OPTIMIZERS = {
    "adam": {"lr": 4e-4},
    "sgd": {"lr": 1e-2, "lr_min": 1e-4, "momentum": 0.99},
}


def _dry_run(cfg) -> dict:
    """Validate pipeline wiring and compare the config to the full recipe.

    Checks dataset resolvability, fixation parseability, shape
    divisibility, one forward pass per level at the target resolution, LPP
    span, CRF memory footprint, and the full-scale parameter table. Writes
    nothing.
    """
    ds = cfg.dataset
    checks: list[tuple[str, bool, str]] = []

    if ds["kind"] == "synthetic":
        resolution = ds["image_size"]
        n_images = ds["n_images"]
        checks.append(("dataset", True, f"synthetic, {n_images} images planned"))
    else:
        data = _load_dataset(cfg)
        n_images = len(data["ids"])
        resolution = data["resolution"]
        if resolution is None:
            sizes = {im.shape for im in data["images"].values()}
            if len(sizes) != 1:
                raise ValidationError(
                    f"images have mixed sizes {sorted(sizes)}; set dataset.resolution"
                )
            resolution = next(iter(sizes))[0]
        n_missing = sum(1 for i in data["ids"] if i not in data["sequences"])
        checks.append(
            (
                "dataset",
                True,
                f"{n_images} images, {data['parse_report'].n_rows} fixation rows, "
                f"{n_missing} images without fixations",
            )
        )

    div = 2**cfg.model.depth
    ok_shape = resolution % div == 0
    checks.append(
        (
            "shape",
            ok_shape,
            f"{resolution}x{resolution} vs 2^depth={div}"
            + ("" if ok_shape else " (not divisible)"),
        )
    )
    if not ok_shape:
        raise ValidationError(
            f"resolution {resolution} is not a multiple of 2^depth = {div}"
        )

    span = (cfg.train.lpp_spec.window - 1) * cfg.train.lpp_spec.dilation + 1
    checks.append(("lpp", span <= resolution, f"span {span} <= {resolution}"))

    probe = np.zeros((1, resolution, resolution, 1), dtype=np.float32)
    for i in range(cfg.train.m):
        net = build_network(cfg.model, derive_seed(cfg.train.seed, f"level-{i}-init"))
        _, p = net.forward(probe)
        if p.shape != (1, resolution, resolution, 2):
            raise GazeSegError(f"level {i} produced shape {p.shape}")
        if not np.allclose(p.sum(-1), 1.0, atol=1e-5):
            raise GazeSegError(f"level {i} probabilities do not normalize")
    checks.append(("forward", True, f"{cfg.train.m} levels at {resolution}x{resolution}"))

    crf_gb = 8.0 * (resolution**2) ** 2 / 2**30
    checks.append(
        ("crf_memory", True, f"exact mean field needs {crf_gb:.2f} GB at this size")
    )

    configured = {
        "iters": cfg.train.iters,
        "batch_size": cfg.train.batch_size,
        "m": cfg.train.m,
        "lambda": cfg.train.lam,
        "resolution": resolution,
        "flip_augment": cfg.train.flip_augment,
    }
    rows = []
    match = True
    for key, ref in _PAPER_RECIPE.items():
        got = configured[key]
        ok = got == ref
        match = match and ok
        rows.append({"key": key, "configured": got, "reference": ref, "match": ok})
    opt_ref = _PAPER_OPTIMIZERS.get(cfg.train.optimizer, {})
    for key, ref in opt_ref.items():
        got = getattr(cfg.train, key)
        ok = got == ref
        match = match and ok
        rows.append(
            {"key": f"{cfg.train.optimizer}.{key}", "configured": got, "reference": ref, "match": ok}
        )

    for name, ok, detail in checks:
        print(f"[dry-run] {name}: {'ok' if ok else 'FAIL'} ({detail})")
    for row in rows:
        print(
            f"[dry-run] recipe {row['key']}: configured={row['configured']} "
            f"reference={row['reference']} {'ok' if row['match'] else 'DIFFERS'}"
        )
    summary = {
        "dry_run": True,
        "n_images": n_images,
        "resolution": resolution,
        "m": cfg.train.m,
        "paper_recipe_match": match,
        "recipe_table": rows,
        "crf_matrix_gb": crf_gb,
    }
    print("DRYRUN " + json.dumps(summary, sort_keys=True))
    return summary


def _train_one(cfg, run_dir, resume: bool) -> dict:
    data = _load_dataset(cfg)
    train_ids, eval_ids = _eval_split(cfg, data["ids"])
    stacks = _load_stacks(cfg, train_ids)
    images = [data["images"][i] for i in train_ids]
    gt_list = [data["gt"][i] for i in train_ids]
    if all(g is None for g in gt_list):
        gt_list = None
    eval_images = eval_masks = None
    with_gt = [i for i in eval_ids if data["gt"][i] is not None]
    if with_gt:
        eval_images = [data["images"][i] for i in with_gt]
        eval_masks = [data["gt"][i] for i in with_gt]

    os.makedirs(run_dir, exist_ok=True)
    cfg.save(os.path.join(run_dir, "config.ini"))

    resume_from = None
    if resume:
        ckpts = sorted(glob.glob(os.path.join(run_dir, "checkpoint_*.npz")))
        numbered = [c for c in ckpts if not c.endswith("checkpoint_final.npz")]
        if numbered:
            resume_from = numbered[-1]
        elif ckpts:
            resume_from = ckpts[-1]
        else:
            raise ValidationError(f"no checkpoint to resume from in {run_dir}")

    dataset = TrainDataset(images=images, stacks=stacks, gt_masks=gt_list)
    ensemble, log = fit(
        dataset,
        cfg.ladder,
        cfg.model,
        cfg.train,
        eval_images=eval_images,
        eval_masks=eval_masks,
        out_dir=run_dir,
        resume_from=resume_from,
        memo_subset=cfg.eval["memo_subset"],
    )
    evals = log.eval_records()
    final_dice = evals[-1].get("ensemble_dice") if evals else None
    print(
        f"[train] {run_dir}: {cfg.train.iters} iters, m={cfg.train.m}, "
        f"lambda={cfg.train.lam}, final ensemble dice={final_dice}"
    )
    return {
        "run_dir": run_dir,
        "iters": cfg.train.iters,
        "m": cfg.train.m,
        "n_train": len(train_ids),
        "n_eval": len(eval_ids),
        "final_ensemble_dice": final_dice,
    }


def cmd_train(cfg, run_name: str | None = None, seeds=None, resume: bool = False,
              dry_run: bool = False) -> dict:
    if dry_run:
        return _dry_run(cfg)
    base = run_name or "run"
    if seeds is None:
        run_dir = os.path.join(_runs_root(cfg), f"{base}-seed{cfg.train.seed}")
        return _train_one(cfg, run_dir, resume)
    results = []
    for s in seeds:
        cfg_s = cfgmod.with_overrides(cfg, [f"train.seed={s}"])
        run_dir = os.path.join(_runs_root(cfg), f"{base}-seed{s}")
        results.append(_train_one(cfg_s, run_dir, resume))
    return {"runs": results}


# -- eval ---------------------------------------------------------------------


def _eval_one(cfg, run_dir) -> dict:
    ckpt = os.path.join(run_dir, "checkpoint_final.npz")
    if not os.path.exists(ckpt):
        raise ValidationError(f"no checkpoint at {ckpt}")
    snap = cfgmod.load_config(os.path.join(run_dir, "config.ini"))
    snap = dataclasses.replace(snap, output_dir=cfg.output_dir)
    ensemble = restore_ensemble(ckpt, snap.ladder, snap.model, snap.train)

    data = _load_dataset(snap)
    _, eval_ids = _eval_split(snap, data["ids"])
    if not eval_ids:
        raise ValidationError("eval split is empty; set eval.split > 0")
    images = [data["images"][i] for i in eval_ids]
    gts = [data["gt"][i] for i in eval_ids]

    per_level_fns = [
        (lambda img, net=net: predict_mask(net, img)) for net in ensemble.networks
    ]
    result = evaluate_ensemble(
        lambda img: ensemble_predict(ensemble, img)[1], images, gts, per_level_fns
    )
    report = {
        "run_dir": run_dir,
        "ensemble_dice": result["ensemble"],
        "per_level_dice": result["per_level"],
        "n_evaluated": result["n_evaluated"],
        "n_skipped": result["n_skipped"],
    }
    report_path = os.path.join(run_dir, "report.json")
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    print(
        f"[eval] {run_dir}: ensemble dice {result['ensemble']:.4f}, "
        f"per level {['%.4f' % d for d in result['per_level']]}"
    )
    return report


def cmd_eval(cfg, run_name: str | None = None, seeds=None) -> dict:
    base = run_name or "run"
    if seeds is None:
        run_dir = os.path.join(_runs_root(cfg), f"{base}-seed{cfg.train.seed}")
        return _eval_one(cfg, run_dir)
    reports = []
    for s in seeds:
        run_dir = os.path.join(_runs_root(cfg), f"{base}-seed{s}")
        reports.append(_eval_one(cfg, run_dir))
    scores = [r["ensemble_dice"] for r in reports]
    aggregate = {
        "runs": {r["run_dir"]: r["ensemble_dice"] for r in reports},
        "mean": float(np.mean(scores)),
        # sample std across runs, as in "mean and standard deviation of
        # three runs" result tables
        "std": float(np.std(scores, ddof=1)) if len(scores) > 1 else 0.0,
    }
    agg_path = os.path.join(_runs_root(cfg), f"{base}-aggregate.json")
    with open(agg_path, "w", encoding="utf-8") as fh:
        json.dump(aggregate, fh, indent=2, sort_keys=True)
    print(f"[eval] {base}: mean {aggregate['mean']:.4f} +/- {aggregate['std']:.4f}")
    return {**aggregate, "aggregate_path": agg_path}


# -- plot ---------------------------------------------------------------------


def _write_series_txt(path, header, columns) -> None:
    """Tab-separated table; floats via repr so it matches the plot exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(header) + "\n")
        for row in zip(*columns):
            fh.write("\t".join(repr(v) if isinstance(v, float) else str(v) for v in row) + "\n")


def _plot_single_run(run_dir) -> dict:
    from .train import RunLog

    log_path = os.path.join(run_dir, "runlog.jsonl")
    if not os.path.exists(log_path):
        raise ValidationError(f"no run log at {log_path}")
    log = RunLog.load(log_path)
    if not log.records:
        raise ValidationError(f"run log at {log_path} is empty")

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plots_dir = os.path.join(run_dir, "plots")
    os.makedirs(plots_dir, exist_ok=True)
    written, skipped = [], []

    losses = log.loss_records()
    levels = sorted({r["level"] for r in losses})
    if losses:
        fig, ax = plt.subplots(figsize=(7, 4))
        iters = sorted({r["iter"] for r in losses})
        columns = [iters]
        header = ["iter"]
        by_key = {(r["iter"], r["level"]): r["total_loss"] for r in losses}
        for lv in levels:
            series = [by_key[(it, lv)] for it in iters]
            ax.plot(iters, series, label=f"level {lv}", linewidth=0.8)
            columns.append(series)
            header.append(f"level{lv}_total_loss")
        ax.set_xlabel("iteration")
        ax.set_ylabel("total loss")
        ax.legend()
        fig.tight_layout()
        fig.savefig(os.path.join(plots_dir, "loss.png"), dpi=120)
        plt.close(fig)
        _write_series_txt(os.path.join(plots_dir, "loss.txt"), header, columns)
        written += ["loss.png", "loss.txt"]
    else:
        warnings.warn("no loss records; loss plot omitted", stacklevel=2)
        skipped.append("loss")

    evals = log.eval_records()
    dice_evals = [r for r in evals if "ensemble_dice" in r]
    if dice_evals:
        fig, ax = plt.subplots(figsize=(7, 4))
        iters = [r["iter"] for r in dice_evals]
        ens = [r["ensemble_dice"] for r in dice_evals]
        ax.plot(iters, ens, marker="o", label="ensemble")
        header = ["iter", "ensemble_dice"]
        columns = [iters, ens]
        m = len(dice_evals[0].get("per_level_dice", []))
        for lv in range(m):
            series = [r["per_level_dice"][lv] for r in dice_evals]
            ax.plot(iters, series, linestyle="--", label=f"level {lv}")
            header.append(f"level{lv}_dice")
            columns.append(series)
        ax.set_xlabel("iteration")
        ax.set_ylabel("dice")
        ax.set_ylim(0, 1)
        ax.legend()
        fig.tight_layout()
        fig.savefig(os.path.join(plots_dir, "dice.png"), dpi=120)
        plt.close(fig)
        _write_series_txt(os.path.join(plots_dir, "dice.txt"), header, columns)
        written += ["dice.png", "dice.txt"]
    else:
        warnings.warn("no eval Dice records; dice plot omitted", stacklevel=2)
        skipped.append("dice")

    memo = [r for r in evals if "overfitting" in r]
    if memo:
        fig, ax = plt.subplots(figsize=(7, 4))
        iters = [r["iter"] for r in memo]
        el = [r["early_learning"] for r in memo]
        of = [r["overfitting"] for r in memo]
        ax.plot(iters, el, marker="o", label="early learning (vs gt)")
        ax.plot(iters, of, marker="s", label="overfitting (vs pseudo-mask)")
        ax.set_xlabel("iteration")
        ax.set_ylabel("dice on wrongly annotated pixels")
        ax.set_ylim(0, 1)
        ax.legend()
        fig.tight_layout()
        fig.savefig(os.path.join(plots_dir, "memorization.png"), dpi=120)
        plt.close(fig)
        _write_series_txt(
            os.path.join(plots_dir, "memorization.txt"),
            ["iter", "early_learning", "overfitting"],
            [iters, el, of],
        )
        written += ["memorization.png", "memorization.txt"]
    else:
        warnings.warn("no memorization records; plot omitted", stacklevel=2)
        skipped.append("memorization")

    print(f"[plot] {run_dir}: wrote {written}, skipped {skipped}")
    return {"run_dir": run_dir, "written": written, "skipped": skipped, "plots_dir": plots_dir}


def _plot_sweep(runs_root, run_dirs) -> dict:
    """Final ensemble Dice per run, for lambda/m sweep summaries."""
    from .train import RunLog

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    names, finals = [], []
    for rd in run_dirs:
        log_path = os.path.join(rd, "runlog.jsonl")
        if not os.path.exists(log_path):
            continue
        evals = [r for r in RunLog.load(log_path).eval_records() if "ensemble_dice" in r]
        if not evals:
            continue
        names.append(os.path.basename(rd))
        finals.append(evals[-1]["ensemble_dice"])
    if not names:
        raise ValidationError(f"no plottable runs under {runs_root}")
    fig, ax = plt.subplots(figsize=(max(4, 1 + len(names)), 4))
    ax.bar(range(len(names)), finals)
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.set_ylabel("final ensemble dice")
    ax.set_ylim(0, 1)
    fig.tight_layout()
    png = os.path.join(runs_root, "sweep.png")
    fig.savefig(png, dpi=120)
    plt.close(fig)
    txt = os.path.join(runs_root, "sweep.txt")
    _write_series_txt(txt, ["run", "final_ensemble_dice"], [names, finals])
    print(f"[plot] sweep over {len(names)} runs -> {png}")
    return {"written": [png, txt], "runs": dict(zip(names, finals))}


def cmd_plot(run_dir: str) -> dict:
    """Plot one run directory, or a sweep summary for a directory of runs."""
    if not os.path.isdir(run_dir):
        raise ValidationError(f"run directory not found: {run_dir}")
    if os.path.exists(os.path.join(run_dir, "runlog.jsonl")):
        return _plot_single_run(run_dir)
    subdirs = sorted(
        os.path.join(run_dir, d)
        for d in os.listdir(run_dir)
        if os.path.isdir(os.path.join(run_dir, d))
    )
    candidates = [d for d in subdirs if os.path.exists(os.path.join(d, "runlog.jsonl"))]
    if not candidates:
        raise ValidationError(f"{run_dir} contains no run logs")
    return _plot_sweep(run_dir, candidates)


# -- argument parsing ---------------------------------------------------------


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI config file (base of the effective config)")
    p.add_argument(
        "--preset",
        choices=sorted(cfgmod.PRESETS),
        help="built-in preset as the base config (default: desk)",
    )
    p.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override one config value (repeatable; wins over file/preset)",
    )
    p.add_argument("--out", help="shorthand for --set output.dir=OUT")


def _parse_seeds(raw: str | None):
    if raw is None:
        return None
    try:
        return [int(s) for s in raw.split(",") if s.strip() != ""]
    except ValueError:
        raise ValidationError(f"--seeds expects comma-separated integers, got {raw!r}") from None


def _config_from_args(args) -> cfgmod.ExperimentConfig:
    overrides = list(args.overrides)
    if args.out:
        overrides.append(f"output.dir={args.out}")
    return cfgmod.load_config(args.config, args.preset, overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gazeseg",
        description="gaze-supervised segmentation pipeline (simulate | masks | train | eval | plot)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate the synthetic dataset + gaze")
    _add_config_args(p_sim)
    p_sim.add_argument("--force", action="store_true", help="overwrite an existing dataset")

    p_masks = sub.add_parser("masks", help="heatmaps, CRF refinement, pseudo-masks")
    _add_config_args(p_masks)

    p_train = sub.add_parser("train", help="multi-level co-training")
    _add_config_args(p_train)
    p_train.add_argument("--run-name", default=None, help="run directory name prefix")
    p_train.add_argument("--seeds", default=None, help="comma-separated seeds, one run each")
    p_train.add_argument("--resume", action="store_true", help="resume from the latest checkpoint")
    p_train.add_argument(
        "--dry-run",
        action="store_true",
        help="validate shapes and config against the full-scale recipe; train nothing",
    )

    p_eval = sub.add_parser("eval", help="Dice reports for trained runs")
    _add_config_args(p_eval)
    p_eval.add_argument("--run-name", default=None)
    p_eval.add_argument("--seeds", default=None, help="aggregate mean/std across these seeds")

    p_plot = sub.add_parser("plot", help="loss/Dice/memorization curves, sweep summaries")
    p_plot.add_argument("--run-dir", required=True, help="one run directory, or a directory of runs")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "simulate":
            cmd_simulate(_config_from_args(args), force=args.force)
        elif args.command == "masks":
            cmd_masks(_config_from_args(args))
        elif args.command == "train":
            cmd_train(
                _config_from_args(args),
                run_name=args.run_name,
                seeds=_parse_seeds(args.seeds),
                resume=args.resume,
                dry_run=args.dry_run,
            )
        elif args.command == "eval":
            cmd_eval(
                _config_from_args(args),
                run_name=args.run_name,
                seeds=_parse_seeds(args.seeds),
            )
        elif args.command == "plot":
            cmd_plot(args.run_dir)
        else:  # pragma: no cover - argparse enforces choices
            parser.error(f"unknown command {args.command}")
    except GazeSegError as exc:
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
