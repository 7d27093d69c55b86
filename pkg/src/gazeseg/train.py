"""Multi-level co-training on hierarchical pseudo-masks.

Each of the m levels is an independently initialized LevelNetwork trained
with cross-entropy against its own threshold level's pseudo-mask, plus a
consistency term that pulls its locally propagated prediction toward each
peer level's (frozen) prediction:

    L_i = L_ce(p_i, mask_i) + (lam / (m - 1)) * sum_{j != i} (-(1/N) p_hat_i . p_j)

Peer predictions p_j within one step are taken from parameters as they
stood at the start of the step, so the per-level updates are synchronous
and order-independent. All randomness (init, batching, flips) derives from
the config seed, and the optimizer/RNG state round-trips through
checkpoints, so runs are reproducible bit-exact and resumable.
"""

from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import GazeSegError, ShapeError, ValidationError
from .lpp import NeighborhoodSpec, propagate_backward, propagate_with_cache
from .metrics import dice, memorization_metrics
from .nn import LevelNetwork, ModelConfig, build_network
from .nn.optim import cosine_lr, make_optimizer
from .pseudomask import PseudoMaskStack, ThresholdLadder
from .seeding import derive_seed, rng_for

__all__ = [
    "TrainConfig",
    "TrainDataset",
    "LevelEnsemble",
    "RunLog",
    "loss_supervision",
    "loss_consistency",
    "consistency_from_probs",
    "train_step",
    "fit",
    "fit_baseline",
    "ensemble_predict",
    "predict_mask",
    "save_checkpoint",
    "load_checkpoint",
    "restore_ensemble",
]

_PROB_EPS = 1e-7


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one co-training run.

    lam is the consistency weight (the paper-facing name is lambda, which
    is reserved in Python; serialized dicts use the key "lambda").
    """

    m: int = 2
    lam: float = 3.0
    iters: int = 15000
    batch_size: int = 8
    optimizer: str = "adam"
    lr: float = 4e-4
    lr_min: float = 1e-4
    momentum: float = 0.99
    seed: int = 0
    lpp_spec: NeighborhoodSpec = field(default_factory=NeighborhoodSpec)
    loss_norm: bool = True
    flip_augment: bool = True
    eval_interval: int = 0
    checkpoint_interval: int = 0

    def __post_init__(self) -> None:
        if self.m < 2:
            raise ValidationError(f"m must be >= 2, got {self.m}")
        if self.lam < 0:
            raise ValidationError(f"lambda must be >= 0, got {self.lam}")
        if self.iters < 1:
            raise ValidationError(f"iters must be >= 1, got {self.iters}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValidationError(
                f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}"
            )
        if self.lam > 7:
            warnings.warn(
                f"consistency weight lambda={self.lam} > 7 tends to degenerate "
                "the model; values around 3 are known to work",
                stacklevel=2,
            )

    def to_dict(self) -> dict:
        d = {
            "m": self.m,
            "lambda": self.lam,
            "iters": self.iters,
            "batch_size": self.batch_size,
            "optimizer": self.optimizer,
            "lr": self.lr,
            "lr_min": self.lr_min,
            "momentum": self.momentum,
            "seed": self.seed,
            "lpp_window": self.lpp_spec.window,
            "lpp_dilation": self.lpp_spec.dilation,
            "lpp_include_center": self.lpp_spec.include_center,
            "loss_norm": self.loss_norm,
            "flip_augment": self.flip_augment,
            "eval_interval": self.eval_interval,
            "checkpoint_interval": self.checkpoint_interval,
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        lam = d.pop("lambda", d.pop("lam", 3.0))
        spec = NeighborhoodSpec(
            window=int(d.pop("lpp_window", 3)),
            dilation=int(d.pop("lpp_dilation", 1)),
            include_center=bool(d.pop("lpp_include_center", True)),
        )
        return cls(lam=lam, lpp_spec=spec, **d)


@dataclass
class TrainDataset:
    """Training images with their per-level pseudo-masks.

    gt_masks are optional and used only for memorization diagnostics.
    """

    images: list
    stacks: list
    gt_masks: list | None = None

    def __post_init__(self) -> None:
        if len(self.images) == 0:
            raise ValidationError("dataset is empty")
        if len(self.images) != len(self.stacks):
            raise ValidationError(
                f"got {len(self.images)} images but {len(self.stacks)} mask stacks"
            )
        if self.gt_masks is not None and len(self.gt_masks) != len(self.images):
            raise ValidationError(
                f"got {len(self.images)} images but {len(self.gt_masks)} gt masks"
            )

    def __len__(self) -> int:
        return len(self.images)


@dataclass
class LevelEnsemble:
    networks: list
    ladder: ThresholdLadder
    config: TrainConfig

    def __post_init__(self) -> None:
        if not (len(self.networks) == self.ladder.m == self.config.m):
            raise ValidationError(
                f"level count mismatch: {len(self.networks)} networks, "
                f"ladder m={self.ladder.m}, config m={self.config.m}"
            )

    @property
    def m(self) -> int:
        return len(self.networks)


class RunLog:
    """Append-only list of training/eval records, serialized as JSON lines."""

    def __init__(self, records: list | None = None):
        self.records: list[dict] = list(records) if records else []

    def append(self, record: dict) -> None:
        self.records.append(record)

    def extend(self, records) -> None:
        self.records.extend(records)

    def loss_records(self) -> list[dict]:
        return [r for r in self.records if "ce_loss" in r]

    def eval_records(self) -> list[dict]:
        return [r for r in self.records if r.get("event") == "eval"]

    def to_jsonl(self) -> str:
        return "".join(
            json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n"
            for r in self.records
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_jsonl())

    @classmethod
    def load(cls, path) -> "RunLog":
        records = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    records.append(json.loads(line))
        return cls(records)


# -- losses ----------------------------------------------------------------


def _check_prob_map(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p)
    if p.ndim < 2 or p.shape[-1] != 2:
        raise ShapeError(f"expected a (..., 2) probability map, got {p.shape}")
    return p


def loss_supervision(p: np.ndarray, mask: np.ndarray, per_pixel: bool = True) -> float:
    """Cross entropy of a 2-class probability map against a binary mask."""
    p = _check_prob_map(p)
    mask = np.asarray(mask)
    if p.shape[:-1] != mask.shape:
        raise ShapeError(f"probability map {p.shape} does not match mask {mask.shape}")
    fg = mask.astype(bool)
    pc = np.where(fg, p[..., 1], p[..., 0])
    nll = -np.log(np.clip(pc, _PROB_EPS, None))
    return float(nll.mean()) if per_pixel else float(nll.sum())


def _loss_supervision_grad(p: np.ndarray, mask: np.ndarray, per_pixel: bool = True) -> np.ndarray:
    """d loss_supervision / d p, matching the clamped forward."""
    fg = np.asarray(mask).astype(bool)
    pc = np.where(fg, p[..., 1], p[..., 0])
    denom = np.clip(pc, _PROB_EPS, None)
    g = -1.0 / denom
    if per_pixel:
        g = g / pc.size
    dp = np.zeros_like(p)
    dp[..., 1] = np.where(fg, g, 0.0)
    dp[..., 0] = np.where(fg, 0.0, g)
    return dp


def consistency_from_probs(p_hat: np.ndarray, p_peer: np.ndarray) -> float:
    """-(1/N) sum over pixels of the per-pixel class dot product."""
    p_hat = _check_prob_map(p_hat)
    p_peer = _check_prob_map(p_peer)
    if p_hat.shape != p_peer.shape:
        raise ShapeError(
            f"probability maps differ in shape: {p_hat.shape} vs {p_peer.shape}"
        )
    per_pixel = (p_hat * p_peer).sum(axis=-1)
    return -float(per_pixel.mean())


def loss_consistency(
    phi: np.ndarray,
    net: LevelNetwork,
    p_peer: np.ndarray,
    lpp_spec: NeighborhoodSpec,
) -> float:
    """Consistency loss of one level against a frozen peer prediction.

    phi is the level's own feature map ((H, W, D) or (B, H, W, D)); the
    level's classifier g maps the propagated features to p_hat, and the
    loss is the negative per-pixel-averaged dot product with p_peer.
    """
    phi = np.asarray(phi)
    single = phi.ndim == 3
    if single:
        phi = phi[None]
        p_peer = np.asarray(p_peer)[None]
    p_hat = np.empty(phi.shape[:3] + (2,), dtype=phi.dtype)
    for b in range(phi.shape[0]):
        prop, _ = propagate_with_cache(phi[b], lpp_spec)
        p_hat[b] = net.classify(prop)
    return consistency_from_probs(p_hat, p_peer)


# -- one training step -------------------------------------------------------


def _level_forward(net: LevelNetwork, xb: np.ndarray):
    phi, tape = net.forward_features(xb)
    p = net.classify(phi)
    return phi, tape, p


def _level_backward(
    net: LevelNetwork,
    phi: np.ndarray,
    tape,
    p: np.ndarray,
    mask_b: np.ndarray,
    peer_probs: list,
    lam: float,
    lpp_spec: NeighborhoodSpec,
    per_pixel: bool,
):
    """Gradients of L_i for one level. Returns (grads, ce, cons_mean)."""
    ce = loss_supervision(p, mask_b, per_pixel)
    dp = _loss_supervision_grad(p, mask_b, per_pixel)
    dphi, g_grads = net.classify_backward(phi, p, dp)

    cons_mean = 0.0
    if lam > 0 and peer_probs:
        bsz = phi.shape[0]
        prop = np.empty_like(phi)
        caches = []
        for b in range(bsz):
            prop[b], cache = propagate_with_cache(phi[b], lpp_spec)
            caches.append(cache)
        p_hat = net.classify(prop)
        n_pix = p_hat[..., 0].size
        cons_vals = [consistency_from_probs(p_hat, pj) for pj in peer_probs]
        cons_mean = float(np.mean(cons_vals))
        # d/d p_hat of (lam/(m-1)) * sum_j (-(1/N) p_hat . p_j); the peer
        # maps are constants, so the peer sum folds into one array.
        scale = lam / len(peer_probs)
        dp_hat = np.zeros_like(p_hat)
        for pj in peer_probs:
            dp_hat -= pj
        dp_hat *= scale / n_pix
        dprop, g_grads_c = net.classify_backward(prop, p_hat, dp_hat)
        for name, g in g_grads_c.items():
            g_grads[name] = g_grads[name] + g
        for b in range(bsz):
            dphi[b] += propagate_backward(caches[b], dprop[b])

    grads_f, _ = net.features_backward(tape, dphi)
    grads = dict(grads_f)
    grads.update(g_grads)
    return grads, ce, cons_mean


def train_step(
    ensemble: LevelEnsemble,
    optimizers: list,
    images: np.ndarray,
    level_masks: list,
    iteration: int,
    lr: float | None = None,
    freeze_levels=frozenset(),
) -> list[dict]:
    """One synchronous co-training step over a prepared batch.

    images: (B, H, W, 1); level_masks: one (B, H, W) binary array per level.
    Peer predictions are taken before any update. freeze_levels skips the
    optimizer update (but not the bookkeeping) for those level indices.
    """
    cfg = ensemble.config
    m = ensemble.m
    if len(level_masks) != m:
        raise ShapeError(f"got {len(level_masks)} mask levels for m={m}")

    forwards = [_level_forward(net, images) for net in ensemble.networks]
    probs = [f[2] for f in forwards]

    records = []
    for i, net in enumerate(ensemble.networks):
        phi, tape, p = forwards[i]
        peers = [probs[j] for j in range(m) if j != i] if m > 1 else []
        grads, ce, cons = _level_backward(
            net,
            phi,
            tape,
            p,
            level_masks[i],
            peers,
            cfg.lam,
            cfg.lpp_spec,
            cfg.loss_norm,
        )
        total = ce + cfg.lam * cons
        record = {
            "iter": iteration,
            "level": i,
            "ce_loss": ce,
            "cons_loss": cons,
            "total_loss": total,
        }
        if not np.isfinite(total):
            err = GazeSegError(
                f"non-finite loss at iter {iteration}, level {i}: "
                f"ce={ce}, cons={cons}"
            )
            # callers persist this diagnostic before aborting
            err.record = {**record, "event": "non_finite_loss"}
            raise err
        if i not in freeze_levels:
            optimizers[i].step(net.params, grads, lr=lr)
        records.append(record)
    return records


# -- checkpointing ------------------------------------------------------------


def _json_to_u8(obj) -> np.ndarray:
    return np.frombuffer(json.dumps(obj).encode(), dtype=np.uint8)


def _u8_to_json(arr: np.ndarray):
    return json.loads(bytes(arr).decode())


def save_checkpoint(path, networks, optimizers, rng_batch, rng_aug, next_iter) -> None:
    arrays = {}
    for i, net in enumerate(networks):
        for name, p in net.params.items():
            arrays[f"net{i}:{name}"] = p
        for name, s in optimizers[i].state_dict().items():
            arrays[f"opt{i}:{name}"] = np.asarray(s)
    meta = {
        "next_iter": int(next_iter),
        "n_levels": len(networks),
        "rng_batch": rng_batch.bit_generator.state,
        "rng_aug": rng_aug.bit_generator.state,
    }
    arrays["__meta__"] = _json_to_u8(meta)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path, networks, optimizers, rng_batch, rng_aug) -> int:
    """Restore state in place; returns the iteration to resume from."""
    with np.load(path) as data:
        meta = _u8_to_json(data["__meta__"])
        if meta["n_levels"] != len(networks):
            raise ValidationError(
                f"checkpoint has {meta['n_levels']} levels, expected {len(networks)}"
            )
        for i, net in enumerate(networks):
            prefix = f"net{i}:"
            for key in data.files:
                if key.startswith(prefix):
                    net.params[key[len(prefix):]] = data[key].copy()
            opt_prefix = f"opt{i}:"
            state = {
                key[len(opt_prefix):]: data[key].copy()
                for key in data.files
                if key.startswith(opt_prefix)
            }
            optimizers[i].load_state_dict(state)
    rng_batch.bit_generator.state = meta["rng_batch"]
    rng_aug.bit_generator.state = meta["rng_aug"]
    return int(meta["next_iter"])


# -- full runs ----------------------------------------------------------------


def _make_optimizer_for(cfg: TrainConfig):
    if cfg.optimizer == "adam":
        return make_optimizer("adam", lr=cfg.lr)
    return make_optimizer("sgd", lr=cfg.lr, momentum=cfg.momentum)


def _lr_for_step(cfg: TrainConfig, it: int) -> float | None:
    if cfg.optimizer == "sgd":
        return cosine_lr(it, cfg.iters, cfg.lr, cfg.lr_min)
    return None


def _prepare_arrays(dataset: TrainDataset, m: int):
    images = np.stack([np.asarray(im, dtype=np.float32) for im in dataset.images])
    if images.ndim != 3:
        raise ShapeError(f"expected 2-D grayscale images, got stack {images.shape}")
    images = images[..., None]
    for stack in dataset.stacks:
        if stack.m != m:
            raise ValidationError(
                f"pseudo-mask stack for {stack.image_id!r} has {stack.m} levels, "
                f"expected {m}"
            )
    targets = [
        np.stack([np.asarray(s.masks[i], dtype=np.uint8) for s in dataset.stacks])
        for i in range(m)
    ]
    return images, targets


def _apply_flips(xb, tbs, flips):
    for b, (fh, fv) in enumerate(flips):
        if fh:
            xb[b] = xb[b, :, ::-1].copy()
            for tb in tbs:
                tb[b] = tb[b, :, ::-1].copy()
        if fv:
            xb[b] = xb[b, ::-1].copy()
            for tb in tbs:
                tb[b] = tb[b, ::-1].copy()


def _eval_record(
    iteration,
    networks,
    images_arr,
    targets,
    gt_masks,
    eval_images,
    eval_masks,
    memo_indices,
):
    """Periodic eval: held-out Dice plus train-set memorization diagnostics."""
    record: dict = {"event": "eval", "iter": iteration}
    m = len(networks)
    if eval_images is not None:
        per_level = [[] for _ in range(m)]
        ens = []
        for img, gt in zip(eval_images, eval_masks):
            x = np.asarray(img, dtype=np.float32)[None, :, :, None]
            ps = []
            for k, net in enumerate(networks):
                _, p = net.forward(x)
                ps.append(p[0])
                per_level[k].append(dice(p[0, ..., 1] > p[0, ..., 0], gt))
            pe = np.mean(ps, axis=0)
            ens.append(dice(pe[..., 1] > pe[..., 0], gt))
        record["per_level_dice"] = [float(np.mean(s)) for s in per_level]
        record["ensemble_dice"] = float(np.mean(ens))
    if gt_masks is not None and memo_indices is not None and len(memo_indices):
        els, ofs = [], []
        for k, net in enumerate(networks):
            for idx in memo_indices:
                x = images_arr[idx][None]
                _, p = net.forward(x)
                pred = p[0, ..., 1] > p[0, ..., 0]
                mm = memorization_metrics(pred, targets[k][idx], gt_masks[idx])
                if mm is not None:
                    els.append(mm[0])
                    ofs.append(mm[1])
        if els:
            record["early_learning"] = float(np.mean(els))
            record["overfitting"] = float(np.mean(ofs))
    return record


def _run_training(
    networks,
    dataset: TrainDataset,
    targets,
    images_arr,
    cfg: TrainConfig,
    ensemble_like,
    log: RunLog,
    eval_images,
    eval_masks,
    out_dir,
    resume_from,
    memo_subset,
):
    n = len(dataset)
    optimizers = [_make_optimizer_for(cfg) for _ in networks]
    rng_batch = rng_for(cfg.seed, "batching")
    rng_aug = rng_for(cfg.seed, "augment")

    start_iter = 0
    if resume_from is not None:
        start_iter = load_checkpoint(resume_from, networks, optimizers, rng_batch, rng_aug)

    memo_indices = None
    if dataset.gt_masks is not None:
        rng_memo = rng_for(cfg.seed, "memo-subset")
        k = min(memo_subset, n)
        memo_indices = np.sort(rng_memo.choice(n, size=k, replace=False))

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)

    for it in range(start_iter, cfg.iters):
        idx = rng_batch.choice(n, size=cfg.batch_size, replace=n < cfg.batch_size)
        xb = images_arr[idx].copy()
        tbs = [t[idx].copy() for t in targets]
        if cfg.flip_augment:
            flips = rng_aug.integers(0, 2, size=(cfg.batch_size, 2))
            _apply_flips(xb, tbs, flips)
        try:
            records = train_step(
                ensemble_like, optimizers, xb, tbs, it, lr=_lr_for_step(cfg, it)
            )
        except GazeSegError as err:
            record = getattr(err, "record", None)
            if record is not None:
                log.append(record)
            if out_dir is not None:
                log.save(os.path.join(out_dir, "runlog.jsonl"))
            raise
        log.extend(records)

        done = it + 1
        if cfg.eval_interval and (done % cfg.eval_interval == 0 or done == cfg.iters):
            log.append(
                _eval_record(
                    done,
                    networks,
                    images_arr,
                    targets,
                    dataset.gt_masks,
                    eval_images,
                    eval_masks,
                    memo_indices,
                )
            )
        if (
            out_dir is not None
            and cfg.checkpoint_interval
            and done % cfg.checkpoint_interval == 0
        ):
            save_checkpoint(
                os.path.join(out_dir, f"checkpoint_{done:06d}.npz"),
                networks,
                optimizers,
                rng_batch,
                rng_aug,
                done,
            )
    if out_dir is not None:
        save_checkpoint(
            os.path.join(out_dir, "checkpoint_final.npz"),
            networks,
            optimizers,
            rng_batch,
            rng_aug,
            cfg.iters,
        )
        log.save(os.path.join(out_dir, "runlog.jsonl"))


def fit(
    dataset: TrainDataset,
    ladder: ThresholdLadder,
    model_config: ModelConfig,
    config: TrainConfig,
    eval_images=None,
    eval_masks=None,
    out_dir=None,
    resume_from=None,
    memo_subset: int = 48,
):
    """Train an m-level ensemble. Returns (LevelEnsemble, RunLog)."""
    if ladder.m != config.m:
        raise ValidationError(
            f"ladder has {ladder.m} levels but config.m = {config.m}"
        )
    images_arr, targets = _prepare_arrays(dataset, config.m)
    networks = [
        build_network(model_config, derive_seed(config.seed, f"level-{i}-init"))
        for i in range(config.m)
    ]
    ensemble = LevelEnsemble(networks, ladder, config)
    log = RunLog()
    _run_training(
        networks,
        dataset,
        targets,
        images_arr,
        config,
        ensemble,
        log,
        eval_images,
        eval_masks,
        out_dir,
        resume_from,
        memo_subset,
    )
    return ensemble, log


class _SingleLevelShim:
    """Duck-typed stand-in for LevelEnsemble used by the baseline trainer."""

    def __init__(self, network, config):
        self.networks = [network]
        self.config = config
        self.m = 1


def fit_baseline(
    images,
    masks,
    gt_masks,
    model_config: ModelConfig,
    config: TrainConfig,
    eval_images=None,
    eval_masks=None,
    out_dir=None,
    memo_subset: int = 48,
):
    """Train one network on a single fixed-threshold pseudo-mask per image.

    This is the no-ensemble ablation reference: the same budget, optimizer
    and augmentation as fit(), but one level and no consistency term.
    Returns (LevelNetwork, RunLog).
    """
    stacks = [
        PseudoMaskStack(image_id=f"img{i:05d}", masks=[m_])
        for i, m_ in enumerate(masks)
    ]
    dataset = TrainDataset(images=list(images), stacks=stacks, gt_masks=gt_masks)
    images_arr = np.stack([np.asarray(im, dtype=np.float32) for im in images])[..., None]
    targets = [np.stack([np.asarray(m_, dtype=np.uint8) for m_ in masks])]
    cfg = replace(config, lam=0.0)
    network = build_network(model_config, derive_seed(cfg.seed, "level-0-init"))
    shim = _SingleLevelShim(network, cfg)
    log = RunLog()
    _run_training(
        [network],
        dataset,
        targets,
        images_arr,
        cfg,
        shim,
        log,
        eval_images,
        eval_masks,
        out_dir,
        None,
        memo_subset,
    )
    return network, log


def restore_ensemble(
    ckpt_path,
    ladder: ThresholdLadder,
    model_config: ModelConfig,
    config: TrainConfig,
) -> LevelEnsemble:
    """Rebuild a trained ensemble from a checkpoint file."""
    networks = [
        build_network(model_config, derive_seed(config.seed, f"level-{i}-init"))
        for i in range(config.m)
    ]
    optimizers = [_make_optimizer_for(config) for _ in networks]
    rng_batch = rng_for(config.seed, "batching")
    rng_aug = rng_for(config.seed, "augment")
    load_checkpoint(ckpt_path, networks, optimizers, rng_batch, rng_aug)
    return LevelEnsemble(networks, ladder, config)


# -- inference ----------------------------------------------------------------


def _prep_single(image) -> np.ndarray:
    x = np.asarray(image, dtype=np.float32)
    if x.ndim == 2:
        x = x[None, :, :, None]
    elif x.ndim == 3 and x.shape[-1] == 1:
        x = x[None]
    else:
        raise ShapeError(f"expected (H, W) or (H, W, 1) image, got {x.shape}")
    return x


def ensemble_predict(ensemble, image):
    """Mean of the per-level probability maps, argmaxed (ties -> background).

    Returns (prob_map (H, W, 2), mask (H, W) uint8).
    """
    x = _prep_single(image)
    acc = None
    for net in ensemble.networks:
        _, p = net.forward(x)
        acc = p[0].astype(np.float64) if acc is None else acc + p[0]
    probs = acc / len(ensemble.networks)
    mask = (probs[..., 1] > probs[..., 0]).astype(np.uint8)
    return probs, mask


def predict_mask(net: LevelNetwork, image) -> np.ndarray:
    """Binary mask from a single network (ties -> background)."""
    x = _prep_single(image)
    _, p = net.forward(x)
    return (p[0, ..., 1] > p[0, ..., 0]).astype(np.uint8)
