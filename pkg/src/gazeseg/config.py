"""Experiment configuration: sectioned key-value files plus presets.

Configs are INI text (diff-able provenance). Sections map one-to-one onto
module parameter objects; command-line ``--set section.key=value`` flags
override file values, and a preset supplies the base. The effective config
is snapshotted next to every run so reruns are exact.
"""

from __future__ import annotations

import configparser
import io
import os
from dataclasses import dataclass

from .crf import CrfParams
from .errors import ValidationError
from .lpp import NeighborhoodSpec
from .nn import ModelConfig
from .pseudomask import ThresholdLadder, make_ladder
from .train import TrainConfig

__all__ = [
    "ExperimentConfig",
    "PRESETS",
    "preset_text",
    "load_config",
    "apply_overrides",
    "with_overrides",
]


_DESK_PRESET = """\
[dataset]
kind = synthetic
n_images = 200
image_size = 64
distractor_rate = 0.15
# enough coverage that every blob size gets solid heat before refinement
n_scan_fixations = 10
n_cover_fixations = 90
jitter_sigma = 1.5
seed = 0

[heatmap]
# a bit wider than width / 24: smooths the sparser splats of large blobs
sigma = 3.5
weighting = uniform

[crf]
# desk-scale images need gentler messages than the full-resolution
# defaults, or weak unaries on large blobs get flooded to background
n_iters = 5
w_app = 2.0
theta_alpha = 30.0
theta_beta = 13.0
w_smooth = 1.0
theta_gamma = 3.0
unary_clamp = 0.01

[ladder]
t_low = 0.3
t_high = 0.6
m = 2

[model]
depth = 3
base_channels = 16
feature_dim = 16

[train]
lambda = 3.0
iters = 1500
batch_size = 8
optimizer = adam
lr = 4e-4
lr_min = 1e-4
momentum = 0.99
seed = 0
lpp_window = 3
lpp_dilation = 1
lpp_include_center = true
loss_norm = true
flip_augment = true
eval_interval = 100
checkpoint_interval = 0

[eval]
split = 0.2
split_seed = 0
memo_subset = 48

[output]
dir = runs/desk
"""

# Paper-scale recipe: main-text optimizer (Adam 4e-4), 15k iters, batch 8,
# 224 x 224 inputs, random flips. The dataset paths must be pointed at the
# released gaze data before a real (non-dry) run.
_FULL_PRESET = """\
[dataset]
kind = disk
images_dir =
fixations =
geometry =
gt_dir =
resolution = 224

[heatmap]
sigma =
weighting = duration

[crf]
n_iters = 5
w_app = 4.0
theta_alpha = 30.0
theta_beta = 13.0
w_smooth = 3.0
theta_gamma = 3.0
unary_clamp = 0.01

[ladder]
t_low = 0.3
t_high = 0.6
m = 2

[model]
depth = 4
base_channels = 64
feature_dim = 64

[train]
lambda = 3.0
iters = 15000
batch_size = 8
optimizer = adam
lr = 4e-4
lr_min = 1e-4
momentum = 0.99
seed = 0
lpp_window = 3
lpp_dilation = 1
lpp_include_center = true
loss_norm = true
flip_augment = true
eval_interval = 500
checkpoint_interval = 1000

[eval]
split = 0.1
split_seed = 0
memo_subset = 48

[output]
dir = runs/full
"""

# Alternate full-scale recipe: SGD momentum 0.99 with cosine annealing
# from 1e-2 down to 1e-4.
_FULL_SGD_PRESET = _FULL_PRESET.replace(
    "optimizer = adam\nlr = 4e-4",
    "optimizer = sgd\nlr = 1e-2",
).replace("dir = runs/full", "dir = runs/full-sgd")

PRESETS = {
    "desk": _DESK_PRESET,
    "full": _FULL_PRESET,
    "full-sgd": _FULL_SGD_PRESET,
}


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise ValidationError(
            f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}"
        )
    return PRESETS[name]


@dataclass
class ExperimentConfig:
    """Validated, typed view of one experiment's configuration."""

    dataset: dict
    heatmap: dict
    crf: CrfParams
    ladder: ThresholdLadder
    model: ModelConfig
    train: TrainConfig
    eval: dict
    output_dir: str
    ini_text: str

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.ini_text)


def _parser_from_text(text: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.read_string(text)
    return cp


def apply_overrides(cp: configparser.ConfigParser, overrides) -> None:
    """Apply 'section.key=value' strings; flag wins over file."""
    for item in overrides or ():
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ValidationError(
                f"override must look like section.key=value, got {item!r}"
            )
        target, value = item.split("=", 1)
        section, key = target.split(".", 1)
        section = section.strip()
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, key.strip(), value.strip())


def _optfloat(cp, section, key, default=None):
    raw = cp.get(section, key, fallback="").strip()
    return float(raw) if raw else default


def _optint(cp, section, key, default=None):
    raw = cp.get(section, key, fallback="").strip()
    return int(raw) if raw else default


def _dump(cp: configparser.ConfigParser) -> str:
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def _build(cp: configparser.ConfigParser) -> ExperimentConfig:
    kind = cp.get("dataset", "kind", fallback="synthetic").strip()
    if kind not in ("synthetic", "disk"):
        raise ValidationError(f"dataset.kind must be synthetic or disk, got {kind!r}")
    dataset: dict = {"kind": kind}
    if kind == "synthetic":
        dataset.update(
            n_images=cp.getint("dataset", "n_images", fallback=200),
            image_size=cp.getint("dataset", "image_size", fallback=64),
            distractor_rate=cp.getfloat("dataset", "distractor_rate", fallback=0.15),
            n_scan_fixations=cp.getint("dataset", "n_scan_fixations", fallback=8),
            n_cover_fixations=cp.getint("dataset", "n_cover_fixations", fallback=40),
            jitter_sigma=cp.getfloat("dataset", "jitter_sigma", fallback=1.5),
            seed=cp.getint("dataset", "seed", fallback=0),
        )
        if dataset["n_images"] < 1:
            raise ValidationError("dataset.n_images must be >= 1")
    else:
        dataset.update(
            images_dir=cp.get("dataset", "images_dir", fallback="").strip(),
            fixations=cp.get("dataset", "fixations", fallback="").strip(),
            geometry=cp.get("dataset", "geometry", fallback="").strip(),
            gt_dir=cp.get("dataset", "gt_dir", fallback="").strip(),
            resolution=_optint(cp, "dataset", "resolution"),
        )
        if not dataset["images_dir"] or not dataset["fixations"]:
            raise ValidationError(
                "disk datasets need dataset.images_dir and dataset.fixations"
            )

    heatmap = {
        "sigma": _optfloat(cp, "heatmap", "sigma"),
        "weighting": cp.get("heatmap", "weighting", fallback="duration").strip(),
    }

    crf = CrfParams(
        n_iters=cp.getint("crf", "n_iters", fallback=5),
        w_app=cp.getfloat("crf", "w_app", fallback=4.0),
        theta_alpha=cp.getfloat("crf", "theta_alpha", fallback=30.0),
        theta_beta=cp.getfloat("crf", "theta_beta", fallback=13.0),
        w_smooth=cp.getfloat("crf", "w_smooth", fallback=3.0),
        theta_gamma=cp.getfloat("crf", "theta_gamma", fallback=3.0),
        unary_clamp=cp.getfloat("crf", "unary_clamp", fallback=0.01),
    )

    ladder = make_ladder(
        cp.getfloat("ladder", "t_low", fallback=0.3),
        cp.getfloat("ladder", "t_high", fallback=0.6),
        cp.getint("ladder", "m", fallback=2),
    )

    model = ModelConfig(
        depth=cp.getint("model", "depth", fallback=3),
        base_channels=cp.getint("model", "base_channels", fallback=16),
        feature_dim=cp.getint("model", "feature_dim", fallback=16),
    )

    lpp_spec = NeighborhoodSpec(
        window=cp.getint("train", "lpp_window", fallback=3),
        dilation=cp.getint("train", "lpp_dilation", fallback=1),
        include_center=cp.getboolean("train", "lpp_include_center", fallback=True),
    )
    train = TrainConfig(
        m=ladder.m,
        lam=cp.getfloat("train", "lambda", fallback=3.0),
        iters=cp.getint("train", "iters", fallback=1500),
        batch_size=cp.getint("train", "batch_size", fallback=8),
        optimizer=cp.get("train", "optimizer", fallback="adam").strip(),
        lr=cp.getfloat("train", "lr", fallback=4e-4),
        lr_min=cp.getfloat("train", "lr_min", fallback=1e-4),
        momentum=cp.getfloat("train", "momentum", fallback=0.99),
        seed=cp.getint("train", "seed", fallback=0),
        lpp_spec=lpp_spec,
        loss_norm=cp.getboolean("train", "loss_norm", fallback=True),
        flip_augment=cp.getboolean("train", "flip_augment", fallback=True),
        eval_interval=cp.getint("train", "eval_interval", fallback=0),
        checkpoint_interval=cp.getint("train", "checkpoint_interval", fallback=0),
    )

    eval_block = {
        "split": cp.getfloat("eval", "split", fallback=0.2),
        "split_seed": cp.getint("eval", "split_seed", fallback=0),
        "memo_subset": cp.getint("eval", "memo_subset", fallback=48),
    }
    if not 0.0 <= eval_block["split"] < 1.0:
        raise ValidationError("eval.split must be in [0, 1)")

    output_dir = cp.get("output", "dir", fallback="runs/experiment").strip()
    return ExperimentConfig(
        dataset=dataset,
        heatmap=heatmap,
        crf=crf,
        ladder=ladder,
        model=model,
        train=train,
        eval=eval_block,
        output_dir=output_dir,
        ini_text=_dump(cp),
    )


def with_overrides(cfg: ExperimentConfig, overrides) -> ExperimentConfig:
    """New config with extra overrides applied on top of an existing one.

    Re-parses the stored INI text, so the snapshot written for a derived
    run reflects the final values.
    """
    cp = _parser_from_text(cfg.ini_text)
    apply_overrides(cp, overrides)
    return _build(cp)


def load_config(path=None, preset: str | None = None, overrides=()) -> ExperimentConfig:
    """Build the effective config: preset or file base, then overrides.

    Passing both a path and a preset is an error (ambiguous base); passing
    neither uses the desk preset.
    """
    if path is not None and preset is not None:
        raise ValidationError("pass either a config file or a preset, not both")
    if path is not None:
        if not os.path.exists(path):
            raise ValidationError(f"config file not found: {path}")
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = preset_text(preset or "desk")
    cp = _parser_from_text(text)
    apply_overrides(cp, overrides)
    return _build(cp)
