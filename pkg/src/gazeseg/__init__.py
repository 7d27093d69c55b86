"""Gaze-supervised segmentation: pseudo-masks from fixations, multi-level
co-training with local feature propagation, and a synthetic gaze simulator.

The compute backend (numba JIT vs pure numpy) is chosen at import time;
see :mod:`gazeseg.backend`.
"""

from .backend import BACKEND, USING_NUMBA
from .crf import CrfParams, heatmap_to_unary, mean_field_refine, refine_heatmap, refine_pipeline
from .errors import GazeSegError, ParseError, ShapeError, ValidationError
from .gaze import (
    DisplayGeometry,
    GazeSample,
    GazeSequence,
    SimulatorConfig,
    generate_synthetic_dataset,
    parse_fixation_file,
    parse_geometry,
    simulate_gaze,
    write_fixation_file,
)
from .heatmap import (
    AttentionHeatmap,
    default_sigma,
    load_heatmap,
    render_heatmap,
    save_heatmap,
)
from .lpp import NeighborhoodSpec, propagate
from .metrics import dice, evaluate_ensemble, memorization_metrics, wrong_pixel_set
from .nn import LevelNetwork, ModelConfig, build_network, predict
from .pseudomask import PseudoMaskStack, ThresholdLadder, binarize_stack, make_ladder
from .train import (
    LevelEnsemble,
    RunLog,
    TrainConfig,
    TrainDataset,
    ensemble_predict,
    fit,
    fit_baseline,
    loss_consistency,
    loss_supervision,
    train_step,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "USING_NUMBA",
    "AttentionHeatmap",
    "CrfParams",
    "DisplayGeometry",
    "GazeSegError",
    "GazeSample",
    "GazeSequence",
    "LevelEnsemble",
    "LevelNetwork",
    "ModelConfig",
    "NeighborhoodSpec",
    "ParseError",
    "PseudoMaskStack",
    "RunLog",
    "ShapeError",
    "SimulatorConfig",
    "ThresholdLadder",
    "TrainConfig",
    "TrainDataset",
    "ValidationError",
    "binarize_stack",
    "build_network",
    "default_sigma",
    "dice",
    "ensemble_predict",
    "evaluate_ensemble",
    "fit",
    "fit_baseline",
    "generate_synthetic_dataset",
    "heatmap_to_unary",
    "load_heatmap",
    "loss_consistency",
    "loss_supervision",
    "make_ladder",
    "mean_field_refine",
    "memorization_metrics",
    "parse_fixation_file",
    "parse_geometry",
    "predict",
    "propagate",
    "refine_heatmap",
    "refine_pipeline",
    "render_heatmap",
    "save_heatmap",
    "simulate_gaze",
    "train_step",
    "write_fixation_file",
    "wrong_pixel_set",
]
