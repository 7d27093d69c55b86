from .unet import LevelNetwork, ModelConfig, build_network, load_network, predict, save_network

__all__ = [
    "LevelNetwork",
    "ModelConfig",
    "build_network",
    "load_network",
    "predict",
    "save_network",
]
