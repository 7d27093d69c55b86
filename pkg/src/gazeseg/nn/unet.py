"""Encoder-decoder feature extractor with a shallow per-pixel classifier.

The network is a small UNet: ``depth`` encoder stages of two 3x3 convs each,
a bottleneck, and a mirrored decoder with skip concatenation, ending in a
3x3 conv that produces a D-channel per-pixel feature map phi. The classifier
g is a single per-pixel linear map over phi followed by a softmax, kept
separate so callers can transform phi (e.g. local propagation) before
classifying.

Backprop is hand-written: ``forward_features`` records a tape of op caches
and ``features_backward`` replays it in reverse.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ShapeError, ValidationError
from . import ops

__all__ = [
    "ModelConfig",
    "LevelNetwork",
    "build_network",
    "predict",
    "save_network",
    "load_network",
]


@dataclass(frozen=True)
class ModelConfig:
    """Architecture size knobs.

    depth: number of encoder stages (and 2x poolings).
    base_channels: channels at the first stage; doubles per stage.
    feature_dim: channels of the per-pixel feature map phi.
    """

    depth: int = 3
    base_channels: int = 16
    feature_dim: int = 16
    in_channels: int = 1

    def __post_init__(self) -> None:
        if self.depth < 1:
            raise ValidationError(f"depth must be >= 1, got {self.depth}")
        for name in ("base_channels", "feature_dim", "in_channels"):
            v = getattr(self, name)
            if v < 1:
                raise ValidationError(f"{name} must be >= 1, got {v}")


def _conv_shapes(config: ModelConfig):
    """Yield (name, c_in, c_out) for every 3x3 conv, in parameter order."""
    c = config.base_channels
    c_in = config.in_channels
    for k in range(config.depth):
        c_out = c * (2**k)
        yield f"enc{k}a", c_in, c_out
        yield f"enc{k}b", c_out, c_out
        c_in = c_out
    c_bot = c * (2**config.depth)
    yield "bota", c_in, c_bot
    yield "botb", c_bot, c_bot
    c_in = c_bot
    for k in range(config.depth - 1, -1, -1):
        c_skip = c * (2**k)
        yield f"dec{k}a", c_in + c_skip, c_skip
        yield f"dec{k}b", c_skip, c_skip
        c_in = c_skip
    yield "feat", c_in, config.feature_dim


class LevelNetwork:
    """One ensemble member: feature extractor f plus classifier g.

    Parameters live in ``params``, a flat name -> array dict, so the
    optimizer and checkpoint code can treat the network generically.
    """

    def __init__(self, config: ModelConfig, init_seed: int, dtype=np.float32):
        self.config = config
        self.init_seed = int(init_seed)
        self.dtype = np.dtype(dtype)
        self.params: dict[str, np.ndarray] = {}
        self._init_params()

    def _init_params(self) -> None:
        rng = np.random.default_rng(self.init_seed)
        for name, c_in, c_out in _conv_shapes(self.config):
            # He initialization for relu nets; fan-in is 9 * c_in.
            std = np.sqrt(2.0 / (9.0 * c_in))
            w = rng.normal(0.0, std, size=(3, 3, c_in, c_out))
            self.params[f"{name}_w"] = w.astype(self.dtype)
            self.params[f"{name}_b"] = np.zeros(c_out, dtype=self.dtype)
        d = self.config.feature_dim
        std = np.sqrt(1.0 / d)
        self.params["g_w"] = rng.normal(0.0, std, size=(d, 2)).astype(self.dtype)
        self.params["g_b"] = np.zeros(2, dtype=self.dtype)

    # -- feature extractor ------------------------------------------------

    def _check_input(self, x: np.ndarray) -> None:
        if x.ndim != 4 or x.shape[-1] != self.config.in_channels:
            raise ShapeError(
                "expected input of shape (batch, height, width, "
                f"{self.config.in_channels}), got {x.shape}"
            )
        div = 2**self.config.depth
        if x.shape[1] % div or x.shape[2] % div:
            raise ShapeError(
                f"input sides must be multiples of {div} for depth "
                f"{self.config.depth}, got {x.shape[1]}x{x.shape[2]}"
            )

    def _double_conv(self, x, name, tape):
        p = self.params
        y, xp = ops.conv3x3(x, p[f"{name}a_w"], p[f"{name}a_b"])
        tape.append(("conv", f"{name}a", xp))
        y, mask = ops.relu(y)
        tape.append(("relu", mask))
        y, xp = ops.conv3x3(y, p[f"{name}b_w"], p[f"{name}b_b"])
        tape.append(("conv", f"{name}b", xp))
        y, mask = ops.relu(y)
        tape.append(("relu", mask))
        return y

    def forward_features(self, x: np.ndarray):
        """Run f. Returns (phi, tape) where tape drives features_backward."""
        x = np.asarray(x, dtype=self.dtype)
        self._check_input(x)
        tape: list = []
        skips = []
        y = x
        for k in range(self.config.depth):
            y = self._double_conv(y, f"enc{k}", tape)
            skips.append(y)
            in_shape = y.shape
            y, idx = ops.maxpool2(y)
            tape.append(("pool", idx, in_shape))
        y = self._double_conv(y, "bot", tape)
        for k in range(self.config.depth - 1, -1, -1):
            y = ops.upsample2(y)
            tape.append(("upsample", None))
            skip = skips[k]
            y = ops.concat_channels(skip, y)
            tape.append(("concat", skip.shape[-1]))
            y = self._double_conv(y, f"dec{k}", tape)
        y, xp = ops.conv3x3(y, self.params["feat_w"], self.params["feat_b"])
        tape.append(("conv", "feat", xp))
        phi, mask = ops.relu(y)
        tape.append(("relu", mask))
        return phi, tape

    def features_backward(self, tape, dphi: np.ndarray):
        """Backprop dL/dphi through f. Returns name -> grad for f's params."""
        grads: dict[str, np.ndarray] = {}
        d = np.asarray(dphi, dtype=self.dtype)
        # Decoder stage k splits off the gradient for encoder stage k's
        # output (the skip). That same tensor was also pooled, so when the
        # reverse walk reaches the matching pool entry the two gradient
        # paths are summed. Concats are met in order dec(depth-1)..dec0 and
        # pools in order pool(depth-1)..pool0, so a stack pairs them up.
        dskips: list[np.ndarray] = []
        for entry in reversed(tape):
            kind = entry[0]
            if kind == "conv":
                _, name, xp = entry
                d, dw, db = ops.conv3x3_grad(xp, self.params[f"{name}_w"], d)
                grads[f"{name}_w"] = dw
                grads[f"{name}_b"] = db
            elif kind == "relu":
                d = ops.relu_grad(entry[1], d)
            elif kind == "upsample":
                d = ops.upsample2_grad(d)
            elif kind == "concat":
                dskip, d = ops.split_channels(d, entry[1])
                dskips.append(np.ascontiguousarray(dskip))
            elif kind == "pool":
                _, idx, in_shape = entry
                d = ops.maxpool2_grad(idx, in_shape, d)
                d = d + dskips.pop()
            else:  # pragma: no cover
                raise RuntimeError(f"unknown tape entry {kind}")
        return grads, d

    # -- classifier --------------------------------------------------------

    def classify(self, phi: np.ndarray) -> np.ndarray:
        """g: per-pixel linear map + softmax. phi (..., D) -> probs (..., 2)."""
        z = ops.conv1x1(phi, self.params["g_w"], self.params["g_b"])
        return ops.softmax_channels(z)

    def classify_backward(self, phi: np.ndarray, p: np.ndarray, dp: np.ndarray):
        """Backprop dL/dp through g. Returns (dphi, grads for g)."""
        dz = ops.softmax_channels_grad(p, dp)
        dphi, dw, db = ops.conv1x1_grad(phi, self.params["g_w"], dz)
        return dphi, {"g_w": dw, "g_b": db}

    def forward(self, x: np.ndarray):
        """Full forward pass. Returns (phi, probs)."""
        phi, _ = self.forward_features(x)
        return phi, self.classify(phi)


def build_network(config: ModelConfig, seed: int, dtype=np.float32) -> LevelNetwork:
    """Construct a LevelNetwork with seed-deterministic parameters."""
    return LevelNetwork(config, seed, dtype=dtype)


def predict(net: LevelNetwork, image: np.ndarray):
    """Run one image or a batch through f and g.

    Accepts (H, W), (H, W, 1) or (B, H, W, 1); returns (phi, p) with the
    batch axis matching the input (squeezed for single images).
    """
    x = np.asarray(image)
    squeeze = False
    if x.ndim == 2:
        x = x[None, :, :, None]
        squeeze = True
    elif x.ndim == 3:
        x = x[None]
        squeeze = True
    phi, p = net.forward(x)
    if squeeze:
        return phi[0], p[0]
    return phi, p


def save_network(net: LevelNetwork, path) -> None:
    meta = {
        "config": asdict(net.config),
        "init_seed": net.init_seed,
        "dtype": net.dtype.name,
    }
    arrays = {f"param:{k}": v for k, v in net.params.items()}
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)


def load_network(path) -> LevelNetwork:
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        net = LevelNetwork(
            ModelConfig(**meta["config"]), meta["init_seed"], dtype=meta["dtype"]
        )
        for key in data.files:
            if key.startswith("param:"):
                name = key[len("param:"):]
                net.params[name] = data[key].astype(net.dtype)
    return net
