"""Differentiable array ops for the segmentation networks.

Everything is channels-last (batch, height, width, channels) and functional:
each op returns its output plus whatever the matching ``*_grad`` function
needs. The 3x3 convolutions dispatch to the compiled kernel backend; the
rest is cheap enough to stay plain numpy regardless of backend.
"""

from __future__ import annotations

import numpy as np

from .. import kernels

__all__ = [
    "conv3x3",
    "conv3x3_grad",
    "conv1x1",
    "conv1x1_grad",
    "relu",
    "relu_grad",
    "maxpool2",
    "maxpool2_grad",
    "upsample2",
    "upsample2_grad",
    "concat_channels",
    "split_channels",
    "softmax_channels",
    "softmax_channels_grad",
]


def _pad1(x: np.ndarray) -> np.ndarray:
    return np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))


def conv3x3(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """Same-padded 3x3 convolution. w has shape (3, 3, c_in, c_out)."""
    xp = np.ascontiguousarray(_pad1(x))
    y = kernels.conv3x3_forward(xp, w, b)
    return y, xp


def conv3x3_grad(xp: np.ndarray, w: np.ndarray, dy: np.ndarray):
    dy = np.ascontiguousarray(dy)
    dw, db = kernels.conv3x3_backward_weights(xp, dy)
    dx = kernels.conv3x3_backward_data(dy, w)
    return dx, dw, db


def conv1x1(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pointwise linear map over channels. w has shape (c_in, c_out)."""
    return x @ w + b


def conv1x1_grad(x: np.ndarray, w: np.ndarray, dy: np.ndarray):
    dx = dy @ w.T
    dw = np.tensordot(x, dy, axes=([0, 1, 2], [0, 1, 2]))
    db = dy.sum(axis=(0, 1, 2))
    return dx, dw, db


def relu(x: np.ndarray):
    mask = x > 0
    return np.where(mask, x, 0.0), mask


def relu_grad(mask: np.ndarray, dy: np.ndarray) -> np.ndarray:
    return np.where(mask, dy, 0.0)


def maxpool2(x: np.ndarray):
    """2x2 max pooling, stride 2. Ties go to the first window element
    (row-major), so the gradient routes to exactly one input per window."""
    b, h, w, c = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"maxpool2 needs even spatial dims, got {h}x{w}")
    xr = x.reshape(b, h // 2, 2, w // 2, 2, c)
    xr = xr.transpose(0, 1, 3, 5, 2, 4).reshape(b, h // 2, w // 2, c, 4)
    idx = xr.argmax(axis=-1)
    y = np.take_along_axis(xr, idx[..., None], axis=-1)[..., 0]
    return y, idx


def maxpool2_grad(idx: np.ndarray, x_shape, dy: np.ndarray) -> np.ndarray:
    b, h, w, c = x_shape
    dxr = np.zeros((b, h // 2, w // 2, c, 4), dtype=dy.dtype)
    np.put_along_axis(dxr, idx[..., None], dy[..., None], axis=-1)
    dxr = dxr.reshape(b, h // 2, w // 2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3)
    return dxr.reshape(b, h, w, c)


def upsample2(x: np.ndarray) -> np.ndarray:
    """Nearest-neighbour 2x upsampling."""
    return x.repeat(2, axis=1).repeat(2, axis=2)


def upsample2_grad(dy: np.ndarray) -> np.ndarray:
    b, h, w, c = dy.shape
    return dy.reshape(b, h // 2, 2, w // 2, 2, c).sum(axis=(2, 4))


def concat_channels(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.concatenate([a, b], axis=-1)


def split_channels(d: np.ndarray, c_first: int):
    return d[..., :c_first], d[..., c_first:]


def softmax_channels(z: np.ndarray) -> np.ndarray:
    zs = z - z.max(axis=-1, keepdims=True)
    e = np.exp(zs)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_channels_grad(p: np.ndarray, dp: np.ndarray) -> np.ndarray:
    inner = (dp * p).sum(axis=-1, keepdims=True)
    return p * (dp - inner)
