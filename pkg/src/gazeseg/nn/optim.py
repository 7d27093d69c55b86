"""Optimizers and learning-rate schedules for the hand-rolled networks.

State is kept as plain name -> array dicts keyed like the parameter dict,
so checkpoints can serialize it next to the parameters.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import ValidationError

__all__ = ["Adam", "SGDMomentum", "cosine_lr", "make_optimizer"]


class Adam:
    """Adam with bias correction. Default lr matches the training preset."""

    def __init__(self, lr: float = 4e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ValidationError(f"learning rate must be positive, got {lr}")
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict, grads: dict, lr: float | None = None) -> None:
        self.t += 1
        lr = self.lr if lr is None else float(lr)
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1**self.t
        bias2 = 1.0 - b2**self.t
        for name, g in grads.items():
            p = params[name]
            g = g.astype(p.dtype, copy=False)
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            mhat = m / bias1
            vhat = v / bias2
            p -= lr * mhat / (np.sqrt(vhat) + self.eps)

    def state_dict(self) -> dict:
        out = {"t": self.t}
        for k, a in self.m.items():
            out[f"m:{k}"] = a
        for k, a in self.v.items():
            out[f"v:{k}"] = a
        return out

    def load_state_dict(self, state: dict) -> None:
        self.t = int(state["t"])
        self.m = {k[2:]: np.array(v) for k, v in state.items() if k.startswith("m:")}
        self.v = {k[2:]: np.array(v) for k, v in state.items() if k.startswith("v:")}


class SGDMomentum:
    """SGD with classical momentum, meant to pair with a cosine schedule."""

    def __init__(self, lr: float = 1e-2, momentum: float = 0.99):
        if lr <= 0:
            raise ValidationError(f"learning rate must be positive, got {lr}")
        if not 0.0 <= momentum < 1.0:
            raise ValidationError(f"momentum must be in [0, 1), got {momentum}")
        self.lr = float(lr)
        self.momentum = float(momentum)
        self.t = 0
        self.buf: dict[str, np.ndarray] = {}

    def step(self, params: dict, grads: dict, lr: float | None = None) -> None:
        self.t += 1
        lr = self.lr if lr is None else float(lr)
        mu = self.momentum
        for name, g in grads.items():
            p = params[name]
            g = g.astype(p.dtype, copy=False)
            if name not in self.buf:
                self.buf[name] = np.zeros_like(p)
            b = self.buf[name]
            b *= mu
            b += g
            p -= lr * b

    def state_dict(self) -> dict:
        out = {"t": self.t}
        for k, a in self.buf.items():
            out[f"b:{k}"] = a
        return out

    def load_state_dict(self, state: dict) -> None:
        self.t = int(state["t"])
        self.buf = {k[2:]: np.array(v) for k, v in state.items() if k.startswith("b:")}


def cosine_lr(step: int, total_steps: int, lr_max: float, lr_min: float) -> float:
    """Cosine annealing from lr_max at step 0 to lr_min at the final step."""
    if total_steps <= 1:
        return lr_min
    frac = min(max(step / (total_steps - 1), 0.0), 1.0)
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * frac))


def make_optimizer(name: str, **kwargs):
    name = name.lower()
    if name == "adam":
        return Adam(**kwargs)
    if name == "sgd":
        return SGDMomentum(**kwargs)
    raise ValidationError(f"unknown optimizer {name!r}; expected 'adam' or 'sgd'")
