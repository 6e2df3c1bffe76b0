"""Bias-corrected adaptive-moment (Adam) parameter updates."""

from __future__ import annotations

import numpy as np

from .errors import ShapeMismatch
from .memory import METER
from .tensor import Tensor


class OptimizerState:
    """Per-parameter first/second moment accumulators plus a step counter.

    Moment decay rates default to the standard 0.9 / 0.999 with epsilon 1e-8.
    """

    def __init__(self, lr: float = 0.001, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.step = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def _ensure(self, name: str, shape: tuple) -> None:
        if name not in self.m:
            m = np.zeros(shape)
            v = np.zeros(shape)
            METER.track(m)
            METER.track(v)
            self.m[name] = m
            self.v[name] = v


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray],
              state: OptimizerState) -> OptimizerState:
    """Apply one in-place Adam update to every named parameter.

    `grads` must cover every parameter with a matching shape; the step
    counter increments exactly once per call.
    """
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.data.shape:
            raise ShapeMismatch(
                f"adam_step: gradient shape {g.shape} does not match parameter "
                f"{name} shape {p.data.shape}")
        state._ensure(name, p.data.shape)
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        mhat = m / bc1
        vhat = v / bc2
        p.data -= state.lr * mhat / (np.sqrt(vhat) + state.eps)
    return state
