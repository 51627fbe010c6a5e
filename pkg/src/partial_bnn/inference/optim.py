"""First-order optimizers over flat numpy vectors."""

from __future__ import annotations

import numpy as np


class Adam:
    """Adam with optional decoupled weight decay on a marked coordinate subset.

    Decay is applied AdamW-style (directly to the parameters, scaled by the
    learning rate), never mixed into the moment estimates.
    """

    def __init__(self, dim, lr=1e-3, betas=(0.9, 0.999), eps=1e-8,
                 weight_decay=0.0, decay_mask=None):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.decay_mask = None if decay_mask is None else np.asarray(decay_mask, dtype=bool)
        self.m = np.zeros(dim)
        self.v = np.zeros(dim)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.b1 * self.m + (1.0 - self.b1) * grad
        self.v = self.b2 * self.v + (1.0 - self.b2) * grad * grad
        mhat = self.m / (1.0 - self.b1 ** self.t)
        vhat = self.v / (1.0 - self.b2 ** self.t)
        out = params - self.lr * mhat / (np.sqrt(vhat) + self.eps)
        if self.weight_decay > 0.0:
            decay = self.lr * self.weight_decay * params
            if self.decay_mask is not None:
                decay = np.where(self.decay_mask, decay, 0.0)
            out = out - decay
        return out


class Sgd:
    """Plain (optionally momentum) SGD with L2 weight decay folded into the step."""

    def __init__(self, dim, lr=1e-2, momentum=0.0, weight_decay=0.0):
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.buf = np.zeros(dim)

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        g = grad + self.weight_decay * params
        if self.momentum > 0.0:
            self.buf = self.momentum * self.buf + g
            g = self.buf
        return params - self.lr * g
