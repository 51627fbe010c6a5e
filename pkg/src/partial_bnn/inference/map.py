"""Point estimation of the stochastic subset by maximizing the log density."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .. import autodiff as ad
from ..data import Dataset
from ..network import Network
from ..rng import make_rng
from .model import LogDensityModel, logdensity, logdensity_and_grad
from .optim import Adam


@dataclass
class MapConfig:
    steps: int = 2000
    lr: float = 1e-3
    batch_size: int | None = None  # None: full batch
    seed: int = 0
    val_check_every: int = 10


def train_map(model: LogDensityModel, data: Dataset | None, config: MapConfig) -> Network:
    """Adam ascent on the log density over the partition's stochastic subset.

    The objective is -log p(D | theta) - log p(theta_S) with the likelihood
    tempered as configured. When `data` carries a validation split, the
    returned network is the iterate with the best validation objective
    (checked every `val_check_every` steps and at the end); otherwise the
    final iterate is returned. Zero steps returns the initialization.
    Deterministic coordinates are never touched.
    """
    if data is not None:
        tx, ty = data.train
        vx, vy = data.val
        has_val = len(vx) > 0
    else:
        tx, ty = model.x, model.y
        if tx is None:
            raise ValueError("train_map needs data bound to the model or passed in")
        vx = vy = None
        has_val = False

    n = len(tx)
    z = ad.value_of(model.network.theta)[model.partition.mask].copy()
    opt = Adam(z.size, lr=config.lr)
    rng = make_rng(config.seed, 11)

    def objective(zv, x, y):
        return -_logdensity_fixed_noise(model, zv, x, y)

    best_z = z.copy()
    best_val = objective(z, vx, vy) if has_val else np.inf

    for step in range(config.steps):
        if config.batch_size is not None and config.batch_size < n:
            idx = rng.choice(n, size=config.batch_size, replace=False)
            bx, by = tx[idx], ty[idx]
            scale = n / config.batch_size
        else:
            bx, by = tx, ty
            scale = 1.0
        val, grad = _logdensity_and_grad_fixed_noise(model, z, bx, by, lik_scale=scale)
        z = opt.step(z, -grad)
        if has_val and (step % config.val_check_every == 0 or step == config.steps - 1):
            obj = objective(z, vx, vy)
            if obj < best_val:
                best_val = obj
                best_z = z.copy()
    if not has_val:
        best_z = z

    theta = ad.value_of(model.network.theta).copy()
    theta[model.partition.mask] = best_z
    return Network(model.spec, theta)


def _logdensity_fixed_noise(model, z, x, y):
    # MAP never samples the noise precision, whatever the likelihood flag says
    return logdensity(_fixed(model), z, x, y)


def _logdensity_and_grad_fixed_noise(model, z, x, y, lik_scale=1.0):
    m = _fixed(model)
    if lik_scale != 1.0:
        # minibatch estimate: scale only the likelihood part
        m = replace(m, temperature=m.temperature * lik_scale)
    return logdensity_and_grad(m, z, x, y)


def _fixed(model: LogDensityModel) -> LogDensityModel:
    lik = model.likelihood
    if getattr(lik, "learn_precision", False):
        return replace(model, likelihood=replace(lik, learn_precision=False))
    return model
