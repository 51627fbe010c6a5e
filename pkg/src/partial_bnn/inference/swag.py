"""Stochastic weight averaging Gaussian over the stochastic subset.

Constant-learning-rate SGD explores around a mode; snapshots taken a few
times per epoch feed running first and second moments plus a deviation
matrix holding the last K (theta - running mean) columns. Samples combine
the diagonal and low-rank parts with the usual 1/sqrt(2) split and the
K - 1 normalization. The diagonal variance is floored at 1e-30 so that a
degenerate trajectory still yields a valid (if tight) Gaussian.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .. import autodiff as ad
from ..data import Dataset
from ..rng import make_rng
from .model import LogDensityModel
from .map import _logdensity_and_grad_fixed_noise
from .optim import Sgd

VAR_FLOOR = 1e-30


@dataclass
class SwagConfig:
    epochs: int = 10
    snapshots_per_epoch: int = 4
    rank: int = 20  # K: deviation columns kept
    lr: float = 1e-2
    momentum: float = 0.0
    weight_decay: float = 3e-4
    batch_size: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.rank < 2:
            raise ValueError("rank must be at least 2")
        if self.epochs < 1 or self.snapshots_per_epoch < 1:
            raise ValueError("epochs and snapshots_per_epoch must be positive")


@dataclass
class SwagPosterior:
    mean: np.ndarray
    diag_variance: np.ndarray  # floored at VAR_FLOOR
    deviations: np.ndarray  # (n_cols, dim), oldest first
    n_snapshots: int

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def rank(self) -> int:
        return self.deviations.shape[0]


def fit_swag(model: LogDensityModel, data: Dataset | None, config: SwagConfig) -> SwagPosterior:
    """Run the snapshot trajectory from the model's current parameters.

    The SGD objective is the negative log likelihood (tempered) plus L2
    weight decay on theta_S; deterministic coordinates never move.
    Snapshots are spaced evenly inside each epoch.
    """
    if data is not None:
        tx, ty = data.train
    else:
        tx, ty = model.x, model.y
        if tx is None:
            raise ValueError("fit_swag needs data bound to the model or passed in")
    n = len(tx)
    mask = model.partition.mask
    if model.partition.n_stochastic == 0:
        raise ValueError("SWAG needs a non-empty stochastic subset")
    z = ad.value_of(model.network.theta)[mask].copy()
    dim = z.size

    # weight decay is the regularizer here, so drop the prior from the gradient
    flat_model = replace(model, prior=replace(model.prior, variance=1e12, rescale="none"))

    opt = Sgd(dim, lr=config.lr, momentum=config.momentum, weight_decay=config.weight_decay)
    rng = make_rng(config.seed, 7)
    bs = config.batch_size if config.batch_size and config.batch_size < n else n
    n_batches = (n + bs - 1) // bs
    snap_at = _snapshot_steps(n_batches, config.snapshots_per_epoch)

    mean = np.zeros(dim)
    sq_mean = np.zeros(dim)
    cols = []
    count = 0

    for _ in range(config.epochs):
        order = rng.permutation(n) if bs < n else np.arange(n)
        for b in range(n_batches):
            sel = order[b * bs : (b + 1) * bs]
            bx, by = tx[sel], ty[sel]
            _, grad = _logdensity_and_grad_fixed_noise(flat_model, z, bx, by, lik_scale=n / len(sel))
            z = opt.step(z, -grad)
            if b in snap_at:
                mean = (count * mean + z) / (count + 1)
                sq_mean = (count * sq_mean + z * z) / (count + 1)
                count += 1
                cols.append(z - mean)
                if len(cols) > config.rank:
                    cols.pop(0)

    return SwagPosterior(
        mean=mean,
        diag_variance=np.maximum(sq_mean - mean * mean, VAR_FLOOR),
        deviations=np.array(cols),
        n_snapshots=count,
    )


def _snapshot_steps(n_batches: int, per_epoch: int) -> set:
    per_epoch = min(per_epoch, n_batches)
    return {int((j + 1) * n_batches / per_epoch) - 1 for j in range(per_epoch)}


def sample_swag(post: SwagPosterior, rng, n: int = 1) -> np.ndarray:
    """Draws theta = mean + diag part / sqrt(2) + low-rank part / sqrt(2(K-1))."""
    d = post.dim
    k = post.rank
    sigma = np.sqrt(post.diag_variance)
    eps1 = rng.standard_normal((n, d))
    out = post.mean + sigma * eps1 / np.sqrt(2.0)
    if k >= 2:
        eps2 = rng.standard_normal((n, k))
        out = out + (eps2 @ post.deviations) / np.sqrt(2.0 * (k - 1.0))
    return out


def swag_implied_diag(post: SwagPosterior) -> np.ndarray:
    """Diagonal of the sampling covariance actually used by sample_swag."""
    k = post.rank
    diag = 0.5 * post.diag_variance
    if k >= 2:
        diag = diag + 0.5 * np.sum(post.deviations**2, axis=0) / (k - 1.0)
    return diag
