"""Gauss-Newton Laplace approximation around a point estimate of theta_S.

The posterior precision is the generalized Gauss-Newton matrix of the
tempered likelihood plus the (rescaled) prior precision, with Diagonal and
Dense structures; Dense is refused above 5000 stochastic parameters.
Cholesky factorizations escalate a diagonal jitter (1e-8 times the mean
diagonal, then x10, three tries) before giving up. Prediction is by the
linearized model: Gaussian outputs in regression, and in classification a
per-logit probit correction softmax(m / sqrt(1 + pi v / 8)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..data import Dataset
from ..network import eval_theta
from .model import CategoricalLikelihood, GaussianLikelihood, LogDensityModel

DENSE_LIMIT = 5000
PRIOR_PRECISION_GRID = np.logspace(-2.0, 5.0, 125)


@dataclass
class LaplaceConfig:
    structure: str = "diag"  # "diag" | "dense"
    prior_precision: float | None = None  # None: from the model's effective prior

    def __post_init__(self):
        if self.structure not in ("diag", "dense"):
            raise ValueError("structure must be 'diag' or 'dense'")


@dataclass
class LaplacePosterior:
    mean: np.ndarray  # theta_S at the expansion point
    structure: str
    ggn: np.ndarray  # likelihood curvature: (d,) for diag, (d, d) for dense
    prior_precision: float
    jitter: float = 0.0

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def precision(self) -> np.ndarray:
        if self.structure == "diag":
            return self.ggn + self.prior_precision
        return self.ggn + self.prior_precision * np.eye(self.dim)

    def with_prior_precision(self, tau: float) -> "LaplacePosterior":
        return LaplacePosterior(self.mean, self.structure, self.ggn, float(tau), self.jitter)

    def covariance_diag(self) -> np.ndarray:
        if self.structure == "diag":
            return 1.0 / self.precision
        cov = chol_inverse(self.precision)[0]
        return np.diag(cov).copy()

    def sample(self, rng, n: int) -> np.ndarray:
        if self.structure == "diag":
            return self.mean + rng.standard_normal((n, self.dim)) / np.sqrt(self.precision)
        # precision = L L^T  ->  cov = L^-T L^-1, sample = mean + L^-T z
        chol, _ = chol_with_jitter(self.precision)
        z = rng.standard_normal((self.dim, n))
        return self.mean + np.linalg.solve(chol.T, z).T


def chol_with_jitter(mat: np.ndarray):
    """Cholesky with escalating diagonal jitter; returns (L, jitter_used)."""
    try:
        return np.linalg.cholesky(mat), 0.0
    except np.linalg.LinAlgError:
        pass
    base = 1e-8 * float(np.mean(np.diag(mat)))
    jitter = base
    eye = np.eye(mat.shape[0])
    for _ in range(3):
        try:
            return np.linalg.cholesky(mat + jitter * eye), jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise np.linalg.LinAlgError(
        "precision not positive definite after jitter up to %.3e" % jitter
    )


def chol_inverse(mat: np.ndarray):
    """(inverse, jitter_used) through the jittered Cholesky factor."""
    chol, jitter = chol_with_jitter(mat)
    inv_l = np.linalg.solve(chol, np.eye(mat.shape[0]))
    return inv_l.T @ inv_l, jitter


def subset_jacobian(spec, theta: np.ndarray, mask: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Per-point Jacobian of network outputs w.r.t. the masked coordinates.

    Shape (N, n_out, n_S). One reverse pass per (point, output); fine at
    desk scale.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    n_out = spec.output_dim
    idx = np.flatnonzero(mask)
    jac = np.empty((n, n_out, idx.size))
    for i in range(n):
        tv = ad.Var(theta)
        f = eval_theta(spec, tv, x[i : i + 1])
        for k in range(n_out):
            ad.backward(f, seed=_basis(f.value.shape, (0, k)))
            jac[i, k] = tv.grad[idx]
    return jac


def _basis(shape, at):
    e = np.zeros(shape)
    e[at] = 1.0
    return e


def fit_laplace(model: LogDensityModel, config: LaplaceConfig | None = None) -> LaplacePosterior:
    """Curvature fit at the model's current parameters (assumed at a mode).

    Regression uses the exact Gauss-Newton of the Gaussian likelihood
    (J^T J / noise_var per point); classification uses the softmax GGN
    (J^T (diag(p) - p p^T) J). Both are scaled by the temperature. The
    noise variance stays at its fixed configured value here.
    """
    config = config or LaplaceConfig()
    if model.x is None or model.y is None:
        raise ValueError("fit_laplace needs data bound to the model")
    mask = model.partition.mask
    d = model.partition.n_stochastic
    if d == 0:
        raise ValueError("Laplace needs a non-empty stochastic subset")
    if config.structure == "dense" and d > DENSE_LIMIT:
        raise ValueError(
            "dense Laplace limited to %d stochastic parameters, got %d" % (DENSE_LIMIT, d)
        )
    theta = ad.value_of(model.network.theta)
    jac = subset_jacobian(model.spec, theta, mask, model.x)
    lam = model.temperature
    lik = model.likelihood
    if isinstance(lik, CategoricalLikelihood):
        f = eval_theta(model.spec, theta, model.x)
        p = _softmax(f)
        if config.structure == "dense":
            ggn = np.zeros((d, d))
            for i in range(len(f)):
                h = np.diag(p[i]) - np.outer(p[i], p[i])
                ggn += jac[i].T @ h @ jac[i]
        else:
            # diag of J^T H J accumulated per point
            ggn = np.zeros(d)
            for i in range(len(f)):
                h = np.diag(p[i]) - np.outer(p[i], p[i])
                ggn += np.einsum("ki,kl,li->i", jac[i], h, jac[i])
        ggn *= lam
    else:
        inv_var = 1.0 / lik.noise_var
        if config.structure == "dense":
            flat = jac.reshape(-1, d)
            ggn = lam * inv_var * (flat.T @ flat)
        else:
            ggn = lam * inv_var * np.einsum("nki,nki->i", jac, jac)

    if config.prior_precision is not None:
        tau = float(config.prior_precision)
    else:
        tau = 1.0 / model.effective_prior.variance
    mean = theta[mask].copy()
    post = LaplacePosterior(mean, config.structure, ggn, tau)
    if config.structure == "dense":
        # record the jitter the factorization needs, if any
        _, post.jitter = chol_with_jitter(post.precision)
    return post


def linearized_predict(model: LogDensityModel, post: LaplacePosterior, x: np.ndarray):
    """Closed-form predictive of the linearized network.

    Returns (mean, var) with var the per-output variance of the function
    values (no observation noise added).
    """
    theta = ad.value_of(model.network.theta)
    mask = model.partition.mask
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    mean = eval_theta(model.spec, theta, x)
    jac = subset_jacobian(model.spec, theta, mask, x)
    if post.structure == "diag":
        cov_diag = 1.0 / post.precision
        var = np.einsum("nki,i,nki->nk", jac, cov_diag, jac)
    else:
        chol, _ = chol_with_jitter(post.precision)
        n, n_out, d = jac.shape
        flat = jac.reshape(-1, d)
        half = np.linalg.solve(chol, flat.T)  # (d, n*n_out)
        var = np.sum(half * half, axis=0).reshape(n, n_out)
    return mean, var


def probit_class_probs(mean_logits: np.ndarray, var_logits: np.ndarray) -> np.ndarray:
    """Mean-field probit correction: softmax(m / sqrt(1 + pi v / 8)) per logit."""
    scaled = mean_logits / np.sqrt(1.0 + math.pi * var_logits / 8.0)
    return _softmax(scaled)


def _softmax(f: np.ndarray) -> np.ndarray:
    m = f.max(axis=1, keepdims=True)
    e = np.exp(f - m)
    return e / e.sum(axis=1, keepdims=True)


def tune_prior_precision(
    model: LogDensityModel,
    data: Dataset,
    structure: str = "dense",
    grid: np.ndarray | None = None,
):
    """Sweep the prior precision over a fixed grid, scoring validation NLL of
    the linearized predictive; the GGN is computed once and reused.

    Returns (best_posterior, results) where results is a list of
    (precision, val_nll) in grid order. Ties keep the first (smallest)
    precision.
    """
    if grid is None:
        grid = PRIOR_PRECISION_GRID
    vx, vy = data.val
    if len(vx) == 0:
        raise ValueError("tune_prior_precision needs a validation split")
    base = fit_laplace(model, LaplaceConfig(structure=structure))
    results = []
    best = None
    best_nll = np.inf
    for tau in np.asarray(grid, dtype=np.float64):
        post = base.with_prior_precision(tau)
        mean, var = linearized_predict(model, post, vx)
        if isinstance(model.likelihood, CategoricalLikelihood):
            probs = probit_class_probs(mean, var)
            labels = np.asarray(vy, dtype=np.int64).reshape(-1)
            nll = -float(np.mean(np.log(np.clip(probs[np.arange(len(labels)), labels], 1e-300, None))))
        else:
            yv = np.asarray(vy, dtype=np.float64)
            if yv.ndim == 1:
                yv = yv[:, None]
            total_var = var + model.likelihood.noise_var
            nll = float(
                np.mean(0.5 * (np.log(2.0 * math.pi * total_var) + (yv - mean) ** 2 / total_var))
            )
        results.append((float(tau), nll))
        if nll < best_nll:
            best_nll = nll
            best = post
    return best, results
