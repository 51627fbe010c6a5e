"""Mean-field Gaussian variational inference over the stochastic subset.

The variational family is a fully factorized Gaussian on theta_S with
sigma = log(1 + exp(rho)). Deterministic parameters are trained jointly by
gradient on the expected log likelihood, regularized AdamW-style with
decoupled weight decay; the variational pair gets no decay. The KL term
against the (rescaled) prior is closed form and is annealed linearly from
0 to 1 over the configured number of epochs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..data import Dataset
from ..network import Network, eval_theta
from ..rng import make_rng
from .model import CategoricalLikelihood, GaussianLikelihood, LogDensityModel, logdensity
from .optim import Adam

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class MeanFieldGaussian:
    """Factorized Gaussian over theta_S; sigma = softplus(rho)."""

    mean: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.rho = np.asarray(self.rho, dtype=np.float64)
        if self.mean.shape != self.rho.shape or self.mean.ndim != 1:
            raise ValueError("mean and rho must be flat vectors of equal length")

    @property
    def sigma(self) -> np.ndarray:
        return np.log1p(np.exp(-np.abs(self.rho))) + np.maximum(self.rho, 0.0)

    @property
    def dim(self) -> int:
        return self.mean.size

    def sample(self, rng, n: int) -> np.ndarray:
        return self.mean + self.sigma * rng.standard_normal((n, self.dim))


@dataclass
class MfviConfig:
    epochs: int = 2000
    lr: float = 1e-3
    weight_decay: float = 1e-4  # deterministic coordinates only
    batch_size: int | None = None
    mc_samples: int = 1
    kl_anneal_epochs: int = 200
    mu_init_std: float = 0.1
    rho_init_mean: float = -3.0
    rho_init_std: float = 0.1
    seed: int = 0
    val_check_every: int = 25
    val_samples: int = 8


def gaussian_kl(mu, rho, prior_mean: float, prior_var: float):
    """KL(q || p) for factorized q = N(mu, softplus(rho)^2), p = N(m0, v0 I).

    Works traced or plain; returns a scalar.
    """
    sigma = ad.softplus(rho)
    var = sigma * sigma
    dev = mu - prior_mean
    per = 0.5 * (ad.log(prior_var / var) + (var + dev * dev) / prior_var - 1.0)
    return ad.vsum(per)


def elbo(model: LogDensityModel, q: MeanFieldGaussian, x, y, n_mc: int = 64, seed: int = 0) -> float:
    """Monte Carlo ELBO estimate at full KL weight (beta = 1)."""
    rng = make_rng(seed, 17)
    prior = model.effective_prior
    total = 0.0
    for _ in range(n_mc):
        theta_s = q.mean + q.sigma * rng.standard_normal(q.dim)
        total += _loglik_value(model, theta_s, x, y)
    kl = float(ad.value_of(gaussian_kl(q.mean, q.rho, prior.mean, prior.variance)))
    return total / n_mc - kl


def _loglik_value(model, theta_s, x, y):
    theta = ad.value_of(model.network.theta).copy()
    theta[model.partition.mask] = theta_s
    f = eval_theta(model.spec, theta, x)
    lik = model.likelihood
    if isinstance(lik, CategoricalLikelihood):
        lse = ad.logsumexp(f, axis=1)
        picked = f[np.arange(len(x)), y]
        return model.temperature * float(np.sum(picked) - np.sum(lse))
    var = lik.noise_var
    sq = float(np.sum((f - y) ** 2))
    return model.temperature * (-0.5 * y.size * (LOG_2PI + np.log(var)) - 0.5 * sq / var)


def train_mfvi(model: LogDensityModel, data: Dataset | None, config: MfviConfig) -> MeanFieldGaussian:
    """Stochastic-gradient ELBO maximization.

    Reparameterized samples carry the likelihood gradient to (mu, rho); the
    KL term is exact. Minibatch log likelihoods are rescaled by N/B. When a
    validation split is present the returned state is the one with the best
    Monte Carlo estimate of the validation predictive log likelihood; the
    same val_samples noise draws score every check so epochs stay
    comparable. The model's network is updated in place with the learned
    deterministic parameters (and the selected mean on the stochastic
    slots); the returned object only covers theta_S.
    """
    if data is not None:
        tx, ty = data.train
        vx, vy = data.val
        has_val = len(vx) > 0
    else:
        tx, ty = model.x, model.y
        if tx is None:
            raise ValueError("train_mfvi needs data bound to the model or passed in")
        vx = vy = None
        has_val = False
    if isinstance(model.likelihood, GaussianLikelihood) and model.likelihood.learn_precision:
        raise ValueError("learned output precision is sampled only by HMC; fix noise_var for VI")

    mask = model.partition.mask
    idx_s = np.flatnonzero(mask)
    idx_d = np.flatnonzero(~mask)
    n_s, n_d = idx_s.size, idx_d.size
    if n_s == 0:
        raise ValueError("MFVI needs a non-empty stochastic subset")
    prior = model.effective_prior

    # positions of each flat coordinate inside concat([theta_S, theta_D])
    inv_perm = np.empty(mask.size, dtype=np.int64)
    inv_perm[idx_s] = np.arange(n_s)
    inv_perm[idx_d] = n_s + np.arange(n_d)

    rng = make_rng(config.seed, 5)
    base = ad.value_of(model.network.theta)
    mu = base[idx_s] + config.mu_init_std * rng.standard_normal(n_s)
    rho = config.rho_init_mean + config.rho_init_std * rng.standard_normal(n_s)
    theta_d = base[idx_d].copy()

    # one packed optimizer state: [mu, rho, theta_D]; decay only theta_D
    decay_mask = np.zeros(2 * n_s + n_d, dtype=bool)
    decay_mask[2 * n_s :] = True
    opt = Adam(2 * n_s + n_d, lr=config.lr, weight_decay=config.weight_decay,
               decay_mask=decay_mask)

    n = len(tx)
    bs = config.batch_size if config.batch_size and config.batch_size < n else n
    n_batches = (n + bs - 1) // bs

    best = (mu.copy(), rho.copy(), theta_d.copy())
    best_val = -np.inf
    if has_val:
        eval_eps = make_rng(config.seed, 6).standard_normal((config.val_samples, n_s))

    for epoch in range(config.epochs):
        beta = min(1.0, epoch / config.kl_anneal_epochs) if config.kl_anneal_epochs > 0 else 1.0
        order = rng.permutation(n) if bs < n else np.arange(n)
        for b in range(n_batches):
            sel = order[b * bs : (b + 1) * bs]
            bx, by = tx[sel], ty[sel]
            vmu, vrho, vtd = ad.Var(mu), ad.Var(rho), ad.Var(theta_d)
            sigma = ad.softplus(vrho)
            lik_acc = None
            for _ in range(config.mc_samples):
                eps = rng.standard_normal(n_s)
                theta_s = vmu + sigma * eps
                full = ad.concat([theta_s, vtd])[inv_perm]
                ll = _traced_loglik(model, full, bx, by)
                lik_acc = ll if lik_acc is None else lik_acc + ll
            expected_ll = lik_acc * (1.0 / config.mc_samples) * (n / len(bx))
            kl = gaussian_kl(vmu, vrho, prior.mean, prior.variance)
            loss = -(model.temperature * expected_ll) + beta * kl
            g_mu, g_rho, g_td = ad.gradient(loss, [vmu, vrho, vtd])
            packed = np.concatenate([mu, rho, theta_d])
            packed = opt.step(packed, np.concatenate([g_mu, g_rho, g_td]))
            mu, rho, theta_d = packed[:n_s], packed[n_s : 2 * n_s], packed[2 * n_s :]
        if has_val and (epoch % config.val_check_every == 0 or epoch == config.epochs - 1):
            vll = _val_predictive_loglik(
                model, idx_s, idx_d, mu, np.logaddexp(0.0, rho), theta_d,
                vx, vy, eval_eps,
            )
            if vll > best_val:
                best_val = vll
                best = (mu.copy(), rho.copy(), theta_d.copy())
    if not has_val:
        best = (mu, rho, theta_d)

    mu, rho, theta_d = best
    theta = np.empty(mask.size)
    theta[idx_s] = mu
    theta[idx_d] = theta_d
    model.network = Network(model.spec, theta)
    return MeanFieldGaussian(mu, rho)


def _traced_loglik(model, full_theta, x, y):
    f = eval_theta(model.spec, full_theta, x)
    lik = model.likelihood
    if isinstance(lik, CategoricalLikelihood):
        lse = ad.logsumexp(f, axis=1)
        picked = f[np.arange(len(x)), y]
        return ad.vsum(picked) - ad.vsum(lse)
    var = lik.noise_var
    resid = f - y
    return -0.5 * y.size * (LOG_2PI + np.log(var)) - 0.5 / var * ad.vsum(resid * resid)


def _pointwise_loglik(model, theta, x, y):
    """Per-point log likelihood at one parameter vector, shape (n,)."""
    f = eval_theta(model.spec, theta, x)
    lik = model.likelihood
    if isinstance(lik, CategoricalLikelihood):
        fmax = f.max(axis=1)
        lse = np.log(np.sum(np.exp(f - fmax[:, None]), axis=1)) + fmax
        return f[np.arange(len(x)), y] - lse
    var = lik.noise_var
    return -0.5 * y.shape[1] * (LOG_2PI + np.log(var)) - 0.5 * np.sum(
        (f - y) ** 2, axis=1
    ) / var


def _val_predictive_loglik(model, idx_s, idx_d, mu, sigma, theta_d, x, y, eps):
    """log(1/K sum_k p(y|theta_k)) summed over points, theta_k = mu + sigma*eps_k."""
    theta = np.empty(idx_s.size + idx_d.size)
    theta[idx_d] = theta_d
    rows = []
    for e in eps:
        theta[idx_s] = mu + sigma * e
        rows.append(_pointwise_loglik(model, theta, x, y))
    stacked = np.stack(rows)
    ceil = stacked.max(axis=0)
    mix = np.log(np.mean(np.exp(stacked - ceil), axis=0)) + ceil
    return float(np.sum(mix))


__all__ = ["MeanFieldGaussian", "MfviConfig", "train_mfvi", "elbo", "gaussian_kl"]
