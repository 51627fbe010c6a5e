"""Unnormalized log posterior over the stochastic parameter subset.

The model binds a network (whose deterministic side stays frozen), a
partition, a prior over the stochastic subset, a likelihood, a temperature
multiplying the log likelihood, and the conditioning data. The sampled
vector is theta_S, optionally extended by one trailing coordinate holding
the log of the observation noise precision when that precision is learned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import autodiff as ad
from ..network import ArchitectureSpec, Network, eval_theta
from ..partition import ParameterPartition, PriorSpec, effective_prior

LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class GaussianLikelihood:
    """Homoscedastic Gaussian observation model.

    With learn_precision the output precision is a sampled quantity with a
    Gamma(shape, rate) prior, carried on the log scale as the last
    coordinate of the sampled vector (only the HMC backend samples it; the
    optimizers use the fixed noise_var).
    """

    noise_var: float = 0.01
    learn_precision: bool = False
    precision_prior: tuple = (3.0, 1.0)

    def __post_init__(self):
        if self.noise_var <= 0.0:
            raise ValueError("noise_var must be positive")
        a, b = self.precision_prior
        if a <= 0.0 or b <= 0.0:
            raise ValueError("Gamma prior parameters must be positive")


@dataclass
class CategoricalLikelihood:
    """Softmax over network outputs; targets are integer class labels."""


@dataclass
class LogDensityModel:
    network: Network
    partition: ParameterPartition
    prior: PriorSpec
    likelihood: object = field(default_factory=GaussianLikelihood)
    temperature: float = 1.0
    x: np.ndarray | None = None
    y: np.ndarray | None = None

    def __post_init__(self):
        if self.partition.n_total != self.network.spec.param_count:
            raise ValueError("partition size does not match the network")
        if self.temperature < 0.0:
            raise ValueError("temperature must be non-negative")
        if self.x is not None:
            self.x = np.asarray(self.x, dtype=np.float64)
            if self.x.ndim == 1:
                self.x = self.x[:, None]
        if self.y is not None:
            if isinstance(self.likelihood, CategoricalLikelihood):
                self.y = np.asarray(self.y, dtype=np.int64).reshape(-1)
            else:
                self.y = np.asarray(self.y, dtype=np.float64)
                if self.y.ndim == 1:
                    self.y = self.y[:, None]

    @property
    def spec(self) -> ArchitectureSpec:
        return self.network.spec

    @property
    def effective_prior(self) -> PriorSpec:
        return effective_prior(self.prior, self.partition)

    @property
    def samples_precision(self) -> bool:
        return (
            isinstance(self.likelihood, GaussianLikelihood)
            and self.likelihood.learn_precision
        )

    @property
    def dim(self) -> int:
        """Length of the sampled vector: |theta_S| plus the log-precision slot."""
        return self.partition.n_stochastic + (1 if self.samples_precision else 0)

    def initial_point(self) -> np.ndarray:
        """Current network values on the subset, plus log precision if learned."""
        z = ad.value_of(self.network.theta)[self.partition.mask]
        if self.samples_precision:
            z = np.append(z, -math.log(self.likelihood.noise_var))
        return z

    def split(self, z):
        """(theta_S, log_precision or None) view of a sampled vector."""
        if self.samples_precision:
            return z[: self.partition.n_stochastic], z[self.partition.n_stochastic]
        return z, None


def _loglik(model: LogDensityModel, theta_s, log_prec, x, y):
    base = ad.value_of(model.network.theta)
    theta = ad.scatter(base, model.partition.indices, theta_s)
    f = eval_theta(model.spec, theta, x)
    lik = model.likelihood
    if isinstance(lik, CategoricalLikelihood):
        n = x.shape[0]
        lse = ad.logsumexp(f, axis=1)
        picked = f[np.arange(n), y]
        return ad.vsum(picked) - ad.vsum(lse)
    resid = f - y
    sq = ad.vsum(resid * resid)
    m = y.size
    if log_prec is None:
        var = lik.noise_var
        return -0.5 * m * (LOG_2PI + math.log(var)) - 0.5 / var * sq
    return -0.5 * m * LOG_2PI + 0.5 * m * log_prec - 0.5 * ad.exp(log_prec) * sq


def _logprior(model: LogDensityModel, theta_s, log_prec):
    prior = model.effective_prior
    n_s = model.partition.n_stochastic
    dev = theta_s - prior.mean
    lp = (
        -0.5 * n_s * (LOG_2PI + math.log(prior.variance))
        - 0.5 / prior.variance * ad.vsum(dev * dev)
    )
    if log_prec is not None:
        # Gamma(a, b) density on the precision, with the change-of-variables
        # Jacobian for parameterizing by its log: log p(s) = a s - b e^s + const
        a, b = model.likelihood.precision_prior
        const = a * math.log(b) - math.lgamma(a)
        lp = lp + const + a * log_prec - b * ad.exp(log_prec)
    return lp


def _bound_data(model, x, y):
    if x is None:
        x, y = model.x, model.y
    if x is None or y is None:
        raise ValueError("no data bound to the model and none supplied")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if isinstance(model.likelihood, CategoricalLikelihood):
        y = np.asarray(y, dtype=np.int64).reshape(-1)
    else:
        y = np.asarray(y, dtype=np.float64)
        if y.ndim == 1:
            y = y[:, None]
    return x, y


def logdensity(model: LogDensityModel, z: np.ndarray, x=None, y=None) -> float:
    """Temperature-scaled log likelihood plus log prior at a sampled vector z."""
    x, y = _bound_data(model, x, y)
    theta_s, log_prec = model.split(np.asarray(z, dtype=np.float64))
    val = model.temperature * _loglik(model, theta_s, log_prec, x, y) + _logprior(
        model, theta_s, log_prec
    )
    return float(ad.value_of(val))


def logdensity_and_grad(model: LogDensityModel, z: np.ndarray, x=None, y=None):
    """(value, gradient) of the log density with respect to z, via the tape."""
    x, y = _bound_data(model, x, y)
    zv = ad.Var(np.asarray(z, dtype=np.float64))
    theta_s, log_prec = model.split(zv)
    val = model.temperature * _loglik(model, theta_s, log_prec, x, y) + _logprior(
        model, theta_s, log_prec
    )
    (g,) = ad.gradient(val, [zv])
    return float(val.value), g
