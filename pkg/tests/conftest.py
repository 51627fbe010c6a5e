"""Shared builders for the test suite.

The linear-network trick used throughout: leaky_relu with slope 1.0 is the
identity function, so a [d -> h -> 1] network with that activation is an
affine map of its parameters, and freezing the first layer at fixed values
makes the output linear in the output layer's weights. That turns several
backends into conjugate linear-Gaussian problems with closed forms.
"""

import numpy as np
import pytest

from partial_bnn.network import Activation, ArchitectureSpec, Network
from partial_bnn.partition import ParameterPartition, PriorSpec
from partial_bnn.inference import GaussianLikelihood, LogDensityModel


def linear_spec(d: int, h: int) -> ArchitectureSpec:
    """[d -> h -> 1] with an identity activation (leaky slope 1.0)."""
    return ArchitectureSpec(d, (h,), 1, Activation("leaky_relu", slope=1.0))


def output_layer_mask(spec: ArchitectureSpec) -> np.ndarray:
    mask = np.zeros(spec.param_count, dtype=bool)
    wsl, bsl = spec.layer_slices()[-1]
    mask[wsl] = True
    mask[bsl] = True
    return mask


def embed_first_layer_identity(spec: ArchitectureSpec) -> np.ndarray:
    """theta with W0 = I (d == h), b0 = 0, output layer zeroed.

    With the identity activation the network output is then
    x @ w_out + b_out: plain linear regression in the sampled layer.
    """
    d = spec.input_dim
    if spec.hidden != (d,):
        raise ValueError("needs hidden width equal to input dim")
    theta = np.zeros(spec.param_count)
    wsl, _ = spec.layer_slices()[0]
    theta[wsl] = np.eye(d).ravel()
    return theta


def linear_regression_model(
    x: np.ndarray,
    y: np.ndarray,
    prior_var: float = 1.0,
    noise_var: float = 0.1,
    temperature: float = 1.0,
    with_bias: bool = True,
) -> tuple:
    """(model, mask) for Bayesian linear regression through a network.

    The sampled subset is the output layer: weights w (d of them) and, when
    with_bias, the output bias. The exact posterior is the usual conjugate
    N(mu_n, Sigma_n) with design matrix [x, 1].
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    d = x.shape[1]
    spec = linear_spec(d, d)
    theta = embed_first_layer_identity(spec)
    mask = output_layer_mask(spec)
    if not with_bias:
        _, bsl = spec.layer_slices()[-1]
        mask[bsl] = False
    net = Network(spec, theta)
    part = ParameterPartition(mask, "test")
    model = LogDensityModel(
        net,
        part,
        PriorSpec(0.0, prior_var),
        GaussianLikelihood(noise_var=noise_var),
        temperature,
        x=x,
        y=y,
    )
    return model, mask


def conjugate_posterior(x, y, prior_var, noise_var, temperature=1.0, with_bias=True):
    """Closed-form N(mu, Sigma) for the model above.

    With tempering, the likelihood precision is scaled by the temperature:
    Sigma^-1 = (lambda / noise_var) A^T A + I / prior_var.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    yv = np.asarray(y, dtype=np.float64).reshape(-1)
    a = np.hstack([x, np.ones((len(x), 1))]) if with_bias else x
    prec = (temperature / noise_var) * (a.T @ a) + np.eye(a.shape[1]) / prior_var
    cov = np.linalg.inv(prec)
    mean = cov @ ((temperature / noise_var) * a.T @ yv)
    return mean, cov


def batch_means_ess(draws: np.ndarray) -> np.ndarray:
    """Effective sample size per coordinate by the batch-means method."""
    draws = np.asarray(draws, dtype=np.float64)
    if draws.ndim == 1:
        draws = draws[:, None]
    n = draws.shape[0]
    b = max(2, int(np.floor(np.sqrt(n))))
    nb = n // b
    trimmed = draws[: nb * b]
    batches = trimmed.reshape(nb, b, -1).mean(axis=1)
    var_batch = batches.var(axis=0, ddof=1)
    var_all = trimmed.var(axis=0, ddof=1)
    var_batch = np.maximum(var_batch, 1e-300)
    return np.minimum(n * var_all / (b * var_batch), float(n))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
