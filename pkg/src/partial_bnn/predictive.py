"""Posterior predictive evaluation and the scalar metrics derived from it.

Regression: predictive mean is the average of per-draw network outputs;
predictive variance is the n-1 sample variance of those outputs plus the
observation noise (per-draw noise when the posterior carries a learned log
precision). Classification: per-draw softmax probabilities are averaged
(never the logits). NLL is an average per datapoint; ECE uses 15
equal-width confidence bins; predictive intervals are mean +- k std.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .inference.hmc import SampleSet
from .inference.laplace import LaplacePosterior, linearized_predict, probit_class_probs
from .inference.mfvi import MeanFieldGaussian
from .inference.swag import SwagPosterior, sample_swag
from .network import Network, eval_theta
from .partition import ParameterPartition
from .rng import make_rng

DEFAULT_PARAMETRIC_DRAWS = 100


@dataclass
class PredictiveResult:
    mean: np.ndarray  # (N, n_out); class probabilities for classification
    variance: np.ndarray  # (N, n_out) total variance; per-class prob variance
    class_probs: np.ndarray | None = None
    samples_used: int = 0
    method: str = "mc"


def predict(
    net_template: Network,
    partition: ParameterPartition,
    posterior,
    x: np.ndarray,
    n_samples: int = 0,
    task: str = "regression",
    noise_var: float | None = None,
    seed: int = 0,
    laplace_mode: str = "linearized",
) -> PredictiveResult:
    """Push the posterior over theta_S through the network at inputs x.

    Deterministic coordinates come from `net_template`. For a SampleSet,
    n_samples=0 means every stored draw (chains concatenated; a positive
    value thins evenly across the concatenation). Parametric posteriors
    (mean field, SWAG, Laplace in mc mode) draw n_samples fresh samples
    (default 100) from the (seed, stream) generator. Laplace defaults to
    its closed-form linearized predictive. A bare Network or flat vector is
    treated as a point estimate.

    Regression adds `noise_var` to the variance; a SampleSet carrying a
    learned log precision uses its per-draw noise instead.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    spec = net_template.spec
    base = ad.value_of(net_template.theta)
    idx = partition.indices

    if isinstance(posterior, LaplacePosterior) and laplace_mode == "linearized":
        return _laplace_linearized(net_template, partition, posterior, x, task, noise_var)

    if isinstance(posterior, Network):
        # a point estimate carries the full theta; draws cover the subset
        if posterior.spec != spec:
            raise ValueError("posterior network architecture does not match the template")
        posterior = ad.value_of(posterior.theta)[idx]

    draws, per_draw_noise, method = _draws_from(posterior, n_samples, seed)
    if draws.shape[1] != idx.size:
        raise ValueError(
            "posterior draws have %d coordinates, partition has %d stochastic"
            % (draws.shape[1], idx.size)
        )
    outs = np.empty((len(draws), x.shape[0], spec.output_dim))
    theta = base.copy()
    for s, d in enumerate(draws):
        theta[idx] = d
        outs[s] = eval_theta(spec, theta, x)

    if task == "classification":
        probs = _softmax(outs)
        mean_probs = probs.mean(axis=0)
        var = probs.var(axis=0, ddof=1) if len(draws) > 1 else np.zeros_like(mean_probs)
        return PredictiveResult(mean_probs, var, mean_probs, len(draws), method)

    mean = outs.mean(axis=0)
    if len(draws) > 1:
        var = outs.var(axis=0, ddof=1)
    else:
        var = np.zeros_like(mean)
    if per_draw_noise is not None:
        var = var + float(np.mean(per_draw_noise))
    elif noise_var is not None:
        var = var + noise_var
    return PredictiveResult(mean, var, None, len(draws), method)


def _draws_from(posterior, n_samples: int, seed: int):
    """(draws over theta_S, per-draw noise variances or None, method name)."""
    if isinstance(posterior, SampleSet):
        stacked = posterior.stacked()
        if posterior.includes_log_noise_precision:
            noise = np.exp(-stacked[:, -1])
            stacked = stacked[:, :-1]
        else:
            noise = None
        if n_samples and n_samples < len(stacked):
            pick = np.linspace(0, len(stacked) - 1, n_samples).round().astype(int)
            stacked = stacked[pick]
            noise = noise[pick] if noise is not None else None
        return stacked, noise, "mc"
    rng = make_rng(seed, 23)
    n = n_samples if n_samples else DEFAULT_PARAMETRIC_DRAWS
    if isinstance(posterior, MeanFieldGaussian):
        return posterior.sample(rng, n), None, "mc"
    if isinstance(posterior, SwagPosterior):
        return sample_swag(posterior, rng, n), None, "mc"
    if isinstance(posterior, LaplacePosterior):
        return posterior.sample(rng, n), None, "mc"
    arr = np.asarray(posterior, dtype=np.float64)
    if arr.ndim == 1:
        return arr[None, :], None, "point"
    if arr.ndim == 2:
        return arr, None, "mc"
    raise TypeError("unsupported posterior of type %r" % type(posterior).__name__)


def _laplace_linearized(net, partition, post, x, task, noise_var):
    from .inference.model import GaussianLikelihood, LogDensityModel

    model = LogDensityModel(net, partition, _unit_prior(), GaussianLikelihood(noise_var=1.0))
    mean, var = linearized_predict(model, post, x)
    if task == "classification":
        probs = probit_class_probs(mean, var)
        return PredictiveResult(probs, np.zeros_like(probs), probs, 0, "linearized")
    if noise_var is not None:
        var = var + noise_var
    return PredictiveResult(mean, var, None, 0, "linearized")


def _unit_prior():
    from .partition import PriorSpec

    return PriorSpec(0.0, 1.0, "none")


def _softmax(f: np.ndarray) -> np.ndarray:
    m = f.max(axis=-1, keepdims=True)
    e = np.exp(f - m)
    return e / e.sum(axis=-1, keepdims=True)


# ---- metrics ----


@dataclass
class MetricsReport:
    nll: float | None = None
    rmse: float | None = None
    accuracy: float | None = None
    ece: float | None = None
    coverage: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        out = {}
        for name in ("nll", "rmse", "accuracy", "ece"):
            v = getattr(self, name)
            if v is not None:
                out[name] = v
        for k, v in self.coverage.items():
            out["coverage_%dsd" % k] = v
        return out


def nll(pred: PredictiveResult, y: np.ndarray, task: str = "regression") -> float:
    """Average negative log likelihood per datapoint under the summarized
    predictive: Gaussian with the predictive moments in regression, the
    averaged class probabilities in classification."""
    if task == "classification":
        labels = np.asarray(y, dtype=np.int64).reshape(-1)
        p = np.clip(pred.class_probs[np.arange(len(labels)), labels], 1e-300, None)
        return -float(np.mean(np.log(p)))
    yv = _col(y)
    var = np.clip(pred.variance, 1e-300, None)
    point = 0.5 * (np.log(2.0 * math.pi * var) + (yv - pred.mean) ** 2 / var)
    return float(point.sum(axis=1).mean())


def rmse(pred: PredictiveResult, y: np.ndarray) -> float:
    yv = _col(y)
    return float(np.sqrt(np.mean((yv - pred.mean) ** 2)))


def accuracy(pred: PredictiveResult, y: np.ndarray) -> float:
    labels = np.asarray(y, dtype=np.int64).reshape(-1)
    return float(np.mean(pred.class_probs.argmax(axis=1) == labels))


def ece(pred: PredictiveResult, y: np.ndarray, n_bins: int = 15) -> float:
    """Expected calibration error over equal-width max-probability bins."""
    labels = np.asarray(y, dtype=np.int64).reshape(-1)
    conf = pred.class_probs.max(axis=1)
    correct = (pred.class_probs.argmax(axis=1) == labels).astype(np.float64)
    bins = np.minimum((conf * n_bins).astype(int), n_bins - 1)
    total = len(labels)
    out = 0.0
    for b in range(n_bins):
        m = bins == b
        nb = int(m.sum())
        if nb == 0:
            continue
        out += (nb / total) * abs(correct[m].mean() - conf[m].mean())
    return float(out)


def predictive_intervals(pred: PredictiveResult, ks=(1, 2, 3)) -> dict:
    """k -> (lower, upper) bands at mean +- k predictive std."""
    std = np.sqrt(np.clip(pred.variance, 0.0, None))
    return {int(k): (pred.mean - k * std, pred.mean + k * std) for k in ks}


def interval_coverage(pred: PredictiveResult, y: np.ndarray, ks=(1, 2, 3)) -> dict:
    yv = _col(y)
    bands = predictive_intervals(pred, ks)
    return {
        k: float(np.mean((yv >= lo) & (yv <= hi)))
        for k, (lo, hi) in bands.items()
    }


def compute_metrics(pred: PredictiveResult, y: np.ndarray, task: str = "regression", ks=(1, 2, 3)) -> MetricsReport:
    if task == "classification":
        return MetricsReport(
            nll=nll(pred, y, task),
            accuracy=accuracy(pred, y),
            ece=ece(pred, y),
        )
    return MetricsReport(
        nll=nll(pred, y, task),
        rmse=rmse(pred, y),
        coverage=interval_coverage(pred, y, ks),
    )


def _col(y) -> np.ndarray:
    yv = np.asarray(y, dtype=np.float64)
    return yv[:, None] if yv.ndim == 1 else yv
