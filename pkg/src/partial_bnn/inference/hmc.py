"""Hamiltonian Monte Carlo with a fixed-length leapfrog integrator.

Identity mass matrix, momentum refreshed every iteration, exact Metropolis
correction on the energy error. Step size is adapted during warmup by dual
averaging toward a target acceptance rate and then frozen; warmup draws are
discarded. An energy error above the divergence threshold (or a non-finite
trajectory) rejects the proposal and is counted as a divergence.

Chains draw from independent Philox streams (stream = chain id), so results
do not depend on whether chains run sequentially or in the worker pool
(PARTIAL_BNN_THREADS).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..rng import make_rng
from .model import LogDensityModel, logdensity_and_grad


@dataclass
class HmcConfig:
    chains: int = 4
    warmup: int = 500
    samples: int = 500
    leapfrog_steps: int = 32
    step_size: float | None = None  # None: heuristic init, then adapted
    target_accept: float = 0.8
    adapt_step_size: bool = True
    divergence_threshold: float = 1000.0
    seed: int = 0

    def __post_init__(self):
        if self.chains < 1 or self.samples < 1 or self.leapfrog_steps < 1:
            raise ValueError("chains, samples, leapfrog_steps must be positive")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must lie in (0, 1)")


@dataclass
class ChainResult:
    chain_id: int
    samples: np.ndarray  # (n_samples, dim), post warmup
    accept_rate: float
    divergences: int  # post warmup
    warmup_divergences: int
    step_size: float
    warmup_discarded: int


@dataclass
class SampleSet:
    chains: list
    dim: int
    includes_log_noise_precision: bool = False
    warning: str | None = None

    @property
    def n_chains(self) -> int:
        return len(self.chains)

    def stacked(self) -> np.ndarray:
        """All post-warmup draws, chains concatenated in chain order."""
        return np.concatenate([c.samples for c in self.chains], axis=0)

    def total_divergences(self) -> int:
        return sum(c.divergences for c in self.chains)


class DualAveraging:
    """Nesterov dual averaging of log step size toward a target accept rate."""

    def __init__(self, eps0, target=0.8, gamma=0.05, t0=10.0, kappa=0.75):
        self.mu = math.log(10.0 * eps0)
        self.target = target
        self.gamma = gamma
        self.t0 = t0
        self.kappa = kappa
        self.log_eps = math.log(eps0)
        self.log_eps_bar = 0.0
        self.h_bar = 0.0
        self.t = 0

    def update(self, accept_prob: float) -> float:
        self.t += 1
        frac = 1.0 / (self.t + self.t0)
        self.h_bar = (1.0 - frac) * self.h_bar + frac * (self.target - accept_prob)
        self.log_eps = self.mu - math.sqrt(self.t) / self.gamma * self.h_bar
        eta = self.t ** (-self.kappa)
        self.log_eps_bar = eta * self.log_eps + (1.0 - eta) * self.log_eps_bar
        return math.exp(self.log_eps)

    def finalize(self) -> float:
        return math.exp(self.log_eps_bar)


def _leapfrog(logp_grad, q, p, grad, eps, n_steps):
    """Returns (q, p, logp, grad, finite). Momenta use the gradient of logp.

    Overflow along an exploding trajectory is expected and ends in a
    rejected divergent proposal, so float warnings are suppressed here.
    """
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        q = q.copy()
        p = p + 0.5 * eps * grad
        logp = -np.inf
        for step in range(n_steps):
            q = q + eps * p
            try:
                logp, grad = logp_grad(q)
            except FloatingPointError:
                return q, p, -np.inf, grad, False
            if not np.all(np.isfinite(grad)) or not np.isfinite(logp):
                return q, p, -np.inf, grad, False
            if step < n_steps - 1:
                p = p + eps * grad
        p = p + 0.5 * eps * grad
        return q, p, logp, grad, True


def find_reasonable_step_size(logp_grad, q0, rng, init=1.0):
    """Double or halve until one leapfrog step's accept ratio crosses 1/2."""
    eps = init
    logp, grad = logp_grad(q0)
    p0 = rng.standard_normal(q0.size)
    h0 = -logp + 0.5 * p0 @ p0

    def ratio(eps):
        q, p, lp, _, ok = _leapfrog(logp_grad, q0, p0, grad, eps, 1)
        if not ok:
            return -np.inf
        return -(-lp + 0.5 * p @ p) + h0

    r = ratio(eps)
    direction = 1.0 if r > math.log(0.5) else -1.0
    for _ in range(50):
        eps_next = eps * (2.0 ** direction)
        r = ratio(eps_next)
        if direction > 0 and r <= math.log(0.5):
            break
        if direction < 0 and r >= math.log(0.5):
            eps = eps_next
            break
        eps = eps_next
        if eps < 1e-10 or eps > 1e6:
            break
    return eps


def _run_chain(model: LogDensityModel, init: np.ndarray, config: HmcConfig, chain_id: int) -> ChainResult:
    rng = make_rng(config.seed, chain_id)
    dim = init.size

    def logp_grad(q):
        return logdensity_and_grad(model, q)

    q = np.asarray(init, dtype=np.float64).copy()
    logp, grad = logp_grad(q)
    if not np.isfinite(logp):
        raise ValueError("HMC initialized at a point of zero density")

    eps = config.step_size if config.step_size is not None else find_reasonable_step_size(
        logp_grad, q, rng
    )
    adapting = config.adapt_step_size and config.warmup > 0
    da = DualAveraging(eps, config.target_accept) if adapting else None

    n_total = config.warmup + config.samples
    kept = np.empty((config.samples, dim))
    accepts = 0
    div_warm = 0
    div_kept = 0

    for it in range(n_total):
        p0 = rng.standard_normal(dim)
        h0 = -logp + 0.5 * p0 @ p0
        q1, p1, logp1, grad1, ok = _leapfrog(logp_grad, q, p0, grad, eps, config.leapfrog_steps)
        if ok:
            h1 = -logp1 + 0.5 * p1 @ p1
            delta = h1 - h0
        else:
            delta = np.inf
        divergent = (not ok) or (not np.isfinite(delta)) or delta > config.divergence_threshold
        if divergent:
            accept_prob = 0.0
            if it < config.warmup:
                div_warm += 1
            else:
                div_kept += 1
        else:
            accept_prob = min(1.0, math.exp(-delta))
        u = rng.uniform()
        if (not divergent) and u < accept_prob:
            q, logp, grad = q1, logp1, grad1
            if it >= config.warmup:
                accepts += 1
        if adapting:
            if it < config.warmup:
                eps = da.update(accept_prob)
            elif it == config.warmup:
                eps = da.finalize()
        if it >= config.warmup:
            kept[it - config.warmup] = q

    # accept_rate counts accepted post-warmup proposals
    rate = accepts / config.samples
    return ChainResult(
        chain_id=chain_id,
        samples=kept,
        accept_rate=rate,
        divergences=div_kept,
        warmup_divergences=div_warm,
        step_size=eps,
        warmup_discarded=config.warmup,
    )


def _chain_worker(args):
    model, init, config, chain_id = args
    return _run_chain(model, init, config, chain_id)


def worker_count() -> int:
    """Worker cap from PARTIAL_BNN_THREADS; 1 (sequential) when unset."""
    raw = os.environ.get("PARTIAL_BNN_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)


def run_hmc(model: LogDensityModel, init: np.ndarray, config: HmcConfig) -> SampleSet:
    """Sample the model's stochastic subset; returns post-warmup draws per chain.

    `init` has the model's sampled dimension (theta_S, plus the trailing log
    noise precision when that is learned). Every chain starts from `init`
    and owns Philox stream = chain id, so the draw sequence is identical
    under sequential and pooled execution. A warning is attached when more
    than a quarter of any chain's kept iterations diverged.
    """
    init = np.asarray(init, dtype=np.float64)
    if init.size != model.dim:
        raise ValueError("init has dimension %d, model wants %d" % (init.size, model.dim))

    jobs = [(model, init, config, cid) for cid in range(config.chains)]
    workers = min(worker_count(), config.chains)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chains = list(pool.map(_chain_worker, jobs))
    else:
        chains = [_chain_worker(j) for j in jobs]
    chains.sort(key=lambda c: c.chain_id)

    warning = None
    worst = max(c.divergences / max(1, c.samples.shape[0]) for c in chains)
    if worst > 0.25:
        warning = "divergent transitions exceed 25%% of kept iterations (worst chain: %.1f%%)" % (
            100.0 * worst
        )
    return SampleSet(
        chains=chains,
        dim=init.size,
        includes_log_noise_precision=model.samples_precision,
        warning=warning,
    )
