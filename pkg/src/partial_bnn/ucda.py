"""Constructive checks that noise injected into a network stays recoverable.

Four architectures take an m-dimensional noise vector z = T eta + u
(T invertible) alongside a d-dimensional input x and expose a hidden
representation from which [z; x] can be read back exactly:

  a: the noise is concatenated onto the input, recovery is the identity.
  b: first layer has weights [0; I] and biases [z; 0] under an invertible
     activation (tanh); recovery inverts the activation elementwise.
  c: rectifier network; first layer weights [0; I; -I], biases [z; 0; 0].
     relu(x) - relu(-x) returns x, and the noise block is kept nonnegative
     (see below) so the rectifier passes it through unchanged.
  d: deep rectifier network: the same injection layer followed by
     pass-through layers with identity weights, zero biases, and zero
     padding or truncation; [z; relu(x); relu(-x)] is a fixed point of
     those layers, so recovery works at any depth.

For the rectifier tags the default shift is u = bound * ||T||_2 * ones, so
that every z on the verification ball ||eta|| <= bound is nonnegative and
relu leaves the noise block bit-identical. The affine reparameterization
(T, u) of the noise is free for this purpose. Recovery for c/d is
g([a; b; c]) = [a; b - c] on the layer's post-activations.

Tanh recovery runs atanh on activations; pre-activations are clamped to
|t| <= 12 (counted, reported) since beyond that the activation saturates
to within float spacing of +-1.

The module also trains the layers downstream of the injection as a
conditional generator (the injection block stays frozen), and runs the
moment-matching comparison showing a single stochastic bias can beat a
fully stochastic network whose per-parameter noise is floored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .rng import make_rng

CLAMP_LIMIT = 12.0
TAGS = ("a", "b", "c", "d")


@dataclass
class NoiseSpec:
    """z = transform @ eta + shift with eta the raw standard draw."""

    dim: int
    transform: np.ndarray
    shift: np.ndarray

    def __post_init__(self):
        self.transform = np.asarray(self.transform, dtype=np.float64)
        self.shift = np.asarray(self.shift, dtype=np.float64)
        if self.transform.shape != (self.dim, self.dim):
            raise ValueError("transform must be (m, m)")
        if abs(np.linalg.det(self.transform)) < 1e-300:
            raise ValueError("noise transform must be invertible")
        if self.shift.shape != (self.dim,):
            raise ValueError("shift must be length m")

    def z(self, eta: np.ndarray) -> np.ndarray:
        eta = np.asarray(eta, dtype=np.float64)
        return eta @ self.transform.T + self.shift

    def eta(self, z: np.ndarray) -> np.ndarray:
        return np.linalg.solve(self.transform, (z - self.shift).T).T


def default_noise(m: int, tag: str, bound: float = 5.0) -> NoiseSpec:
    """Identity transform; rectifier tags get the nonnegativity shift."""
    transform = np.eye(m)
    if tag in ("c", "d"):
        shift = np.full(m, bound * np.linalg.norm(transform, 2))
    else:
        shift = np.zeros(m)
    return NoiseSpec(m, transform, shift)


@dataclass
class ConstructiveNet:
    """Frozen injection block; the designated layer's activations expose [z; x]."""

    tag: str
    d: int  # input dimension
    m: int  # noise dimension
    noise: NoiseSpec
    layer_weights: list = field(default_factory=list)  # (units, prev) matrices
    layer_biases: list = field(default_factory=list)  # z-independent part
    noise_rows: np.ndarray | None = None  # rows of layer 0 taking z as bias
    designated_layer: int = 0
    activation: str = "relu"
    clamp_count: int = 0

    @property
    def repr_dim(self) -> int:
        if self.tag == "a":
            return self.m + self.d
        return self.layer_weights[self.designated_layer].shape[0]

    def hidden_repr(self, eta: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Representation at the designated layer for raw noise eta, input x.

        Batched: eta (N, m), x (N, d) -> (N, repr_dim).
        """
        eta = np.atleast_2d(np.asarray(eta, dtype=np.float64))
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        z = self.noise.z(eta)
        if self.tag == "a":
            return np.concatenate([z, x], axis=1)
        h = x
        for layer in range(self.designated_layer + 1):
            w = self.layer_weights[layer]
            b = np.broadcast_to(self.layer_biases[layer], (len(h), w.shape[0])).copy()
            if layer == 0:
                b[:, self.noise_rows] = z
            pre = h @ w.T + b
            if self.activation == "tanh":
                clipped = np.clip(pre, -CLAMP_LIMIT, CLAMP_LIMIT)
                self.clamp_count += int(np.sum(clipped != pre))
                h = np.tanh(clipped)
            else:
                h = np.maximum(pre, 0.0)
        return h

    def recover(self, h: np.ndarray) -> np.ndarray:
        """Read [z; x] back from a designated-layer representation."""
        h = np.atleast_2d(np.asarray(h, dtype=np.float64))
        m, d = self.m, self.d
        if self.tag == "a":
            return h
        if self.tag == "b":
            return np.arctanh(np.clip(h, -1.0 + 1e-17, 1.0 - 1e-17))
        a = h[:, :m]
        pos = h[:, m : m + d]
        neg = h[:, m + d : m + 2 * d]
        return np.concatenate([a, pos - neg], axis=1)


def build_constructive(
    tag: str,
    d: int,
    m: int,
    depth: int = 3,
    noise: NoiseSpec | None = None,
    bound: float = 5.0,
) -> ConstructiveNet:
    """Injection block for one of the four tags.

    `depth` only matters for tag d (number of hidden layers; the injection
    sits in the first, the rest are pass-through). Tag d widths are
    m + 2d plus two spare zero-padded units to exercise padding.
    """
    if tag not in TAGS:
        raise ValueError("tag must be one of %s" % (TAGS,))
    if d < 1 or m < 1:
        raise ValueError("d and m must be positive")
    noise = noise or default_noise(m, tag, bound)
    if noise.dim != m:
        raise ValueError("noise spec dimension does not match m")

    net = ConstructiveNet(tag=tag, d=d, m=m, noise=noise)
    if tag == "a":
        return net
    if tag == "b":
        w = np.zeros((m + d, d))
        w[m:, :] = np.eye(d)
        net.layer_weights = [w]
        net.layer_biases = [np.zeros(m + d)]
        net.noise_rows = np.arange(m)
        net.activation = "tanh"
        return net
    width = m + 2 * d if tag == "c" else m + 2 * d + 2
    w0 = np.zeros((width, d))
    w0[m : m + d, :] = np.eye(d)
    w0[m + d : m + 2 * d, :] = -np.eye(d)
    net.layer_weights = [w0]
    net.layer_biases = [np.zeros(width)]
    net.noise_rows = np.arange(m)
    net.activation = "relu"
    if tag == "d":
        if depth < 2:
            raise ValueError("tag d needs at least two hidden layers")
        for _ in range(depth - 1):
            # identity pass-through with zero padding/truncation to `width`
            net.layer_weights.append(np.eye(width))
            net.layer_biases.append(np.zeros(width))
        net.designated_layer = depth - 1
    return net


def verify_recovery(
    cnet: ConstructiveNet,
    n_trials: int = 10000,
    bound: float = 5.0,
    x_range: float = 5.0,
    seed: int = 0,
) -> dict:
    """Max recovery error over random draws with ||eta|| <= bound.

    Draws eta uniformly in the ball and x uniformly in a box; returns the
    worst infinity-norm error of recover(hidden_repr(...)) against the true
    [z; x], plus the clamp count for saturating activations.
    """
    rng = make_rng(seed, 29)
    m, d = cnet.m, cnet.d
    direction = rng.standard_normal((n_trials, m))
    direction /= np.maximum(np.linalg.norm(direction, axis=1, keepdims=True), 1e-300)
    radius = bound * rng.uniform(0.0, 1.0, size=(n_trials, 1)) ** (1.0 / m)
    eta = direction * radius
    x = rng.uniform(-x_range, x_range, size=(n_trials, d))
    cnet.clamp_count = 0
    h = cnet.hidden_repr(eta, x)
    target = np.concatenate([cnet.noise.z(eta), x], axis=1)
    err = float(np.max(np.abs(cnet.recover(h) - target)))
    return {
        "tag": cnet.tag,
        "d": d,
        "m": m,
        "n_trials": n_trials,
        "noise_bound": bound,
        "max_recovery_error": err,
        "clamp_count": cnet.clamp_count,
    }


@dataclass
class GeneratorConfig:
    hidden: tuple = (32,)
    steps: int = 2000
    lr: float = 1e-2
    batch: int = 64
    mc_per_x: int = 16
    loss: str = "moment"  # "moment" | "energy"
    var_weight: float = 1.0
    seed: int = 0


@dataclass
class ConditionalGenerator:
    """Frozen injection block plus a trained readout network."""

    cnet: ConstructiveNet
    readout: "Network"

    def sample(self, x: np.ndarray, rng, n: int) -> np.ndarray:
        """n draws of the generator output at each row of x; shape (n, N)."""
        from .network import forward

        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        big_x = np.repeat(x, n, axis=0)
        eta = rng.standard_normal((len(big_x), self.cnet.m))
        h = self.cnet.hidden_repr(eta, big_x)
        out = forward(self.readout, h)[:, 0]
        return out.reshape(len(x), n).T

    def conditional_moments(self, x: np.ndarray, rng, n: int = 2048):
        s = self.sample(x, rng, n)
        return s.mean(axis=0), s.var(axis=0, ddof=1)


def train_conditional_generator(
    cnet: ConstructiveNet,
    config: GeneratorConfig,
    x_points: np.ndarray,
    target_mean=None,
    target_var=None,
    target_sampler=None,
) -> tuple:
    """Fit the readout behind the frozen injection block.

    moment loss: squared error between Monte Carlo conditional mean (and,
    when `target_var` is given, variance) and the target callables over
    `x_points`. energy loss: the pairwise energy score against draws from
    `target_sampler(x_batch, rng)`, which can represent multimodal
    conditionals that no moment fit captures.

    Returns (ConditionalGenerator, report dict).
    """
    from .network import ArchitectureSpec, Activation, Network, eval_theta, init_network

    x_points = np.atleast_2d(np.asarray(x_points, dtype=np.float64))
    if x_points.shape[1] != cnet.d:
        raise ValueError("x_points must have %d columns" % cnet.d)
    spec = ArchitectureSpec(cnet.repr_dim, tuple(config.hidden), 1, Activation("tanh"))
    net = init_network(spec, seed=config.seed, stream=31)
    theta = net.theta.copy()
    from .inference.optim import Adam

    opt = Adam(theta.size, lr=config.lr)
    rng = make_rng(config.seed, 37)
    n_x = len(x_points)

    if config.loss == "moment":
        if target_mean is None:
            raise ValueError("moment loss needs target_mean")
        mu_t = np.asarray([target_mean(x) for x in x_points], dtype=np.float64)
        var_t = (
            np.asarray([target_var(x) for x in x_points], dtype=np.float64)
            if target_var is not None
            else None
        )
        for _ in range(config.steps):
            eta = rng.standard_normal((config.mc_per_x * n_x, cnet.m))
            big_x = np.tile(x_points, (config.mc_per_x, 1))
            h = cnet.hidden_repr(eta, big_x)
            tv = ad.Var(theta)
            f = eval_theta(spec, tv, h).reshape((config.mc_per_x, n_x))
            m_hat = f.mean(axis=0)
            dev = m_hat - mu_t
            loss = ad.vmean(dev * dev)
            if var_t is not None:
                centered = f - np.ones((config.mc_per_x, 1)) @ m_hat.reshape((1, n_x))
                v_hat = (centered * centered).sum(axis=0) * (1.0 / (config.mc_per_x - 1))
                vdev = v_hat - var_t
                loss = loss + config.var_weight * ad.vmean(vdev * vdev)
            (g,) = ad.gradient(loss, [tv])
            theta = opt.step(theta, g)
    elif config.loss == "energy":
        if target_sampler is None:
            raise ValueError("energy loss needs target_sampler")
        for _ in range(config.steps):
            idx = rng.integers(0, n_x, size=config.batch)
            bx = x_points[idx]
            eta = rng.standard_normal((config.batch, cnet.m))
            h = cnet.hidden_repr(eta, bx)
            yb = np.asarray(target_sampler(bx, rng), dtype=np.float64).reshape(-1)
            tv = ad.Var(theta)
            a = eval_theta(spec, tv, h).reshape((config.batch,))
            cross = ad.absolute(a.reshape((config.batch, 1)) - yb.reshape((1, config.batch)))
            self_d = ad.absolute(a.reshape((config.batch, 1)) - a.reshape((1, config.batch)))
            loss = 2.0 * ad.vmean(cross) - ad.vmean(self_d)
            (g,) = ad.gradient(loss, [tv])
            theta = opt.step(theta, g)
    else:
        raise ValueError("unknown generator loss %r" % (config.loss,))

    gen = ConditionalGenerator(cnet, Network(spec, theta))
    eval_rng = make_rng(config.seed, 41)
    report: dict = {"loss": config.loss, "steps": config.steps}
    if config.loss == "moment":
        m_hat, v_hat = gen.conditional_moments(x_points, eval_rng, 4096)
        report["mean_rmse"] = float(np.sqrt(np.mean((m_hat - mu_t) ** 2)))
        if var_t is not None:
            report["var_rmse"] = float(np.sqrt(np.mean((v_hat - var_t) ** 2)))
    return gen, report


@dataclass
class CounterexampleConfig:
    hidden: tuple = (16, 16)
    steps: int = 3000
    lr: float = 1e-2
    mc: int = 32
    eval_mc: int = 4096
    min_std: float = 0.25  # noise floor on every parameter of the full model
    amplitude: float = 1.0
    frequency: float = 2.5
    target_std: float = 0.3
    n_x: int = 32
    x_range: float = 2.0


def moment_match_counterexample(seed: int = 0, config: CounterexampleConfig | None = None) -> dict:
    """Train two models to match the conditional mean and variance of a
    wiggly 1-d target and report their conditional-mean errors.

    The partial model is a deterministic two-hidden-layer tanh network whose
    only stochastic element is a standard normal bias added to the first
    hidden unit (fixed mean and variance, never trained). The fully
    stochastic model keeps a distribution over every parameter with the
    configured noise floor on each standard deviation (means train, stds
    stay at the floor). The floored noise on every weight forces the full
    model to trade mean fit against variance fit, while the partial model
    shapes its single noise channel freely.
    """
    from .network import ArchitectureSpec, Activation, init_network
    from .inference.optim import Adam

    cfg = config or CounterexampleConfig()
    rng = make_rng(seed, 43)
    xs = np.linspace(-cfg.x_range, cfg.x_range, cfg.n_x)[:, None]
    mu_t = cfg.amplitude * np.sin(cfg.frequency * xs[:, 0])
    var_t = np.full(cfg.n_x, cfg.target_std**2)

    spec = ArchitectureSpec(1, tuple(cfg.hidden), 1, Activation("tanh"))

    def run(model_kind: str) -> float:
        theta = init_network(spec, seed=seed, stream=47 if model_kind == "partial" else 53).theta
        opt = Adam(theta.size, lr=cfg.lr)
        for _ in range(cfg.steps):
            tv = ad.Var(theta)
            loss = _counterexample_loss(spec, tv, xs, mu_t, var_t, cfg, rng, model_kind)
            (g,) = ad.gradient(loss, [tv])
            theta = opt.step(theta, g)
        return _counterexample_eval(spec, theta, xs, mu_t, cfg, make_rng(seed, 59), model_kind)

    partial_err = run("partial")
    full_err = run("full")
    return {
        "partial_mean_error": partial_err,
        "full_mean_error": full_err,
        "ratio": full_err / max(partial_err, 1e-300),
        "min_std": cfg.min_std,
        "seed": seed,
    }


def _ce_forward(spec, theta, x_rep, noise, model_kind):
    """Forward with the counterexample's noise convention.

    partial: `noise` (B,) adds onto the first hidden unit's pre-activation.
    full: theta is already the per-draw parameter vector; noise unused.
    """
    h = x_rep
    slices = spec.layer_slices()
    for layer, ((fi, fo), (wsl, bsl)) in enumerate(zip(spec.layer_dims, slices)):
        w = theta[wsl].reshape((fi, fo))
        pre = h @ w + theta[bsl]
        if layer == 0 and model_kind == "partial":
            inject = np.zeros((len(noise), fo))
            inject[:, 0] = noise
            pre = pre + inject
        if layer < spec.n_layers - 1:
            h = ad.tanh(pre)
        else:
            h = pre
    return h


def _counterexample_loss(spec, tv, xs, mu_t, var_t, cfg, rng, model_kind):
    n_x = len(xs)
    x_rep = np.tile(xs, (cfg.mc, 1))
    if model_kind == "partial":
        z = rng.standard_normal(cfg.mc * n_x)
        f = _ce_forward(spec, tv, x_rep, z, "partial").reshape((cfg.mc, n_x))
    else:
        rows = []
        for _ in range(cfg.mc):
            eps = rng.standard_normal(tv.value.size)
            theta_draw = tv + cfg.min_std * eps
            rows.append(_ce_forward(spec, theta_draw, xs, None, "full").reshape((1, n_x)))
        f = ad.concat(rows, axis=0)
    m_hat = f.mean(axis=0)
    centered = f - np.ones((cfg.mc, 1)) @ m_hat.reshape((1, n_x))
    v_hat = (centered * centered).sum(axis=0) * (1.0 / (cfg.mc - 1))
    dm = m_hat - mu_t
    dv = v_hat - var_t
    return ad.vmean(dm * dm) + ad.vmean(dv * dv)


def _counterexample_eval(spec, theta, xs, mu_t, cfg, rng, model_kind) -> float:
    n_x = len(xs)
    if model_kind == "partial":
        x_rep = np.tile(xs, (cfg.eval_mc, 1))
        z = rng.standard_normal(cfg.eval_mc * n_x)
        f = _ce_forward(spec, theta, x_rep, z, "partial").reshape((cfg.eval_mc, n_x))
    else:
        rows = np.empty((cfg.eval_mc, n_x))
        for s in range(cfg.eval_mc):
            eps = rng.standard_normal(theta.size)
            rows[s] = _ce_forward(spec, theta + cfg.min_std * eps, xs, None, "full")[:, 0]
        f = rows
    m_hat = f.mean(axis=0)
    return float(np.sqrt(np.mean((m_hat - mu_t) ** 2)))


def layerwise_passthrough_errors(cnet: ConstructiveNet, eta: np.ndarray, x: np.ndarray) -> list:
    """Tag d only: recovery error at every hidden layer, injection included."""
    if cnet.tag != "d":
        raise ValueError("layerwise check applies to tag d")
    eta = np.atleast_2d(eta)
    x = np.atleast_2d(x)
    target = np.concatenate([cnet.noise.z(eta), x], axis=1)
    errors = []
    for layer in range(cnet.designated_layer + 1):
        probe = ConstructiveNet(
            tag="d",
            d=cnet.d,
            m=cnet.m,
            noise=cnet.noise,
            layer_weights=cnet.layer_weights,
            layer_biases=cnet.layer_biases,
            noise_rows=cnet.noise_rows,
            designated_layer=layer,
            activation=cnet.activation,
        )
        h = probe.hidden_repr(eta, x)
        errors.append(float(np.max(np.abs(probe.recover(h) - target))))
    return errors
