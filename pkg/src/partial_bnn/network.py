"""Dense MLP over a single flat float64 parameter vector.

The flat layout is [W0, b0, W1, b1, ...] with each weight matrix stored
row-major as (fan_in, fan_out). All math is float64. The forward pass is
written against the autodiff dispatch functions, so it evaluates plain
arrays or traced ``Var`` parameters with the same code path.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .rng import make_rng

ACTIVATIONS = ("relu", "leaky_relu", "tanh", "silu")
PARAMETERIZATIONS = ("standard", "ntk")


@dataclass(frozen=True)
class Activation:
    name: str = "relu"
    slope: float = 0.01  # leaky_relu only

    def __post_init__(self):
        if self.name not in ACTIVATIONS:
            raise ValueError("unknown activation %r" % (self.name,))

    def __call__(self, x):
        if self.name == "relu":
            return ad.relu(x)
        if self.name == "leaky_relu":
            return ad.leaky_relu(x, self.slope)
        if self.name == "tanh":
            return ad.tanh(x)
        return ad.silu(x)


@dataclass(frozen=True)
class ArchitectureSpec:
    """Shape and conventions of one MLP."""

    input_dim: int
    hidden: tuple
    output_dim: int
    activation: Activation = field(default_factory=Activation)
    parameterization: str = "standard"

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("input_dim and output_dim must be positive")
        if len(self.hidden) == 0:
            raise ValueError("at least one hidden layer is required")
        if any(h < 1 for h in self.hidden):
            raise ValueError("hidden widths must be positive")
        if self.parameterization not in PARAMETERIZATIONS:
            raise ValueError("unknown parameterization %r" % (self.parameterization,))
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    @property
    def layer_dims(self):
        """(fan_in, fan_out) per weight layer, input to output."""
        sizes = (self.input_dim,) + self.hidden + (self.output_dim,)
        return tuple(zip(sizes[:-1], sizes[1:]))

    @property
    def n_layers(self):
        return len(self.hidden) + 1

    @property
    def param_count(self):
        return sum(fi * fo + fo for fi, fo in self.layer_dims)

    def layer_slices(self):
        """Per layer: (weight slice, bias slice) into the flat vector."""
        out = []
        off = 0
        for fi, fo in self.layer_dims:
            w = slice(off, off + fi * fo)
            b = slice(off + fi * fo, off + fi * fo + fo)
            out.append((w, b))
            off = b.stop
        return out

    def to_json(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden": list(self.hidden),
            "output_dim": self.output_dim,
            "activation": {"name": self.activation.name, "slope": self.activation.slope},
            "parameterization": self.parameterization,
        }

    @staticmethod
    def from_json(obj: dict) -> "ArchitectureSpec":
        act = obj.get("activation", {})
        return ArchitectureSpec(
            input_dim=int(obj["input_dim"]),
            hidden=tuple(int(h) for h in obj["hidden"]),
            output_dim=int(obj["output_dim"]),
            activation=Activation(act.get("name", "relu"), float(act.get("slope", 0.01))),
            parameterization=obj.get("parameterization", "standard"),
        )


def flatten_coords(spec: ArchitectureSpec):
    """Full table mapping flat index -> (layer, kind, row, col).

    Biases use (row=j, col=0). The table is the inverse of
    ``coord_to_flat`` on its whole domain.
    """
    table = []
    for layer, (fi, fo) in enumerate(spec.layer_dims):
        for r in range(fi):
            for c in range(fo):
                table.append((layer, "weight", r, c))
        for j in range(fo):
            table.append((layer, "bias", j, 0))
    return table


def coord_to_flat(spec: ArchitectureSpec, layer: int, kind: str, row: int, col: int = 0) -> int:
    dims = spec.layer_dims
    if not 0 <= layer < len(dims):
        raise IndexError("layer %d out of range" % layer)
    fi, fo = dims[layer]
    base = sum(a * b + b for a, b in dims[:layer])
    if kind == "weight":
        if not (0 <= row < fi and 0 <= col < fo):
            raise IndexError("weight coordinate out of range")
        return base + row * fo + col
    if kind == "bias":
        if not (0 <= row < fo and col == 0):
            raise IndexError("bias coordinate out of range")
        return base + fi * fo + row
    raise ValueError("kind must be 'weight' or 'bias'")


@dataclass
class Network:
    """Value type: an architecture plus one flat parameter vector."""

    spec: ArchitectureSpec
    theta: np.ndarray

    def __post_init__(self):
        if not isinstance(self.theta, ad.Var):
            self.theta = np.asarray(self.theta, dtype=np.float64)
        n = self.theta.shape[0]
        if n != self.spec.param_count:
            raise ValueError(
                "theta has %d entries, spec wants %d" % (n, self.spec.param_count)
            )

    def copy(self) -> "Network":
        return Network(self.spec, np.array(ad.value_of(self.theta)))


def init_network(spec: ArchitectureSpec, seed: int = 0, stream: int = 0) -> Network:
    """Fresh parameters: He-style fan-in scaling for the rectifier family,
    Xavier for tanh, standard normal weights under the NTK convention.
    Biases start at zero."""
    rng = make_rng(seed, stream)
    theta = np.zeros(spec.param_count)
    slices = spec.layer_slices()
    for (fi, fo), (wsl, _) in zip(spec.layer_dims, slices):
        if spec.parameterization == "ntk":
            std = 1.0
        elif spec.activation.name == "tanh":
            std = math.sqrt(2.0 / (fi + fo))
        else:
            std = math.sqrt(2.0 / fi)
        theta[wsl] = std * rng.standard_normal(fi * fo)
    return Network(spec, theta)


def eval_theta(spec: ArchitectureSpec, theta, x, collect=False):
    """Forward pass for a flat theta (ndarray or Var) on inputs x of shape (N, d).

    With collect=True also returns per-layer pre-activations and activations.
    """
    h = np.asarray(x, dtype=np.float64)
    if h.ndim == 1:
        h = h[:, None]
    pres, posts = [], []
    slices = spec.layer_slices()
    n_layers = spec.n_layers
    for layer, ((fi, fo), (wsl, bsl)) in enumerate(zip(spec.layer_dims, slices)):
        w = theta[wsl].reshape((fi, fo))
        b = theta[bsl]
        pre = h @ w
        if spec.parameterization == "ntk":
            pre = pre * (1.0 / math.sqrt(fi))
        pre = pre + b
        if layer < n_layers - 1:
            h = spec.activation(pre)
        else:
            h = pre
        if collect:
            pres.append(pre)
            posts.append(h)
    if collect:
        return h, pres, posts
    return h


def forward(net: Network, x) -> np.ndarray:
    """Network outputs for a batch of inputs, shape (N, output_dim)."""
    return eval_theta(net.spec, net.theta, x)


@dataclass
class GradientRequest:
    """Which coordinates of the flat gradient to keep; None means all."""

    mask: np.ndarray | None = None


def grad_logdensity(net: Network, loss_fn, request: GradientRequest | None = None) -> np.ndarray:
    """Reverse-mode gradient of ``loss_fn(net)`` with respect to net.theta.

    Parameters
    ----------
    net : Network
        Evaluation point; its theta is not modified.
    loss_fn : callable
        Maps a Network (whose theta may be traced) to a scalar.
    request : GradientRequest, optional
        With a mask, entries outside the mask are returned as exact zeros;
        the masked gradient equals the full gradient zeroed outside the mask.
    """
    theta = ad.Var(ad.value_of(net.theta))
    loss = loss_fn(Network(net.spec, theta))
    if not isinstance(loss, ad.Var):
        raise TypeError("loss_fn must build a traced scalar from the network")
    if not np.isfinite(loss.value):
        raise FloatingPointError("loss is not finite at the evaluation point")
    (g,) = ad.gradient(loss, [theta])
    if request is not None and request.mask is not None:
        mask = np.asarray(request.mask, dtype=bool)
        if mask.shape != g.shape:
            raise ValueError("mask shape does not match parameter count")
        g = np.where(mask, g, 0.0)
    return g


def save_network(net: Network, path_prefix: str) -> None:
    """Write `<prefix>.bin` (little-endian float64 blob) and `<prefix>.json`."""
    theta = ad.value_of(net.theta)
    with open(path_prefix + ".bin", "wb") as fh:
        fh.write(theta.astype("<f8").tobytes())
    sidecar = {"format": "network", "spec": net.spec.to_json(), "n_params": int(theta.size)}
    with open(path_prefix + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_network(path_prefix: str) -> Network:
    with open(path_prefix + ".json") as fh:
        sidecar = json.load(fh)
    if sidecar.get("format") != "network":
        raise ValueError("%s.json is not a network sidecar" % path_prefix)
    spec = ArchitectureSpec.from_json(sidecar["spec"])
    raw = open(path_prefix + ".bin", "rb").read()
    theta = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    if theta.size != sidecar["n_params"] or theta.size != spec.param_count:
        raise ValueError("parameter blob size does not match sidecar")
    return Network(spec, theta.copy())
