"""Splitting the flat parameter vector into stochastic and deterministic parts.

A partition is a boolean mask over the flat vector: True entries get a
posterior, False entries stay at their point estimates. Selection rules
cover whole layers, the largest-magnitude entries of a trained vector, the
highest-variance entries of an SGD-iterate posterior, everything, and
nothing. The prior over the stochastic subset can be rescaled by the
count ratio (total parameters / stochastic parameters) so that the total
prior variance budget is conserved when only a subset is sampled.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .network import ArchitectureSpec

RESCALE_RULES = ("none", "count_ratio")


@dataclass(frozen=True)
class PriorSpec:
    """Isotropic Gaussian prior over the stochastic subset."""

    mean: float = 0.0
    variance: float = 1.0
    rescale: str = "none"

    def __post_init__(self):
        if self.variance <= 0.0:
            raise ValueError("prior variance must be positive")
        if self.rescale not in RESCALE_RULES:
            raise ValueError("unknown rescale rule %r" % (self.rescale,))


@dataclass
class ParameterPartition:
    mask: np.ndarray
    origin: str = "custom"
    detail: dict = field(default_factory=dict)

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.ndim != 1:
            raise ValueError("mask must be a flat boolean vector")

    @property
    def n_total(self) -> int:
        return int(self.mask.size)

    @property
    def n_stochastic(self) -> int:
        return int(self.mask.sum())

    @property
    def n_deterministic(self) -> int:
        return self.n_total - self.n_stochastic

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    def to_json(self) -> dict:
        return {
            "format": "partition",
            "origin": self.origin,
            "detail": self.detail,
            "n_total": self.n_total,
            "mask_runlength": encode_mask(self.mask),
        }

    @staticmethod
    def from_json(obj: dict) -> "ParameterPartition":
        if obj.get("format") != "partition":
            raise ValueError("not a partition record")
        mask = decode_mask(obj["mask_runlength"], obj["n_total"])
        return ParameterPartition(mask, obj.get("origin", "custom"), dict(obj.get("detail", {})))


def encode_mask(mask: np.ndarray) -> list:
    """Run lengths of alternating values, starting from a (possibly empty) False run."""
    mask = np.asarray(mask, dtype=bool)
    runs = []
    current = False
    count = 0
    for bit in mask:
        if bit == current:
            count += 1
        else:
            runs.append(count)
            current = bool(bit)
            count = 1
    runs.append(count)
    return [int(r) for r in runs]


def decode_mask(runs: list, n_total: int) -> np.ndarray:
    mask = np.zeros(n_total, dtype=bool)
    off = 0
    value = False
    for r in runs:
        if r < 0:
            raise ValueError("negative run length")
        mask[off : off + r] = value
        off += r
        value = not value
    if off != n_total:
        raise ValueError("run lengths sum to %d, expected %d" % (off, n_total))
    return mask


_HIDDEN_RE = re.compile(r"^hidden\((\d+)\)$")


def _layer_index(spec: ArchitectureSpec, name: str) -> int:
    """Weight-layer index for a designator: input, hidden(i) 1-based, output."""
    if name == "input":
        return 0
    if name == "output":
        return spec.n_layers - 1
    m = _HIDDEN_RE.match(name)
    if m:
        i = int(m.group(1))
        if not 1 <= i <= spec.n_layers - 2:
            raise ValueError("hidden(%d) out of range for %d weight layers" % (i, spec.n_layers))
        return i
    raise ValueError("unknown layer designator %r" % (name,))


def select_by_layer(spec: ArchitectureSpec, layers, include_biases: bool = True) -> ParameterPartition:
    """Mask true on the weights (and by default biases) of the named layers.

    Designators: "input" (first weight layer), "hidden(i)" (i-th intermediate
    weight layer, 1-based), "output" (last weight layer).
    """
    mask = np.zeros(spec.param_count, dtype=bool)
    chosen = sorted({_layer_index(spec, name) for name in layers})
    slices = spec.layer_slices()
    for li in chosen:
        wsl, bsl = slices[li]
        mask[wsl] = True
        if include_biases:
            mask[bsl] = True
    return ParameterPartition(
        mask, "by_layer", {"layers": sorted(layers), "include_biases": include_biases}
    )


def select_top_abs(theta: np.ndarray, k: int) -> ParameterPartition:
    """The k largest |theta| entries over the whole flat vector.

    Ties break toward the lowest flat index (stable sort on descending
    magnitude).
    """
    theta = np.asarray(theta, dtype=np.float64)
    if not 1 <= k <= theta.size:
        raise ValueError("k must be in [1, %d]" % theta.size)
    order = np.argsort(-np.abs(theta), kind="stable")
    mask = np.zeros(theta.size, dtype=bool)
    mask[order[:k]] = True
    return ParameterPartition(mask, "top_abs_map", {"k": int(k)})


def select_top_variance(diag_variance: np.ndarray, k: int) -> ParameterPartition:
    """The k highest-variance coordinates of a diagonal posterior summary."""
    v = np.asarray(diag_variance, dtype=np.float64)
    if not 1 <= k <= v.size:
        raise ValueError("k must be in [1, %d]" % v.size)
    order = np.argsort(-v, kind="stable")
    mask = np.zeros(v.size, dtype=bool)
    mask[order[:k]] = True
    return ParameterPartition(mask, "top_swag_variance", {"k": int(k)})


def select_all(spec: ArchitectureSpec) -> ParameterPartition:
    return ParameterPartition(np.ones(spec.param_count, dtype=bool), "all")


def select_none(spec: ArchitectureSpec) -> ParameterPartition:
    return ParameterPartition(np.zeros(spec.param_count, dtype=bool), "none")


def effective_prior(prior: PriorSpec, partition: ParameterPartition) -> PriorSpec:
    """Prior actually applied to the stochastic subset.

    Under count_ratio the variance is multiplied by n_total / n_stochastic,
    conserving the summed prior variance across partition choices.
    """
    if prior.rescale == "none":
        return prior
    n_s = partition.n_stochastic
    if n_s == 0:
        raise ValueError("count_ratio rescale needs a non-empty stochastic subset")
    factor = partition.n_total / n_s
    return PriorSpec(prior.mean, prior.variance * factor, "none")
