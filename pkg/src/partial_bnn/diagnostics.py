"""Function-space agreement diagnostics across sampler chains.

Inputs are per-chain averaged class probabilities, shape
(n_chains, n_points, n_classes). Agreement is the fraction of points where
every chain's argmax class coincides (argmax ties resolve to the lowest
class index). The bootstrap variant resamples one chain's per-sample
probabilities, with replacement, into pseudo-chains and applies the same
agreement. Chain tensors interchange with other tools through a raw binary
blob: little-endian int64 ndim, int64 dims, then the float64 values in C
order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .rng import make_rng


@dataclass
class ChainPredictions:
    probs: np.ndarray  # (n_chains, n_points, n_classes), rows sum to 1

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 3:
            raise ValueError("probs must have shape (n_chains, n_points, n_classes)")

    @property
    def n_chains(self) -> int:
        return self.probs.shape[0]


def all_chains_agreement(cp: ChainPredictions) -> float:
    """Fraction of points whose predicted class is identical across chains."""
    if cp.n_chains < 2:
        raise ValueError("agreement needs at least two chains")
    choices = cp.probs.argmax(axis=2)
    same = np.all(choices == choices[0], axis=0)
    return float(same.mean())


def per_chain_accuracy(cp: ChainPredictions, labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.size != cp.probs.shape[1]:
        raise ValueError("label count does not match points")
    choices = cp.probs.argmax(axis=2)
    return (choices == labels).mean(axis=1)


def bootstrap_agreement(
    sample_probs: np.ndarray,
    n_pseudo_chains: int = 3,
    pseudo_length: int | None = None,
    seed: int = 0,
) -> float:
    """Agreement between pseudo-chains bootstrapped from one chain's samples.

    `sample_probs` holds per-sample probabilities, shape
    (n_samples, n_points, n_classes). Each pseudo-chain averages
    `pseudo_length` (default: all) samples drawn with replacement.
    Deterministic for a fixed seed.
    """
    sample_probs = np.asarray(sample_probs, dtype=np.float64)
    if sample_probs.ndim != 3:
        raise ValueError("sample_probs must have shape (n_samples, n_points, n_classes)")
    if n_pseudo_chains < 2:
        raise ValueError("need at least two pseudo-chains")
    s = sample_probs.shape[0]
    length = pseudo_length or s
    rng = make_rng(seed, 13)
    pseudo = np.empty((n_pseudo_chains,) + sample_probs.shape[1:])
    for c in range(n_pseudo_chains):
        idx = rng.integers(0, s, size=length)
        pseudo[c] = sample_probs[idx].mean(axis=0)
    return all_chains_agreement(ChainPredictions(pseudo))


def write_chain_blob(path: str, array: np.ndarray) -> None:
    array = np.asarray(array, dtype=np.float64)
    with open(path, "wb") as fh:
        fh.write(np.int64(array.ndim).astype("<i8").tobytes())
        fh.write(np.asarray(array.shape, dtype="<i8").tobytes())
        fh.write(array.astype("<f8").ravel(order="C").tobytes())


def read_chain_blob(path: str) -> np.ndarray:
    raw = open(path, "rb").read()
    ndim = int(np.frombuffer(raw[:8], dtype="<i8")[0])
    if ndim < 0 or 8 + 8 * ndim > len(raw):
        raise ValueError("%s: malformed blob header" % path)
    shape = tuple(int(v) for v in np.frombuffer(raw[8 : 8 + 8 * ndim], dtype="<i8"))
    data = np.frombuffer(raw[8 + 8 * ndim :], dtype="<f8")
    expected = int(np.prod(shape)) if shape else 1
    if data.size != expected:
        raise ValueError("%s: blob payload has %d values, header wants %d" % (path, data.size, expected))
    return data.reshape(shape).astype(np.float64)


def agreement_report(cp: ChainPredictions, labels: np.ndarray | None = None,
                     bootstrap_from_first: bool = False, seed: int = 0) -> dict:
    """JSON-ready summary of the agreement diagnostics."""
    report = {
        "n_chains": cp.n_chains,
        "n_points": int(cp.probs.shape[1]),
        "all_chains_agreement": all_chains_agreement(cp),
    }
    if labels is not None:
        report["per_chain_accuracy"] = [float(a) for a in per_chain_accuracy(cp, labels)]
    return report


def save_report(report: dict, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
