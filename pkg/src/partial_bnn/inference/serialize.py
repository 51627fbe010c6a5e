"""Posterior persistence: tagged JSON metadata plus a float64 binary blob.

Each posterior saves as `<prefix>.json` (tag, shapes, scalars) and
`<prefix>.bin` (the arrays, little-endian float64, concatenated in the
order listed in the sidecar). Round trips are bit exact. Sample sets can
additionally emit a per-chain summary CSV (mean and std per coordinate).
"""

from __future__ import annotations

import csv
import json

import numpy as np

from .hmc import ChainResult, SampleSet
from .laplace import LaplacePosterior
from .mfvi import MeanFieldGaussian
from .swag import SwagPosterior


def _write_blob(path_prefix: str, sidecar: dict, arrays: list) -> None:
    blocks = []
    layout = []
    for name, arr in arrays:
        arr = np.asarray(arr, dtype=np.float64)
        layout.append({"name": name, "shape": list(arr.shape)})
        blocks.append(arr.astype("<f8").ravel().tobytes())
    sidecar["arrays"] = layout
    with open(path_prefix + ".bin", "wb") as fh:
        fh.write(b"".join(blocks))
    with open(path_prefix + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_blob(path_prefix: str):
    with open(path_prefix + ".json") as fh:
        sidecar = json.load(fh)
    raw = np.frombuffer(open(path_prefix + ".bin", "rb").read(), dtype="<f8")
    arrays = {}
    off = 0
    for entry in sidecar["arrays"]:
        size = int(np.prod(entry["shape"])) if entry["shape"] else 1
        arrays[entry["name"]] = raw[off : off + size].reshape(entry["shape"]).astype(np.float64)
        off += size
    if off != raw.size:
        raise ValueError("%s.bin has %d values, sidecar describes %d" % (path_prefix, raw.size, off))
    return sidecar, arrays


def save_posterior(post, path_prefix: str) -> None:
    if isinstance(post, SampleSet):
        sidecar = {
            "format": "posterior",
            "kind": "sample_set",
            "dim": post.dim,
            "includes_log_noise_precision": post.includes_log_noise_precision,
            "warning": post.warning,
            "chains": [
                {
                    "chain_id": c.chain_id,
                    "n_samples": int(c.samples.shape[0]),
                    "accept_rate": c.accept_rate,
                    "divergences": c.divergences,
                    "warmup_divergences": c.warmup_divergences,
                    "step_size": c.step_size,
                    "warmup_discarded": c.warmup_discarded,
                }
                for c in post.chains
            ],
        }
        arrays = [("chain_%d" % c.chain_id, c.samples) for c in post.chains]
        _write_blob(path_prefix, sidecar, arrays)
    elif isinstance(post, MeanFieldGaussian):
        _write_blob(
            path_prefix,
            {"format": "posterior", "kind": "mean_field"},
            [("mean", post.mean), ("rho", post.rho)],
        )
    elif isinstance(post, LaplacePosterior):
        _write_blob(
            path_prefix,
            {
                "format": "posterior",
                "kind": "laplace",
                "structure": post.structure,
                "prior_precision": post.prior_precision,
                "jitter": post.jitter,
            },
            [("mean", post.mean), ("ggn", post.ggn)],
        )
    elif isinstance(post, SwagPosterior):
        _write_blob(
            path_prefix,
            {"format": "posterior", "kind": "swag", "n_snapshots": post.n_snapshots},
            [
                ("mean", post.mean),
                ("diag_variance", post.diag_variance),
                ("deviations", post.deviations),
            ],
        )
    else:
        raise TypeError("cannot serialize posterior of type %r" % type(post).__name__)


def load_posterior(path_prefix: str):
    sidecar, arrays = _read_blob(path_prefix)
    if sidecar.get("format") != "posterior":
        raise ValueError("%s.json is not a posterior sidecar" % path_prefix)
    kind = sidecar["kind"]
    if kind == "sample_set":
        chains = [
            ChainResult(
                chain_id=c["chain_id"],
                samples=arrays["chain_%d" % c["chain_id"]],
                accept_rate=c["accept_rate"],
                divergences=c["divergences"],
                warmup_divergences=c["warmup_divergences"],
                step_size=c["step_size"],
                warmup_discarded=c["warmup_discarded"],
            )
            for c in sidecar["chains"]
        ]
        return SampleSet(
            chains=chains,
            dim=sidecar["dim"],
            includes_log_noise_precision=sidecar["includes_log_noise_precision"],
            warning=sidecar.get("warning"),
        )
    if kind == "mean_field":
        return MeanFieldGaussian(arrays["mean"], arrays["rho"])
    if kind == "laplace":
        return LaplacePosterior(
            mean=arrays["mean"],
            structure=sidecar["structure"],
            ggn=arrays["ggn"],
            prior_precision=sidecar["prior_precision"],
            jitter=sidecar["jitter"],
        )
    if kind == "swag":
        return SwagPosterior(
            mean=arrays["mean"],
            diag_variance=arrays["diag_variance"],
            deviations=arrays["deviations"],
            n_snapshots=sidecar["n_snapshots"],
        )
    raise ValueError("unknown posterior kind %r" % kind)


def sample_set_summary_csv(post: SampleSet, path: str) -> None:
    """Per-chain mean and std (n-1) for every sampled coordinate."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["chain_id", "coordinate", "mean", "std"])
        for c in post.chains:
            mean = c.samples.mean(axis=0)
            std = c.samples.std(axis=0, ddof=1) if c.samples.shape[0] > 1 else np.zeros(post.dim)
            for j in range(post.dim):
                writer.writerow([c.chain_id, j, "%.17g" % mean[j], "%.17g" % std[j]])
