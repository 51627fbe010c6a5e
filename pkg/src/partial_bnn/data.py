"""Datasets: the two synthetic sine tasks, CSV loading, splits, normalization.

Split roles are stored per point (0 train, 1 val, 2 test). Feature
standardization uses train-split statistics only, with the n-1 variance
convention and a 1e-12 floor on the standard deviation; targets are left
untouched. Validation points are carved out of the train side.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .rng import make_rng

TRAIN, VAL, TEST = 0, 1, 2
STD_FLOOR = 1e-12


@dataclass
class Dataset:
    x: np.ndarray
    y: np.ndarray
    task: str = "regression"
    split: np.ndarray | None = None
    feature_names: tuple = ()
    target_names: tuple = ()
    feature_mean: np.ndarray | None = None
    feature_std: np.ndarray | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        if self.x.ndim == 1:
            self.x = self.x[:, None]
        if self.task == "classification":
            self.y = np.asarray(self.y, dtype=np.int64)
        else:
            self.y = np.asarray(self.y, dtype=np.float64)
            if self.y.ndim == 1:
                self.y = self.y[:, None]
        if self.split is None:
            self.split = np.zeros(len(self.x), dtype=np.int8)
        else:
            self.split = np.asarray(self.split, dtype=np.int8)
        if len(self.split) != len(self.x) or len(self.y) != len(self.x):
            raise ValueError("x, y, split lengths disagree")

    @property
    def n(self) -> int:
        return len(self.x)

    @property
    def n_features(self) -> int:
        return self.x.shape[1]

    def role(self, which: int):
        m = self.split == which
        return self.x[m], self.y[m]

    @property
    def train(self):
        return self.role(TRAIN)

    @property
    def val(self):
        return self.role(VAL)

    @property
    def test(self):
        return self.role(TEST)


def _frac_count(fraction: float, n: int, mode: str = "floor") -> int:
    # round to 9 decimals first so 0.7*1400 = 979.9999999999999 counts as 980
    v = round(fraction * n, 9)
    return int(math.ceil(v)) if mode == "ceil" else int(math.floor(v))


def _assign_split(n: int, fractions, rng) -> np.ndarray:
    n_train = _frac_count(fractions[0], n)
    n_val = _frac_count(fractions[1], n)
    roles = np.full(n, TEST, dtype=np.int8)
    perm = rng.permutation(n)
    roles[perm[:n_train]] = TRAIN
    roles[perm[n_train : n_train + n_val]] = VAL
    return roles


def gen_sine_small(seed: int = 0, noise_std: float = 0.05, split=(0.7, 0.2, 0.1)) -> Dataset:
    """Fifty points of y = sin(4 (x - 4.3)) + noise on two disjoint x clusters.

    25 inputs are uniform on (-3, -1.7) and 25 on (2.2, 4); the band in
    between carries no data. noise_std=0 gives the noise-free variant.
    """
    rng = make_rng(seed, 0)
    x = np.concatenate([rng.uniform(-3.0, -1.7, 25), rng.uniform(2.2, 4.0, 25)])
    y = np.sin(4.0 * (x - 4.3)) + noise_std * rng.standard_normal(50)
    roles = _assign_split(50, split, rng)
    return Dataset(x, y, split=roles, feature_names=("x",), target_names=("y",))


def gen_sine_large(seed: int = 0, noise_std: float = 0.05, split=(0.7, 0.2, 0.1)) -> Dataset:
    """1400-point version: 700 inputs on (-2, -1.4) and 700 on (2, 2.8)."""
    rng = make_rng(seed, 0)
    x = np.concatenate([rng.uniform(-2.0, -1.4, 700), rng.uniform(2.0, 2.8, 700)])
    y = np.sin(4.0 * (x - 4.3)) + noise_std * rng.standard_normal(1400)
    roles = _assign_split(1400, split, rng)
    return Dataset(x, y, split=roles, feature_names=("x",), target_names=("y",))


def load_csv(path: str, target_columns, normalize: bool = False) -> Dataset:
    """Numeric CSV with a header row; named target columns become y.

    Non-numeric cells and ragged rows raise with the offending row and
    column. All points start in the train role; use ``make_split``.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError("%s: empty file" % path)
        header = [h.strip() for h in header]
        rows = []
        for i, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError("%s: row %d has %d cells, header has %d" % (path, i, len(row), len(header)))
            vals = []
            for name, cell in zip(header, row):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise ValueError("%s: row %d, column %r is not numeric: %r" % (path, i, name, cell))
            rows.append(vals)
    if not rows:
        raise ValueError("%s: no data rows" % path)
    data = np.asarray(rows, dtype=np.float64)
    missing = [t for t in target_columns if t not in header]
    if missing:
        raise ValueError("%s: target columns not in header: %s" % (path, missing))
    tidx = [header.index(t) for t in target_columns]
    fidx = [j for j in range(len(header)) if j not in tidx]
    if not fidx:
        raise ValueError("%s: all columns are targets" % path)
    ds = Dataset(
        data[:, fidx],
        data[:, tidx],
        feature_names=tuple(header[j] for j in fidx),
        target_names=tuple(header[j] for j in tidx),
    )
    return standardize(ds) if normalize else ds


def make_split(
    ds: Dataset,
    kind: str = "standard",
    seed: int = 0,
    test_fraction: float = 0.1,
    val_fraction: float = 0.1,
    feature_index: int = 0,
) -> Dataset:
    """New dataset with a fresh role assignment; the input is not modified.

    standard: uniformly random test set of the given fraction.
    gap: sort by one feature (stable, so ties keep original order) and hold
    out the central ceil(test_fraction * N) ranks, start floor((N - n_test)/2).
    Validation is carved uniformly from the remaining train side in both
    kinds.
    """
    n = ds.n
    rng = make_rng(seed, 3)
    if kind == "standard":
        n_test = _frac_count(test_fraction, n, "ceil")
        perm = rng.permutation(n)
        test_idx = perm[:n_test]
    elif kind == "gap":
        if not 0 <= feature_index < ds.n_features:
            raise ValueError("feature_index out of range")
        order = np.argsort(ds.x[:, feature_index], kind="stable")
        n_test = _frac_count(test_fraction, n, "ceil")
        start = (n - n_test) // 2
        test_idx = order[start : start + n_test]
    else:
        raise ValueError("unknown split kind %r" % (kind,))
    roles = np.full(n, TRAIN, dtype=np.int8)
    roles[test_idx] = TEST
    train_idx = np.flatnonzero(roles == TRAIN)
    n_val = _frac_count(val_fraction, len(train_idx))
    if n_val > 0:
        pick = rng.permutation(len(train_idx))[:n_val]
        roles[train_idx[pick]] = VAL
    return replace(ds, split=roles, feature_mean=None, feature_std=None,
                   x=ds.x.copy(), y=ds.y.copy())


def standardize(ds: Dataset) -> Dataset:
    """Features scaled to train-split mean zero, std one (floored at 1e-12)."""
    tx, _ = ds.train
    if len(tx) == 0:
        raise ValueError("cannot standardize: train split is empty")
    mean = tx.mean(axis=0)
    if len(tx) > 1:
        std = tx.std(axis=0, ddof=1)
    else:
        std = np.zeros(ds.n_features)
    std = np.where(np.isfinite(std) & (std > STD_FLOOR), std, STD_FLOOR)
    x = (ds.x - mean) / std
    return replace(ds, x=x, y=ds.y.copy(), split=ds.split.copy(),
                   feature_mean=mean, feature_std=std)


def destandardize(ds: Dataset) -> Dataset:
    """Inverse of ``standardize`` using the stored statistics."""
    if ds.feature_mean is None or ds.feature_std is None:
        raise ValueError("dataset carries no normalization statistics")
    x = ds.x * ds.feature_std + ds.feature_mean
    return replace(ds, x=x, y=ds.y.copy(), split=ds.split.copy(),
                   feature_mean=None, feature_std=None)
