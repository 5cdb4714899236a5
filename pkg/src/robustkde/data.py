"""Dataset ingestion, synthetic generators, and contamination mixing.

All stochastic operations draw from a Philox counter-based generator keyed
by an explicit integer seed (plus optional stream indices), so every
sample is bit-reproducible across runs and platforms.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .exceptions import DataError


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Philox generator keyed by (seed, *stream); distinct streams are independent."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, stream)])))


@dataclass(frozen=True)
class Dataset:
    """Nominal and contaminating samples plus optional train/test partitions.

    Partitions are (train_indices, test_indices) pairs indexing rows of the
    nominal matrix; index sets must be disjoint within a pair.
    """

    name: str
    nominal: NDArray
    contaminating: NDArray
    partitions: tuple = field(default_factory=tuple)

    def __post_init__(self):
        nom = np.asarray(self.nominal, dtype=float)
        con = np.asarray(self.contaminating, dtype=float)
        if nom.ndim != 2 or nom.shape[0] < 1:
            raise DataError(f"nominal data must be a nonempty n x d matrix, got shape {nom.shape}")
        if con.size and (con.ndim != 2 or con.shape[1] != nom.shape[1]):
            raise DataError("contaminating data dimension does not match nominal data")
        if not np.all(np.isfinite(nom)) or (con.size and not np.all(np.isfinite(con))):
            raise DataError("dataset contains NaN or infinite values")
        for k, (tr, te) in enumerate(self.partitions):
            if np.intersect1d(tr, te).size:
                raise DataError(f"partition {k} has overlapping train and test indices")
        object.__setattr__(self, "nominal", nom)
        object.__setattr__(self, "contaminating", con if con.size else con.reshape(0, nom.shape[1]))

    @property
    def dim(self) -> int:
        return self.nominal.shape[1]


def load_csv(path, label_column: str, nominal_labels) -> Dataset:
    """Load a headered CSV, splitting rows into nominal vs contaminating.

    Label values are compared as raw strings against ``nominal_labels``.
    All remaining columns must parse as floats; offending rows are reported
    with their 1-based line numbers.
    """
    nominal_labels = {str(v) for v in nominal_labels}
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file; a header row is required") from None
        header = [h.strip() for h in header]
        if label_column not in header:
            raise DataError(f"{path}: label column {label_column!r} not found in header {header}")
        label_idx = header.index(label_column)
        nominal_rows, contaminating_rows, bad_lines = [], [], []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            label = row[label_idx].strip()
            try:
                feats = [float(v) for i, v in enumerate(row) if i != label_idx]
            except ValueError:
                bad_lines.append(line_no)
                continue
            if len(feats) != len(header) - 1:
                bad_lines.append(line_no)
                continue
            (nominal_rows if label in nominal_labels else contaminating_rows).append(feats)
        if bad_lines:
            raise DataError(f"{path}: non-numeric or ragged rows at lines {bad_lines}")
    if not nominal_rows:
        raise DataError(f"{path}: no rows matched nominal labels {sorted(nominal_labels)}")
    dim = len(header) - 1
    name = os.path.splitext(os.path.basename(str(path)))[0]
    return Dataset(name=name,
                   nominal=np.asarray(nominal_rows, dtype=float),
                   contaminating=(np.asarray(contaminating_rows, dtype=float)
                                  if contaminating_rows else np.empty((0, dim))))


def synth_gaussian_mixture(means, covs, mix_weights, n: int, seed: int) -> NDArray[np.float64]:
    """Sample n points from a Gaussian mixture; deterministic given seed."""
    mu = np.asarray(means, dtype=float)
    if mu.ndim == 1:
        mu = mu[:, None]
    k, d = mu.shape
    sig = np.asarray(covs, dtype=float)
    if sig.shape != (k, d, d):
        raise DataError(f"covariances must have shape ({k}, {d}, {d}), got {sig.shape}")
    pw = np.asarray(mix_weights, dtype=float)
    if pw.shape != (k,) or np.any(pw < 0) or not np.isclose(pw.sum(), 1.0):
        raise DataError("mixing weights must be a simplex vector, one per component")
    rng = make_rng(seed)
    chol = np.linalg.cholesky(sig)
    comp = rng.choice(k, size=n, p=pw / pw.sum())
    z = rng.standard_normal((n, d))
    return mu[comp] + np.einsum("nij,nj->ni", chol[comp], z)


def synth_uniform_box(bounds, n: int, seed: int) -> NDArray[np.float64]:
    """Sample n points uniformly from the axis-aligned box given by (lo, hi) pairs."""
    b = np.asarray(bounds, dtype=float)
    if b.ndim != 2 or b.shape[1] != 2 or np.any(b[:, 0] > b[:, 1]):
        raise DataError("bounds must be a d x 2 array of (low, high) pairs with low <= high")
    rng = make_rng(seed)
    u = rng.random((n, b.shape[0]))
    return b[:, 0] + u * (b[:, 1] - b[:, 0])


def mix_contamination(nominal_train, contaminating_pool, epsilon: float, seed: int,
                      return_indices: bool = False):
    """Append floor(epsilon * n0) pool rows to the nominal training sample.

    Pool rows are drawn without replacement. Returns (train, mask) where the
    boolean mask marks contaminating rows; with ``return_indices`` the drawn
    pool indices are returned as a third element.
    """
    nom = np.asarray(nominal_train, dtype=float)
    pool = np.asarray(contaminating_pool, dtype=float)
    if epsilon < 0:
        raise DataError(f"epsilon must be nonnegative, got {epsilon}")
    n0 = nom.shape[0]
    n1 = int(np.floor(epsilon * n0))
    if n1 > pool.shape[0]:
        raise DataError(f"contamination pool has {pool.shape[0]} rows but "
                        f"epsilon={epsilon} requires {n1}")
    rng = make_rng(seed)
    idx = rng.choice(pool.shape[0], size=n1, replace=False) if n1 else np.empty(0, dtype=int)
    train = np.vstack([nom, pool[idx]]) if n1 else nom.copy()
    mask = np.zeros(n0 + n1, dtype=bool)
    mask[n0:] = True
    if return_indices:
        return train, mask, idx
    return train, mask
