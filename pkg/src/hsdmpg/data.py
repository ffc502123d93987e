"""Sparse datasets: LibSVM ingestion, synthetic generation, row arithmetic.

Feature rows are stored sparse (LibSVM-style index/value pairs) even when
dense, while parameter vectors elsewhere in the package are contiguous
dense arrays.  Indices are 1-based on disk and 0-based in memory.
"""

from __future__ import annotations

import bz2
import gzip
import hashlib
import lzma
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

_OPENERS = {".gz": gzip.open, ".bz2": bz2.open, ".xz": lzma.open}


class LibsvmFormatError(ValueError):
    """Raised for malformed LibSVM input; message carries the line number."""


@dataclass(frozen=True)
class SparseVector:
    """One feature row: strictly increasing 0-based indices, no stored zeros."""

    indices: np.ndarray
    values: np.ndarray
    dim: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        val = np.asarray(self.values, dtype=np.float64)
        if idx.shape != val.shape or idx.ndim != 1:
            raise ValueError("indices and values must be 1-d arrays of equal length")
        if idx.size:
            if np.any(np.diff(idx) <= 0):
                raise ValueError("indices must be strictly increasing")
            if idx[0] < 0 or idx[-1] >= self.dim:
                raise ValueError(f"index out of range [0, {self.dim})")
        if np.any(val == 0.0):
            raise ValueError("explicit zeros are not stored (canonical form)")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    @classmethod
    def from_dense(cls, w, dim=None):
        w = np.asarray(w, dtype=np.float64)
        idx = np.nonzero(w)[0]
        return cls(idx.astype(np.int64), w[idx], dim if dim is not None else w.size)

    def to_dense(self):
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out

    def norm(self):
        return float(np.sqrt(np.dot(self.values, self.values)))

    @property
    def nnz(self):
        return int(self.indices.size)


def dot(v: SparseVector, w: np.ndarray) -> float:
    """Inner product of a sparse row with a dense vector of matching dim."""
    w = np.asarray(w)
    if w.ndim != 1 or w.size != v.dim:
        raise ValueError(f"dimension mismatch: row dim {v.dim}, dense size {w.size}")
    if v.indices.size == 0:
        return 0.0
    return float(np.dot(v.values, w[v.indices]))


class Dataset:
    """Immutable design matrix with labels.

    Attributes:
        rows: list of n SparseVector rows, all sharing dim d.
        labels: length-n float array (real targets, or class ids).
        n, d: sample count and feature dimension.
        k: number of distinct classes when labels are integral (1 otherwise).
        r: cached max Euclidean row norm, recomputable.

    Immutable after construction and safe to share across concurrent readers.
    """

    def __init__(self, rows, labels):
        if len(rows) == 0:
            raise ValueError("dataset needs at least one sample")
        d = rows[0].dim
        if d < 1:
            raise ValueError("feature dimension must be >= 1")
        if any(row.dim != d for row in rows):
            raise ValueError("all rows must share the same dimension")
        labels = np.asarray(labels, dtype=np.float64)
        if labels.shape != (len(rows),):
            raise ValueError("labels length must equal the number of rows")
        self.rows = list(rows)
        self.labels = labels
        self.labels.setflags(write=False)
        self.n = len(rows)
        self.d = d
        self.r = self.recompute_max_row_norm()
        self.k = self._class_count()
        self._matrix = self._build_csr()

    def _class_count(self):
        if np.all(self.labels == np.round(self.labels)):
            distinct = np.unique(self.labels).size
            if distinct >= 2:
                return int(distinct)
        return 1

    def _build_csr(self):
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([row.nnz for row in self.rows])
        indices = (
            np.concatenate([row.indices for row in self.rows])
            if indptr[-1]
            else np.zeros(0, dtype=np.int64)
        )
        values = (
            np.concatenate([row.values for row in self.rows])
            if indptr[-1]
            else np.zeros(0)
        )
        mat = sp.csr_matrix((values, indices, indptr), shape=(self.n, self.d))
        return mat

    @property
    def matrix(self) -> sp.csr_matrix:
        """CSR view of the design matrix (shared, do not mutate)."""
        return self._matrix

    def recompute_max_row_norm(self) -> float:
        return max(row.norm() for row in self.rows)

    def row_norms(self, idx=None):
        rows = self.rows if idx is None else (self.rows[i] for i in idx)
        return np.array([row.norm() for row in rows])

    def scaled_to_unit_norm(self) -> "Dataset":
        """Copy with every row divided by r, so the new max row norm is 1."""
        scale = 1.0 / self.r
        rows = [
            SparseVector(row.indices, row.values * scale, row.dim) for row in self.rows
        ]
        return Dataset(rows, self.labels.copy())

    def content_hash(self) -> str:
        """Stable digest of shapes, rows and labels (keys reference caches)."""
        h = hashlib.sha256()
        h.update(np.int64([self.n, self.d]).tobytes())
        h.update(self.labels.tobytes())
        for row in self.rows:
            h.update(row.indices.tobytes())
            h.update(row.values.tobytes())
        return h.hexdigest()

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.n == other.n
            and self.d == other.d
            and np.array_equal(self.labels, other.labels)
            and all(
                np.array_equal(a.indices, b.indices)
                and np.array_equal(a.values, b.values)
                for a, b in zip(self.rows, other.rows)
            )
        )


def _open_maybe_compressed(path):
    for suffix, opener in _OPENERS.items():
        if str(path).endswith(suffix):
            return opener(path, "rt")
    return open(path, "rt")


def load_libsvm(path, expected_dim=None) -> Dataset:
    """Parse a LibSVM text file (`label idx:val idx:val ...`).

    On-disk indices are 1-based and strictly increasing; in-memory indices
    are 0-based.  The feature dimension is ``expected_dim`` when given,
    otherwise the maximum index observed.  Files ending in .gz/.bz2/.xz are
    decompressed transparently.
    """
    if expected_dim is not None and expected_dim < 1:
        raise ValueError("expected_dim must be positive")
    labels = []
    parsed = []  # (indices, values) with 0-based indices
    max_index = 0
    with _open_maybe_compressed(path) as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            try:
                label = float(parts[0])
            except ValueError:
                raise LibsvmFormatError(
                    f"{path}: line {lineno}: bad label field {parts[0]!r}"
                ) from None
            idx = np.empty(len(parts) - 1, dtype=np.int64)
            val = np.empty(len(parts) - 1)
            for j, tok in enumerate(parts[1:]):
                try:
                    pos, _, raw = tok.partition(":")
                    idx[j] = int(pos)
                    val[j] = float(raw)
                except ValueError:
                    raise LibsvmFormatError(
                        f"{path}: line {lineno}: bad feature token {tok!r}"
                    ) from None
            if idx.size:
                if idx[0] < 1:
                    raise LibsvmFormatError(
                        f"{path}: line {lineno}: indices are 1-based, got {idx[0]}"
                    )
                if np.any(np.diff(idx) <= 0):
                    raise LibsvmFormatError(
                        f"{path}: line {lineno}: indices must be strictly increasing"
                    )
                if expected_dim is not None and idx[-1] > expected_dim:
                    raise LibsvmFormatError(
                        f"{path}: line {lineno}: index {idx[-1]} exceeds "
                        f"expected_dim {expected_dim}"
                    )
                max_index = max(max_index, int(idx[-1]))
            keep = val != 0.0
            labels.append(label)
            parsed.append((idx[keep] - 1, val[keep]))
    if not labels:
        raise LibsvmFormatError(f"{path}: no samples")
    dim = expected_dim if expected_dim is not None else max(max_index, 1)
    rows = [SparseVector(idx, val, dim) for idx, val in parsed]
    return Dataset(rows, labels)


def save_libsvm(dataset: Dataset, path) -> None:
    """Write a Dataset in LibSVM text form (1-based indices, 17 sig. digits).

    Floats round-trip exactly through :func:`load_libsvm` with
    ``expected_dim=dataset.d``.
    """
    with open(path, "wt") as handle:
        for row, label in zip(dataset.rows, dataset.labels):
            fields = [f"{label:.17g}"]
            fields.extend(
                f"{i + 1}:{v:.17g}" for i, v in zip(row.indices, row.values)
            )
            handle.write(" ".join(fields) + "\n")


def synthesize_redundant(n, d, duplication=1, noise=0.0, seed=0) -> Dataset:
    """Generate an n x d dataset of duplicated Gaussian rows.

    ``n // duplication`` base rows are drawn from a standard Gaussian and the
    block of base rows is tiled ``duplication`` times, so row ``i`` and row
    ``i + n/duplication`` come from the same base row.  Per-row Gaussian
    noise of scale ``noise`` is then added, and labels follow a planted
    linear model with label noise of the same scale.  Deterministic given
    the seed (bitwise).
    """
    if n % duplication != 0:
        raise ValueError(f"n={n} is not divisible by duplication={duplication}")
    if noise < 0:
        raise ValueError("noise must be nonnegative")
    rng = np.random.default_rng(seed)
    base = rng.standard_normal((n // duplication, d))
    planted = rng.standard_normal(d)
    rows = np.tile(base, (duplication, 1))
    if noise > 0:
        rows = rows + noise * rng.standard_normal((n, d))
    labels = rows @ planted
    if noise > 0:
        labels = labels + noise * rng.standard_normal(n)
    sparse_rows = [SparseVector.from_dense(rows[i], d) for i in range(n)]
    return Dataset(sparse_rows, labels)
