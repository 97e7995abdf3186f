"""Dense and sparse matrix containers and shared numeric primitives."""

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse
from scipy.special import softmax

from ..utils.exceptions import (
    DimensionMismatch,
    EmptyInput,
    InvariantViolation,
    ZeroRow,
)
from .config_types import check_tau

NORM_TOLERANCE = 1e-4
ZERO_NORM = 1e-12


@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    """
    Row-major matrix of unit-norm float32 vectors.

    Instances, labels and queries all live in this container. Build one with
    :func:`normalize_rows`; the constructor only validates.
    """

    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 2:
            raise DimensionMismatch(f"expected a 2-D array, got {self.data.ndim}-D")
        if self.data.dtype != np.float32:
            raise InvariantViolation(f"expected float32 storage, got {self.data.dtype}")
        if not np.isfinite(self.data).all():
            raise InvariantViolation("embedding contains NaN or inf entries")
        norms = np.linalg.norm(self.data.astype(np.float64), axis=1)
        bad = np.flatnonzero(~(np.abs(norms - 1.0) <= NORM_TOLERANCE))
        if bad.size:
            raise InvariantViolation(
                f"row {int(bad[0])} has norm {norms[bad[0]]:.6f}, expected 1.0"
            )
        self.data.setflags(write=False)

    @property
    def rows(self) -> int:
        return int(self.data.shape[0])

    @property
    def dim(self) -> int:
        return int(self.data.shape[1])

    def __len__(self) -> int:
        return self.rows

    def row(self, i: int) -> np.ndarray:
        return self.data[i]

    def take(self, row_ids: Sequence[int]) -> "EmbeddingMatrix":
        return EmbeddingMatrix(np.ascontiguousarray(self.data[np.asarray(row_ids)]))

    def slice(self, start: int, stop: int) -> "EmbeddingMatrix":
        return EmbeddingMatrix(np.ascontiguousarray(self.data[start:stop]))

    def as_float64(self) -> np.ndarray:
        return self.data.astype(np.float64)

    @staticmethod
    def vstack(parts: Iterable["EmbeddingMatrix"]) -> "EmbeddingMatrix":
        parts = list(parts)
        dims = {p.dim for p in parts}
        if len(dims) > 1:
            raise DimensionMismatch(f"cannot stack matrices of dims {sorted(dims)}")
        return EmbeddingMatrix(np.vstack([p.data for p in parts]))


def normalize_rows(m) -> EmbeddingMatrix:
    """
    Project every row onto the unit sphere.

    Raises:
        ZeroRow: If a row norm is below 1e-12
        InvariantViolation: If a row holds NaN or inf
    """
    raw = np.asarray(m, dtype=np.float64)
    if raw.ndim == 1:
        raw = raw[np.newaxis, :]
    if raw.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D array, got {raw.ndim}-D")
    finite = np.isfinite(raw).all(axis=1)
    if not finite.all():
        row = int(np.flatnonzero(~finite)[0])
        raise InvariantViolation(f"row {row} holds NaN or inf")
    norms = np.linalg.norm(raw, axis=1)
    zero = np.flatnonzero(norms < ZERO_NORM)
    if zero.size:
        raise ZeroRow(int(zero[0]))
    return EmbeddingMatrix((raw / norms[:, np.newaxis]).astype(np.float32))


def normalize_vector(v) -> np.ndarray:
    """Normalize a single query vector in float64."""
    v = np.asarray(v, dtype=np.float64).ravel()
    if not np.isfinite(v).all():
        raise InvariantViolation("query vector holds NaN or inf")
    norm = np.linalg.norm(v)
    if norm < ZERO_NORM:
        raise ZeroRow(0)
    return v / norm


def softmax_over_scores(scores, tau: float) -> np.ndarray:
    """
    Temperature softmax exp(s/tau) / sum exp(s/tau), stabilized by max-subtraction.

    Raises:
        EmptyInput: If scores is empty
        InvalidTau: If tau <= 0
    """
    check_tau(tau)
    s = np.asarray(scores, dtype=np.float64).ravel()
    if s.size == 0:
        raise EmptyInput("softmax over an empty score list")
    return softmax(s / tau)


class LabelMatrix:
    """
    Sparse binary instance-by-label matrix in CSR layout.

    Column indices are strictly increasing within each row; empty rows are
    allowed.
    """

    def __init__(self, csr: sparse.csr_matrix):
        csr = sparse.csr_matrix(csr, dtype=np.float64, copy=True)
        csr.sum_duplicates()
        csr.sort_indices()
        if csr.nnz and not np.all(csr.data == 1.0):
            raise InvariantViolation("label matrix values must be binary")
        self._csr = csr

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[int]], n_labels: int) -> "LabelMatrix":
        """Build from per-row label id lists (ascending, unique, < n_labels)."""
        indptr = [0]
        indices = []
        for i, row in enumerate(rows):
            row = [int(r) for r in row]
            for a, b in zip(row, row[1:]):
                if b <= a:
                    raise InvariantViolation(
                        f"row {i}: label ids must be strictly increasing, got {row}"
                    )
            if row and (row[0] < 0 or row[-1] >= n_labels):
                raise InvariantViolation(
                    f"row {i}: label id out of range [0, {n_labels})"
                )
            indices.extend(row)
            indptr.append(len(indices))
        data = np.ones(len(indices), dtype=np.float64)
        csr = sparse.csr_matrix(
            (data, np.asarray(indices, dtype=np.int64), np.asarray(indptr)),
            shape=(len(rows), n_labels),
        )
        return cls(csr)

    @property
    def csr(self) -> sparse.csr_matrix:
        return self._csr

    @property
    def n_rows(self) -> int:
        return int(self._csr.shape[0])

    @property
    def n_labels(self) -> int:
        return int(self._csr.shape[1])

    @property
    def nnz(self) -> int:
        return int(self._csr.nnz)

    @property
    def row_offsets(self) -> np.ndarray:
        return self._csr.indptr

    @property
    def col_indices(self) -> np.ndarray:
        return self._csr.indices

    def row(self, i: int) -> np.ndarray:
        start, stop = self._csr.indptr[i], self._csr.indptr[i + 1]
        return self._csr.indices[start:stop]

    def rows(self):
        for i in range(self.n_rows):
            yield self.row(i)

    def take(self, row_ids: Sequence[int]) -> "LabelMatrix":
        return LabelMatrix(self._csr[np.asarray(row_ids)])

    def label_frequencies(self) -> np.ndarray:
        """Column sums: number of rows carrying each label."""
        return np.asarray(self._csr.sum(axis=0)).ravel().astype(np.int64)

    def __eq__(self, other) -> bool:
        if not isinstance(other, LabelMatrix):
            return NotImplemented
        return (
            self._csr.shape == other._csr.shape
            and np.array_equal(self._csr.indptr, other._csr.indptr)
            and np.array_equal(self._csr.indices, other._csr.indices)
        )

    def __repr__(self) -> str:
        return (
            f"LabelMatrix(n_rows={self.n_rows}, n_labels={self.n_labels}, "
            f"nnz={self.nnz})"
        )
