"""Linear encoder over sparse features, shared by inputs and labels."""

from typing import Tuple

import numpy as np
from scipy import sparse

from ..core.matrices import ZERO_NORM, EmbeddingMatrix, normalize_rows
from ..utils.exceptions import DegenerateEncoding, DimensionMismatch


class ToyEncoder:
    """encode(v) = normalize(W^T v) with W of shape (d_in, d)."""

    def __init__(self, weights: np.ndarray):
        weights = np.asarray(weights, dtype=np.float64)
        if weights.ndim != 2:
            raise DimensionMismatch("encoder weights must be a 2-D matrix")
        self.weights = weights

    @classmethod
    def initialize(cls, d_in: int, d: int, rng: np.random.Generator) -> "ToyEncoder":
        return cls(rng.normal(0.0, 1.0 / np.sqrt(d), size=(d_in, d)))

    @property
    def d_in(self) -> int:
        return int(self.weights.shape[0])

    @property
    def dim(self) -> int:
        return int(self.weights.shape[1])

    def with_weights(self, weights: np.ndarray) -> "ToyEncoder":
        return ToyEncoder(weights)

    def _project(self, features) -> np.ndarray:
        features = sparse.csr_matrix(features)
        if features.shape[1] != self.d_in:
            raise DimensionMismatch(
                f"features have {features.shape[1]} columns, "
                f"encoder expects {self.d_in}"
            )
        return np.asarray(features @ self.weights)

    def encode_with_norms(self, features) -> Tuple[np.ndarray, np.ndarray]:
        """
        Unit vectors and the pre-normalization norms, in float64.

        Raises:
            DegenerateEncoding: If some W^T v is the zero vector
        """
        raw = self._project(features)
        norms = np.linalg.norm(raw, axis=1)
        zero = np.flatnonzero(norms < ZERO_NORM)
        if zero.size:
            raise DegenerateEncoding(f"row {int(zero[0])} encodes to the zero vector")
        return raw / norms[:, np.newaxis], norms

    def embed(self, features) -> EmbeddingMatrix:
        """Float32 unit embeddings for indexing (ZeroRow on a zero projection)."""
        return normalize_rows(self._project(features))


def normalization_backward(
    units: np.ndarray, norms: np.ndarray, grad_units: np.ndarray
) -> np.ndarray:
    """Pull dL/du back through u = v / |v|: (I - u u^T) dL/du / |v|."""
    radial = np.sum(units * grad_units, axis=1, keepdims=True)
    return (grad_units - units * radial) / norms[:, np.newaxis]
