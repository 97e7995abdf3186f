"""Hard negative mining against the current encoder."""

import logging
from typing import List

import numpy as np

from ..core.matrices import LabelMatrix
from ..core.predictions import rank_desc
from ..utils.exceptions import DimensionMismatch, InvalidConfig
from .encoder import ToyEncoder

logger = logging.getLogger(__name__)


def mine_from_embeddings(
    x_emb: np.ndarray,
    z_emb: np.ndarray,
    y: LabelMatrix,
    hnm_topk: int,
    m: int,
    rng: np.random.Generator,
) -> List[np.ndarray]:
    """
    Sample m negatives per instance from its top-hnm_topk non-positive labels.

    Instances whose shortlist holds fewer than m non-positives are padded
    with uniformly drawn non-positive labels.
    """
    if hnm_topk < m:
        raise InvalidConfig(f"hnm_topk ({hnm_topk}) must be >= m ({m})")
    x_emb = np.asarray(x_emb, dtype=np.float64)
    z_emb = np.asarray(z_emb, dtype=np.float64)
    if x_emb.shape[0] != y.n_rows or z_emb.shape[0] != y.n_labels:
        raise DimensionMismatch("embedding rows disagree with the label matrix shape")

    all_labels = np.arange(y.n_labels, dtype=np.int64)
    scores = x_emb @ z_emb.T
    negatives = []
    padded = 0
    for i in range(y.n_rows):
        positives = y.row(i)
        shortlist, _ = rank_desc(all_labels, scores[i], hnm_topk)
        pool = shortlist[~np.isin(shortlist, positives)]
        if pool.size >= m:
            chosen = rng.choice(pool, size=m, replace=False)
        else:
            padded += 1
            rest = np.setdiff1d(all_labels, np.concatenate([positives, pool]))
            extra = rng.choice(rest, size=min(m - pool.size, rest.size), replace=False)
            chosen = np.concatenate([pool, extra])
        negatives.append(chosen.astype(np.int64))

    logger.debug(f"Mined negatives for {y.n_rows} instances ({padded} padded)")
    return negatives


def hard_negative_mine(
    encoder: ToyEncoder,
    x_features,
    z_features,
    y: LabelMatrix,
    hnm_topk: int,
    m: int,
    seed: int,
) -> List[np.ndarray]:
    """Encode instances and labels with ``encoder`` and mine negatives per instance."""
    x_emb, _ = encoder.encode_with_norms(x_features)
    z_emb, _ = encoder.encode_with_norms(z_features)
    rng = np.random.default_rng(seed)
    return mine_from_embeddings(x_emb, z_emb, y, hnm_topk, m, rng)
