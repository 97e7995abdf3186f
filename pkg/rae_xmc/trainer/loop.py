"""
Training loop for the toy dual encoder.

AdamW with decoupled weight decay, linear warmup followed by linear decay,
and hard negatives refreshed every ``hnm_steps`` steps.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional

import numpy as np
from scipy import sparse

from ..core.config_types import TrainConfig
from ..core.matrices import LabelMatrix
from ..core.predictions import rank_desc
from ..utils.exceptions import DimensionMismatch, EmptyBatch
from .encoder import ToyEncoder
from .losses import TrainBatch, contrastive_batch_loss
from .mining import mine_from_embeddings

logger = logging.getLogger(__name__)


@dataclass
class TrainingDataset:
    """Sparse instance features, sparse label features and the instance-label matrix."""

    features: sparse.csr_matrix
    label_features: sparse.csr_matrix
    labels: LabelMatrix

    def __post_init__(self):
        self.features = sparse.csr_matrix(self.features, dtype=np.float64)
        self.label_features = sparse.csr_matrix(self.label_features, dtype=np.float64)
        if self.features.shape[0] != self.labels.n_rows:
            raise DimensionMismatch("feature rows differ from label matrix rows")
        if self.label_features.shape[0] != self.labels.n_labels:
            raise DimensionMismatch(
                "label feature rows differ from the number of labels"
            )
        if self.features.shape[1] != self.label_features.shape[1]:
            raise DimensionMismatch("instances and labels use different feature spaces")

    @property
    def n_features(self) -> int:
        return int(self.features.shape[1])


class CurvePoint(NamedTuple):
    step: int
    loss: float
    lr: float


@dataclass
class TrainResult:
    encoder: ToyEncoder
    curve: List[CurvePoint] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.curve[-1].loss if self.curve else float("nan")


class AdamW:
    """Adam moments with weight decay applied directly to the parameters."""

    def __init__(
        self, shape, beta1: float, beta2: float, eps: float, weight_decay: float
    ):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        update = m_hat / (np.sqrt(v_hat) + self.eps) + self.weight_decay * params
        return params - lr * update


def learning_rate_at(step: int, config: TrainConfig) -> float:
    """Linear warmup to ``config.lr`` then linear decay to zero at ``max_steps``."""
    warmup = int(config.warmup_fraction * config.max_steps)
    if step < warmup:
        return config.lr * (step + 1) / warmup
    remaining = max(1, config.max_steps - warmup)
    return config.lr * max(0.0, (config.max_steps - step) / remaining)


class _BatchSampler:
    """Epoch-wise shuffled instance ids, drawn batch_size at a time."""

    def __init__(self, ids: np.ndarray, batch_size: int, rng: np.random.Generator):
        self.ids = ids
        self.batch_size = min(batch_size, ids.size)
        self.rng = rng
        self.order = rng.permutation(ids)
        self.cursor = 0

    def next(self) -> np.ndarray:
        if self.cursor + self.batch_size > self.order.size:
            self.order = self.rng.permutation(self.ids)
            self.cursor = 0
        batch = self.order[self.cursor : self.cursor + self.batch_size]
        self.cursor += self.batch_size
        return batch


def _mine(
    encoder: ToyEncoder, dataset: TrainingDataset, config: TrainConfig, rng
) -> List[np.ndarray]:
    x_emb, _ = encoder.encode_with_norms(dataset.features)
    z_emb, _ = encoder.encode_with_norms(dataset.label_features)
    return mine_from_embeddings(
        x_emb, z_emb, dataset.labels, config.hnm_topk, config.m, rng
    )


def train(
    dataset: TrainingDataset, config: TrainConfig, encoder: Optional[ToyEncoder] = None
) -> TrainResult:
    """
    Train a toy encoder on ``dataset``.

    Args:
        dataset: Instances, labels and their sparse features
        config: Training hyperparameters
        encoder: Optional starting encoder; a seeded random one otherwise

    Returns:
        TrainResult with the final encoder and one curve point per step

    Raises:
        EmptyBatch: If no instance has a positive label
    """
    rng = np.random.default_rng(config.seed)
    if encoder is None:
        encoder = ToyEncoder.initialize(dataset.n_features, config.dim, rng)
    elif encoder.d_in != dataset.n_features:
        raise DimensionMismatch(
            f"encoder expects {encoder.d_in} features, dataset has {dataset.n_features}"
        )

    trainable = np.array(
        [i for i in range(dataset.labels.n_rows) if dataset.labels.row(i).size],
        dtype=np.int64,
    )
    if trainable.size == 0:
        raise EmptyBatch("no training instance has a positive label")

    sampler = _BatchSampler(trainable, config.batch_size, rng)
    optimizer = AdamW(
        encoder.weights.shape,
        config.beta1,
        config.beta2,
        config.eps,
        config.weight_decay,
    )
    result = TrainResult(encoder=encoder)
    negatives: List[np.ndarray] = []
    label_sets = [dataset.labels.row(i) for i in range(dataset.labels.n_rows)]

    logger.info(
        f"Training {config.loss.value} loss: {trainable.size} instances, "
        f"{dataset.labels.n_labels} labels, {config.max_steps} steps"
    )
    started = time.time()
    for step in range(config.max_steps):
        if step % config.hnm_steps == 0:
            negatives = _mine(encoder, dataset, config, rng)
            logger.info(f"Step {step}: refreshed hard negatives")

        ids = sampler.next()
        batch = TrainBatch(
            features=dataset.features[ids],
            label_features=dataset.label_features,
            positives=[np.array([rng.choice(label_sets[i])]) for i in ids],
            negatives=[negatives[i] for i in ids],
            label_sets=[label_sets[i] for i in ids],
        )
        loss, grad = contrastive_batch_loss(batch, encoder, config.tau, config.loss)
        lr = learning_rate_at(step, config)
        encoder = encoder.with_weights(optimizer.step(encoder.weights, grad, lr))
        result.curve.append(CurvePoint(step, loss, lr))

        if config.log_every and (step + 1) % config.log_every == 0:
            logger.info(
                f"Step {step + 1}/{config.max_steps}: loss={loss:.4f} lr={lr:.2e}"
            )

    result.encoder = encoder
    logger.info(f"Training finished in {time.time() - started:.1f}s")
    return result


def precision_at_1(encoder: ToyEncoder, dataset: TrainingDataset) -> float:
    """Fraction of instances whose best-scoring label is a positive."""
    x_emb, _ = encoder.encode_with_norms(dataset.features)
    z_emb, _ = encoder.encode_with_norms(dataset.label_features)
    scores = x_emb @ z_emb.T
    labels = np.arange(dataset.labels.n_labels)
    hits = [
        rank_desc(labels, scores[i], 1)[0][0] in dataset.labels.row(i)
        for i in range(dataset.labels.n_rows)
    ]
    return float(np.mean(hits)) if hits else 0.0
