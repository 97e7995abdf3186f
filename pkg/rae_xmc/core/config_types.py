"""Configuration types shared across rae-xmc modules."""

from dataclasses import dataclass, field
from enum import Enum
from typing import Tuple

from ..utils.exceptions import BeyondQueue, InvalidConfig, InvalidLambda, InvalidTau


class PredictionMode(Enum):
    """Which predictor turns retrieved keys into label scores."""

    RAE = "rae"
    OVA_KNN = "ova-knn"


class Segment(Enum):
    """Label segments by training frequency."""

    HEAD = "head"
    TORSO = "torso"
    TAIL = "tail"
    XTAIL = "xtail"


class LossKind(Enum):
    """Contrastive objective used by the toy trainer."""

    SOFTMAX = "softmax"
    DECOUPLED = "decoupled"
    RAE = "rae"


def check_lambda(lam: float) -> None:
    if not 0.0 <= lam <= 1.0:
        raise InvalidLambda(f"lambda must lie in [0, 1], got {lam}")


def check_tau(tau: float) -> None:
    if not tau > 0.0:
        raise InvalidTau(f"tau must be positive, got {tau}")


@dataclass(frozen=True)
class IndexConfig:
    """HNSW construction parameters."""

    m: int = 64
    ef_construction: int = 500
    seed: int = 0
    num_threads: int = 1

    def __post_init__(self):
        if self.m < 2:
            raise InvalidConfig(f"m must be >= 2, got {self.m}")
        if self.ef_construction < self.m:
            raise InvalidConfig(
                f"ef_construction ({self.ef_construction}) must be >= m ({self.m})"
            )
        if self.num_threads < 1:
            raise InvalidConfig("num_threads must be >= 1")


@dataclass(frozen=True)
class InferenceConfig:
    """Retrieval and aggregation parameters for prediction."""

    b: int = 200
    tau: float = 0.04
    lam: float = 0.5
    topk: int = 100
    ef_search: int = 300

    def __post_init__(self):
        check_tau(self.tau)
        check_lambda(self.lam)
        if self.b < 1:
            raise InvalidConfig(f"b must be >= 1, got {self.b}")
        if self.ef_search < self.b:
            raise BeyondQueue(
                f"ef_search ({self.ef_search}) must be >= b ({self.b})"
            )
        if self.topk < 1:
            raise InvalidConfig(f"topk must be >= 1, got {self.topk}")


@dataclass(frozen=True)
class SegmentSpec:
    """
    Frequency intervals for label segments.

    A label with training frequency f is Head if f > head_above, Torso if
    torso_above < f <= head_above, Tail if tail_above < f <= torso_above and
    xTail otherwise (including f == 0).
    """

    head_above: int = 1000
    torso_above: int = 100
    tail_above: int = 10

    def __post_init__(self):
        if not self.head_above > self.torso_above > self.tail_above >= 0:
            raise InvalidConfig(
                "segment thresholds must be strictly decreasing and non-negative: "
                f"{self.thresholds}"
            )

    @property
    def thresholds(self) -> Tuple[int, int, int]:
        return (self.head_above, self.torso_above, self.tail_above)

    @classmethod
    def from_thresholds(cls, values) -> "SegmentSpec":
        values = [int(v) for v in values]
        if len(values) != 3:
            raise InvalidConfig(f"expected three segment thresholds, got {values}")
        return cls(*values)


@dataclass(frozen=True)
class EvalConfig:
    """Metric cutoffs and segmentation."""

    ks: Tuple[int, ...] = (1, 5, 100)
    segments: SegmentSpec = field(default_factory=SegmentSpec)

    def __post_init__(self):
        if not self.ks or any(k < 1 for k in self.ks):
            raise InvalidConfig(f"ks must be positive integers, got {self.ks}")


@dataclass(frozen=True)
class TrainConfig:
    """Toy dual-encoder training hyperparameters."""

    batch_size: int = 32
    lr: float = 5e-3
    max_steps: int = 2000
    hnm_steps: int = 500
    hnm_topk: int = 10
    m: int = 2
    warmup_fraction: float = 0.1
    seed: int = 0
    tau: float = 0.04
    dim: int = 16
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    loss: LossKind = LossKind.RAE
    log_every: int = 100

    def __post_init__(self):
        check_tau(self.tau)
        if self.batch_size < 1 or self.max_steps < 0 or self.hnm_steps < 1:
            raise InvalidConfig("batch_size, hnm_steps must be >= 1, max_steps >= 0")
        if self.hnm_topk < self.m:
            raise InvalidConfig(
                f"hnm_topk ({self.hnm_topk}) must be >= m ({self.m})"
            )
        if not 0.0 <= self.warmup_fraction <= 1.0:
            raise InvalidConfig("warmup_fraction must lie in [0, 1]")
        if self.lr < 0:
            raise InvalidConfig("lr must be non-negative")
        if self.dim < 1:
            raise InvalidConfig("dim must be >= 1")
