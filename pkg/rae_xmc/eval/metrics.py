"""Ranking metrics for extreme multi-label predictions."""

from typing import Dict, Sequence, Union

import numpy as np

from ..core.config_types import Segment, SegmentSpec
from ..core.matrices import LabelMatrix
from ..core.predictions import PredictionSet, RankedLabels
from ..utils.exceptions import DimensionMismatch, InvalidConfig

Ranking = Union[RankedLabels, Sequence[int], np.ndarray]


def _top(pred: Ranking, k: int) -> np.ndarray:
    if k < 1:
        raise InvalidConfig(f"k must be >= 1, got {k}")
    if isinstance(pred, RankedLabels):
        return pred.label_ids[:k]
    ids = np.asarray(pred, dtype=np.int64)
    return ids[:k]


def _hits(pred: Ranking, truth, k: int) -> int:
    truth = np.asarray(truth, dtype=np.int64)
    return int(np.count_nonzero(np.isin(_top(pred, k), truth)))


def precision_at_k(pred: Ranking, truth, k: int) -> float:
    """|top-k ∩ truth| / k; missing prediction slots count as misses."""
    return _hits(pred, truth, k) / k


def recall_at_k(pred: Ranking, truth, k: int) -> float:
    """|top-k ∩ truth| / |truth|, 0 for an empty truth set."""
    truth = np.asarray(truth)
    if truth.size == 0:
        _top(pred, k)
        return 0.0
    return _hits(pred, truth, k) / truth.size


def assign_segments(freq: np.ndarray, spec: SegmentSpec) -> np.ndarray:
    """Segment of every label given its training frequency."""
    freq = np.asarray(freq)
    out = np.full(freq.shape, Segment.XTAIL, dtype=object)
    out[freq > spec.tail_above] = Segment.TAIL
    out[freq > spec.torso_above] = Segment.TORSO
    out[freq > spec.head_above] = Segment.HEAD
    return out


def segment_labels(train_labels: LabelMatrix, spec: SegmentSpec) -> np.ndarray:
    """Per-label segment from the column sums of the training label matrix."""
    return assign_segments(train_labels.label_frequencies(), spec)


def label_confusion_at_k(preds: PredictionSet, truths: LabelMatrix, k: int):
    """Per-label (TP, FP, FN) counts over all queries' top-k lists."""
    if len(preds) != truths.n_rows:
        raise DimensionMismatch(
            f"{len(preds)} prediction rows but {truths.n_rows} ground-truth rows"
        )
    n_labels = truths.n_labels
    tp = np.zeros(n_labels, dtype=np.int64)
    fp = np.zeros(n_labels, dtype=np.int64)
    fn = np.zeros(n_labels, dtype=np.int64)
    for i, pred in enumerate(preds):
        top = _top(pred, k)
        truth = truths.row(i)
        hit = np.isin(top, truth)
        tp[top[hit]] += 1
        fp[top[~hit]] += 1
        fn[truth[~np.isin(truth, top)]] += 1
    return tp, fp, fn


def per_label_f1(tp: np.ndarray, fp: np.ndarray, fn: np.ndarray) -> np.ndarray:
    """F1 per label with 0 wherever precision + recall is 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(tp + fp > 0, tp / (tp + fp), 0.0)
        recall = np.where(tp + fn > 0, tp / (tp + fn), 0.0)
        denom = precision + recall
        return np.where(denom > 0, 2 * precision * recall / denom, 0.0)


def macro_f1_at_k(
    preds: PredictionSet,
    truths: LabelMatrix,
    segments: SegmentSpec,
    train_freq: np.ndarray,
    k: int,
) -> Dict[Segment, float]:
    """
    Unweighted mean of per-label F1@k within each frequency segment.

    Labels that appear in neither the test truth nor any top-k list are left
    out of the mean; segments left without labels are absent from the result.
    """
    train_freq = np.asarray(train_freq)
    if train_freq.size != truths.n_labels:
        raise DimensionMismatch(
            f"{train_freq.size} training frequencies for {truths.n_labels} labels"
        )
    tp, fp, fn = label_confusion_at_k(preds, truths, k)
    f1 = per_label_f1(tp, fp, fn)
    seen = (tp + fp + fn) > 0
    assigned = assign_segments(train_freq, segments)
    report = {}
    for segment in Segment:
        mask = seen & (assigned == segment)
        if np.any(mask):
            report[segment] = float(np.mean(f1[mask]))
    return report
