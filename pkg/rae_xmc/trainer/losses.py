"""
Contrastive objectives with analytic gradients.

All losses take raw similarity scores and a temperature; gradients are with
respect to those scores except :func:`rae_training_loss`, which returns the
gradient with respect to the encoder weights.
"""

from dataclasses import dataclass
from typing import Iterable, List, Tuple

import numpy as np
from scipy import sparse
from scipy.special import logsumexp, softmax

from ..core.config_types import LossKind, check_tau
from ..utils.exceptions import EmptyBatch, EmptyInput, InvariantViolation
from .encoder import ToyEncoder, normalization_backward


def _positive_mask(n: int, positives: Iterable[int]) -> np.ndarray:
    idx = np.unique(np.asarray(list(positives), dtype=np.int64))
    if idx.size == 0:
        raise EmptyInput("at least one positive is required")
    if idx[0] < 0 or idx[-1] >= n:
        raise InvariantViolation(f"positive index outside [0, {n})")
    mask = np.zeros(n, dtype=bool)
    mask[idx] = True
    return mask


def softmax_ce_loss(
    scores, positives: Iterable[int], tau: float
) -> Tuple[float, np.ndarray]:
    """J = -sum_{l in P} log softmax(s / tau)_l and dJ/ds."""
    check_tau(tau)
    s = np.asarray(scores, dtype=np.float64).ravel()
    mask = _positive_mask(s.size, positives)
    logits = s / tau
    n_pos = int(mask.sum())
    loss = n_pos * logsumexp(logits) - float(np.sum(logits[mask]))
    grad = (n_pos * softmax(logits) - mask) / tau
    return float(loss), grad


def decoupled_terms(
    pos_scores: np.ndarray, neg_scores: np.ndarray, tau: float
) -> Tuple[float, np.ndarray, np.ndarray]:
    """
    sum_p -log(e^{s_p/tau} / (e^{s_p/tau} + sum_n e^{s_n/tau})).

    Returns the loss and its gradients for the positive and negative scores.
    """
    pos = np.asarray(pos_scores, dtype=np.float64) / tau
    neg = np.asarray(neg_scores, dtype=np.float64) / tau
    # One row per positive: [own logit, every negative logit].
    logits = np.hstack([pos[:, np.newaxis], np.broadcast_to(neg, (pos.size, neg.size))])
    lse = logsumexp(logits, axis=1)
    probs = np.exp(logits - lse[:, np.newaxis])
    loss = float(np.sum(lse - pos))
    grad_pos = (probs[:, 0] - 1.0) / tau
    grad_neg = probs[:, 1:].sum(axis=0) / tau
    return loss, grad_pos, grad_neg


def decoupled_softmax_loss(
    scores, positives: Iterable[int], tau: float
) -> Tuple[float, np.ndarray]:
    """Softmax loss with the other positives removed from each denominator."""
    check_tau(tau)
    s = np.asarray(scores, dtype=np.float64).ravel()
    mask = _positive_mask(s.size, positives)
    loss, grad_pos, grad_neg = decoupled_terms(s[mask], s[~mask], tau)
    grad = np.empty_like(s)
    grad[mask] = grad_pos
    grad[~mask] = grad_neg
    return loss, grad


@dataclass
class TrainBatch:
    """
    Mini-batch for the contrastive trainer.

    Row i of ``features`` is instance i; ``positives[i]`` are its sampled
    positive labels, ``negatives[i]`` its mined negative labels and
    ``label_sets[i]`` its full positive set P(y).
    """

    features: sparse.csr_matrix
    label_features: sparse.csr_matrix
    positives: List[np.ndarray]
    negatives: List[np.ndarray]
    label_sets: List[np.ndarray]

    def __post_init__(self):
        n = self.features.shape[0]
        if not len(self.positives) == len(self.negatives) == len(self.label_sets) == n:
            raise InvariantViolation("batch fields disagree on the number of instances")
        for i in range(n):
            if not np.all(np.isin(self.positives[i], self.label_sets[i])):
                raise InvariantViolation(f"instance {i}: sampled positive not in P(y)")
            if np.any(np.isin(self.negatives[i], self.label_sets[i])):
                raise InvariantViolation(f"instance {i}: mined negative is a positive")

    @property
    def size(self) -> int:
        return int(self.features.shape[0])

    def instance_negatives(self) -> List[np.ndarray]:
        """Q(y): other batch members sharing no positive label with the anchor."""
        sets = self.label_sets
        out = []
        for i in range(self.size):
            disjoint = [
                j
                for j in range(self.size)
                if j != i and not np.intersect1d(sets[i], sets[j]).size
            ]
            out.append(np.array(disjoint, dtype=np.int64))
        return out


def contrastive_batch_loss(
    batch: TrainBatch, encoder: ToyEncoder, tau: float, kind: LossKind = LossKind.RAE
) -> Tuple[float, np.ndarray]:
    """
    Mean per-instance loss over the batch and its gradient w.r.t. encoder weights.

    ``kind`` selects full softmax over the sampled candidates, the decoupled
    softmax, or the decoupled softmax with in-batch instance negatives.

    Raises:
        EmptyBatch: If the batch has no instances
        DegenerateEncoding: If an encoding collapses to zero
    """
    check_tau(tau)
    if batch.size == 0:
        raise EmptyBatch("cannot compute a loss over an empty batch")

    labels = np.unique(np.concatenate(list(batch.positives) + list(batch.negatives)))
    column = {int(label): j for j, label in enumerate(labels)}
    label_features = sparse.csr_matrix(batch.label_features)[labels]

    units, norms = encoder.encode_with_norms(batch.features)
    label_units, label_norms = encoder.encode_with_norms(label_features)
    grad_units = np.zeros_like(units)
    grad_labels = np.zeros_like(label_units)

    if kind is LossKind.RAE:
        instance_negs = batch.instance_negatives()
    else:
        instance_negs = [np.empty(0, dtype=np.int64)] * batch.size

    total = 0.0
    for i in range(batch.size):
        anchor = units[i]
        pos_cols = np.array([column[int(l)] for l in batch.positives[i]], np.int64)
        neg_cols = np.array([column[int(l)] for l in batch.negatives[i]], np.int64)
        inst = instance_negs[i]
        pos_scores = label_units[pos_cols] @ anchor
        neg_scores = label_units[neg_cols] @ anchor
        inst_scores = units[inst] @ anchor

        if kind is LossKind.SOFTMAX:
            loss, grad = softmax_ce_loss(
                np.concatenate([pos_scores, neg_scores]), range(pos_cols.size), tau
            )
            g_pos, g_neg = grad[: pos_cols.size], grad[pos_cols.size :]
            g_inst = grad[:0]
        else:
            loss, g_pos, g_rest = decoupled_terms(
                pos_scores, np.concatenate([neg_scores, inst_scores]), tau
            )
            g_neg, g_inst = g_rest[: neg_cols.size], g_rest[neg_cols.size :]
        total += loss

        grad_units[i] += g_pos @ label_units[pos_cols] + g_neg @ label_units[neg_cols]
        np.add.at(grad_labels, pos_cols, np.outer(g_pos, anchor))
        np.add.at(grad_labels, neg_cols, np.outer(g_neg, anchor))
        if inst.size:
            grad_units[i] += g_inst @ units[inst]
            np.add.at(grad_units, inst, np.outer(g_inst, anchor))

    scale = 1.0 / batch.size
    grad_raw = normalization_backward(units, norms, grad_units * scale)
    grad_label_raw = normalization_backward(
        label_units, label_norms, grad_labels * scale
    )
    grad_w = np.asarray(
        sparse.csr_matrix(batch.features).T @ grad_raw
        + label_features.T @ grad_label_raw
    )
    return total * scale, grad_w


def rae_training_loss(
    batch: TrainBatch, encoder: ToyEncoder, tau: float
) -> Tuple[float, np.ndarray]:
    """Decoupled softmax over labels plus in-batch instance negatives."""
    return contrastive_batch_loss(batch, encoder, tau, LossKind.RAE)
